"""Recording ingest, self-assessment ratings, label derivation, synthetic data.

File formats (all CSV with a header row):
  sensor file   timestamp_ms,value          one file per participant/video/channel
  manifest      file,participant_id,video_id,domain,channel,sample_rate_hz
  ratings       participant_id,video_id,valence,arousal,sex   (raw 1..7 scores)
  group table   video_id,g2_valence,g2_arousal                (LV/HV and LA/HA codes)

Binary labels use class index 0 for Low and 1 for High; High is the positive
class throughout the package.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

LOW = 0
HIGH = 1

N_VIDEOS = 13
RATING_MIN = 1
RATING_MAX = 7

# Seconds of signal emitted per synthetic sensor recording, and the number of
# coordinate samples per synthetic eye trace.
SYNTH_DURATION_S = 60.0
SYNTH_EYE_SAMPLES = 2500
SYNTH_NOISE_STD = 1.0


class DataError(ValueError):
    """Base class for ingest and labelling failures."""


class MissingFileError(DataError):
    pass


class NonMonotoneTimestampsError(DataError):
    pass


class RateMismatchError(DataError):
    pass


class AmbiguousBoundaryError(DataError):
    """Raw rating sits exactly on the low/high boundary under a strict policy."""


class MajorityTieError(DataError):
    """A video splits exactly 50/50 between Low and High raters."""


class EmptyVideoError(DataError):
    pass


class Domain(str, Enum):
    PERIPHERAL = "Peripheral"
    TRUNK = "Trunk"
    HEAD = "Head"


class Sex(str, Enum):
    MALE = "Male"
    FEMALE = "Female"


class BoundaryPolicy(str, Enum):
    """How a raw rating of 4 on the 1..7 scale is treated."""

    LE4_LOW = "le4"      # ratings <= 4 are Low, >= 5 are High
    STRICT_GT4 = "strict"  # < 4 Low, > 4 High, exactly 4 is refused


class LabelCase(str, Enum):
    GENERAL = "general"
    MAJORITY = "majority"
    MALES_ONLY = "males"
    G2 = "g2"


# Channel catalogue: canonical domain and the native sampling rate where the
# hardware fixes one.  Temperature and eye-position channels carry whatever
# rate the manifest declares (eye traces are unit-rate coordinate streams).
CHANNEL_CATALOG: dict[str, tuple[Domain, float | None]] = {
    "ACC_X": (Domain.PERIPHERAL, 64.0),
    "ACC_Y": (Domain.PERIPHERAL, 64.0),
    "ACC_Z": (Domain.PERIPHERAL, 64.0),
    "TEMP": (Domain.PERIPHERAL, None),
    "EDA": (Domain.PERIPHERAL, 4.0),
    "BVP": (Domain.PERIPHERAL, 64.0),
    "ECG1": (Domain.TRUNK, 256.0),
    "ECG2": (Domain.TRUNK, 256.0),
    "LAT_ACC": (Domain.TRUNK, 256.0),
    "LONG_ACC": (Domain.TRUNK, 256.0),
    "VERT_ACC": (Domain.TRUNK, 256.0),
    "GSR": (Domain.TRUNK, 256.0),
    "L_EP_X": (Domain.HEAD, None),
    "L_EP_Y": (Domain.HEAD, None),
    "L_EP_Z": (Domain.HEAD, None),
    "R_EP_X": (Domain.HEAD, None),
    "R_EP_Y": (Domain.HEAD, None),
    "R_EP_Z": (Domain.HEAD, None),
}

EYE_CHANNELS = ("L_EP_X", "L_EP_Y", "L_EP_Z", "R_EP_X", "R_EP_Y", "R_EP_Z")

# Rates used when synthesising data for channels whose catalogue rate is open.
SYNTH_RATES: dict[str, float] = {"TEMP": 4.0}
SYNTH_RATES.update({ch: 1.0 for ch in EYE_CHANNELS})

# Tone frequency injected into positive-class synthetic recordings, chosen to
# survive each channel's conditioning chain (Hz; cycles per sample for eyes).
SYNTH_TONE_HZ: dict[str, float] = {
    "ACC_X": 2.0, "ACC_Y": 2.0, "ACC_Z": 2.0,
    "LAT_ACC": 2.0, "LONG_ACC": 2.0, "VERT_ACC": 2.0,
    "ECG1": 5.0, "ECG2": 5.0,
    "EDA": 0.25,
    "BVP": 2.0,
    "TEMP": 0.3,
}
SYNTH_TONE_HZ.update({ch: 0.025 for ch in EYE_CHANNELS})


def synth_rate(channel: str) -> float:
    """Sampling rate used for a channel when generating synthetic data."""
    domain_rate = CHANNEL_CATALOG.get(channel)
    if domain_rate is None:
        raise DataError(f"unknown channel {channel!r}")
    rate = domain_rate[1]
    if rate is None:
        rate = SYNTH_RATES[channel]
    return rate


@dataclass
class RawRecording:
    """One channel of one participant watching one video."""

    participant_id: str
    video_id: str
    domain: Domain
    channel: str
    sample_rate_hz: float
    timestamps_ms: np.ndarray  # int64, strictly increasing
    values: np.ndarray         # float64

    def n_samples(self) -> int:
        return int(self.values.shape[0])

    def validate(self) -> None:
        """Check timestamp monotonicity and agreement with the declared rate."""
        ts = self.timestamps_ms
        if ts.shape[0] == 0:
            raise DataError(
                f"{self.participant_id}/{self.video_id}/{self.channel}: empty recording")
        if ts.shape != self.values.shape:
            raise DataError(
                f"{self.participant_id}/{self.video_id}/{self.channel}: "
                f"{ts.shape[0]} timestamps vs {self.values.shape[0]} values")
        if self.sample_rate_hz <= 0:
            raise DataError(f"{self.channel}: sample rate must be positive")
        diffs = np.diff(ts)
        if diffs.size and diffs.min() <= 0:
            row = int(np.argmax(diffs <= 0)) + 1
            raise NonMonotoneTimestampsError(
                f"{self.participant_id}/{self.video_id}/{self.channel}: "
                f"timestamp not increasing at sample {row}")
        if ts.shape[0] >= 2:
            expected = 1000.0 / self.sample_rate_hz
            observed = (ts[-1] - ts[0]) / (ts.shape[0] - 1)
            if abs(observed - expected) > 0.05 * expected:
                raise RateMismatchError(
                    f"{self.participant_id}/{self.video_id}/{self.channel}: "
                    f"declared {self.sample_rate_hz} Hz but observed spacing "
                    f"{observed:.3f} ms (expected {expected:.3f} ms)")


@dataclass(frozen=True)
class SamRating:
    """Raw self-assessment scores for one participant and video."""

    participant_id: str
    video_id: str
    valence: int
    arousal: int
    sex: Sex


@dataclass(frozen=True)
class LabelAssignment:
    """Binary valence/arousal labels attached to a video or a rater-video pair.

    ``participant_id`` is None for per-video cases (Majority, G2).  Majority
    labels record the winning vote fraction for each dimension.
    """

    case: LabelCase
    video_id: str
    valence: int  # LOW or HIGH
    arousal: int
    participant_id: str | None = None
    valence_fraction: float | None = None
    arousal_fraction: float | None = None


def binarize_rating(raw: int, policy: BoundaryPolicy = BoundaryPolicy.LE4_LOW) -> int:
    """Collapse a raw 1..7 rating to LOW or HIGH under the given boundary policy."""
    raw = int(raw)
    if raw < RATING_MIN or raw > RATING_MAX:
        raise DataError(f"rating {raw} outside {RATING_MIN}..{RATING_MAX}")
    if policy is BoundaryPolicy.LE4_LOW:
        return LOW if raw <= 4 else HIGH
    if policy is BoundaryPolicy.STRICT_GT4:
        if raw == 4:
            raise AmbiguousBoundaryError(
                "rating 4 is neither low nor high under the strict boundary policy")
        return LOW if raw < 4 else HIGH
    raise DataError(f"unknown boundary policy {policy!r}")


def _majority(labels: list[int], video_id: str, dimension: str) -> tuple[int, float]:
    n_high = sum(1 for v in labels if v == HIGH)
    frac_high = n_high / len(labels)
    if frac_high == 0.5:
        raise MajorityTieError(
            f"video {video_id}: {dimension} votes split exactly 50/50 "
            f"({n_high}/{len(labels)} high)")
    if frac_high > 0.5:
        return HIGH, frac_high
    return LOW, 1.0 - frac_high


def derive_labels(
    ratings: list[SamRating],
    case: LabelCase,
    policy: BoundaryPolicy = BoundaryPolicy.LE4_LOW,
    g2_table: dict[str, tuple[int, int]] | None = None,
    videos: list[str] | None = None,
) -> list[LabelAssignment]:
    """Turn raw ratings into binary label assignments for one labelling scheme.

    General and MalesOnly yield one assignment per (participant, video);
    Majority and G2 yield one per video.  ``videos``, when given, is the full
    video set expected to be covered (missing ones raise EmptyVideoError).
    G2 ignores the individual ratings and passes ``g2_table`` through.
    """
    if case is LabelCase.G2:
        if g2_table is None:
            raise DataError("G2 labels need the per-video group table")
        out = [
            LabelAssignment(case=case, video_id=vid, valence=val, arousal=aro)
            for vid, (val, aro) in sorted(g2_table.items())
        ]
        _check_video_cover([a.video_id for a in out], videos)
        return out

    pool = ratings
    if case is LabelCase.MALES_ONLY:
        pool = [r for r in ratings if r.sex is Sex.MALE]
    if not pool:
        raise DataError(f"no ratings available for label case {case.value!r}")

    if case in (LabelCase.GENERAL, LabelCase.MALES_ONLY):
        out = [
            LabelAssignment(
                case=case,
                video_id=r.video_id,
                participant_id=r.participant_id,
                valence=binarize_rating(r.valence, policy),
                arousal=binarize_rating(r.arousal, policy),
            )
            for r in pool
        ]
        _check_video_cover(sorted({a.video_id for a in out}), videos)
        return out

    if case is LabelCase.MAJORITY:
        by_video: dict[str, list[SamRating]] = {}
        for r in pool:
            by_video.setdefault(r.video_id, []).append(r)
        out = []
        for vid in sorted(by_video):
            rs = by_video[vid]
            val, val_frac = _majority(
                [binarize_rating(r.valence, policy) for r in rs], vid, "valence")
            aro, aro_frac = _majority(
                [binarize_rating(r.arousal, policy) for r in rs], vid, "arousal")
            out.append(LabelAssignment(
                case=case, video_id=vid, valence=val, arousal=aro,
                valence_fraction=val_frac, arousal_fraction=aro_frac))
        _check_video_cover([a.video_id for a in out], videos)
        return out

    raise DataError(f"unknown label case {case!r}")


def _check_video_cover(covered: list[str], videos: list[str] | None) -> None:
    if videos is None:
        return
    missing = sorted(set(videos) - set(covered))
    if missing:
        raise EmptyVideoError(f"no ratings for video(s): {', '.join(missing)}")


class LabelLookup:
    """Maps (participant, video) to a class index for one affect dimension."""

    def __init__(self, assignments: list[LabelAssignment], dimension: str):
        if dimension not in ("valence", "arousal"):
            raise DataError(f"unknown label dimension {dimension!r}")
        if not assignments:
            raise DataError("no label assignments")
        self.dimension = dimension
        self.case_name = assignments[0].case.value
        self._by_pair: dict[tuple[str, str], int] = {}
        self._by_video: dict[str, int] = {}
        for a in assignments:
            label = a.valence if dimension == "valence" else a.arousal
            if a.participant_id is None:
                self._by_video[a.video_id] = label
            else:
                self._by_pair[(a.participant_id, a.video_id)] = label

    def class_for(self, participant_id: str, video_id: str) -> int | None:
        pair = self._by_pair.get((participant_id, video_id))
        if pair is not None:
            return pair
        return self._by_video.get(video_id)

    def participants(self) -> set[str]:
        """Participants explicitly covered (empty for per-video cases)."""
        return {pid for pid, _ in self._by_pair}


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a deterministic class-conditioned synthetic dataset.

    Positive-class recordings carry an additive sinusoid of amplitude
    ``class_separation`` on top of unit-variance noise; at 0 the two classes
    are statistically identical.
    """

    n_participants: int
    seed: int
    class_separation: float
    channels: tuple[tuple[str, float], ...]  # (channel, sample_rate_hz)

    def __post_init__(self):
        if self.n_participants <= 0:
            raise DataError("need at least one participant")
        if self.class_separation < 0:
            raise DataError("class separation must be non-negative")
        if not self.channels:
            raise DataError("need at least one channel")


def default_synth_channels(channels: list[str] | None = None) -> tuple[tuple[str, float], ...]:
    """Pair channel names with their synthesis rates (best combination by default)."""
    if channels is None:
        channels = ["ACC_Z", "EDA", "TEMP", "LAT_ACC", "LONG_ACC",
                    "L_EP_X", "L_EP_Y", "L_EP_Z", "R_EP_Y", "R_EP_Z"]
    for ch in channels:
        if ch not in SYNTH_TONE_HZ:
            raise DataError(
                f"no synthetic recipe for channel {ch!r}; the trunk unit "
                f"records it but the pipeline leaves it out")
    return tuple((ch, synth_rate(ch)) for ch in channels)


def video_class(video_index: int) -> int:
    """Injected class for synthetic video number ``video_index`` (0-based)."""
    return video_index % 2


def synth_video_ids() -> list[str]:
    return [f"video{i + 1:02d}" for i in range(N_VIDEOS)]


def make_synthetic(spec: SyntheticSpec) -> tuple[list[RawRecording], list[SamRating]]:
    """Generate recordings and consistent ratings for every participant/video.

    Ratings follow the injected class on both dimensions (6 for High, 2 for
    Low), so every labelling scheme recovers the class.  Output is
    bit-identical for identical specs.
    """
    rng = np.random.default_rng(spec.seed)
    videos = synth_video_ids()
    recordings: list[RawRecording] = []
    ratings: list[SamRating] = []
    for p in range(spec.n_participants):
        pid = f"p{p + 1:02d}"
        sex = Sex.FEMALE if p % 4 == 3 else Sex.MALE
        for v, vid in enumerate(videos):
            cls = video_class(v)
            for channel, rate in spec.channels:
                domain = CHANNEL_CATALOG[channel][0]
                if channel in EYE_CHANNELS:
                    n = SYNTH_EYE_SAMPLES
                    t = np.arange(n, dtype=np.float64)  # unit-rate: cycles/sample
                else:
                    n = int(round(SYNTH_DURATION_S * rate))
                    t = np.arange(n, dtype=np.float64) / rate
                x = rng.standard_normal(n) * SYNTH_NOISE_STD
                phase = rng.uniform(0.0, 2.0 * np.pi)
                if cls == HIGH:
                    tone = SYNTH_TONE_HZ[channel]
                    x = x + spec.class_separation * np.sin(2.0 * np.pi * tone * t + phase)
                recordings.append(RawRecording(
                    participant_id=pid,
                    video_id=vid,
                    domain=domain,
                    channel=channel,
                    sample_rate_hz=rate,
                    timestamps_ms=np.round(np.arange(n) * 1000.0 / rate).astype(np.int64),
                    values=x,
                ))
            score = 6 if cls == HIGH else 2
            ratings.append(SamRating(
                participant_id=pid, video_id=vid,
                valence=score, arousal=score, sex=sex))
    return recordings, ratings


def synth_g2_table() -> dict[str, tuple[int, int]]:
    """Per-video group labels matching the synthetic class assignment."""
    table = {}
    for v, vid in enumerate(synth_video_ids()):
        cls = video_class(v)
        table[vid] = (cls, cls)
    return table


# ---------------------------------------------------------------------------
# CSV readers and writers
# ---------------------------------------------------------------------------

_LEVEL_CODES = {
    "valence": {LOW: "LV", HIGH: "HV"},
    "arousal": {LOW: "LA", HIGH: "HA"},
}
_CODE_LEVELS = {"LV": LOW, "HV": HIGH, "LA": LOW, "HA": HIGH}


def level_code(dimension: str, label: int) -> str:
    return _LEVEL_CODES[dimension][label]


def recording_filename(rec: RawRecording) -> str:
    return f"{rec.participant_id}_{rec.video_id}_{rec.channel}.csv"


def write_recording_csv(rec: RawRecording, path: Path) -> None:
    lines = ["timestamp_ms,value"]
    lines.extend(f"{int(ts)},{float(val)!r}"
                 for ts, val in zip(rec.timestamps_ms, rec.values))
    path.write_text("\n".join(lines) + "\n")


def write_dataset(recordings: list[RawRecording], ratings: list[SamRating],
                  out_dir: Path, g2_table: dict[str, tuple[int, int]] | None = None) -> None:
    """Write sensor files plus manifest, ratings and group-table CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_rows = []
    for rec in recordings:
        fname = recording_filename(rec)
        write_recording_csv(rec, out_dir / fname)
        manifest_rows.append((fname, rec.participant_id, rec.video_id,
                              rec.domain.value, rec.channel, rec.sample_rate_hz))
    with open(out_dir / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "participant_id", "video_id", "domain", "channel",
                    "sample_rate_hz"])
        w.writerows(manifest_rows)
    with open(out_dir / "ratings.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["participant_id", "video_id", "valence", "arousal", "sex"])
        for r in ratings:
            w.writerow([r.participant_id, r.video_id, r.valence, r.arousal, r.sex.value])
    if g2_table is not None:
        with open(out_dir / "g2_table.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["video_id", "g2_valence", "g2_arousal"])
            for vid in sorted(g2_table):
                val, aro = g2_table[vid]
                w.writerow([vid, level_code("valence", val), level_code("arousal", aro)])


def _read_sensor_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)
    if data.shape[1] != 2:
        raise DataError(f"{path}: expected two columns (timestamp_ms,value)")
    return data[:, 0].astype(np.int64), data[:, 1]


def load_recordings(data_dir: Path, manifest_path: Path | None = None) -> list[RawRecording]:
    """Load and validate every recording named by a manifest."""
    data_dir = Path(data_dir)
    if manifest_path is None:
        manifest_path = data_dir / "manifest.csv"
    if not Path(manifest_path).is_file():
        raise MissingFileError(f"manifest not found: {manifest_path}")
    recordings = []
    with open(manifest_path, newline="") as fh:
        for row in csv.DictReader(fh):
            fpath = data_dir / row["file"]
            if not fpath.is_file():
                raise MissingFileError(f"recording not found: {fpath}")
            ts, values = _read_sensor_csv(fpath)
            rec = RawRecording(
                participant_id=row["participant_id"],
                video_id=row["video_id"],
                domain=Domain(row["domain"]),
                channel=row["channel"],
                sample_rate_hz=float(row["sample_rate_hz"]),
                timestamps_ms=ts,
                values=values,
            )
            rec.validate()
            recordings.append(rec)
    return recordings


def load_ratings(path: Path) -> list[SamRating]:
    if not Path(path).is_file():
        raise MissingFileError(f"ratings file not found: {path}")
    ratings = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ratings.append(SamRating(
                participant_id=row["participant_id"],
                video_id=row["video_id"],
                valence=int(row["valence"]),
                arousal=int(row["arousal"]),
                sex=Sex(row["sex"]),
            ))
    return ratings


def load_g2_table(path: Path) -> dict[str, tuple[int, int]]:
    if not Path(path).is_file():
        raise MissingFileError(f"group table not found: {path}")
    table = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            table[row["video_id"]] = (
                _CODE_LEVELS[row["g2_valence"].strip()],
                _CODE_LEVELS[row["g2_arousal"].strip()],
            )
    return table
