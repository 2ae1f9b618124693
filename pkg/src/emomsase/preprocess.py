"""Signal conditioning: filtering, resampling, normalization, windowing.

Every channel runs the same pipeline shape: condition (filter and/or
resample) -> z-score over the full stream -> keep the trailing 40 s ->
slice into 2 s windows with 50% overlap.  Eye traces skip filtering and
window the last 2000 coordinates with a 200-sample window instead.

The per-channel conditioning steps:
  accelerometers       band-pass 0.5-20 Hz
  ECG                  band-pass 0.5-45 Hz
  EDA                  upsample 4 -> 64 Hz, then low-pass 0.5 Hz
  BVP                  band-pass 0.5-4 Hz
  TEMP                 upsample to 64 Hz if slower, 1 s moving average
  eye positions        none

All filters are 4th-order Butterworth applied forward and backward, so the
net phase response is zero.  Windowed output shapes are fixed by the chain:
39x128 at 64 Hz, 39x512 at 256 Hz, 19x200 for eye traces.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, filtfilt

from .dataio import EYE_CHANNELS, RawRecording

TAIL_SECONDS = 40.0
WINDOW_SECONDS = 2.0
OVERLAP = 0.5
ALIGNED_RATE_HZ = 64.0
EYE_TAIL_SAMPLES = 2000
EYE_WINDOW_SAMPLES = 200
FILTER_ORDER = 4

BAND_PASS = "bandpass"
LOW_PASS = "lowpass"
MOVING_AVERAGE = "moving_average"


class PreprocessError(ValueError):
    """Base class for conditioning failures."""


class CutoffOutOfRangeError(PreprocessError):
    pass


class SignalTooShortError(PreprocessError):
    pass


class ZeroVarianceError(PreprocessError):
    pass


class RecordingTooShortError(PreprocessError):
    pass


class WindowLargerThanSignalError(PreprocessError):
    pass


class NonIntegerHopError(PreprocessError):
    pass


class UnsupportedChannelError(PreprocessError):
    pass


@dataclass(frozen=True)
class FilterSpec:
    """Conditioning step description: a Butterworth band or a moving average."""

    kind: str
    low_hz: float | None = None
    high_hz: float | None = None
    order: int = FILTER_ORDER
    window_len: int | None = None

    def __post_init__(self):
        if self.kind not in (BAND_PASS, LOW_PASS, MOVING_AVERAGE):
            raise PreprocessError(f"unknown filter kind {self.kind!r}")
        if self.kind == BAND_PASS and (self.low_hz is None or self.high_hz is None):
            raise PreprocessError("band-pass needs both cutoffs")
        if self.kind == LOW_PASS and self.high_hz is None:
            raise PreprocessError("low-pass needs a cutoff")
        if self.kind == MOVING_AVERAGE and not self.window_len:
            raise PreprocessError("moving average needs a window length")


def butterworth_filter(signal: np.ndarray, rate_hz: float, spec: FilterSpec) -> np.ndarray:
    """Zero-phase Butterworth filtering (applied forward then backward).

    Output has the same length as the input.  Cutoffs must sit strictly
    inside (0, rate/2); the signal must be longer than 3x the filter order.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if spec.kind == BAND_PASS:
        if not (0.0 < spec.low_hz < spec.high_hz < rate_hz / 2.0):
            raise CutoffOutOfRangeError(
                f"band {spec.low_hz}-{spec.high_hz} Hz invalid at {rate_hz} Hz")
        b, a = butter(spec.order, [spec.low_hz, spec.high_hz],
                      btype="bandpass", fs=rate_hz)
    elif spec.kind == LOW_PASS:
        if not (0.0 < spec.high_hz < rate_hz / 2.0):
            raise CutoffOutOfRangeError(
                f"cutoff {spec.high_hz} Hz invalid at {rate_hz} Hz")
        b, a = butter(spec.order, spec.high_hz, btype="lowpass", fs=rate_hz)
    else:
        raise PreprocessError(f"butterworth_filter cannot apply {spec.kind!r}")
    padlen = 3 * spec.order
    if signal.shape[0] <= padlen:
        raise SignalTooShortError(
            f"need more than {padlen} samples for order {spec.order}, "
            f"got {signal.shape[0]}")
    return filtfilt(b, a, signal, padlen=padlen)


def moving_average(signal: np.ndarray, window_len: int) -> np.ndarray:
    """Centered moving average; windows are truncated at the edges."""
    signal = np.asarray(signal, dtype=np.float64)
    if window_len < 1:
        raise PreprocessError("window length must be >= 1")
    if signal.shape[0] == 0:
        raise SignalTooShortError("empty signal")
    kernel = np.ones(window_len)
    sums = np.convolve(signal, kernel, mode="same")
    counts = np.convolve(np.ones_like(signal), kernel, mode="same")
    return sums / counts


def upsample(signal: np.ndarray, from_hz: float, to_hz: float) -> np.ndarray:
    """Linear-interpolation upsampling to round(n * to/from) samples.

    Interpolation runs on the input-index grid; past the last input sample
    the final segment's slope is extended, so a linear ramp stays a ramp
    over the whole resampled duration.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if to_hz < from_hz:
        raise PreprocessError(f"cannot downsample {from_hz} -> {to_hz} Hz")
    n_in = signal.shape[0]
    if n_in == 0:
        raise SignalTooShortError("empty signal")
    n_out = int(round(n_in * to_hz / from_hz))
    if n_in == 1:
        return np.full(n_out, signal[0])
    pos = np.arange(n_out) * (from_hz / to_hz)
    out = np.interp(pos, np.arange(n_in), signal)
    beyond = pos > n_in - 1
    if np.any(beyond):
        slope = signal[-1] - signal[-2]
        out[beyond] = signal[-1] + slope * (pos[beyond] - (n_in - 1))
    return out


def zscore(signal: np.ndarray) -> np.ndarray:
    """Standardize to zero mean and unit population (ddof=0) deviation."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape[0] < 2:
        raise SignalTooShortError("z-score needs at least 2 samples")
    std = signal.std()
    if std == 0.0:
        raise ZeroVarianceError("constant signal has no z-score")
    return (signal - signal.mean()) / std


def take_tail(signal: np.ndarray, rate_hz: float, seconds: float = TAIL_SECONDS) -> np.ndarray:
    """Keep the trailing ``seconds`` worth of samples."""
    signal = np.asarray(signal)
    need = int(round(seconds * rate_hz))
    if signal.shape[0] < need:
        raise RecordingTooShortError(
            f"need {need} samples for the trailing {seconds:g} s, "
            f"got {signal.shape[0]}")
    return signal[-need:]


def take_tail_coords(coords: np.ndarray, n: int = EYE_TAIL_SAMPLES) -> np.ndarray:
    """Keep the last ``n`` coordinate samples of an eye trace."""
    coords = np.asarray(coords)
    if coords.shape[0] < n:
        raise RecordingTooShortError(
            f"need {n} coordinates, got {coords.shape[0]}")
    return coords[-n:]


@dataclass
class WindowedTensor:
    """A (T, F) stack of overlapping windows cut from one conditioned stream."""

    values: np.ndarray
    source: tuple[str, str, str] | None = None  # (participant, video, channel)

    @property
    def n_windows(self) -> int:
        return int(self.values.shape[0])

    @property
    def window_len(self) -> int:
        return int(self.values.shape[1])


def segment(signal: np.ndarray, window_samples: int, overlap: float = OVERLAP,
            source: tuple[str, str, str] | None = None) -> WindowedTensor:
    """Cut a stream into overlapping windows, dropping any short remainder.

    The hop is window * (1 - overlap) and must come out to a whole number of
    samples.  Row t holds samples [t*hop, t*hop + window).
    """
    signal = np.asarray(signal, dtype=np.float64)
    if window_samples < 1:
        raise PreprocessError("window must be >= 1 sample")
    if window_samples > signal.shape[0]:
        raise WindowLargerThanSignalError(
            f"window {window_samples} exceeds signal length {signal.shape[0]}")
    hop_f = window_samples * (1.0 - overlap)
    hop = int(round(hop_f))
    if hop < 1 or abs(hop_f - hop) > 1e-9:
        raise NonIntegerHopError(
            f"window {window_samples} with overlap {overlap} gives "
            f"non-integer hop {hop_f}")
    windows = np.lib.stride_tricks.sliding_window_view(signal, window_samples)[::hop]
    return WindowedTensor(values=np.ascontiguousarray(windows), source=source)


# Conditioning chain per channel; eye channels are handled separately.
_BAND = {
    "ACC_X": (0.5, 20.0), "ACC_Y": (0.5, 20.0), "ACC_Z": (0.5, 20.0),
    "LAT_ACC": (0.5, 20.0), "LONG_ACC": (0.5, 20.0), "VERT_ACC": (0.5, 20.0),
    "ECG1": (0.5, 45.0), "ECG2": (0.5, 45.0),
    "BVP": (0.5, 4.0),
}

# Rate of the stream that finally gets windowed (after any resampling).
_WORKING_RATE_HZ = {
    "ACC_X": 64.0, "ACC_Y": 64.0, "ACC_Z": 64.0,
    "BVP": 64.0, "EDA": 64.0, "TEMP": 64.0,
    "LAT_ACC": 256.0, "LONG_ACC": 256.0, "VERT_ACC": 256.0,
    "ECG1": 256.0, "ECG2": 256.0,
}


def feature_size(channel: str) -> int:
    """Window length (features per timestep) the chain produces for a channel."""
    if channel in EYE_CHANNELS:
        return EYE_WINDOW_SAMPLES
    if channel in _WORKING_RATE_HZ:
        return int(WINDOW_SECONDS * _WORKING_RATE_HZ[channel])
    raise UnsupportedChannelError(f"no conditioning chain for channel {channel!r}")


def expected_timesteps(channel: str) -> int:
    """Window count the chain produces for a channel (39 sensor, 19 eye)."""
    if channel in EYE_CHANNELS:
        return (EYE_TAIL_SAMPLES - EYE_WINDOW_SAMPLES) // (EYE_WINDOW_SAMPLES // 2) + 1
    # tail/window/hop all scale with the rate, so the count does not.
    return int((TAIL_SECONDS - WINDOW_SECONDS) / (WINDOW_SECONDS * (1.0 - OVERLAP))) + 1


def preprocess_channel(rec: RawRecording) -> WindowedTensor:
    """Run one recording through its channel's full conditioning chain."""
    source = (rec.participant_id, rec.video_id, rec.channel)
    ch = rec.channel
    x = np.asarray(rec.values, dtype=np.float64)
    rate = float(rec.sample_rate_hz)

    if ch in EYE_CHANNELS:
        x = zscore(x)
        x = take_tail_coords(x)
        tensor = segment(x, EYE_WINDOW_SAMPLES, source=source)
    elif ch in _BAND:
        low, high = _BAND[ch]
        x = butterworth_filter(x, rate, FilterSpec(BAND_PASS, low_hz=low, high_hz=high))
        x = zscore(x)
        x = take_tail(x, rate)
        tensor = segment(x, int(round(WINDOW_SECONDS * rate)), source=source)
    elif ch == "EDA":
        x = upsample(x, rate, ALIGNED_RATE_HZ)
        x = butterworth_filter(x, ALIGNED_RATE_HZ, FilterSpec(LOW_PASS, high_hz=0.5))
        x = zscore(x)
        x = take_tail(x, ALIGNED_RATE_HZ)
        tensor = segment(x, int(round(WINDOW_SECONDS * ALIGNED_RATE_HZ)), source=source)
    elif ch == "TEMP":
        if rate < ALIGNED_RATE_HZ:
            x = upsample(x, rate, ALIGNED_RATE_HZ)
        x = moving_average(x, int(round(ALIGNED_RATE_HZ)))  # 1 s window
        x = zscore(x)
        x = take_tail(x, ALIGNED_RATE_HZ)
        tensor = segment(x, int(round(WINDOW_SECONDS * ALIGNED_RATE_HZ)), source=source)
    else:
        raise UnsupportedChannelError(f"no conditioning chain for channel {ch!r}")

    expected = (expected_timesteps(ch), feature_size(ch))
    if tensor.values.shape != expected:
        raise PreprocessError(
            f"{ch}: windowed shape {tensor.values.shape} != expected {expected}")
    if not np.all(np.isfinite(tensor.values)):
        raise PreprocessError(f"{ch}: non-finite values after conditioning")
    return tensor


# ---------------------------------------------------------------------------
# On-disk tensor cache
# ---------------------------------------------------------------------------

_MAGIC_DTYPE = "<f8"


def tensor_cache_key(rec: RawRecording) -> str:
    """Content hash identifying one recording + chain version in the cache."""
    h = hashlib.sha256()
    h.update(f"{rec.participant_id}|{rec.video_id}|{rec.channel}|"
             f"{rec.sample_rate_hz!r}|v1|".encode())
    h.update(rec.timestamps_ms.astype("<i8").tobytes())
    h.update(rec.values.astype(_MAGIC_DTYPE).tobytes())
    return h.hexdigest()[:20]


def save_tensor(tensor: WindowedTensor, stem: Path) -> None:
    """Write ``stem``.bin (uint32 T,F then float64 row-major, little-endian)
    and a JSON sidecar with the source metadata."""
    stem = Path(stem)
    t, f = tensor.values.shape
    with open(stem.with_suffix(".bin"), "wb") as fh:
        fh.write(struct.pack("<II", t, f))
        fh.write(tensor.values.astype(_MAGIC_DTYPE).tobytes())
    src = tensor.source or ("", "", "")
    sidecar = {
        "participant_id": src[0],
        "video_id": src[1],
        "channel": src[2],
        "n_windows": t,
        "window_len": f,
        "dtype": _MAGIC_DTYPE,
    }
    stem.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def load_tensor(stem: Path) -> WindowedTensor:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    with open(stem.with_suffix(".bin"), "rb") as fh:
        t, f = struct.unpack("<II", fh.read(8))
        values = np.frombuffer(fh.read(), dtype=_MAGIC_DTYPE).reshape(t, f).copy()
    if (t, f) != (meta["n_windows"], meta["window_len"]):
        raise PreprocessError(f"{stem}: sidecar shape disagrees with binary header")
    return WindowedTensor(values=values,
                          source=(meta["participant_id"], meta["video_id"], meta["channel"]))
