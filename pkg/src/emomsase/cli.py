"""Batch entry points: synthesize, preprocess, train/evaluate, check, report.

Settings resolve in three layers: build-in defaults, then a JSON config
file (--config), then explicit command-line flags.  Unknown config keys
are rejected.  The tensor cache directory can also come from the
EMOMSASE_CACHE environment variable.

Exit codes: 0 success, 1 runtime failure (missing files, bad data),
2 usage errors.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio, evaluate, preprocess
from .dataio import BoundaryPolicy, LabelCase, LabelLookup
from .gradcheck import grad_check, micro_config
from .model import ModelConfig, VARIANTS
from .train import TrainConfig

CACHE_ENV = "EMOMSASE_CACHE"

DOMAIN_ORDER = ("Peripheral", "Trunk", "Head")

DEFAULTS = {
    "seed": 0,
    "labels": "general",
    "boundary": "le4",
    "domains": list(DOMAIN_ORDER),
    "channels": {
        "Peripheral": ["ACC_Z", "EDA", "TEMP"],
        "Trunk": ["LAT_ACC", "LONG_ACC"],
        "Head": ["L_EP_X", "L_EP_Y", "L_EP_Z", "R_EP_Y", "R_EP_Z"],
    },
    "split": "kfold5",
    "fusion": "modality",
    "variant": "emomsase",
    "target": "both",
    "hidden_size": 128,
    "se_reduction": 4,
    "train": {
        "learning_rate": 0.001,
        "batch_size": 16,
        "max_epochs": 50,
        "patience": 10,
        "weight_decay": 0.01,
    },
    "synth": {
        "participants": 24,
        "separation": 2.0,
        "channels": None,  # None -> every channel named under "channels"
    },
    "cache": None,
    "ratings": None,
    "g2": None,
    "out": None,
}


class UsageError(Exception):
    pass


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    unknown = sorted(set(cfg) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    for key in ("train", "synth"):
        if key in cfg:
            bad = sorted(set(cfg[key]) - set(DEFAULTS[key]))
            if bad:
                raise UsageError(f"unknown {key} config key(s): {', '.join(bad)}")
    return cfg


def resolve_settings(args: argparse.Namespace) -> dict:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    settings = copy.deepcopy(DEFAULTS)
    file_cfg = _load_config_file(getattr(args, "config", None))
    for key, value in file_cfg.items():
        if isinstance(value, dict) and isinstance(settings.get(key), dict):
            settings[key].update(value)
        else:
            settings[key] = value
    for key in ("seed", "labels", "boundary", "split", "fusion", "variant",
                "target", "cache", "ratings", "g2", "out"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if getattr(args, "domains", None) is not None:
        settings["domains"] = _parse_domains(args.domains)
    if settings["cache"] is None:
        settings["cache"] = os.environ.get(CACHE_ENV)
    return settings


def _parse_domains(spec: str) -> list[str]:
    canon = {d.lower(): d for d in DOMAIN_ORDER}
    picked = []
    for token in spec.split(","):
        token = token.strip().lower()
        if not token:
            continue
        if token not in canon:
            raise UsageError(f"unknown domain {token!r} "
                             f"(choose from {', '.join(canon)})")
        picked.append(canon[token])
    if not picked:
        raise UsageError("no domains given")
    return [d for d in DOMAIN_ORDER if d in picked]


def _model_config(settings: dict) -> ModelConfig:
    domain_channels = []
    for domain in settings["domains"]:
        channels = settings["channels"].get(domain, [])
        if channels:
            domain_channels.append((domain, tuple(channels)))
    if not domain_channels:
        raise UsageError("no channels configured for the selected domains")
    feature_sizes = {ch: preprocess.feature_size(ch)
                     for _, chs in domain_channels for ch in chs}
    return ModelConfig(
        domain_channels=tuple(domain_channels),
        feature_sizes=feature_sizes,
        hidden_size=int(settings["hidden_size"]),
        se_reduction=int(settings["se_reduction"]),
        variant=settings["variant"],
        seed=int(settings["seed"]),
    )


def _train_config(settings: dict) -> TrainConfig:
    t = settings["train"]
    return TrainConfig(
        learning_rate=float(t["learning_rate"]),
        batch_size=int(t["batch_size"]),
        max_epochs=int(t["max_epochs"]),
        patience=int(t["patience"]),
        weight_decay=float(t["weight_decay"]),
        seed=int(settings["seed"]),
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    if settings["out"] is None:
        raise UsageError("synth needs --out (or an \"out\" config entry)")
    synth = settings["synth"]
    channels = synth["channels"]
    if channels is None:
        channels = [ch for d in settings["domains"]
                    for ch in settings["channels"].get(d, [])]
    spec = dataio.SyntheticSpec(
        n_participants=int(args.participants if args.participants is not None
                           else synth["participants"]),
        seed=int(settings["seed"]),
        class_separation=float(args.separation if args.separation is not None
                               else synth["separation"]),
        channels=dataio.default_synth_channels(list(channels)),
    )
    recordings, ratings = dataio.make_synthetic(spec)
    out_dir = Path(settings["out"])
    dataio.write_dataset(recordings, ratings, out_dir,
                         g2_table=dataio.synth_g2_table())
    print(f"wrote {len(recordings)} recordings for {spec.n_participants} "
          f"participants to {out_dir}")
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    data_dir = Path(args.data)
    cache_dir = settings["cache"]
    if cache_dir is None:
        raise UsageError(f"no cache directory (use --cache or ${CACHE_ENV})")
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)

    recordings = dataio.load_recordings(data_dir)
    stats: dict[str, dict] = {}
    for rec in recordings:
        key = preprocess.tensor_cache_key(rec)
        stem = cache_dir / key
        stat = stats.setdefault(rec.channel, {"n": 0, "hits": 0, "shape": None})
        stat["n"] += 1
        if stem.with_suffix(".bin").is_file() and stem.with_suffix(".json").is_file():
            stat["hits"] += 1
            if stat["shape"] is None:
                stat["shape"] = (preprocess.expected_timesteps(rec.channel),
                                 preprocess.feature_size(rec.channel))
            continue
        tensor = preprocess.preprocess_channel(rec)
        preprocess.save_tensor(tensor, stem)
        stat["shape"] = tensor.values.shape
    for channel in sorted(stats):
        s = stats[channel]
        t, f = s["shape"]
        print(f"{channel}: {s['n']} recordings -> {t}x{f} "
              f"({s['hits']} cached)")
    return 0


def _load_samples(cache_dir: Path) -> list[evaluate.Sample]:
    cache_dir = Path(cache_dir)
    if not cache_dir.is_dir():
        raise UsageError(f"cache directory not found: {cache_dir}")
    by_pair: dict[tuple[str, str], evaluate.Sample] = {}
    for sidecar in sorted(cache_dir.glob("*.json")):
        tensor = preprocess.load_tensor(sidecar.with_suffix(""))
        pid, vid, channel = tensor.source
        sample = by_pair.setdefault(
            (pid, vid), evaluate.Sample(participant_id=pid, video_id=vid, tensors={}))
        if channel in sample.tensors:
            raise evaluate.EvaluateError(
                f"cache holds duplicate tensors for {pid}/{vid}/{channel}; "
                f"clear the cache and re-run preprocessing")
        sample.tensors[channel] = tensor.values
    if not by_pair:
        raise UsageError(f"cache {cache_dir} holds no tensors")
    return [by_pair[k] for k in sorted(by_pair)]


def _resolve_labels(settings: dict, ratings, videos: list[str]) -> list:
    case = LabelCase(settings["labels"])
    policy = BoundaryPolicy(settings["boundary"])
    g2_table = None
    if case is LabelCase.G2:
        if settings["g2"] is None:
            raise UsageError("label case g2 needs --g2 <table.csv>")
        g2_table = dataio.load_g2_table(Path(settings["g2"]))
    return dataio.derive_labels(ratings, case, policy, g2_table=g2_table,
                                videos=videos)


def cmd_run(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    for key in ("cache", "ratings", "out"):
        if settings[key] is None:
            raise UsageError(f"run needs --{key} (or a config entry)")
    samples = _load_samples(Path(settings["cache"]))
    ratings = dataio.load_ratings(Path(settings["ratings"]))
    videos = sorted({s.video_id for s in samples})
    assignments = _resolve_labels(settings, ratings, videos)

    dimensions = (["valence", "arousal"] if settings["target"] == "both"
                  else [settings["target"]])
    model_cfg = _model_config(settings)
    train_cfg = _train_config(settings)

    results = []
    all_logs = []
    for dimension in dimensions:
        lookup = LabelLookup(assignments, dimension)
        covered = lookup.participants()
        pids = sorted({s.participant_id for s in samples})
        if covered:  # per-rater cases restrict the participant pool
            pids = [p for p in pids if p in covered]
        if settings["split"] == "kfold5":
            split = evaluate.group_kfold(pids, k=5, seed=int(settings["seed"]))
        elif settings["split"] == "loso":
            split = evaluate.loso(pids)
        else:
            raise UsageError(f"unknown split {settings['split']!r}")
        kept = [s for s in samples if s.participant_id in set(pids)]
        result = evaluate.run_experiment(
            kept, lookup, model_cfg, split,
            fusion=settings["fusion"], train_config=train_cfg)
        results.append(result)
        all_logs.append((dimension, result))

    out_dir = Path(settings["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluate.write_results_csv(out_dir / "results.csv", results)
    evaluate.write_report_json(out_dir / "report.json", results)
    log_dir = out_dir / "logs"
    log_dir.mkdir(exist_ok=True)
    for dimension, result in all_logs:
        for fold_logs, fold in zip(result.train_logs, result.fold_results):
            for name, log in fold_logs.items():
                path = log_dir / f"{dimension}_fold{fold.fold_index}_{name}.csv"
                lines = ["epoch,train_loss,val_loss,val_accuracy"]
                lines.extend(
                    f"{e + 1},{tl!r},{vl!r},{va!r}"
                    for e, (tl, vl, va) in enumerate(
                        zip(log.train_loss, log.val_loss, log.val_accuracy)))
                path.write_text("\n".join(lines) + "\n")
    for result in results:
        print(f"{result.combination} [{result.label_case}/{result.dimension}] "
              f"{result.scheme}/{result.fusion}: "
              f"accuracy {result.mean_accuracy:.4f}, recall {result.mean_recall:.4f}")
    print(f"results written to {out_dir}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    tolerance = float(args.tolerance)
    worst = 0.0
    ok = True
    for seed in range(int(args.seeds)):
        report = grad_check(
            micro_config(hidden_size=int(args.hidden), seed=seed),
            tolerance=tolerance, seed=seed)
        worst = max(worst, report.max_rel_error)
        if not report.passed:
            ok = False
            for entry in report.failures():
                print(f"seed {seed}: {entry.name} rel err {entry.max_rel_error:.3e}")
    print(f"max relative error {worst:.3e} over {int(args.seeds)} seed(s) "
          f"(tolerance {tolerance:g}): {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.report)
    if not path.is_file():
        raise UsageError(f"report not found: {path}")
    data = json.loads(path.read_text())
    rows = []
    for exp in data.get("experiments", []):
        rows.append((exp["combination"], exp["label_case"],
                     f"{exp['dimension']}_accuracy", exp["mean_accuracy"]))
        rows.append((exp["combination"], exp["label_case"],
                     f"{exp['dimension']}_recall", exp["mean_recall"]))
    width = max((len(r[0]) for r in rows), default=10)
    print(f"{'combination':<{width}}  {'label_case':<10}  {'metric':<18}  value")
    for combo, case, metric, value in rows:
        print(f"{combo:<{width}}  {case:<10}  {metric:<18}  {value:.4f}")
    if args.out is not None:
        lines = ["combination,label_case,metric,value"]
        lines.extend(f"{c},{case},{m},{v!r}" for c, case, m, v in rows)
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"rewrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON settings file")
    p.add_argument("--seed", type=int, help="master random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emomsase",
        description="Multimodal emotion classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--out", help="output directory for the CSV dataset")
    p.add_argument("--participants", type=int, help="number of participants")
    p.add_argument("--separation", type=float,
                   help="class-separation amplitude (0 = unlearnable)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="condition and window raw recordings")
    _add_common(p)
    p.add_argument("--data", required=True, help="directory with manifest.csv")
    p.add_argument("--cache", help=f"tensor cache directory (default ${CACHE_ENV})")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("run", help="train and evaluate on a preprocessed cache")
    _add_common(p)
    p.add_argument("--cache", help=f"tensor cache directory (default ${CACHE_ENV})")
    p.add_argument("--ratings", help="ratings CSV")
    p.add_argument("--g2", help="per-video group label table (for --labels g2)")
    p.add_argument("--labels", choices=[c.value for c in LabelCase],
                   help="labelling scheme")
    p.add_argument("--boundary", choices=[b.value for b in BoundaryPolicy],
                   help="treatment of the midpoint rating 4")
    p.add_argument("--domains", help="comma list: peripheral,trunk,head")
    p.add_argument("--split", choices=["kfold5", "loso"], help="validation scheme")
    p.add_argument("--fusion", choices=list(evaluate.FUSION_MODES),
                   help="modality-level or decision-level fusion")
    p.add_argument("--variant", choices=list(VARIANTS), help="model variant")
    p.add_argument("--target", choices=["valence", "arousal", "both"],
                   help="affect dimension(s) to classify")
    p.add_argument("--out", help="output directory for results")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seeds", type=int, default=1, help="number of random draws")
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, default=4, help="hidden size of the micro model")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="pretty-print a run report")
    p.add_argument("--report", required=True, help="report.json from a run")
    p.add_argument("--out", help="also rewrite the summary CSV here")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (dataio.DataError, preprocess.PreprocessError, evaluate.EvaluateError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
