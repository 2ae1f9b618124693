"""Subject-grouped cross-validation, metrics and decision-level fusion.

Splits operate on participant ids, never on samples, so no participant can
appear on two sides of a fold.  Metrics treat High (class 1) as the
positive class.  Decision fusion combines per-domain probability vectors
either by summing them or by trusting the single largest probability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .dataio import HIGH, LabelLookup
from .model import EmoMsase, ModelConfig
from .train import LabeledSet, TrainConfig, TrainLog, fit

SCHEME_KFOLD = "kfold5"
SCHEME_LOSO = "loso"

FUSION_MODALITY = "modality"
FUSION_SUM = "sum"
FUSION_MAX = "max"
FUSION_MODES = (FUSION_MODALITY, FUSION_SUM, FUSION_MAX)


class EvaluateError(ValueError):
    pass


class TooFewParticipantsError(EvaluateError):
    pass


class LeakageError(EvaluateError):
    pass


class EmptyPredictionsError(EvaluateError):
    pass


class NoClassifiersError(EvaluateError):
    pass


class LabelCoverageError(EvaluateError):
    pass


class MissingChannelError(EvaluateError):
    pass


@dataclass(frozen=True)
class Fold:
    index: int
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def check_disjoint(self) -> None:
        sides = [set(self.train), set(self.val), set(self.test)]
        if not all(sides):
            raise EvaluateError(f"fold {self.index}: every side must be non-empty")
        if sides[0] & sides[1] or sides[0] & sides[2] or sides[1] & sides[2]:
            raise LeakageError(f"fold {self.index}: participant on two sides")


@dataclass(frozen=True)
class SplitPlan:
    scheme: str
    participants: tuple[str, ...]
    folds: tuple[Fold, ...]

    def __post_init__(self):
        everyone = set(self.participants)
        for fold in self.folds:
            fold.check_disjoint()
            union = set(fold.train) | set(fold.val) | set(fold.test)
            if union != everyone:
                raise EvaluateError(
                    f"fold {fold.index}: sides do not cover all participants")


def group_kfold(participants: list[str], k: int, seed: int) -> SplitPlan:
    """Deal shuffled participants round-robin into k groups.

    Fold i tests group i, validates on group i+1 (mod k), trains on the
    rest; k must leave at least one training group (k >= 3).
    """
    participants = list(participants)
    if len(set(participants)) != len(participants):
        raise EvaluateError("duplicate participant ids")
    if k > len(participants):
        raise TooFewParticipantsError(
            f"cannot make {k} groups from {len(participants)} participants")
    if k < 3:
        raise EvaluateError("k must be >= 3 so each fold keeps a training side")
    rng = np.random.default_rng(seed)
    order = [participants[i] for i in rng.permutation(len(participants))]
    groups: list[list[str]] = [[] for _ in range(k)]
    for pos, pid in enumerate(order):
        groups[pos % k].append(pid)
    folds = []
    for i in range(k):
        val = groups[(i + 1) % k]
        train = [pid for j, g in enumerate(groups) if j not in (i, (i + 1) % k)
                 for pid in g]
        folds.append(Fold(index=i, train=tuple(train), val=tuple(val),
                          test=tuple(groups[i])))
    return SplitPlan(scheme=f"kfold{k}", participants=tuple(participants),
                     folds=tuple(folds))


def loso(participants: list[str]) -> SplitPlan:
    """Leave-one-subject-out: one test participant per fold, the next one
    (cyclically) as the validation subject."""
    participants = list(participants)
    if len(set(participants)) != len(participants):
        raise EvaluateError("duplicate participant ids")
    n = len(participants)
    if n < 3:
        raise TooFewParticipantsError("leave-one-out needs at least 3 participants")
    folds = []
    for i, pid in enumerate(participants):
        val = participants[(i + 1) % n]
        train = tuple(p for p in participants if p not in (pid, val))
        folds.append(Fold(index=i, train=train, val=(val,), test=(pid,)))
    return SplitPlan(scheme=SCHEME_LOSO, participants=tuple(participants),
                     folds=tuple(folds))


@dataclass
class FoldResult:
    fold_index: int
    accuracy: float
    recall: float
    n_test_samples: int
    confusion: np.ndarray  # rows true class, columns predicted class
    train_participants: tuple[str, ...] = ()
    val_participants: tuple[str, ...] = ()
    test_participants: tuple[str, ...] = ()


def _result_from_classes(predicted: np.ndarray, true: np.ndarray,
                         n_classes: int, fold_index: int) -> FoldResult:
    confusion = np.zeros((n_classes, n_classes), dtype=int)
    for t, p in zip(true, predicted):
        confusion[t, p] += 1
    positives = confusion[HIGH, :].sum()
    recall = confusion[HIGH, HIGH] / positives if positives else 0.0
    return FoldResult(
        fold_index=fold_index,
        accuracy=float((predicted == true).mean()),
        recall=float(recall),
        n_test_samples=int(true.shape[0]),
        confusion=confusion,
    )


def metrics(predictions: list[tuple[np.ndarray, int]], fold_index: int = 0) -> FoldResult:
    """Accuracy, positive-class recall and confusion counts for
    (probability row, true class) pairs."""
    if not predictions:
        raise EmptyPredictionsError("no predictions to score")
    probs = np.stack([np.asarray(p) for p, _ in predictions])
    true = np.array([y for _, y in predictions])
    return _result_from_classes(probs.argmax(axis=1), true, probs.shape[1], fold_index)


@dataclass(frozen=True)
class FusedDecision:
    class_index: int
    tie: bool


def decision_fuse(per_classifier_probs: list[np.ndarray], rule: str) -> FusedDecision:
    """Combine probability vectors from several classifiers into one class.

    ``sum`` adds the vectors and takes the largest total; ``max`` takes the
    class holding the single largest probability anywhere.  Exact ties go
    to the lower class index and are flagged.
    """
    if len(per_classifier_probs) < 2:
        raise NoClassifiersError("decision fusion needs at least two classifiers")
    rows = [np.asarray(p, dtype=np.float64) for p in per_classifier_probs]
    width = rows[0].shape[0]
    for r in rows:
        if r.shape != (width,):
            raise EvaluateError("probability vectors must share one length")
        if r.min() < 0:
            raise EvaluateError("probabilities must be non-negative")
    if rule == FUSION_SUM:
        support = np.sum(rows, axis=0)
    elif rule == FUSION_MAX:
        support = np.max(rows, axis=0)
    else:
        raise EvaluateError(f"unknown fusion rule {rule!r}")
    winner = int(support.argmax())  # argmax already prefers the lower index
    tie = bool(np.sum(support == support[winner]) > 1)
    return FusedDecision(class_index=winner, tie=tie)


@dataclass
class Sample:
    """All channel tensors for one participant watching one video."""

    participant_id: str
    video_id: str
    tensors: dict[str, np.ndarray]  # channel -> (T, F)


@dataclass
class ExperimentResult:
    combination: str
    label_case: str
    dimension: str
    variant: str
    fusion: str
    scheme: str
    fold_results: list[FoldResult]
    train_logs: list[dict[str, TrainLog]]  # per fold, keyed by model name

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([f.accuracy for f in self.fold_results]))

    @property
    def mean_recall(self) -> float:
        return float(np.mean([f.recall for f in self.fold_results]))


def build_labeled_set(samples: list[Sample], labels: LabelLookup,
                      channels: tuple[str, ...],
                      participants: tuple[str, ...]) -> LabeledSet:
    """Stack the samples of the given participants into training tensors."""
    chosen = [s for s in samples if s.participant_id in set(participants)]
    if not chosen:
        raise EvaluateError("no samples for the requested participants")
    rows = {ch: [] for ch in channels}
    y = []
    owners = []
    for s in chosen:
        label = labels.class_for(s.participant_id, s.video_id)
        if label is None:
            raise LabelCoverageError(
                f"no {labels.dimension} label for {s.participant_id}/{s.video_id}")
        for ch in channels:
            if ch not in s.tensors:
                raise MissingChannelError(
                    f"{s.participant_id}/{s.video_id} lacks channel {ch}")
            rows[ch].append(s.tensors[ch])
        y.append(label)
        owners.append(s.participant_id)
    return LabeledSet(
        inputs={ch: np.stack(stack) for ch, stack in rows.items()},
        labels=np.array(y, dtype=int),
        participants=tuple(owners),
    )


def _fold_seeded(config, fold_index: int):
    return replace(config, seed=config.seed + 1000 * (fold_index + 1))


def run_experiment(samples: list[Sample], labels: LabelLookup,
                   model_config: ModelConfig, split: SplitPlan,
                   fusion: str = FUSION_MODALITY,
                   train_config: TrainConfig = TrainConfig()) -> ExperimentResult:
    """Train and score one model configuration across every fold of a split.

    Modality fusion trains a single model on all configured domains;
    sum/max decision fusion trains one model per domain and fuses their
    test probabilities per sample.
    """
    if fusion not in FUSION_MODES:
        raise EvaluateError(f"unknown fusion mode {fusion!r}")
    sample_pids = {s.participant_id for s in samples}
    missing = set(split.participants) - sample_pids
    if missing:
        raise EvaluateError(f"split names unknown participants: {sorted(missing)}")

    domains = [d for d, _ in model_config.domain_channels]
    if fusion in (FUSION_SUM, FUSION_MAX) and len(domains) < 2:
        raise NoClassifiersError("decision fusion needs at least two domains")

    fold_results = []
    fold_logs = []
    for fold in split.folds:
        fold.check_disjoint()  # belt and braces before any training
        model_cfg = _fold_seeded(model_config, fold.index)
        train_cfg = _fold_seeded(train_config, fold.index)
        logs: dict[str, TrainLog] = {}
        if fusion == FUSION_MODALITY:
            model = EmoMsase(model_cfg)
            tr = build_labeled_set(samples, labels, model_cfg.channels, fold.train)
            va = build_labeled_set(samples, labels, model_cfg.channels, fold.val)
            te = build_labeled_set(samples, labels, model_cfg.channels, fold.test)
            model, logs["model"] = fit(model, tr, va, train_cfg)
            probs = model.predict(te.inputs)
            result = _result_from_classes(
                probs.argmax(axis=1), te.labels, model_cfg.n_classes, fold.index)
        else:
            rule = FUSION_SUM if fusion == FUSION_SUM else FUSION_MAX
            per_domain_probs = []
            te_labels = None
            for domain in domains:
                cfg_d = _fold_seeded(model_config.restrict([domain]), fold.index)
                model = EmoMsase(cfg_d)
                tr = build_labeled_set(samples, labels, cfg_d.channels, fold.train)
                va = build_labeled_set(samples, labels, cfg_d.channels, fold.val)
                te = build_labeled_set(samples, labels, cfg_d.channels, fold.test)
                model, logs[domain] = fit(model, tr, va, train_cfg)
                per_domain_probs.append(model.predict(te.inputs))
                te_labels = te.labels
            fused = np.array([
                decision_fuse([p[i] for p in per_domain_probs], rule).class_index
                for i in range(te_labels.shape[0])
            ])
            result = _result_from_classes(
                fused, te_labels, model_config.n_classes, fold.index)
        result.train_participants = fold.train
        result.val_participants = fold.val
        result.test_participants = fold.test
        fold_results.append(result)
        fold_logs.append(logs)

    return ExperimentResult(
        combination="+".join(domains),
        label_case=labels.case_name,
        dimension=labels.dimension,
        variant=model_config.variant,
        fusion=fusion,
        scheme=split.scheme,
        fold_results=fold_results,
        train_logs=fold_logs,
    )


def results_rows(results: list[ExperimentResult]) -> list[tuple[str, str, str, float]]:
    """Flatten experiment results into (combination, label_case, metric, value)."""
    rows = []
    for r in results:
        rows.append((r.combination, r.label_case,
                     f"{r.dimension}_accuracy", r.mean_accuracy))
        rows.append((r.combination, r.label_case,
                     f"{r.dimension}_recall", r.mean_recall))
    return rows


def write_results_csv(path, results: list[ExperimentResult]) -> None:
    lines = ["combination,label_case,metric,value"]
    lines.extend(f"{c},{case},{metric},{value!r}"
                 for c, case, metric, value in results_rows(results))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def report_dict(results: list[ExperimentResult]) -> dict:
    """JSON-ready report with per-fold detail."""
    out = []
    for r in results:
        folds = []
        for f, logs in zip(r.fold_results, r.train_logs):
            folds.append({
                "fold": f.fold_index,
                "accuracy": f.accuracy,
                "recall": f.recall,
                "n_test_samples": f.n_test_samples,
                "confusion": f.confusion.tolist(),
                "train_participants": list(f.train_participants),
                "val_participants": list(f.val_participants),
                "test_participants": list(f.test_participants),
                "training": {
                    name: {
                        "best_epoch": log.best_epoch,
                        "stopped_epoch": log.stopped_epoch,
                        "final_val_loss": log.val_loss[log.best_epoch - 1]
                        if log.best_epoch else None,
                    } for name, log in logs.items()
                },
            })
        out.append({
            "combination": r.combination,
            "label_case": r.label_case,
            "dimension": r.dimension,
            "variant": r.variant,
            "fusion": r.fusion,
            "scheme": r.scheme,
            "mean_accuracy": r.mean_accuracy,
            "mean_recall": r.mean_recall,
            "folds": folds,
        })
    return {"experiments": out}


def write_report_json(path, results: list[ExperimentResult]) -> None:
    with open(path, "w") as fh:
        json.dump(report_dict(results), fh, indent=2, sort_keys=True)
        fh.write("\n")
