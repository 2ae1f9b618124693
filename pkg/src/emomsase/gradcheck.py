"""Finite-difference verification of the whole classifier gradient.

Builds a model from a config, runs one forward/backward on random inputs,
then re-derives every parameter gradient entry by central differences of
the loss and reports the worst relative disagreement per parameter.
Parameters that do not reach the loss (a variant's unused blocks) show an
exact zero on both routes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .model import EmoMsase, ModelConfig

# Relative error denominators are floored so that finite-difference roundoff
# on near-zero gradients is not amplified into spurious failures.
DENOM_FLOOR = 1e-4
ZERO_CUTOFF = 1e-10


@dataclass(frozen=True)
class GradCheckEntry:
    name: str
    max_rel_error: float
    analytic_zero: bool
    fd_zero: bool


@dataclass(frozen=True)
class GradCheckReport:
    entries: tuple[GradCheckEntry, ...]
    tolerance: float
    epsilon: float
    seed: int

    @property
    def max_rel_error(self) -> float:
        return max(e.max_rel_error for e in self.entries)

    @property
    def passed(self) -> bool:
        return all(e.max_rel_error < self.tolerance for e in self.entries)

    def failures(self) -> list[GradCheckEntry]:
        return [e for e in self.entries if e.max_rel_error >= self.tolerance]

    def summary_lines(self) -> list[str]:
        lines = [f"{e.name}: max rel err {e.max_rel_error:.3e}" for e in self.entries]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"{verdict}: max rel err {self.max_rel_error:.3e} "
                     f"over {len(self.entries)} params (tolerance {self.tolerance:g})")
        return lines


def micro_config(hidden_size: int = 4, feature_size: int = 3,
                 variant: str = "emomsase", seed: int = 0) -> ModelConfig:
    """A two-domain, two-modality-per-domain model small enough to check fast."""
    return ModelConfig(
        domain_channels=(
            ("Peripheral", ("ACC_Z", "EDA")),
            ("Trunk", ("LAT_ACC", "ECG1")),
        ),
        feature_sizes={ch: feature_size for ch in ("ACC_Z", "EDA", "LAT_ACC", "ECG1")},
        hidden_size=hidden_size,
        se_reduction=4,
        variant=variant,
        seed=seed,
    )


def _param_owner(model: EmoMsase) -> dict[int, str | None]:
    """Which channel's subgraph each parameter feeds (None: shared head/SE)."""
    owner: dict[int, str | None] = {id(p): None for p in model.parameters()}
    for ch in model.config.channels:
        for layer in model.stacks[ch].layers:
            for p in (layer.wx, layer.wh, layer.b):
                owner[id(p)] = ch
        ctx = model.contexts[ch]
        for p in (ctx.u_short, ctx.u_medium, ctx.u_long):
            owner[id(p)] = ch
    return owner


def grad_check(config: ModelConfig, tolerance: float = 1e-3, *,
               epsilon: float = 1e-4, seed: int = 0, batch_size: int = 2,
               timesteps: int = 6) -> GradCheckReport:
    """Compare analytic and central finite-difference gradients per parameter.

    The batch (inputs and labels) is drawn from ``seed``; the model's own
    weights come from the config seed.  Relative error per entry is
    |analytic - fd| / max(|analytic|, |fd|, 1e-4); entries where both routes
    are below 1e-10 count as exact zeros with error 0.

    Finite-difference evaluations reuse the pooled feature vectors of
    modalities the perturbed parameter cannot reach (they are unchanged by
    construction), so only the touched branch and the shared classifier are
    recomputed per probe.
    """
    model = EmoMsase(config)
    rng = np.random.default_rng(seed)
    batch = {
        ch: rng.standard_normal((batch_size, timesteps, config.feature_sizes[ch]))
        for ch in config.channels
    }
    labels = rng.integers(0, config.n_classes, size=batch_size)

    probs, tape = model.forward(batch)
    loss = ad.nll_mean(tape, probs, labels)
    model.zero_grad()
    tape.backward(loss)

    # Pooled per-modality feature values at the unperturbed parameters.
    base_tape = ad.Tape()
    base_cavs = {
        ch: model.modality_cav(base_tape, ad.leaf(batch[ch]), ch).value
        for ch in config.channels
    }
    owner = _param_owner(model)

    def loss_at(touched: str | None) -> float:
        tape = ad.Tape()
        cavs = {}
        for ch in config.channels:
            if ch == touched:
                cavs[ch] = model.modality_cav(tape, ad.leaf(batch[ch]), ch)
            else:
                cavs[ch] = ad.leaf(base_cavs[ch])
        out = model.classify(tape, cavs)
        return float(ad.nll_mean(tape, out, labels).value)

    entries = []
    for param in model.parameters():
        touched = owner[id(param)]
        analytic = param.grad.copy()
        fd = np.empty_like(analytic)
        flat = param.value.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_at(touched)
            flat[i] = orig - epsilon
            down = loss_at(touched)
            flat[i] = orig
            fd_flat[i] = (up - down) / (2.0 * epsilon)
        both_zero = (np.abs(analytic) < ZERO_CUTOFF) & (np.abs(fd) < ZERO_CUTOFF)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), DENOM_FLOOR)
        rel = np.abs(analytic - fd) / denom
        rel[both_zero] = 0.0
        entries.append(GradCheckEntry(
            name=param.name,
            max_rel_error=float(rel.max()),
            analytic_zero=bool(np.all(np.abs(analytic) < ZERO_CUTOFF)),
            fd_zero=bool(np.all(np.abs(fd) < ZERO_CUTOFF)),
        ))
    return GradCheckReport(entries=tuple(entries), tolerance=tolerance,
                           epsilon=epsilon, seed=seed)
