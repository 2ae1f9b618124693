"""The multimodal classifier graph.

Per modality: a two-layer LSTM reads the windowed signal, then attention
pools the hidden sequence at three temporal scales (full, half, third
resolution, each with its own learnable context vector).  The three pooled
vectors concatenate into a context-aggregated vector (CAV) of length 3H.
Per domain, modality CAVs stack into an (M, 3H) block that a
squeeze-and-excitation gate recalibrates; all blocks then flatten into a
softmax classifier.

Variants:
  lstmsa     single-scale attention only, CAV length H, no recalibration
  lstmmsa    three scales, no recalibration
  emomsase   three scales plus squeeze-and-excitation (the full model)
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteActivationError, Param, ShapeMismatchError, Tape, Var

VARIANT_LSTMSA = "lstmsa"
VARIANT_LSTMMSA = "lstmmsa"
VARIANT_FULL = "emomsase"
VARIANTS = (VARIANT_LSTMSA, VARIANT_LSTMMSA, VARIANT_FULL)

N_LSTM_LAYERS = 2
MERGE_FACTORS = (2, 3)  # half and third temporal resolution


class SequenceTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters plus the modality layout.

    ``domain_channels`` fixes the domain order and, within each domain, the
    modality order; ``feature_sizes`` gives the per-channel window length F.
    """

    domain_channels: tuple[tuple[str, tuple[str, ...]], ...]
    feature_sizes: dict[str, int]
    hidden_size: int = 128
    se_reduction: int = 4
    n_classes: int = 2
    variant: str = VARIANT_FULL
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.hidden_size < 1 or self.n_classes < 2:
            raise ValueError("hidden size and class count must be positive")
        if not self.domain_channels:
            raise ValueError("need at least one domain")
        for domain, channels in self.domain_channels:
            if not channels:
                raise ValueError(f"domain {domain} has no channels")
            for ch in channels:
                if ch not in self.feature_sizes:
                    raise ValueError(f"no feature size for channel {ch!r}")
        cav = 3 * self.hidden_size
        if self.se_reduction < 1 or cav % self.se_reduction != 0:
            raise ValueError(
                f"reduction {self.se_reduction} must divide the CAV length {cav}")

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(ch for _, chs in self.domain_channels for ch in chs)

    @property
    def cav_length(self) -> int:
        return self.hidden_size if self.variant == VARIANT_LSTMSA else 3 * self.hidden_size

    def restrict(self, domains: list[str]) -> "ModelConfig":
        """Keep only the named domains (used for per-domain decision fusion)."""
        kept = tuple((d, chs) for d, chs in self.domain_channels if d in domains)
        if not kept:
            raise ValueError(f"no configured domain among {domains}")
        return replace(self, domain_channels=kept)


@dataclass
class LstmLayerParams:
    wx: Param  # (F, 4H), gate blocks ordered input, forget, output, cell-candidate
    wh: Param  # (H, 4H)
    b: Param   # (4H,)


@dataclass
class LstmStack:
    layers: tuple[LstmLayerParams, ...]


@dataclass
class AttentionContexts:
    """One learnable context vector per temporal scale."""

    u_short: Param
    u_medium: Param
    u_long: Param


@dataclass
class SeBlock:
    """Squeeze-and-excitation gate over a domain's modality stack."""

    w1: Param  # (L, L/r)
    w2: Param  # (L/r, L)


@dataclass
class ClassifierHead:
    w: Param
    b: Param


@dataclass
class Cav:
    """Attention-pooled feature vectors for one modality batch."""

    v_short: Var
    v_medium: Var | None
    v_long: Var | None
    combined: Var  # (B, H) or (B, 3H)


def _uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_lstm_stack(rng: np.random.Generator, name: str, f_in: int,
                    hidden: int) -> LstmStack:
    """Two LSTM layers; biases start at zero except the forget gate at +1."""
    layers = []
    width = f_in
    for layer in range(N_LSTM_LAYERS):
        b0 = np.zeros(4 * hidden)
        b0[hidden:2 * hidden] = 1.0
        layers.append(LstmLayerParams(
            wx=Param(f"{name}/lstm{layer}/wx",
                     _uniform_init(rng, (width, 4 * hidden), width)),
            wh=Param(f"{name}/lstm{layer}/wh",
                     _uniform_init(rng, (hidden, 4 * hidden), hidden)),
            b=Param(f"{name}/lstm{layer}/b", b0),
        ))
        width = hidden
    return LstmStack(layers=tuple(layers))


def lstm_features(tape: Tape, x: Var, stack: LstmStack) -> Var:
    """Hidden sequence (B, T, H) of the top LSTM layer for windowed input x."""
    if x.value.ndim != 3:
        raise ShapeMismatchError(f"expected (B, T, F) input, got {x.value.shape}")
    h = x
    for layer in stack.layers:
        h = ad.lstm_layer(tape, h, layer.wx, layer.wh, layer.b)
    return h


def scale_attention(tape: Tape, hidden: Var, u: Param) -> tuple[Var, Var]:
    """Softmax attention pooling of (B, T, H) against one context vector.

    Returns (weights (B, T), pooled (B, H)); the weights are a convex
    combination, so each pooled coordinate stays inside the per-coordinate
    range of the hidden states.
    """
    scores = ad.dot_last(tape, hidden, u)
    weights = ad.softmax(tape, scores)
    pooled = ad.weighted_sum(tape, weights, hidden)
    return weights, pooled


def merge_timesteps(tape: Tape, hidden: Var, factor: int) -> Var:
    """Halve or third the temporal resolution by averaging adjacent steps."""
    if factor not in MERGE_FACTORS:
        raise ValueError(f"merge factor must be one of {MERGE_FACTORS}")
    if hidden.value.shape[1] < factor:
        raise SequenceTooShortError(
            f"{hidden.value.shape[1]} timesteps cannot merge by {factor}")
    return ad.merge_pairs_mean(tape, hidden, factor)


def msa(tape: Tape, hidden: Var, contexts: AttentionContexts) -> Cav:
    """Multi-scale attention: pool at full, half and third resolution."""
    if hidden.value.shape[1] < 3:
        raise SequenceTooShortError(
            "multi-scale attention needs at least 3 timesteps")
    _, v_short = scale_attention(tape, hidden, contexts.u_short)
    _, v_medium = scale_attention(
        tape, merge_timesteps(tape, hidden, 2), contexts.u_medium)
    _, v_long = scale_attention(
        tape, merge_timesteps(tape, hidden, 3), contexts.u_long)
    combined = ad.concat(tape, [v_short, v_medium, v_long], axis=-1)
    return Cav(v_short=v_short, v_medium=v_medium, v_long=v_long, combined=combined)


def se_recalibrate(tape: Tape, stacked: Var, se: SeBlock) -> Var:
    """Gate a (B, M, L) modality stack by squeeze-and-excitation.

    Squeeze averages over the modality axis; the excitation MLP
    (L -> L/r -> L, ReLU then sigmoid) yields per-feature gates in (0, 1)
    that multiply every modality row.
    """
    if stacked.value.ndim != 3:
        raise ShapeMismatchError(f"expected (B, M, L), got {stacked.value.shape}")
    z = ad.mean_axis(tape, stacked, axis=1)
    s = ad.sigmoid(tape, ad.matmul(tape, ad.relu(tape, ad.matmul(tape, z, se.w1)), se.w2))
    b, l = s.value.shape
    return ad.mul(tape, stacked, ad.reshape(tape, s, (b, 1, l)))


def fuse_and_classify(tape: Tape, domain_blocks: list[Var], head: ClassifierHead) -> Var:
    """Concatenate (B, M_d, L) blocks over modalities and softmax-classify."""
    if not domain_blocks:
        raise ShapeMismatchError("no domain blocks to fuse")
    fused = domain_blocks[0] if len(domain_blocks) == 1 else ad.concat(
        tape, domain_blocks, axis=1)
    b, m, l = fused.value.shape
    if m * l != head.w.value.shape[0]:
        raise ShapeMismatchError(
            f"fused width {m * l} does not match head input {head.w.value.shape[0]}")
    flat = ad.reshape(tape, fused, (b, m * l))
    logits = ad.add(tape, ad.matmul(tape, flat, head.w), head.b)
    return ad.softmax(tape, logits)


class EmoMsase:
    """The full classifier with per-modality extractors and a shared head."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        h = config.hidden_size
        cav_len = config.cav_length
        se_hidden = (3 * h) // config.se_reduction

        self.stacks: dict[str, LstmStack] = {}
        self.contexts: dict[str, AttentionContexts] = {}
        self.se_blocks: dict[str, SeBlock] = {}
        n_modalities = 0
        for domain, channels in config.domain_channels:
            for ch in channels:
                self.stacks[ch] = init_lstm_stack(
                    rng, ch, config.feature_sizes[ch], h)
                self.contexts[ch] = AttentionContexts(
                    u_short=Param(f"{ch}/attn/u_short", _uniform_init(rng, (h,), h)),
                    u_medium=Param(f"{ch}/attn/u_medium", _uniform_init(rng, (h,), h)),
                    u_long=Param(f"{ch}/attn/u_long", _uniform_init(rng, (h,), h)),
                )
                n_modalities += 1
            # Allocated for every variant; simply left out of the graph when
            # the variant does not recalibrate, so its gradients stay zero.
            self.se_blocks[domain] = SeBlock(
                w1=Param(f"{domain}/se/w1",
                         _uniform_init(rng, (cav_len, se_hidden), cav_len)),
                w2=Param(f"{domain}/se/w2",
                         _uniform_init(rng, (se_hidden, cav_len), se_hidden)),
            )
        in_dim = n_modalities * cav_len
        self.head = ClassifierHead(
            w=Param("head/w", _uniform_init(rng, (in_dim, config.n_classes), in_dim)),
            b=Param("head/b", np.zeros(config.n_classes)),
        )

    def parameters(self) -> list[Param]:
        params: list[Param] = []
        for ch in self.config.channels:
            for layer in self.stacks[ch].layers:
                params.extend([layer.wx, layer.wh, layer.b])
            ctx = self.contexts[ch]
            params.extend([ctx.u_short, ctx.u_medium, ctx.u_long])
        for domain, _ in self.config.domain_channels:
            params.extend([self.se_blocks[domain].w1, self.se_blocks[domain].w2])
        params.extend([self.head.w, self.head.b])
        return params

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def modality_cav(self, tape: Tape, x: Var, channel: str) -> Var:
        expected_f = self.config.feature_sizes[channel]
        if x.value.ndim != 3 or x.value.shape[2] != expected_f:
            raise ShapeMismatchError(
                f"{channel}: expected (B, T, {expected_f}), got {x.value.shape}")
        hidden = lstm_features(tape, x, self.stacks[channel])
        if self.config.variant == VARIANT_LSTMSA:
            _, pooled = scale_attention(tape, hidden, self.contexts[channel].u_short)
            return pooled
        return msa(tape, hidden, self.contexts[channel]).combined

    def classify(self, tape: Tape, cavs: dict[str, Var]) -> Var:
        """Stack per-modality CAVs per domain, recalibrate, fuse, classify."""
        blocks = []
        for domain, channels in self.config.domain_channels:
            block = ad.stack_rows(tape, [cavs[ch] for ch in channels])
            if self.config.variant == VARIANT_FULL:
                block = se_recalibrate(tape, block, self.se_blocks[domain])
            blocks.append(block)
        return fuse_and_classify(tape, blocks, self.head)

    def forward(self, batch: dict[str, np.ndarray]) -> tuple[Var, Tape]:
        """Class probabilities (B, C) for a batch of per-channel tensors."""
        missing = [ch for ch in self.config.channels if ch not in batch]
        if missing:
            raise ShapeMismatchError(f"batch is missing channel(s) {missing}")
        tape = Tape()
        cavs = {ch: self.modality_cav(tape, ad.leaf(batch[ch]), ch)
                for ch in self.config.channels}
        probs = self.classify(tape, cavs)
        if not np.all(np.isfinite(probs.value)):
            raise NonFiniteActivationError("non-finite class probabilities")
        return probs, tape

    def predict(self, inputs: dict[str, np.ndarray], batch_size: int = 128) -> np.ndarray:
        """Probabilities (N, C) for stacked inputs, evaluated in chunks."""
        n = next(iter(inputs.values())).shape[0]
        chunks = []
        for start in range(0, n, batch_size):
            part = {ch: x[start:start + batch_size] for ch, x in inputs.items()}
            probs, _ = self.forward(part)
            chunks.append(probs.value)
        return np.concatenate(chunks, axis=0)
