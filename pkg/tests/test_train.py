"""Optimizer, loss and training-loop tests."""

import numpy as np
import numpy.testing as npt
import pytest

from emomsase import train as train_mod
from emomsase.autodiff import Param
from emomsase.model import EmoMsase, ModelConfig
from emomsase.train import (
    AdamW, EmptySplitError, InvalidClassError, LabeledSet,
    NonFiniteGradientError, TrainConfig, TrainError, cross_entropy,
    evaluate_loss, fit,
)

from reference_impls import adamw_steps_reference


def _tiny_config(seed=0):
    return ModelConfig(
        domain_channels=(("Peripheral", ("EDA",)),),
        feature_sizes={"EDA": 3},
        hidden_size=4,
        se_reduction=4,
        seed=seed,
    )


def _toy_set(n, seed=0, t_len=6, f_dim=3):
    """Class 1 samples carry a positive mean shift; labels alternate."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    x = rng.standard_normal((n, t_len, f_dim))
    x[labels == 1] += 2.0
    return LabeledSet(inputs={"EDA": x}, labels=labels,
                      participants=tuple(f"p{i % 4}" for i in range(n)))


# ---------------------------------------------------------------------------
# Config and loss
# ---------------------------------------------------------------------------

def test_train_config_validation():
    with pytest.raises(TrainError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(TrainError):
        TrainConfig(batch_size=0)
    with pytest.raises(TrainError):
        TrainConfig(patience=51, max_epochs=50)
    TrainConfig(patience=0)  # stopping immediately on the first bad epoch is legal


def test_cross_entropy_values():
    npt.assert_allclose(cross_entropy(np.array([0.5, 0.5]), 0), np.log(2.0))
    npt.assert_allclose(cross_entropy(np.array([1.0, 0.0]), 0), 0.0, atol=1e-11)
    # the epsilon keeps a zero-probability true class finite
    assert cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(
        -np.log(1e-12))
    with pytest.raises(InvalidClassError):
        cross_entropy(np.array([0.5, 0.5]), 2)


def test_labeled_set_validation():
    with pytest.raises(TrainError):
        LabeledSet(inputs={"EDA": np.zeros((3, 2, 2))}, labels=np.zeros(3, int),
                   participants=("a", "b"))
    with pytest.raises(TrainError):
        LabeledSet(inputs={"EDA": np.zeros((2, 2, 2))}, labels=np.zeros(3, int),
                   participants=("a", "b", "c"))
    s = _toy_set(6)
    assert len(s) == 6
    taken = s.take(np.array([0, 2]))
    assert taken["EDA"].shape == (2, 6, 3)


# ---------------------------------------------------------------------------
# AdamW
# ---------------------------------------------------------------------------

def test_adamw_matches_elementwise_reference():
    rng = np.random.default_rng(0)
    start = rng.standard_normal(5)
    grads = [rng.standard_normal(5) for _ in range(5)]
    config = TrainConfig(learning_rate=0.01, weight_decay=0.05)

    p = Param("p", start.copy())
    opt = AdamW([p], config)
    for g in grads:
        p.grad[...] = g
        opt.step()
    ref = adamw_steps_reference(start, grads, lr=0.01, beta1=config.beta1,
                                beta2=config.beta2, eps=config.eps,
                                weight_decay=0.05)
    npt.assert_allclose(p.value, ref, atol=1e-14)


def test_adamw_decay_moves_zero_gradient_weights():
    p = Param("p", np.array([1.0]))
    opt = AdamW([p], TrainConfig(learning_rate=0.001, weight_decay=0.01))
    opt.step()  # grad is exactly zero
    npt.assert_allclose(p.value, [0.99999], atol=1e-15)


def test_adamw_first_step_is_signed_learning_rate():
    # with bias correction the first update is lr * g / (|g| + eps)
    p = Param("p", np.array([0.0, 0.0]))
    p.grad[...] = np.array([0.5, -2.0])
    opt = AdamW([p], TrainConfig(learning_rate=0.01, weight_decay=0.0))
    opt.step()
    npt.assert_allclose(p.value, [-0.01, 0.01], rtol=1e-6)


def test_adamw_rejects_non_finite_gradients():
    p = Param("p", np.ones(2))
    p.grad[...] = [np.nan, 0.0]
    opt = AdamW([p], TrainConfig())
    with pytest.raises(NonFiniteGradientError):
        opt.step()


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def test_fit_rejects_empty_splits():
    model = EmoMsase(_tiny_config())
    data = _toy_set(4)
    empty = LabeledSet(inputs={"EDA": np.zeros((0, 6, 3))},
                       labels=np.zeros(0, int), participants=())
    with pytest.raises(EmptySplitError):
        fit(model, empty, data)
    with pytest.raises(EmptySplitError):
        fit(model, data, empty)


def test_fit_learns_separable_toy_data():
    model = EmoMsase(_tiny_config())
    train_set = _toy_set(24, seed=1)
    val_set = _toy_set(8, seed=2)
    config = TrainConfig(learning_rate=0.01, batch_size=8, max_epochs=15,
                         patience=15, seed=0)
    model, log = fit(model, train_set, val_set, config)
    assert log.n_epochs() >= 1
    assert log.train_loss[-1] < log.train_loss[0]
    assert log.val_accuracy[log.best_epoch - 1] >= 0.75
    loss, acc = evaluate_loss(model, val_set)
    npt.assert_allclose(loss, log.val_loss[log.best_epoch - 1], atol=1e-9)


def test_fit_is_deterministic():
    def run():
        model = EmoMsase(_tiny_config())
        return fit(model, _toy_set(12, seed=3), _toy_set(4, seed=4),
                   TrainConfig(max_epochs=3, patience=3, batch_size=4, seed=5))
    m1, log1 = run()
    m2, log2 = run()
    assert log1.train_loss == log2.train_loss
    assert log1.val_loss == log2.val_loss
    for a, b in zip(m1.parameters(), m2.parameters()):
        npt.assert_array_equal(a.value, b.value)


def _scripted_fit(monkeypatch, val_sequence, **config_kw):
    """Run fit with evaluate_loss replaced by a canned validation trace."""
    calls = iter(val_sequence)

    def fake_eval(model, data, batch_size=128):
        return next(calls), 0.5

    monkeypatch.setattr(train_mod, "evaluate_loss", fake_eval)
    model = EmoMsase(_tiny_config())
    return fit(model, _toy_set(8, seed=6), _toy_set(4, seed=7),
               TrainConfig(batch_size=4, seed=8, **config_kw))


def test_early_stopping_patience_semantics(monkeypatch):
    # best at epoch 1, then worsening: patience 1 tolerates one bad epoch
    # and stops on the second, directly after epoch 3
    _, log = _scripted_fit(monkeypatch, [1.0, 2.0, 3.0, 0.1, 0.1],
                           max_epochs=5, patience=1)
    assert log.stopped_epoch == 3
    assert log.best_epoch == 1
    assert log.n_epochs() == 3


def test_early_stopping_requires_strict_improvement(monkeypatch):
    # a plateau does not reset the streak
    _, log = _scripted_fit(monkeypatch, [1.0, 1.0, 1.0, 1.0, 1.0],
                           max_epochs=5, patience=2)
    assert log.stopped_epoch == 4  # bad epochs 2,3,4 exceed patience 2
    assert log.best_epoch == 1


def test_early_stopping_runs_out_the_clock(monkeypatch):
    _, log = _scripted_fit(monkeypatch, [5.0, 4.0, 3.0, 2.0, 1.0],
                           max_epochs=5, patience=1)
    assert log.stopped_epoch == 5
    assert log.best_epoch == 5


def test_fit_restores_best_epoch_parameters(monkeypatch):
    # A: exactly two epochs, best is the second
    m_a, log_a = _scripted_fit(monkeypatch, [1.0, 0.4], max_epochs=2, patience=2)
    assert log_a.best_epoch == 2
    # B: same schedule continues, later epochs are worse; the returned
    # parameters must equal A's end-of-epoch-2 state
    m_b, log_b = _scripted_fit(monkeypatch, [1.0, 0.4, 0.9, 0.9],
                               max_epochs=10, patience=1)
    assert log_b.stopped_epoch == 4
    assert log_b.best_epoch == 2
    for pa, pb in zip(m_a.parameters(), m_b.parameters()):
        npt.assert_array_equal(pa.value, pb.value)
