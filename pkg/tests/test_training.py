import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liftrisk.core import ActionLabel
from liftrisk.gmoe import GmoeModel, forward
from liftrisk.synth import generate_lift, task_script
from liftrisk.training import (
    Adam,
    TrainConfig,
    WindowSet,
    evaluate,
    gradients,
    loss,
    loss_and_grad,
    make_training_targets,
    train,
)
from gradcheck import check, small_problem


def brute_force_loss(probs, experts, actions, motion, b1, b2, squared=True):
    """Scalar re-summation of the combined loss with Python floats."""
    B, T, A = probs.shape
    F = experts.shape[-1]
    l1 = 0.0
    l2 = 0.0
    for j in range(B):
        for t in range(T):
            for i in range(A):
                if actions[j, t] == i:
                    l1 -= math.log(max(probs[j, t, i], 1e-12))
            sq = 0.0
            for f in range(F):
                blended = sum(probs[j, t, i] * experts[j, i, t, f] for i in range(A))
                sq += (blended - motion[j, t, f]) ** 2
            l2 += sq if squared else math.sqrt(sq)
    l1 /= 2 * B
    l2 /= 2 * B
    return b1 * l1 + b2 * l2, l1, l2


def test_default_config_values():
    c = TrainConfig()
    assert (c.epsilon, c.b1, c.b2, c.norm, c.batch_size) == (1e-6, 1.0, 0.5, "squared", 32)
    for bad in (dict(b1=-1), dict(epsilon=0), dict(patience=0), dict(norm="l1")):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_dict({"lr": 0.1})


def test_perfect_prediction_has_zero_loss(rng):
    a = rng.integers(0, 3, size=(4, 50))
    probs = np.eye(3)[a]
    experts = rng.normal(size=(4, 3, 50, 43))
    motion = np.einsum("bta,batf->btf", probs, experts)
    assert loss(probs, experts, a, motion) == (0.0, 0.0, 0.0)


def test_uniform_gate_closed_form(rng):
    a = rng.integers(0, 3, size=(3, 50))
    probs = np.full((3, 50, 3), 1 / 3)
    experts = np.zeros((3, 3, 50, 43))
    L, L1, L2 = loss(probs, experts, a, np.zeros((3, 50, 43)))
    assert L == pytest.approx(25 * math.log(3), abs=1e-12) and L2 == 0.0
    assert L == pytest.approx(27.465, abs=1e-3)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000), st.sampled_from(["squared", "l2"]),
       st.floats(0, 2), st.floats(0, 2))
def test_loss_matches_re_summation(seed, norm, b1, b2):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(3), size=(3, 4))
    experts = rng.normal(size=(3, 3, 4, 5))
    a = rng.integers(0, 3, size=(3, 4))
    y = rng.normal(size=(3, 4, 5))
    got = loss(probs, experts, a, y, TrainConfig(b1=b1, b2=b2, norm=norm))
    ref = brute_force_loss(probs, experts, a, y, b1, b2, norm == "squared")
    assert np.allclose(got, ref, rtol=0, atol=1e-10)


def test_loss_rejects_bad_input(rng):
    probs = np.full((2, 5, 3), 1 / 3)
    with pytest.raises(ValueError, match="shape mismatch"):
        loss(probs, np.zeros((2, 3, 5, 4)), np.zeros((2, 4), int), np.zeros((2, 5, 4)))
    bad = np.zeros((2, 5, 4))
    bad[0, 0, 0] = np.inf
    with pytest.raises(ValueError, match="non-finite"):
        loss(probs, np.zeros((2, 3, 5, 4)), np.zeros((2, 5), int), bad)


def test_log_clamp(rng):
    probs = np.zeros((1, 1, 3))
    probs[0, 0, 1] = 1.0
    L, L1, _ = loss(probs, np.zeros((1, 3, 1, 2)), np.array([[0]]), np.zeros((1, 1, 2)))
    assert L1 == pytest.approx(-math.log(1e-12) / 2)


@pytest.mark.parametrize("norm", ["squared", "l2"])
def test_gradient_check_sampled(norm):
    model, x, a, y, cfg = small_problem(5, norm)
    rng = np.random.default_rng(0)
    idx = rng.choice(model.n_params, 600, replace=False)
    floored, _, abs_err = check(model, x, a, y, cfg, indices=idx)
    assert floored < 1e-4 and abs_err < 1e-8


def test_gradient_zero_weights_symmetric_batch():
    model = GmoeModel(hidden=3, horizon=4)
    x = np.zeros((2, 10, 74))
    x[0] = 0.5
    x[1] = -0.5
    a = np.array([[0, 1, 2, 0], [0, 1, 2, 0]])
    y = np.stack([np.full((4, 43), 0.3), np.full((4, 43), -0.3)])
    floored, plain, _ = check(model, x, a, y, TrainConfig())
    assert floored < 1e-6


def test_b2_scales_expert_gradients_linearly():
    model, x, a, y, _ = small_problem(9)
    g1, _ = gradients(model, x, a, y, TrainConfig(b2=0.5))
    g2, _ = gradients(model, x, a, y, TrainConfig(b2=1.0))
    for name in ("expert_W", "expert_b"):
        assert np.allclose(g2[name], 2 * g1[name], rtol=1e-12, atol=0)
    assert np.allclose(g2["lstm_W"][1:], 2 * g1["lstm_W"][1:], rtol=1e-12, atol=1e-300)


def test_adam_matches_closed_form():
    p = {"w": np.array([1.0, -2.0])}
    opt = Adam(p, lr=0.1, epsilon=1e-6)
    g = np.array([0.5, -4.0])
    opt.step(p, {"w": g.copy()})
    # first bias-corrected step is lr * g / (|g| + eps)
    assert np.allclose(p["w"], [1.0 - 0.1 * 0.5 / (0.5 + 1e-6), -2.0 + 0.1 * 4.0 / (4.0 + 1e-6)])


def test_training_targets_index_arithmetic(task2_lift):
    ws = make_training_targets(task2_lift)
    n = len(task2_lift)
    assert ws.anchors[0] == 27 and ws.anchors[-1] == n - 1 - 150
    x, a, y = ws.batch(np.array([0, len(ws) - 1]))
    feats = task2_lift.features
    assert np.array_equal(x[0], feats[0:28:3])
    assert np.array_equal(y[0, 0], feats[27 + 3][np.r_[0:31, 62:74]])
    assert np.array_equal(y[1, -1], feats[n - 1][np.r_[0:31, 62:74]])
    assert a[0, 0] == task2_lift.labels[30]
    assert y.shape == (2, 50, 43) and x.shape == (2, 10, 74)


def test_short_sequence_rejected(task2_lift):
    short = WindowSet(task2_lift.features[:100], task2_lift.labels[:100], [])

    class Seq:
        features = task2_lift.features[:100]
        labels = task2_lift.labels[:100]

    with pytest.raises(ValueError, match="too short for horizon"):
        make_training_targets(Seq())
    assert len(short) == 0


def _toy_sets(seed, n_seq=16, length=120):
    """Sinusoid sequences are class 0, ramps class 1; two features each."""
    rng = np.random.default_rng(seed)
    sets = []
    for k in range(n_seq):
        t = np.arange(length) * 0.01
        if k % 2 == 0:
            v = np.sin(2 * np.pi * rng.uniform(0.8, 1.5) * t + rng.uniform(0, 6))
            lab = 0
        else:
            v = rng.uniform(-1, 1) + rng.uniform(0.5, 1.5) * rng.choice([-1, 1]) * t
            lab = 1
        v = v + 0.02 * rng.normal(size=length)
        feats = np.stack([v, np.gradient(v, 0.01) / 10], axis=1)
        labels = np.full(length, lab)
        anchors = np.arange(27, length - 15)
        sets.append(WindowSet(feats, labels, anchors, out_columns=[0, 1], horizon=5))
    return sets


def test_toy_two_class_problem_is_learned():
    data = _toy_sets(0)
    tr, va, te = WindowSet.concat(data[:10]), WindowSet.concat(data[10:13]), WindowSet.concat(data[13:] + _toy_sets(1, 6)[:3])
    model = GmoeModel.initialize(0, hidden=8, n_in=2, n_out=2, horizon=5, out_columns=[0, 1])
    cfg = TrainConfig(max_epochs=50, learning_rate=5e-3, batch_size=64, seed=1)
    model, report = train(model, tr, va, cfg)
    acc = evaluate(model, te.normalized(model), cfg)["accuracy"]
    assert acc >= 0.95
    assert report.stop_epoch <= 50 and report.stop_reason in ("max_epochs", "early_stopping")
    assert all(math.isfinite(e["train_loss"]) for e in report.epochs)


def test_full_batch_descent_is_monotone():
    data = _toy_sets(2, n_seq=4)
    tr, va = WindowSet.concat(data[:3]), WindowSet.concat(data[3:])
    model = GmoeModel.initialize(0, hidden=4, n_in=2, n_out=2, horizon=5, out_columns=[0, 1])
    cfg = TrainConfig(max_epochs=15, learning_rate=1e-4, batch_size=None, patience=50)
    _, report = train(model, tr, va, cfg)
    losses = [e["train_loss"] for e in report.epochs]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_training_is_seeded_and_zero_epochs_is_identity():
    data = _toy_sets(3, n_seq=4)
    tr, va = WindowSet.concat(data[:3]), WindowSet.concat(data[3:])
    model = GmoeModel.initialize(0, hidden=4, n_in=2, n_out=2, horizon=5, out_columns=[0, 1])
    cfg = TrainConfig(max_epochs=3, seed=4)
    m1, _ = train(model, tr, va, cfg)
    m2, _ = train(model, tr, va, cfg)
    assert all(np.array_equal(m1.params[k], m2.params[k]) for k in m1.params)
    m0, rep = train(model, tr, va, TrainConfig(max_epochs=0))
    assert all(np.array_equal(m0.params[k], model.params[k]) for k in model.params)
    assert rep.stop_epoch == 0
    with pytest.raises(ValueError):
        train(model, tr, WindowSet(va.features, va.labels, []), cfg)
