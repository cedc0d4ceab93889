import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epicast.data import FeatureScaler, WindowedDataset, make_windows
from epicast.errors import DivergedLossError, EmptyDatasetError, ShapeMismatchError, ConfigError
from epicast.gru import (
    PARAM_NAMES,
    AdamState,
    GruModel,
    GruParams,
    TrainConfig,
    adam_step,
    backprop_window,
    cell_forward,
    forward_window,
    init_params,
    load_model,
    loss_mse,
    save_model,
    train,
)
from epicast.gru import _kernels_py, kernels

from conftest import make_series
from oracles import gradient_mismatches, numeric_gradients, random_instance, scalar_cell, scalar_forward

BACKENDS = [_kernels_py]
if "cython" in kernels.available_backends():
    from epicast.gru import _kernels

    BACKENDS.append(_kernels)


def zero_params(hidden=4):
    return GruParams(**{n: np.zeros_like(t) for n, t in init_params(3, hidden, 0).as_dict().items()})


def test_init_shapes_and_determinism():
    p = init_params(3, 8, seed=5)
    assert p.W_z.shape == (8, 3) and p.U_z.shape == (8, 8) and p.W_o.shape == (3, 8)
    for n in ("b_z", "b_r", "b_h", "b_o"):
        assert not np.any(getattr(p, n))
    assert p.equals(init_params(3, 8, seed=5))
    assert not p.equals(init_params(3, 8, seed=6))
    k = 1 / np.sqrt(8)
    assert all(np.all(np.abs(t) <= k) for t in p.tensors())


def test_init_rejects_bad_sizes():
    with pytest.raises(ValueError):
        init_params(3, 0, 0)


def test_params_validated():
    p = init_params(3, 2, 0)
    with pytest.raises(ValueError):
        p.replace(U_z=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        p.replace(b_o=np.array([0.0, np.nan, 0.0]))


def test_cell_zero_cases():
    x = np.array([0.3, -2.0, 5.0])
    assert not np.any(cell_forward(x, np.zeros(4), zero_params()))
    p = init_params(3, 4, 1)
    p = p.replace(W_h=np.zeros((4, 3)), U_h=np.zeros((4, 4)))
    assert not np.any(cell_forward(x, np.zeros(4), p))


def test_cell_matches_scalar_oracle():
    rng = np.random.default_rng(11)
    p, _, _ = random_instance(rng, hidden=2)
    x, h = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 2)
    np.testing.assert_allclose(cell_forward(x, h, p), scalar_cell(list(x), list(h), p), rtol=1e-14, atol=1e-15)


def test_forward_matches_unrolled_oracle():
    rng = np.random.default_rng(12)
    p, window, _ = random_instance(rng, hidden=2, lookback=3)
    np.testing.assert_allclose(forward_window(window, p), scalar_forward(window, p), rtol=1e-13, atol=1e-15)


def test_forward_single_step_and_zero_head():
    p = init_params(3, 5, 2)
    x = np.array([[0.1, 0.2, 0.3]])
    h = cell_forward(x[0], np.zeros(5), p)
    np.testing.assert_array_equal(forward_window(x, p), p.W_o @ h + p.b_o)
    p = p.replace(W_o=np.zeros((3, 5)), b_o=np.array([1.0, -2.0, 0.5]))
    assert forward_window(np.random.default_rng(0).uniform(size=(6, 3)), p).tolist() == [1.0, -2.0, 0.5]


def test_forward_shape_mismatch():
    p = init_params(3, 2, 0)
    with pytest.raises(ShapeMismatchError):
        forward_window(np.zeros((4, 2)), p)
    with pytest.raises(ShapeMismatchError):
        forward_window(np.zeros((0, 3)), p)


def test_forward_pure():
    rng = np.random.default_rng(4)
    p, w, _ = random_instance(rng)
    assert forward_window(w, p).tobytes() == forward_window(w.copy(), p).tobytes()


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 60))
def test_hidden_state_bounded(seed, steps):
    rng = np.random.default_rng(seed)
    p = init_params(3, 6, seed).replace(U_h=rng.normal(0, 5, (6, 6)), W_h=rng.normal(0, 5, (6, 3)))
    h = np.zeros(6)
    for _ in range(steps):
        h = cell_forward(rng.normal(0, 10, 3), h, p)
        assert np.all(np.abs(h) <= 1)  # tanh saturates to exactly 1.0 in float64


def test_loss_examples():
    assert loss_mse([1, 2, 3], [1, 2, 3]) == 0
    assert loss_mse([1, 1, 1], [0, 0, 0]) == 1
    assert loss_mse([2, 0, 0], [0, 0, 0]) == pytest.approx(4 / 3, abs=1e-15)


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_loss_nonnegative(a, b):
    v = loss_mse(a, b)
    assert v >= 0
    if a == b:
        assert v == 0
    elif max(abs(x - y) for x, y in zip(a, b)) > 1e-150:  # smaller differences underflow when squared
        assert v > 0


def test_backprop_head_bias():
    rng = np.random.default_rng(5)
    p, w, t = random_instance(rng)
    pred = forward_window(w, p)
    g = backprop_window(w, t, p)
    np.testing.assert_allclose(g["b_o"], (2 / 3) * (pred - t), rtol=1e-14)
    g = backprop_window(w, pred, p)
    assert not np.any(g["b_o"])


@pytest.mark.parametrize("seed", range(5))
def test_backprop_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    p, w, t = random_instance(rng)
    assert gradient_mismatches(backprop_window(w, t, p), numeric_gradients(w, t, p)) == []


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_kernels_match_reference(backend):
    rng = np.random.default_rng(7)
    for hidden, L, B in [(1, 1, 1), (3, 4, 5), (8, 5, 33), (17, 14, 7)]:
        p, _, _ = random_instance(rng, hidden=hidden, lookback=L)
        X = rng.uniform(0, 1, size=(B, L, 3))
        Y = rng.uniform(0, 1, size=(B, 3))
        ref_pred = np.stack([forward_window(x, p) for x in X])
        np.testing.assert_allclose(backend.forward_batch(p.tensors(), X), ref_pred, rtol=1e-12, atol=1e-14)
        losses, grads = backend.loss_and_grad_batch(p.tensors(), X, Y)
        np.testing.assert_allclose(losses, [loss_mse(a, b) for a, b in zip(ref_pred, Y)], rtol=1e-12, atol=1e-15)
        ref = [backprop_window(x, y, p) for x, y in zip(X, Y)]
        for name, g in zip(PARAM_NAMES, grads):
            np.testing.assert_allclose(g, np.mean([r[name] for r in ref], axis=0), rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_kernel_shape_errors(backend):
    p = init_params(3, 4, 0)
    with pytest.raises(ValueError):
        backend.forward_batch(p.tensors(), np.zeros((2, 3, 2)))
    with pytest.raises(ValueError):
        backend.loss_and_grad_batch(p.tensors(), np.zeros((2, 3, 3)), np.zeros((3, 3)))


def test_train_config_invariants():
    for bad in [dict(epochs=0), dict(learning_rate=0), dict(batch_size=0), dict(adam_beta1=1.0),
                dict(adam_beta2=0.0), dict(adam_epsilon=0), dict(finetune_lr_multiplier=0)]:
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
    ft = TrainConfig(learning_rate=0.01, finetune_lr_multiplier=0.25).for_finetune()
    assert ft.learning_rate == pytest.approx(0.0025)


def test_adam_zero_gradient():
    p = init_params(3, 3, 0)
    zeros = {n: np.zeros_like(t) for n, t in p.as_dict().items()}
    new, state = adam_step(p, zeros, AdamState.zeros_like(p), TrainConfig(), 1)
    assert new.equals(p)


def test_adam_first_step_is_lr_sign():
    p = init_params(3, 3, 0)
    cfg = TrainConfig(learning_rate=0.01)
    rng = np.random.default_rng(1)
    g = {n: rng.choice([-1.0, 1.0], size=t.shape) * rng.uniform(0.1, 10, size=t.shape) for n, t in p.as_dict().items()}
    new, _ = adam_step(p, g, AdamState.zeros_like(p), cfg, 1)
    for n in PARAM_NAMES:
        np.testing.assert_allclose(getattr(p, n) - getattr(new, n), 0.01 * np.sign(g[n]), rtol=1e-6)


def test_adam_pure_and_matches_hand_steps():
    p = init_params(3, 2, 0)
    cfg = TrainConfig(learning_rate=0.1)
    g = {n: np.full(t.shape, 0.5) for n, t in p.as_dict().items()}
    s0 = AdamState.zeros_like(p)
    a1, sa = adam_step(p, g, s0, cfg, 1)
    b1, _ = adam_step(p, g, s0, cfg, 1)
    assert a1.equals(b1) and not np.any(s0.m[0])
    # second step by hand
    m = 0.9 * 0.05 + 0.1 * 0.5
    v = 0.999 * 0.00025 + 0.001 * 0.25
    step = 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    a2, _ = adam_step(a1, g, sa, cfg, 2)
    np.testing.assert_allclose(a1.b_z - a2.b_z, step, rtol=1e-12)
    with pytest.raises(ValueError):
        adam_step(p, g, s0, cfg, 0)


def _dataset(n=40, L=5, seed=0):
    v = np.abs(np.sin(np.arange(n + L)[:, None] * np.array([0.1, 0.2, 0.3]) + seed)) + 0.1
    return make_windows(make_series(v), L)


def test_train_single_sample_improves():
    ds = _dataset(n=1)
    model, hist = train(ds, TrainConfig(epochs=200, learning_rate=1e-2, hidden_size=8))
    assert len(hist) == 200
    assert hist.epoch_loss[-1] < hist.epoch_loss[0]
    assert model.lookback == 5


def test_train_deterministic():
    ds = _dataset()
    cfg = TrainConfig(epochs=5, batch_size=7, hidden_size=6, seed=3)
    a, ha = train(ds, cfg)
    b, hb = train(ds, cfg)
    assert a.params.equals(b.params) and ha == hb
    c, _ = train(ds, cfg.replace(seed=4))
    assert not a.params.equals(c.params)


def test_train_remainder_batch_counts_every_sample():
    ds = _dataset(n=10)
    cfg = TrainConfig(epochs=1, batch_size=4, hidden_size=3, seed=0, learning_rate=1e-12)
    model, hist = train(ds, cfg)
    # With a negligible step size the epoch loss is the plain mean over all samples.
    p0 = init_params(3, 3, 0)
    expected = np.mean([loss_mse(forward_window(x, p0), y) for x, y in zip(ds.inputs, ds.targets)])
    assert hist.epoch_loss[0] == pytest.approx(expected, rel=1e-9)


def test_train_errors():
    ds = _dataset()
    empty = WindowedDataset(5, np.zeros((0, 5, 3)), np.zeros((0, 3)), ())
    with pytest.raises(EmptyDatasetError):
        train(empty, TrainConfig())
    huge = WindowedDataset(ds.lookback, ds.inputs * 1e300, ds.targets * 1e300, ds.target_dates)
    with pytest.raises(DivergedLossError):
        train(huge, TrainConfig(epochs=1))
    with pytest.raises(ShapeMismatchError):
        train(ds, TrainConfig(epochs=1), initial=init_params(2, 4, 0))


def test_clip_norm_limits_step():
    ds = _dataset()
    a, _ = train(ds, TrainConfig(epochs=1, hidden_size=4, clip_norm=1e-9, learning_rate=0.1))
    b, _ = train(ds, TrainConfig(epochs=1, hidden_size=4, learning_rate=0.1))
    assert not a.params.equals(b.params)


def test_model_window_shape_checked():
    m = GruModel(init_params(3, 2, 0), FeatureScaler(np.zeros(3), np.ones(3)), 4)
    with pytest.raises(ShapeMismatchError):
        m.predict_scaled(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        GruModel(m.params, m.scaler, 0)


def test_save_load_bit_exact(tmp_path):
    ds = _dataset()
    model, _ = train(ds, TrainConfig(epochs=2, hidden_size=5))
    model = GruModel(model.params, FeatureScaler(np.array([0.1, 0.2, 1 / 3]), np.array([1.5, 2.0, 9.75])),
                     model.lookback, "A→fine-tuned:B")
    save_model(model, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    assert back.params.equals(model.params)
    assert back.scaler.minimum.tobytes() == model.scaler.minimum.tobytes()
    assert back.scaler.maximum.tobytes() == model.scaler.maximum.tobytes()
    assert (back.lookback, back.provenance) == (model.lookback, model.provenance)
