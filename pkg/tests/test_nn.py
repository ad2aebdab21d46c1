import numpy as np
import pytest

from ganmia.nn import (
    AdamState,
    Layer,
    MlpModel,
    TrainConfig,
    adam_step,
    backprop,
    bce_loss,
    init_mlp,
    load_model,
    mlp_forward,
    save_model,
    train_classifier,
)
from ganmia.rng import make_rng

SIGMOID_1 = 0.7310585786300049  # 1 / (1 + e^-1)


def finite_difference_grads(model, X, y, h=1e-5):
    grads = []
    for layer in model.layers:
        layer_grads = []
        for arr in (layer.weight, layer.bias):
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                ix = it.multi_index
                old = arr[ix]
                arr[ix] = old + h
                up = bce_loss(mlp_forward(model, X).ravel(), y)
                arr[ix] = old - h
                down = bce_loss(mlp_forward(model, X).ravel(), y)
                arr[ix] = old
                g[ix] = (up - down) / (2 * h)
            layer_grads.append(g)
        grads.append(tuple(layer_grads))
    return grads


def max_relative_error(analytic, numeric):
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            rel = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-8)
            worst = max(worst, float(rel.max()))
    return worst


def test_forward_all_zero_weights_gives_half():
    model = init_mlp([4, 3, 1], seed=0)
    for layer in model.layers:
        layer.weight[:] = 0.0
        layer.bias[:] = 0.0
    out = mlp_forward(model, make_rng(0).standard_normal((6, 4)))
    assert np.allclose(out, 0.5)


def test_forward_identity_layer():
    model = MlpModel([Layer(np.eye(3), np.zeros(3), "identity")])
    X = make_rng(1).standard_normal((5, 3))
    assert np.allclose(mlp_forward(model, X), X)


def test_forward_two_layer_hand_example():
    model = MlpModel(
        [
            Layer(np.eye(2), np.zeros(2), "relu"),
            Layer(np.array([[1.0, 1.0]]), np.zeros(1), "sigmoid"),
        ]
    )
    out = mlp_forward(model, np.array([[1.0, -1.0]]))
    assert abs(out[0, 0] - SIGMOID_1) < 1e-12


def test_forward_dimension_mismatch():
    model = init_mlp([4, 1], seed=0)
    with pytest.raises(ValueError, match="columns"):
        mlp_forward(model, np.zeros((2, 5)))


def test_bce_examples():
    assert bce_loss([1.0, 0.0], [1, 0]) <= 1e-6
    assert abs(bce_loss([0.5], [1]) - np.log(2)) < 1e-12
    assert abs(bce_loss([0.9, 0.1], [1, 0]) - 0.10536051565782628) < 1e-12


def test_bce_rejects_empty():
    with pytest.raises(ValueError):
        bce_loss([], [])


def test_bce_never_nan_on_unit_interval():
    rng = make_rng(2)
    for _ in range(200):
        p = rng.random(20)
        p[0], p[-1] = 0.0, 1.0
        assert np.isfinite(bce_loss(p, rng.integers(0, 2, 20)))


def test_backprop_matches_finite_differences():
    # the mandatory pre-build oracle at small scale; the 100-net sweep
    # runs in the acceptance suite
    rng = make_rng(3)
    for trial in range(10):
        model = init_mlp([2, 3, 1], seed=100 + trial)
        X = rng.standard_normal((4, 2))
        y = rng.integers(0, 2, 4).astype(float)
        analytic = backprop(model, X, y)
        numeric = finite_difference_grads(model, X, y)
        assert max_relative_error(analytic, numeric) < 1e-4


def test_backprop_zero_gradient_at_saturated_fit():
    model = MlpModel([Layer(np.array([[40.0]]), np.zeros(1), "sigmoid")])
    X = np.array([[1.0], [-1.0]])
    y = np.array([1.0, 0.0])
    grads = backprop(model, X, y)
    norm = np.sqrt(sum(float((gw**2).sum() + (gb**2).sum()) for gw, gb in grads))
    assert norm < 1e-4


def test_backprop_mean_invariant_to_batch_duplication():
    model = init_mlp([3, 4, 1], seed=7)
    X = make_rng(4).standard_normal((5, 3))
    y = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
    g1 = backprop(model, X, y)
    g2 = backprop(model, np.vstack([X, X]), np.concatenate([y, y]))
    for (aw, ab), (bw, bb) in zip(g1, g2):
        assert np.allclose(aw, bw, atol=1e-12)
        assert np.allclose(ab, bb, atol=1e-12)


def test_adam_zero_gradient_is_fixed_point():
    model = init_mlp([2, 2, 1], seed=1)
    before = model.copy()
    grads = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in model.layers]
    adam_step(model, grads, AdamState.zeros_like(model), 1e-3)
    for la, lb in zip(model.layers, before.layers):
        assert np.array_equal(la.weight, lb.weight)
        assert np.array_equal(la.bias, lb.bias)


def test_adam_first_step_moves_by_learning_rate():
    model = MlpModel([Layer(np.array([[0.0]]), np.zeros(1), "sigmoid")])
    adam_step(
        model,
        [(np.array([[1.0]]), np.zeros(1))],
        AdamState.zeros_like(model),
        1e-3,
    )
    assert abs(model.layers[0].weight[0, 0] + 1e-3) < 1e-9


def test_adam_second_identical_step_not_larger():
    model = MlpModel([Layer(np.array([[0.0]]), np.zeros(1), "sigmoid")])
    state = AdamState.zeros_like(model)
    grad = [(np.array([[1.0]]), np.zeros(1))]
    adam_step(model, grad, state, 1e-3)
    first = abs(model.layers[0].weight[0, 0])
    adam_step(model, grad, state, 1e-3)
    second = abs(model.layers[0].weight[0, 0]) - first
    assert second <= first * 1.1


def make_blobs(n, distance, seed):
    rng = make_rng(seed)
    half = n // 2
    a = rng.normal(0.0, 1.0, (half, 2))
    b = rng.normal(distance, 1.0, (n - half, 2))
    X = np.vstack([a, b])
    y = np.concatenate([np.zeros(half), np.ones(n - half)])
    return X, y


def test_train_classifier_separable_blobs():
    X, y = make_blobs(200, 10.0, 5)
    _, history = train_classifier(X, y, TrainConfig(epochs=60), hidden=(16,), seed=1)
    assert max(history.val_accuracy) >= 0.99


def test_train_classifier_random_labels_stay_at_chance():
    rng = make_rng(6)
    X = rng.standard_normal((500, 8))
    y = rng.integers(0, 2, 500).astype(float)
    _, history = train_classifier(X, y, TrainConfig(epochs=30), hidden=(16,), seed=2)
    assert 0.4 <= history.val_accuracy[history.best_epoch] <= 0.6


def test_train_classifier_patience_zero_stops_immediately():
    # label noise guarantees a non-improving epoch early on
    rng = make_rng(7)
    X = rng.standard_normal((80, 3))
    y = rng.integers(0, 2, 80).astype(float)
    _, history = train_classifier(X, y, TrainConfig(epochs=50, patience=0), seed=3)
    assert history.stopped_early
    assert len(history.val_loss) <= history.best_epoch + 2


def test_train_classifier_rejects_single_class():
    X = make_rng(8).standard_normal((10, 2))
    with pytest.raises(ValueError, match="both classes"):
        train_classifier(X, np.ones(10), TrainConfig(epochs=1))


def test_train_classifier_deterministic():
    X, y = make_blobs(120, 4.0, 9)
    cfg = TrainConfig(epochs=12)
    _, h1 = train_classifier(X, y, cfg, seed=42)
    _, h2 = train_classifier(X, y, cfg, seed=42)
    assert h1 == h2
    assert h1.val_loss[h1.best_epoch] == min(h1.val_loss)
    assert len(h1.val_loss) <= cfg.epochs


def test_train_classifier_resample_hook_receives_dimension():
    X, y = make_blobs(100, 4.0, 10)
    calls = []

    def hook(n, seed):
        calls.append(n)
        return make_rng(seed).normal(4.0, 1.0, (n, 2))

    train_classifier(X, y, TrainConfig(epochs=7, resample_period=3), hidden=(8,), seed=4, resample_hook=hook)
    assert len(calls) == 3  # epochs 0, 3, 6


def test_full_batch_descent_monotone_at_small_lr():
    rng = make_rng(11)
    model = init_mlp([3, 5, 1], seed=12)
    X = rng.standard_normal((32, 3))
    y = rng.integers(0, 2, 32).astype(float)
    losses = []
    # plain gradient descent isolates the loss-surface property from Adam
    for _ in range(50):
        losses.append(bce_loss(mlp_forward(model, X).ravel(), y))
        for layer, (gw, gb) in zip(model.layers, backprop(model, X, y)):
            layer.weight -= 1e-4 * gw
            layer.bias -= 1e-4 * gb
    diffs = np.diff(losses)
    assert np.all(diffs <= 1e-9)


def test_training_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(val_fraction=1.0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def test_parameters_finite_after_training():
    X, y = make_blobs(100, 2.0, 13)
    model, _ = train_classifier(X, y, TrainConfig(epochs=10), seed=5)
    for layer in model.layers:
        assert np.all(np.isfinite(layer.weight))
        assert np.all(np.isfinite(layer.bias))


def test_model_serialization_round_trip(tmp_path):
    model = init_mlp([7, 5, 1], seed=21)
    path = tmp_path / "model.mlp"
    save_model(model, str(path))
    loaded = load_model(str(path))
    assert loaded.rng_seed == model.rng_seed
    for la, lb in zip(loaded.layers, model.layers):
        assert np.array_equal(la.weight, lb.weight)
        assert np.array_equal(la.bias, lb.bias)
        assert la.activation == lb.activation
    X = make_rng(22).standard_normal((4, 7))
    assert np.array_equal(mlp_forward(loaded, X), mlp_forward(model, X))


def test_load_model_rejects_garbage(tmp_path):
    path = tmp_path / "bad.mlp"
    path.write_bytes(b"not a model")
    with pytest.raises(ValueError, match="not a model"):
        load_model(str(path))
