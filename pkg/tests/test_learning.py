import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from softprop.errors import DatasetError, DivergenceError, DomainError, FitError
from softprop.learning import (
    Dataset,
    GradientCheckError,
    MLPModel,
    Normalizer,
    Scaler,
    TrainConfig,
    TrainedModel,
    baseline_fit,
    check_leakage,
    evaluate,
    fit_linear,
    gradient_check,
    loop_area,
    loop_area_gap,
    mlp_forward,
    mlp_train,
    positional_error,
    read_dataset_csv,
    train_kinesthesia,
    train_wrench,
    write_dataset_csv,
)
from softprop.learning.metrics import mae


def naive_forward(model, x):
    h = list(x)
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        out = []
        for j in range(w.shape[1]):
            s = b[j]
            for i in range(w.shape[0]):
                s += h[i] * w[i, j]
            out.append(s if l == len(model.weights) - 1 else max(s, 0.0))
        h = out
    return np.array(h)


# -- forward -----------------------------------------------------------------------


def test_zero_weights_give_output_bias():
    m = MLPModel([3, 4, 2])
    m.biases[-1][:] = [0.5, -1.5]
    np.testing.assert_array_equal(mlp_forward(m, [1.0, 2.0, 3.0]), [0.5, -1.5])


def test_identity_relu_net():
    m = MLPModel([1, 1, 1], [np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    assert mlp_forward(m, [3.25])[0] == 3.25


def test_forward_matches_naive_oracle():
    m = MLPModel.initialized([5, 7, 6, 3], seed=4)
    x = np.random.default_rng(1).normal(size=5)
    np.testing.assert_allclose(mlp_forward(m, x), naive_forward(m, x), rtol=0, atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        mlp_forward(MLPModel.initialized([3, 2]), [1.0, 2.0])
    with pytest.raises(DomainError):
        MLPModel([3, 2], [np.zeros((2, 2))], [np.zeros(2)])


# -- gradients ---------------------------------------------------------------------


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_gradient_check_passes(activation):
    m = MLPModel.initialized([4, 6, 5, 3], seed=2, activation=activation)
    rng = np.random.default_rng(3)
    assert gradient_check(m, rng.normal(size=(4, 4)), rng.normal(size=(4, 3))) < 1e-6


def test_dead_relu_path_has_zero_gradient():
    m = MLPModel.initialized([2, 3, 1], seed=0)
    m.weights[0][:, 0] = 0.0
    m.biases[0][0] = -1.0  # unit 0 never fires
    _, gw, _ = m.loss_and_grads(np.array([[0.3, -0.2]]), np.array([[1.0]]))
    assert np.all(gw[0][:, 0] == 0) and gw[1][0, 0] == 0
    assert gradient_check(m, [0.3, -0.2], [1.0]) < 1e-6


def test_gradient_check_fails_loudly():
    class Broken(MLPModel):
        def loss_and_grads(self, X, Y):
            loss, gw, gb = super().loss_and_grads(X, Y)
            return loss, [2 * g for g in gw], gb

    base = MLPModel.initialized([3, 4, 2], seed=1)
    m = Broken(base.layer_sizes, base.weights, base.biases)
    with pytest.raises(GradientCheckError):
        gradient_check(m, [0.1, 0.2, 0.3], [0.0, 1.0])


# -- training ----------------------------------------------------------------------


def linear_task(n=100, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 3))
    return X, X @ np.array([[0.5, -0.2], [0.1, 0.3], [-0.4, 0.2]]) + 0.1


def test_linear_task_is_learned():
    X, Y = linear_task()
    res = mlp_train(MLPModel.initialized([3, 16, 2], seed=0), X, Y, TrainConfig(batch=10, epochs=600))
    assert res.train_loss[-1] < 1e-3
    # oracle: exact least squares leaves no residual
    assert np.abs(fit_linear(X, Y).predict(X) - Y).max() < 1e-6


def test_single_sample_is_memorised():
    res = mlp_train(MLPModel.initialized([2, 8, 1], seed=0), [[0.2, -0.7]], [[0.9]], TrainConfig(batch=1, epochs=2000))
    assert res.train_loss[-1] < 1e-6


def test_training_is_deterministic():
    X, Y = linear_task()
    a = mlp_train(MLPModel.initialized([3, 8, 2], seed=1), X, Y, TrainConfig(epochs=5, seed=9))
    b = mlp_train(MLPModel.initialized([3, 8, 2], seed=1), X, Y, TrainConfig(epochs=5, seed=9))
    assert a.train_loss == b.train_loss
    for wa, wb in zip(a.model.weights, b.model.weights):
        assert wa.tobytes() == wb.tobytes()


def test_best_on_test_snapshot():
    X, Y = linear_task()
    Xt, Yt = linear_task(seed=1)
    res = mlp_train(MLPModel.initialized([3, 8, 2], seed=1), X, Y, TrainConfig(epochs=8), Xt, Yt)
    assert res.best_epoch == int(np.argmin(res.test_loss))


def test_training_errors():
    with pytest.raises(DatasetError):
        mlp_train(MLPModel.initialized([3, 2]), np.zeros((0, 3)), np.zeros((0, 2)))
    X, Y = linear_task()
    with pytest.raises(DivergenceError):
        with np.errstate(over="ignore", invalid="ignore"):
            mlp_train(MLPModel.initialized([3, 8, 2]), X, Y * 1e200, TrainConfig(epochs=2))
    with pytest.raises(Exception):
        TrainConfig(batch=0)


# -- normaliser -------------------------------------------------------------------


def test_scaler_maps_training_range_to_unit_interval():
    X = np.random.default_rng(0).normal(size=(50, 4))
    s = Scaler.fit(X)
    Z = s.transform(X)
    np.testing.assert_allclose(Z.min(axis=0), -1.0)
    np.testing.assert_allclose(Z.max(axis=0), 1.0)
    with pytest.raises(DomainError):
        Scaler([0.0], [0.0])


def test_out_of_range_inputs_are_clamped_and_flagged():
    s = Scaler.fit(np.array([[0.0], [1.0]]))
    Z, flags = s.transform_clamped(np.array([[0.5], [3.0]]))
    assert flags.tolist() == [False, True]
    assert Z[1, 0] == 1.0


@settings(max_examples=50)
@given(arrays(np.float64, (20, 3), elements=st.floats(-1e3, 1e3)))
def test_normalizer_round_trip(X):
    n = Normalizer.fit(X, X)
    back = n.inputs.inverse(n.inputs.transform(X))
    np.testing.assert_allclose(back, X, rtol=0, atol=1e-12 * max(1.0, np.abs(X).max()))


# -- baselines and metrics ---------------------------------------------------------


def test_linear_baseline_exact_on_linear_data():
    X, Y = linear_task()
    assert mae(baseline_fit("Linear", X, Y).predict(X), Y).max() < 1e-9
    with pytest.raises(FitError):
        fit_linear(np.ones((5, 2)), np.ones((5, 1)), ridge=0.0)


def test_knn_k1_recalls_training_set():
    X, Y = linear_task()
    np.testing.assert_array_equal(baseline_fit("KNN", X, Y, k=1).predict(X), Y)


def test_perfect_predictor_metrics():
    rng = np.random.default_rng(0)
    X, Y = rng.normal(size=(30, 6)), rng.normal(size=(30, 6)) * 2
    table = dict(zip(map(bytes, X), Y))
    pred = lambda A: np.array([table[bytes(a)] for a in np.atleast_2d(A)])  # noqa: E731
    m = evaluate(pred, X, Y, loop=(np.linspace(0, 1, 30), X, Y))
    assert m.force_mae == 0 and all(v == 1.0 for v in m.r2) and m.loop_area_gap == 0
    with pytest.raises(DatasetError):
        evaluate(pred, np.zeros((0, 6)), np.zeros((0, 6)))


def test_direction_metric_needs_force_above_threshold():
    Y = np.zeros((4, 6))
    Y[:, 0] = 0.3
    m = evaluate(lambda A: np.zeros((len(A), 6)), np.zeros((4, 6)), Y)
    assert m.direction_mae_deg is None and m.direction_samples == 0
    assert m.magnitude_mae_N == pytest.approx(0.3)


def test_loop_area_of_unit_square():
    assert loop_area([0, 1, 1, 0], [0, 0, 1, 1]) == pytest.approx(1.0)
    d = np.array([0, 1, 1, 0.0])
    label = np.zeros((4, 3))
    label[:, 0] = [0, 0, 1, 1]
    assert loop_area_gap(d, np.zeros((4, 3)), label) == pytest.approx(1.0)


@settings(max_examples=50)
@given(arrays(np.float64, (15, 6), elements=st.floats(-5, 5)), arrays(np.float64, (15, 6), elements=st.floats(0.01, 2)))
def test_larger_errors_never_score_lower(Y, extra):
    rng = np.random.default_rng(0)
    e = rng.normal(size=Y.shape)
    small, large = Y + e, Y + e + np.sign(e + (e == 0)) * extra
    assert np.all(mae(large, Y) >= mae(small, Y))


# -- datasets and model wrappers ----------------------------------------------------


def toy_dataset(n=60, with_nodes=True, seed=0):
    rng = np.random.default_rng(seed)
    D = rng.normal(size=(n, 6))
    return Dataset(
        split=np.array(["train" if i % 3 else "test" for i in range(n)]),
        protocol=np.arange(n) // 10,
        t=np.arange(n) / 330.0,
        probe_mm=rng.uniform(0, 5, n),
        warmup=np.zeros(n, bool),
        D=D,
        D_dot=rng.normal(size=(n, 6)),
        D_ddot=rng.normal(size=(n, 6)),
        wrench=np.clip(D @ rng.normal(size=(6, 6)) * 0.1, -0.4, 0.4),
        nodes=np.tile(np.arange(78.0), (n, 1)) + 0.1 * D[:, :1] if with_nodes else None,
    )


def test_dataset_csv_round_trip(tmp_path):
    ds = toy_dataset()
    write_dataset_csv(tmp_path / "d.csv", ds)
    back = read_dataset_csv(tmp_path / "d.csv")
    assert back.split.tolist() == ds.split.tolist()
    for name in ("t", "probe_mm", "D", "D_dot", "D_ddot", "wrench", "nodes"):
        np.testing.assert_allclose(getattr(back, name), getattr(ds, name), rtol=1e-15)


def test_dataset_validation():
    ds = toy_dataset()
    ds.validate()
    bad = toy_dataset()
    bad.wrench[0, 2] = 11.0
    with pytest.raises(DatasetError):
        bad.validate()
    leak = toy_dataset()
    leak.t[1] = leak.t[0]
    with pytest.raises(DatasetError):
        check_leakage(leak)
    with pytest.raises(DatasetError):
        ds.features("D+Ddd")


def test_model_json_round_trip(tmp_path):
    ds = toy_dataset()
    model, _ = train_wrench(ds.select("train"), "D+Dd", TrainConfig(epochs=2), hidden=(8, 4))
    model.save(tmp_path / "m.json")
    back = TrainedModel.load(tmp_path / "m.json")
    X = ds.features("D+Dd")
    np.testing.assert_array_equal(back.predict(X), model.predict(X))
    import json

    keys = set(json.loads((tmp_path / "m.json").read_text()))
    assert {"layer_sizes", "activation", "weights", "biases", "normalizer", "feature_set", "seed"} <= keys


def test_kinesthesia_needs_nodes_and_learns_rest_pose():
    with pytest.raises(DatasetError):
        train_kinesthesia(toy_dataset(with_nodes=False))
    rest = toy_dataset()
    rest.D[:] = 0.0
    rest.nodes[:] = np.arange(78.0)
    model, _ = train_kinesthesia(rest, TrainConfig(epochs=3), hidden=(8,))
    err = positional_error(model.predict(np.zeros((1, 6))), np.arange(78.0)[None])
    assert err[0] < 1e-3
