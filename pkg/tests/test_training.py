import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcn.autodiff import NotDifferentiableError
from mcn.core import BINARY_STEP, EXP, IDENTITY, RELU, LinearMap
from mcn.network import mcn_forward, random_network
from mcn.training import experiments as ex
from mcn.training.model import (
    InjectivityError,
    Model,
    check_injective,
    loss_and_grad,
    make_extractor,
)
from mcn.training.train import Dataset, TrainConfig, TrainingError, least_squares_loss, train
from oracles import central_difference


def small_data(seed=0, n=24):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    return Dataset(X, np.sin(np.pi * X[:, 0]) * X[:, 1])


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.zeros(2))
    with pytest.raises(ValueError):
        Dataset(np.array([[0.0], [np.nan]]), np.zeros(2))
    with pytest.raises(ValueError):
        Dataset(np.array([[0.0], [1.0]]), np.zeros(3))
    assert Dataset(np.array([[0.0], [1.0]]), [1.0, 2.0]).Y.shape == (2, 1)


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"epochs": 3, "colour": 1})
    cfg = TrainConfig(optimizer="sgd", epochs=7)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("opt", ["sgd", "adam", "lbfgs"])
def test_optimizers_reduce_loss_deterministically(opt):
    data = small_data()
    net = random_network(np.random.default_rng(1), 2, [(2, 3)], 1, gamma=EXP, scale=0.5, atilde_scale=0.3)
    cfg = TrainConfig(optimizer=opt, lr=0.05, momentum=0.5, epochs=200, lbfgs_restarts=2)
    a = train(net, data, cfg)
    b = train(net, data, cfg)
    assert a.final_loss < a.losses[0]
    assert a.final_loss == b.final_loss
    assert a.stop in ("grad-norm", "epochs", "optimizer")
    assert a.epochs_run <= cfg.epochs


def test_readout_only_training_reaches_least_squares():
    data = small_data()
    net = random_network(np.random.default_rng(2), 2, [(2, 3)], 1, gamma=IDENTITY)
    tr = train(Model(net, net_params="readout"), data, TrainConfig(optimizer="lbfgs", epochs=500, grad_tol=1e-10))
    feats = mcn_forward(net, data.X).states[-1]
    assert tr.final_loss == pytest.approx(least_squares_loss(feats, data.Y), rel=1e-8)


def test_model_gradients_with_trainable_extractor():
    rng = np.random.default_rng(3)
    data = small_data(3, 8)
    ext = make_extractor("relu1", 2, rng, width=4)
    net = random_network(rng, 4, [(1, 2)], 1, gamma=IDENTITY, sigma=IDENTITY)
    model = Model(net, ext, train_extractor=True)
    arrays = model.params()

    def loss(arrs):
        m = model.with_params(arrs)
        return float(((m.predict(data.X) - data.Y) ** 2).sum() / data.n)

    _, g = loss_and_grad(model, arrays, data.X, data.Y)
    for a, b in zip(g, central_difference(loss, arrays)):
        np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-7)


def test_cross_entropy_training_runs():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (30, 2))
    labels = (X[:, 0] > 0).astype(float)
    net = random_network(rng, 2, [(1, 2)], 2, gamma=IDENTITY)
    tr = train(net, Dataset(X, labels), TrainConfig(loss="cross-entropy", epochs=100, lr=0.05))
    assert tr.final_loss < tr.losses[0]


def test_non_differentiable_network_rejected():
    net = random_network(np.random.default_rng(0), 1, [(1, 1)], 1, sigma=BINARY_STEP)
    with pytest.raises(NotDifferentiableError):
        train(net, Dataset([[0.0], [1.0]], [0.0, 1.0]), TrainConfig(epochs=2))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_training_error():
    net = random_network(np.random.default_rng(0), 2, [(2, 2)], 1, gamma=EXP)
    data = Dataset(np.array([[0.1, 0.2], [0.3, -0.5]]), [1e150, -1e150])
    with pytest.raises(TrainingError) as e:
        train(net, data, TrainConfig(optimizer="sgd", lr=1e10, epochs=50))
    assert e.value.epoch >= 0


def test_extractors_and_injectivity():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (10, 2))
    for name in ("identity", "relu1", "relu2"):
        ext = make_extractor(name, 2, rng)
        assert ext(X).shape == (10, ext.output_dim(2))
        assert check_injective(ext, X) > 0
    with pytest.raises(ValueError):
        make_extractor("conv", 2, rng)
    dead = make_extractor("relu1", 2, rng)
    dead = dead.with_arrays([np.zeros((3, 2)), np.zeros(3)])
    with pytest.raises(InjectivityError) as e:
        check_injective(dead, X)
    assert e.value.pair == (0, 1)


def test_least_squares_loss_intercept():
    X = np.arange(5.0).reshape(-1, 1)
    Y = 2 * X + 3
    assert least_squares_loss(X, Y, intercept=True) < 1e-25
    assert least_squares_loss(X, Y) > 0.1


# ---------------------------------------------------------------- experiments helpers


@given(st.integers(0, 10_000), st.integers(0, 100))
def test_sub_rng_is_reproducible(seed, k):
    a = ex.sub_rng(seed, k).standard_normal(3)
    assert np.array_equal(a, ex.sub_rng(seed, k).standard_normal(3))
    assert not np.array_equal(a, ex.sub_rng(seed, k + 1).standard_normal(3))


def test_toy_suite_shape():
    suite = ex.toy_suite(0)
    assert set(suite) == {"sin-product", "cos-quadratic"}
    for d in suite.values():
        assert d.X.shape == (64, 2)
        assert d.Y.shape == (64, 1)


@given(st.integers(0, 10_000))
def test_embed_one_more_layer_preserves_output(seed):
    rng = np.random.default_rng(seed)
    psi = LinearMap(np.eye(1, 8))
    net = ex.sweep_network(rng, 2, 2, 4, 4, psi)
    deeper = ex.embed_one_more_layer(net)
    X = rng.uniform(-1, 1, (20, 2))
    assert deeper.depth == net.depth + 1
    np.testing.assert_allclose(deeper(X), net(X), atol=1e-12)


def test_spikes_fit_every_sample():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (40, 1))
    data = Dataset(X, np.sin(np.pi * X) + 0.1 * rng.standard_normal((40, 1)))
    net = random_network(rng, 1, [(2, 4)], 1, gamma=IDENTITY)
    exact = ex.fit_spikes(net, data)
    assert np.abs(exact(X) - data.Y).max() < 1e-12
    # away from the samples the spikes vanish
    far = np.array([[X.min() - 0.5]])
    np.testing.assert_allclose(exact(far), net(far), atol=1e-12)
    with pytest.raises(ValueError):
        ex.spike_layers(random_network(rng, 2, [(1, 1)], 1, gamma=IDENTITY), [0.0], [0.1])


def test_depth_sweep_small_run():
    data = ex.toy_suite(0, 32)["sin-product"]
    cfg = TrainConfig(optimizer="lbfgs", epochs=60, restarts=2, lbfgs_restarts=0)
    res = ex.depth_sweep(cfg, [1, 2], data)
    assert [s["depth"] for s in res.summary] == [1, 2]
    assert len(res.rows) == 4
    assert all(set(ex.CSV_FIELDS) <= set(r) for r in res.rows)
    again = ex.depth_sweep(cfg, [1, 2], data)
    assert [r["final_loss"] for r in again.rows] == [r["final_loss"] for r in res.rows]


def test_depth_sweep_warm_start_never_worse_than_embedding():
    data = ex.toy_suite(1, 32)["cos-quadratic"]
    cfg = TrainConfig(optimizer="lbfgs", epochs=80, restarts=1, lbfgs_restarts=0)
    res = ex.depth_sweep(cfg, [1, 2], data, warm_start=True)
    assert len([r for r in res.rows if r["depth"] == 2]) == 2
    assert res.summary[1]["min"] <= res.summary[0]["min"] + 1e-6


def test_append_rejects_unknown_mode():
    data = small_data()
    with pytest.raises(ValueError):
        ex.append_experiment(make_extractor("identity", 2, None), "half", data, TrainConfig())


def test_zero_hidden_layer_net_converges_to_least_squares():
    from mcn.network import MCNNetwork

    data = small_data(4, 30)
    net = MCNNetwork(2, (), LinearMap(np.array([[0.3, -0.2]])), IDENTITY, "learnable")
    tr = train(net, data, TrainConfig(optimizer="lbfgs", epochs=200))
    assert tr.final_loss == pytest.approx(least_squares_loss(data.X, data.Y), rel=1e-6)


def test_depth_sweep_single_depth_is_vacuously_monotone():
    data = ex.toy_suite(0, 16)["sin-product"]
    res = ex.depth_sweep(TrainConfig(optimizer="lbfgs", epochs=10, restarts=1, lbfgs_restarts=0), [2], data)
    assert len(res.summary) == 1
    assert res.verdict


def test_interpolation_of_noiseless_linear_target():
    f0 = lambda X: 0.5 * X[:, 0] - 0.2
    res = ex.interpolation_experiment(
        f0, 1.0, [8, 16], TrainConfig(optimizer="lbfgs", epochs=300, lbfgs_restarts=0),
        noise=0.0, seeds=1, test_points=500, shapes=((1, 0),), smooth_restarts=1,
    )
    assert all(s["median_test_mse"] < 1e-8 for s in res.summary)
    assert all(r["flag"] == "" for r in res.rows)
