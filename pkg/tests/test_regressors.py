import numpy as np
import pytest
from conftest import make_record
from oracles import central_difference

from latsel.dataset import DatasetSplit, split_dataset
from latsel.errors import ChecksumFailure, DimensionMismatch, NonFiniteLoss, VersionMismatch
from latsel.kinds import ModuleKind
from latsel.params import SamplingConfig, draw_config
from latsel.regressors import (
    Forest,
    ForestConfig,
    LinearModel,
    MEDNNet,
    MednConfig,
    MednVariant,
    MLPNet,
    RegressorId,
    TrainConfig,
    default_medn_config,
    fit_forest,
    fit_regressor,
    halving_dims,
    load_model,
    save_model,
    smooth_l1,
    train_net,
)
from latsel.regressors.ids import Family
from latsel.regressors.io import model_bytes


@pytest.mark.parametrize("r, beta, want", [(0.0, 1.0, 0.0), (0.5, 1.0, 0.125), (2.0, 1.0, 1.5), (-2.0, 1.0, 1.5), (0.1, 0.2, 0.025)])
def test_smooth_l1_values(r, beta, want):
    assert smooth_l1(r, beta) == pytest.approx(want, abs=1e-15)


def test_smooth_l1_continuity():
    beta = 0.7
    below, above = smooth_l1(beta - 1e-9, beta), smooth_l1(beta + 1e-9, beta)
    assert abs(below - above) < 1e-8
    assert (smooth_l1(beta + 1e-6, beta) - smooth_l1(beta - 1e-6, beta)) / 2e-6 == pytest.approx(1.0, abs=1e-5)


def test_regressor_id_labels():
    for label in ["LR", "MLP", "RF", "MEDN", "MEDN-D", "MEDN-XI", "MEDN-XM", "MEDN-R", "RF-XM"]:
        assert RegressorId.parse(label).label == label
    assert RegressorId.parse("MEDN-D").param_set.value == "FULL"
    assert RegressorId.parse("MEDN-R").param_set.value == "RAW"
    with pytest.raises(ValueError):
        RegressorId.parse("SVM")


def test_table4_defaults():
    assert default_medn_config(ModuleKind.CONV) == MednConfig((128, 64, 32), 100.0)
    assert default_medn_config(ModuleKind.CONV_BN_RELU) == MednConfig((128, 64, 32), 100.0)
    assert default_medn_config(ModuleKind.BN) == MednConfig((32, 16, 8), 1.0)
    assert default_medn_config(ModuleKind.BN_RELU) == MednConfig((32, 16, 8), 1.0)
    assert default_medn_config(ModuleKind.AVGPOOL) == MednConfig((64, 32, 16), 0.001)
    assert default_medn_config(ModuleKind.LINEAR) == MednConfig((64, 32, 16), 0.01)
    assert default_medn_config(ModuleKind.MAXPOOL) == MednConfig((64, 32, 16), 0.01)


def test_medn_architecture():
    net = MEDNNet(10, default_medn_config(ModuleKind.CONV))
    assert net.encoder.dims == [10, 128, 64, 32]
    assert net.predictor.dims == [32, 16, 8, 4, 2, 1]
    assert net.reconstructor.dims == [32, 64, 128, 10]
    assert halving_dims(8) == [8, 4, 2, 1]
    assert halving_dims(16) == [16, 8, 4, 2, 1]
    x = np.random.default_rng(0).uniform(size=(3, 10))
    y_hat, x_hat = net.forward(x)
    assert y_hat.shape == (3,) and x_hat.shape == (3, 10)
    h, _ = net.encoder.forward(x)
    assert h.shape == (3, 32)
    with pytest.raises(DimensionMismatch):
        net.forward(np.zeros((1, 9)))


def test_direct_variant_has_no_reconstruction():
    net = MEDNNet(7, default_medn_config(ModuleKind.BN), reconstruct=False)
    y_hat, x_hat = net.forward(np.zeros((2, 7)))
    assert x_hat is None and net.reconstructor is None
    assert net.loss_parts(np.zeros((2, 7)), np.zeros(2))["recon"] is None


def test_zero_weight_model_outputs_biases():
    net = MEDNNet(5, MednConfig((8, 4), 1.0))
    rng = np.random.default_rng(1)
    for s in net.stacks():
        s.weights = [np.zeros_like(w) for w in s.weights]
        s.biases = [rng.normal(size=b.shape) for b in s.biases]
    y_hat, x_hat = net.forward(rng.uniform(size=(4, 5)))
    np.testing.assert_allclose(y_hat, net.predictor.biases[-1][0])
    np.testing.assert_allclose(x_hat, np.tile(net.reconstructor.biases[-1], (4, 1)))


def test_medn_loss_decomposition():
    rng = np.random.default_rng(2)
    X, y = rng.uniform(size=(16, 6)), rng.uniform(size=16)
    cfg = MednConfig((8, 4), 100.0)
    net = MEDNNet(6, cfg, seed=3)
    parts = net.loss_parts(X, y)
    assert net.loss(X, y) == pytest.approx(100.0 * parts["recon"] + parts["pred"], rel=1e-12)
    y_hat, x_hat = net.forward(X)
    assert parts["pred"] == pytest.approx(np.mean(smooth_l1(y_hat - y)), rel=1e-12)
    assert parts["recon"] == pytest.approx(np.mean([np.mean(smooth_l1(x_hat[i] - X[i])) for i in range(16)]), rel=1e-12)


def test_perfect_prediction_zero_loss():
    net = MEDNNet(4, MednConfig((4, 2), 1.0))
    X = np.random.default_rng(0).uniform(size=(5, 4))
    net.set_params([np.zeros_like(p) for p in net.params()])
    assert net.loss(X * 0, np.zeros(5)) == 0.0
    direct = MEDNNet(4, MednConfig((4, 2), 1.0), reconstruct=False)
    assert direct.loss(X, direct.predict(X)) == pytest.approx(0.0, abs=1e-15)


def randomize(net, seed):
    """Random weights and biases: zero-initialized biases can sit exactly on a ReLU kink."""
    rng = np.random.default_rng(seed + 1000)
    net.set_params([rng.uniform(-0.8, 0.8, size=p.shape) for p in net.params()])
    return net


def _rel_errors(net, X, y):
    _, analytic = net.loss_and_grads(X, y)
    numeric = central_difference(lambda: net.loss(X, y), net.params(), h=1e-4)
    worst = 0.0
    for a, f in zip(analytic, numeric):
        worst = max(worst, float(np.max(np.abs(a - f) / (np.abs(f) + 1e-8))))
    return worst


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_mlp_gradients(seed):
    rng = np.random.default_rng(seed)
    net = randomize(MLPNet(5, (6, 4), seed=seed), seed)
    X, y = rng.uniform(size=(8, 5)), rng.uniform(-2, 2, size=8)
    assert _rel_errors(net, X, y) <= 1e-4


@pytest.mark.parametrize("reconstruct", [True, False])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_medn_gradients(seed, reconstruct):
    rng = np.random.default_rng(seed)
    net = randomize(MEDNNet(5, MednConfig((8, 6, 4), 3.0), reconstruct=reconstruct, seed=seed, beta=0.5), seed)
    X, y = rng.uniform(size=(8, 5)), rng.uniform(-2, 2, size=8)
    assert _rel_errors(net, X, y) <= 1e-4


def test_zero_residual_gives_zero_prediction_gradient():
    rng = np.random.default_rng(5)
    net = MLPNet(3, (4,), seed=1)
    X = rng.uniform(size=(6, 3))
    y = net.body.forward(X)[0][:, 0]  # same product path as the loss
    _, grads = net.loss_and_grads(X, y)
    assert all(np.all(g == 0) for g in grads)


def test_doubling_weight_ratio_doubles_reconstruction_gradients():
    rng = np.random.default_rng(6)
    X, y = rng.uniform(size=(10, 4)), rng.uniform(size=10)
    a = MEDNNet(4, MednConfig((6, 4), 1.0), seed=2)
    b = MEDNNet(4, MednConfig((6, 4), 2.0), seed=2)
    ga = a.loss_and_grads(X, y)[1]
    gb = b.loss_and_grads(X, y)[1]
    n_rec = len(a.reconstructor.params())
    for x1, x2 in zip(ga[-n_rec:], gb[-n_rec:]):
        np.testing.assert_allclose(x2, 2 * x1, rtol=1e-12, atol=1e-15)


def _synthetic_split(kind=ModuleKind.LINEAR, n=200, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    recs = []
    for _ in range(n):
        cfg = draw_config(kind, rng)
        lat = 0.05 + 1e-6 * cfg.n * cfg.c_in * cfg.c_out
        lat *= 1 + noise * rng.standard_normal()
        recs.append(make_record(kind, cfg, lat, mem=int(rng.integers(2**30, 2**33)), util=float(rng.uniform())))
    return split_dataset(recs, seed)


def test_training_reduces_loss_and_is_deterministic():
    sp = _synthetic_split()
    cfg = TrainConfig(epochs=50, seed=3)
    for label in ("MLP", "MEDN", "MEDN-D"):
        a = fit_regressor(RegressorId.parse(label), sp, cfg)
        b = fit_regressor(RegressorId.parse(label), sp, cfg)
        assert a.history["train"][-1] < a.history["train"][0]
        assert len(a.history["train"]) == 51
        assert a.history["train"] == b.history["train"]
        assert model_bytes(a) == model_bytes(b)


def test_nonfinite_loss_aborts():
    net = MLPNet(2, (3,))
    X = np.array([[0.1, 0.2], [0.3, np.nan]])
    with pytest.raises(NonFiniteLoss):
        train_net(net, X, np.array([0.0, 1.0]), TrainConfig(epochs=1))


def test_linear_closed_form_exact():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(50, 4))
    coef = np.array([1.5, -2.0, 0.25, 3.0])
    lm = LinearModel.fit(X, X @ coef + 0.7)
    np.testing.assert_allclose(lm.coef, coef, atol=1e-6)
    assert lm.intercept == pytest.approx(0.7, abs=1e-6)
    assert np.max(np.abs(lm.predict(X) - (X @ coef + 0.7))) <= 1e-6


def test_forest_degenerate_tree_predicts_mean():
    rng = np.random.default_rng(0)
    X, y = rng.uniform(size=(40, 3)), rng.uniform(size=40)
    f = Forest.fit(X, y, ForestConfig(tree_count=1, max_depth=0, bootstrap=False))
    np.testing.assert_allclose(f.predict(rng.uniform(size=(7, 3))), np.float32(y.mean()), rtol=1e-6)


def test_forest_is_mean_of_trees():
    rng = np.random.default_rng(1)
    X, y = rng.uniform(size=(60, 3)), rng.uniform(size=60)
    f = Forest.fit(X, y, ForestConfig(tree_count=5, seed=2))
    Q = rng.uniform(size=(9, 3))
    np.testing.assert_allclose(f.predict(Q), np.mean([t.predict(Q) for t in f.trees], axis=0), rtol=1e-12)


def test_forest_fits_step_function():
    rng = np.random.default_rng(4)
    x = rng.uniform(size=(400, 1))
    y = np.where(x[:, 0] < 0.3, 1.0, np.where(x[:, 0] < 0.7, 3.0, 2.0)) + 0.05 * rng.standard_normal(400)
    f = Forest.fit(x[:300], y[:300], ForestConfig(tree_count=20, seed=1, min_samples_leaf=3))
    pred = f.predict(x[300:])
    r2 = 1 - np.sum((y[300:] - pred) ** 2) / np.sum((y[300:] - y[300:].mean()) ** 2)
    assert r2 >= 0.9


def test_unpruned_tree_interpolates_training_data():
    rng = np.random.default_rng(2)
    X, y = rng.uniform(size=(50, 2)), rng.uniform(size=50)
    f = Forest.fit(X, y, ForestConfig(tree_count=1, bootstrap=False))
    np.testing.assert_allclose(f.predict(X), y.astype(np.float32), rtol=1e-6)


def test_forest_deterministic():
    rng = np.random.default_rng(3)
    X, y = rng.uniform(size=(80, 4)), rng.uniform(size=80)
    cfg = ForestConfig(tree_count=4, features_per_split=2, seed=9)
    a, b = Forest.fit(X, y, cfg), Forest.fit(X, y, cfg)
    for ta, tb in zip(a.trees, b.trees):
        np.testing.assert_array_equal(ta.feature, tb.feature)
        np.testing.assert_array_equal(ta.threshold, tb.threshold)


def test_fit_forest_entry_point():
    sp = _synthetic_split(n=60)
    model = fit_forest(ForestConfig(tree_count=3), sp)
    assert model.rid.family is Family.RF


@pytest.fixture(scope="module")
def trained_models():
    sp = _synthetic_split(n=120, seed=7, noise=0.02)
    cfg = TrainConfig(epochs=5, seed=1)
    return sp, {
        label: fit_regressor(RegressorId.parse(label), sp, cfg, forest_cfg=ForestConfig(tree_count=5))
        for label in ("LR", "MLP", "RF", "MEDN", "MEDN-D", "MEDN-XI", "MEDN-XM", "MEDN-R")
    }


def test_predict_batch_contract(trained_models):
    sp, models = trained_models
    rng = np.random.default_rng(0)
    for model in models.values():
        xs = rng.uniform(size=(12, model.schema.width))
        batch = model.predict_batch(xs)
        assert [model.predict(x) for x in xs] == pytest.approx(list(batch), rel=0, abs=0)
        assert model.predict_batch(xs[:1])[0] == model.predict(xs[0])
        assert len(model.predict_batch(np.zeros((0, model.schema.width)))) == 0
        assert len(model.predict_batch([])) == 0
        perm = rng.permutation(12)
        np.testing.assert_array_equal(model.predict_batch(xs[perm]), batch[perm])
        with pytest.raises(DimensionMismatch):
            model.predict(np.zeros(model.schema.width + 1))


def test_save_load_roundtrip(tmp_path, trained_models):
    _, models = trained_models
    rng = np.random.default_rng(1)
    for label, model in models.items():
        path = tmp_path / f"{label}.bin"
        size = save_model(path, model)
        assert size == path.stat().st_size
        loaded = load_model(path)
        assert loaded.rid == model.rid and loaded.schema == model.schema
        xs = rng.uniform(size=(100, model.schema.width))
        np.testing.assert_array_equal(loaded.predict_batch(xs), model.predict_batch(xs))


def test_truncated_and_corrupt_files(tmp_path, trained_models):
    _, models = trained_models
    path = tmp_path / "m.bin"
    save_model(path, models["MEDN"])
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(ChecksumFailure):
        load_model(path)
    path.write_bytes(data[:100])
    with pytest.raises(ChecksumFailure):
        load_model(path)
    flipped = bytearray(data)
    flipped[-100] ^= 0xFF
    path.write_bytes(bytes(flipped))
    with pytest.raises(ChecksumFailure):
        load_model(path)
    path.write_bytes(data[:8] + (2).to_bytes(4, "little") + data[12:])
    with pytest.raises(VersionMismatch):
        load_model(path)


def test_ablation_schema_widths(trained_models):
    _, models = trained_models
    w = {k: m.schema.width for k, m in models.items()}
    # linear: 3 sampling + 2 measurable + 2 inferable
    assert (w["MEDN"], w["MEDN-D"], w["MEDN-XI"], w["MEDN-XM"], w["MEDN-R"]) == (7, 7, 5, 5, 3)
    assert models["MEDN-D"].core.reconstructor is None
    assert RegressorId.parse("MEDN-XI").variant is MednVariant.NO_INFER


def test_restore_best_keeps_lowest_validation_epoch():
    sp = _synthetic_split(n=150, noise=0.05)
    m = fit_regressor(RegressorId.parse("MLP"), sp, TrainConfig(epochs=30, learning_rate=0.05, seed=2))
    val = m.history["validation"]
    best = m.history["best_epoch"]
    assert 1 <= best <= 30 and val[best] == min(val[1:])
    schema = m.schema
    from latsel.params import vectorize_many

    X_val = vectorize_many(sp.validation, schema)
    y_val = m.scale_target([r.latency_ms for r in sp.validation])
    # float32 rounding after training moves the loss slightly
    assert m.core.loss(X_val, y_val) == pytest.approx(val[best], rel=1e-4)

    last = fit_regressor(RegressorId.parse("MLP"), sp,
                         TrainConfig(epochs=30, learning_rate=0.05, seed=2, restore_best=False))
    assert last.history["best_epoch"] == 30
    assert last.core.loss(X_val, y_val) == pytest.approx(val[-1], rel=1e-4)
