import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from anypose import forecaster as fc
from anypose import mlp
from anypose import training as tr
from anypose.motion import MotionFamily, generate_dataset, make_windows
from anypose.ode import SolverConfig
from anypose.pose import PoseSequence, TimeGrid
from oracles import central_fd, max_rel_err, mpjpe_loop

GRID = (0.08, 0.16)


@pytest.fixture(scope="module")
def tiny_data():
    return generate_dataset(MotionFamily(m_joints=4, duration_sec=1.2), 5, 11)


def tiny_model(order=1, seed=0):
    m = fc.AnyPoseModel.create(order, 4, hidden=(8,), seed=seed)
    return m


def tiny_cfg(**kw):
    base = dict(epochs=3, batch_size=4, loss_time_grid=GRID, window_stride=3, seed=5)
    base.update(kw)
    return tr.TrainConfig(**base)


# -- loss ---------------------------------------------------------------------


def test_mpjpe_identity(rng):
    p = rng.normal(size=(3, 5, 3))
    assert tr.mpjpe(p, p) == 0.0


def test_mpjpe_hand_values():
    gt = np.zeros((2, 3))
    pred = np.array([[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]])
    assert tr.mpjpe([pred], [gt]) == 2.5
    assert tr.mpjpe(np.ones((1, 22, 3)) * [1, 0, 0], np.zeros((1, 22, 3))) == pytest.approx(1.0, rel=1e-15)


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 5), st.just(3)), elements=st.floats(-1e3, 1e3)))
def test_mpjpe_matches_loop_oracle(d):
    gt = np.zeros_like(d)
    assert tr.mpjpe(d, gt) == pytest.approx(mpjpe_loop(d, gt), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("pred, gt", [([], []), (np.zeros((2, 3, 3)), np.zeros((1, 3, 3))), (np.zeros((1, 3, 3)), np.zeros((1, 4, 3)))])
def test_mpjpe_shape_errors(pred, gt):
    with pytest.raises(ValueError):
        tr.mpjpe(pred, gt)


def test_mpjpe_grad_kink_is_zero(rng):
    p = rng.normal(size=(2, 4, 3))
    assert not np.any(tr.mpjpe_grad(p, p))


def test_mpjpe_grad_unit_direction():
    g = tr.mpjpe_grad(np.array([[[1.0, 0.0, 0.0]]]), np.zeros((1, 1, 3)))
    assert g.tolist() == [[[1.0, 0.0, 0.0]]]


def test_mpjpe_grad_fd(rng):
    pred = rng.normal(size=(3, 4, 3))
    gt = rng.normal(size=(3, 4, 3))
    (num,) = central_fd(lambda: tr.mpjpe(pred, gt), [pred], eps=1e-6)
    assert max_rel_err([tr.mpjpe_grad(pred, gt)], [num]) < 1e-4


# -- gradients through the solver ---------------------------------------------


def test_zero_cotangent_zero_param_grad(rng):
    model = tiny_model()
    trace = fc.forecast_batch(model, rng.normal(size=(2, 12)), TimeGrid(GRID), SolverConfig(), record_tape=True)
    g = tr.backward_through_solve(model, trace, np.zeros_like(trace.states))
    assert all(not np.any(a) for a in g.arrays())


def test_one_euler_step_linear_model_by_hand(rng):
    # single affine layer: f(y) = W y + b; one Euler step y1 = y0 + h f(y0)
    model = fc.AnyPoseModel(order=1, params=mlp.init([3, 3], 0), m_joints=1)
    model.params.biases[0][...] = rng.normal(size=3)
    h = 0.05
    y0 = rng.normal(size=3)
    trace = fc.forecast_batch(model, y0, TimeGrid([h]), SolverConfig(method="euler", fixed_step_sec=h), record_tape=True)
    dy1 = rng.normal(size=(1, 3))
    g = tr.backward_through_solve(model, trace, dy1)
    np.testing.assert_allclose(g.weights[0], h * np.outer(dy1[0], y0), rtol=1e-14)
    np.testing.assert_allclose(g.biases[0], h * dy1[0], rtol=1e-14)
    np.testing.assert_allclose(g.inputs, dy1[0] + h * dy1[0] @ model.params.weights[0], rtol=1e-14)


def test_backward_rejects_adaptive_trace():
    model = tiny_model()
    trace = fc.forecast_batch(model, np.zeros(12), TimeGrid([0.1]), record_tape=True)
    with pytest.raises(ValueError):
        tr.backward_through_solve(model, trace, np.zeros_like(trace.states))


@pytest.mark.parametrize("order", [1, 2])
def test_end_to_end_gradient_fd(tiny_data, order):
    model = tiny_model(order, seed=order)
    tr.fit_normalization(model, tiny_data.train)
    grid = TimeGrid(GRID)
    solver = SolverConfig(method="rk4", fixed_step_sec=0.02)
    w = make_windows(tiny_data.train[:1], grid, order, stride=9)
    _, g = tr.batch_loss_and_grad(model, w, grid, solver)
    num = central_fd(lambda: tr.windows_loss(model, w, grid, solver), model.params.arrays(), eps=1e-6)
    assert max_rel_err(g.arrays(), num) < 1e-3


# -- optimizer ----------------------------------------------------------------


def _bundle(arrays):
    ws, bs = arrays[0::2], arrays[1::2]
    return mlp.GradBundle([w.copy() for w in ws], [b.copy() for b in bs])


@given(st.floats(1e-6, 1e6), st.floats(0.01, 10.0), st.integers(0, 1000))
def test_clip_bounds_global_norm(scale, max_norm, seed):
    p = mlp.init([3, 4, 2], seed)
    g = _bundle([a + scale * np.random.default_rng(seed).normal(size=a.shape) for a in p.arrays()])
    pre = g.global_norm()
    assert tr.clip_grad_norm(g, max_norm) == pre
    assert g.global_norm() <= max_norm + 1e-12
    if pre <= max_norm:
        assert g.global_norm() == pre


def test_adam_zero_grad_is_noop():
    p = mlp.init([3, 4, 2], 0)
    before = [a.copy() for a in p.arrays()]
    opt = tr.Adam(p)
    opt.step(mlp.GradBundle.zeros_like(p))
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), before))


def test_adam_first_step_by_hand(rng):
    p = mlp.init([2, 2], 0)
    before = [a.copy() for a in p.arrays()]
    g = _bundle([rng.normal(size=a.shape) for a in p.arrays()])
    tr.Adam(p, lr=0.01).step(g)
    # bias-corrected first moment = g, second = g^2
    for a, b, ga in zip(p.arrays(), before, g.arrays()):
        np.testing.assert_allclose(a, b - 0.01 * ga / (np.abs(ga) + 1e-8), rtol=1e-12)


# -- normalization ------------------------------------------------------------


def test_fit_normalization_order1():
    poses = np.arange(4 * 1 * 3, dtype=float).reshape(4, 1, 3) ** 2
    seq = PoseSequence(poses, 0.5)
    model = fc.AnyPoseModel.create(1, 1, hidden=(2,))
    tr.fit_normalization(model, [seq], floor=1e-9)
    x = poses.reshape(4, 3)
    np.testing.assert_allclose(model.input_mean, x.mean(0))
    np.testing.assert_allclose(model.input_scale, x.std(0))
    np.testing.assert_allclose(model.output_scale, (np.diff(x, axis=0) / 0.5).std(0))


def test_fit_normalization_order2_floor():
    seq = PoseSequence(np.zeros((5, 1, 3)), 0.04)
    model = fc.AnyPoseModel.create(2, 1, hidden=(2,))
    tr.fit_normalization(model, [seq], floor=2.0)
    assert model.input_scale.tolist() == [2.0] * 6
    assert model.output_scale.tolist() == [2.0] * 3


# -- training loop ------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        {"epochs": 0},
        {"learning_rate": -1.0},
        {"solver": SolverConfig(method="dopri45")},
        {"loss_time_grid": (0.16, 0.08)},
        {"beta1": 1.0},
        {"clip_norm": 0.0},
    ],
)
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        tr.TrainConfig(**kw)


def test_train_config_roundtrip():
    c = tiny_cfg()
    assert tr.TrainConfig.from_dict(c.to_dict()) == c


def test_zero_learning_rate_keeps_params(tiny_data):
    model = tiny_model()
    tr.fit_normalization(model, tiny_data.train)
    before = [a.copy() for a in model.params.arrays()]
    rep = tr.train(model, tiny_data, tiny_cfg(learning_rate=0.0))
    assert all(np.array_equal(a, b) for a, b in zip(model.params.arrays(), before))
    np.testing.assert_allclose(rep.train_mpjpe, rep.train_mpjpe[0], rtol=1e-12)
    assert len(set(rep.val_mpjpe)) == 1


def test_training_deterministic(tiny_data, tmp_path):
    out = []
    for k in range(2):
        model = tiny_model(2, seed=3)
        tr.fit_normalization(model, tiny_data.train)
        rep = tr.train(model, tiny_data, tiny_cfg(), checkpoint_path=tmp_path / f"ck{k}.json")
        out.append((rep.to_dict(), (tmp_path / f"ck{k}.json").read_bytes()))
    r0, r1 = out[0][0], out[1][0]
    r0.pop("best_checkpoint"), r1.pop("best_checkpoint")
    assert r0 == r1
    assert out[0][1] == out[1][1]


def test_training_reduces_loss(tiny_data, tmp_path):
    model = tiny_model(seed=1)
    tr.fit_normalization(model, tiny_data.train)
    ck = tmp_path / "ck.json"
    rep = tr.train(model, tiny_data, tiny_cfg(epochs=15, learning_rate=3e-3), checkpoint_path=ck)
    assert rep.train_mpjpe[-1] < rep.train_mpjpe[0]
    assert rep.best_val_mpjpe == min(rep.val_mpjpe)
    assert rep.val_mpjpe[rep.best_epoch - 1] == rep.best_val_mpjpe
    assert rep.best_checkpoint == "ck.json"
    # the checkpoint holds the best-validation weights and they are left in the model
    assert fc.dumps(fc.load(ck)) == fc.dumps(model)
    grid = TimeGrid(GRID)
    val = make_windows(tiny_data.validation, grid, 1, 3)
    assert tr.windows_loss(model, val, grid, tr.TrainConfig().solver) == pytest.approx(rep.best_val_mpjpe, rel=1e-12)


def test_early_stopping(tiny_data):
    model = tiny_model()
    tr.fit_normalization(model, tiny_data.train)
    rep = tr.train(model, tiny_data, tiny_cfg(epochs=10, learning_rate=0.0, patience=2))
    assert rep.stopped_early
    assert len(rep.val_mpjpe) == 3


def test_divergence_restores_best_params(tiny_data):
    model = tiny_model()
    model.set_normalization(model.input_mean, model.input_scale, np.full(12, 1e300))
    before = [a.copy() for a in model.params.arrays()]
    with np.errstate(all="ignore"), pytest.raises(tr.TrainingDiverged) as ei:
        tr.train(model, tiny_data, tiny_cfg())
    assert "diverged" in str(ei.value) or "became" in str(ei.value)
    assert all(np.array_equal(a, b) for a, b in zip(model.params.arrays(), before))
    assert ei.value.report.best_epoch == -1


def test_report_excludes_timing_by_default(tiny_data):
    model = tiny_model()
    rep = tr.train(model, tiny_data, tiny_cfg(epochs=1))
    assert "epoch_seconds" not in rep.to_dict()
    assert len(rep.to_dict(include_timing=True)["epoch_seconds"]) == 1


def test_model_dataset_joint_mismatch(tiny_data):
    with pytest.raises(ValueError):
        tr.train(fc.AnyPoseModel.create(1, 5, hidden=(4,)), tiny_data, tiny_cfg())
