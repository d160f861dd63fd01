import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmpnav import imitation as il
from rmpnav.policies import ExpertController
from rmpnav.vehicle import VehicleParams, VehicleState
from rmpnav.world import EpisodeSetup, Environment, Outcome, Scenario, SimParams, simulate_episode

P = VehicleParams()


def _numeric_grads(model, x, y, h=1e-6):
    out = []
    for p in model.params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = model.loss_and_grads(x, y)[0]
            p[i] = old - h
            down = model.loss_and_grads(x, y)[0]
            p[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


@pytest.mark.parametrize("sizes", [(4, 6, 5, 3), (5, 7, 2)])
def test_backprop_matches_finite_differences(sizes):
    rng = np.random.default_rng(1)
    model = il.Mlp(sizes, seed=2)
    x, y = rng.normal(size=(9, sizes[0])), rng.normal(size=(9, sizes[-1]))
    _, grads = model.loss_and_grads(x, y)
    for a, n in zip(grads, _numeric_grads(model, x, y)):
        assert np.linalg.norm(a - n) / max(np.linalg.norm(n), 1e-12) < 1e-4


def test_memorizes_single_sample():
    rng = np.random.default_rng(0)
    x = np.repeat(rng.uniform(-1, 1, (1, il.FEATURE_DIM)), 8, axis=0)
    y = np.repeat(rng.normal(size=(1, 5)), 8, axis=0)
    model = il.Mlp((il.FEATURE_DIM, 32, 32, 5), seed=0)
    losses = il.train(model, x, y, epochs=200, lr=0.02, batch_size=8, restandardize=False)
    assert losses[-1] < 1e-6


def test_linear_model_recovers_weights():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(4, 2))
    x = rng.normal(size=(400, 4))
    model = il.Mlp((4, 2), seed=0)
    il.train(model, x, x @ w, epochs=300, lr=0.05, batch_size=50, restandardize=False)
    assert np.abs(model.weights[0] - w).max() < 1e-3
    assert np.abs(model.biases[0]).max() < 1e-3


def test_loss_decreases_and_is_deterministic():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, (300, 8))
    y = np.sin(x[:, :3] * 2)
    runs = []
    for _ in range(2):
        model = il.Mlp((8, 16, 16, 3), seed=4)
        losses = il.train(model, x, y, epochs=3, lr=0.02, batch_size=32, seed=9)
        runs.append((losses, model))
    assert runs[0][0][0] > runs[0][0][1] > runs[0][0][2]
    for a, b in zip(runs[0][1].params, runs[1][1].params):
        assert np.array_equal(a, b)


def test_divergence_is_reported():
    model = il.Mlp((2, 1), seed=0)
    x = np.random.default_rng(0).normal(size=(16, 2))
    with pytest.raises(il.TrainingDiverged, match="loss became"):
        with np.errstate(all="ignore"):
            il.train(model, x, x[:, :1], epochs=500, lr=1e3, momentum=0.0, restandardize=False)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_decoded_metrics_are_psd(seed):
    out = np.random.default_rng(seed).normal(scale=10, size=il.RMP_DIM)
    t = il.cholesky_decode(out).reshape(il.N_POINTS, 5)
    for a11, a12, a22 in t[:, 2:]:
        assert np.linalg.eigvalsh([[a11, a12], [a12, a22]]).min() >= -1e-9 * max(1.0, a11 + a22)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_cholesky_round_trip(seed):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=(il.N_POINTS, 5))
    for i in range(il.N_POINTS):
        g = rng.normal(size=(2, 2))
        a = g @ g.T
        t[i, 2:] = a[0, 0], a[0, 1], a[1, 1]
    back = il.cholesky_decode(il.cholesky_encode(t.reshape(-1)))
    np.testing.assert_allclose(back, t.reshape(-1), atol=1e-10)


def test_features_in_range():
    env = Environment.box(-3, -3, 3, 3)
    setup = EpisodeSetup()
    s = VehicleState(0.5, 0.2, 1.0, -1.5, -0.35)
    f = il.features(s, setup.scan(env, s), [100.0, -50.0], P)
    assert f.shape == (il.FEATURE_DIM,) and np.all(np.abs(f) <= 1.0)


def _corridor():
    env = Environment.box(-1, -1, 12, 1)
    return Scenario(env, VehicleState(0, 0, 0), np.array([10.0, 0.0]), seed=1)


def test_rollout_dataset_counts_and_decoding():
    setup = EpisodeSetup()
    expert = ExpertController(params=P)
    scn = _corridor()
    data = il.expert_rollout_dataset([scn], expert, setup, seed=0, max_speed_init=0.0, relabel_prob=0.0)
    tr = simulate_episode(scn, expert, setup)
    assert tr.outcome == Outcome.REACHED
    assert len(data) == len(tr.samples) - 1
    student = il.RmpStudentController(None, expert.cfg, P)
    for row in range(0, len(data), 7):
        cmd = student.command_from_target(data.rmp[row], *data.odom[row])
        want = data.cmd[row] * [P.dv_max, P.dxi_max]
        assert abs(cmd.dv - want[0]) < 1e-6 and abs(cmd.dxi - want[1]) < 1e-6


def test_initial_speed_randomization():
    rng = np.random.default_rng(0)
    vs = [il.randomize_start(_corridor(), rng, 2.0).start.v for _ in range(2000)]
    assert 0 <= min(vs) and max(vs) < 2.0
    assert np.mean(vs) == pytest.approx(1.0, abs=0.05)


class _Oracle:
    """Stands in for a trained network by returning the expert's own (encoded) targets."""

    def __init__(self, x, targets):
        self.x, self.targets = x, targets

    def predict(self, x):
        k = int(np.argmin(np.abs(self.x - x[0]).max(axis=1)))
        assert np.abs(self.x[k] - x[0]).max() < 1e-8
        return self.targets[k][None]


def test_passthrough_students_match_expert():
    setup = EpisodeSetup()
    expert = ExpertController(params=P)
    data = il.expert_rollout_dataset([_corridor()], expert, setup, max_speed_init=0.0, relabel_prob=0.0)
    assert len(data) > 0
    for kind in ("rmp", "control"):
        student = il.make_student(kind, _Oracle(data.x, il.student_targets(data, kind)), expert.cfg, P)
        rec = simulate_episode(_corridor(), student, setup)
        ref = simulate_episode(_corridor(), expert, setup)
        for (_, _, a), (_, _, b) in zip(rec.samples, ref.samples):
            assert abs(a.dv - b.dv) < 1e-6 and abs(a.dxi - b.dxi) < 1e-6


def test_control_student_clamps():
    class Wild:
        def predict(self, x):
            return np.array([[50.0, -50.0]])

    cmd = il.ControlStudentController(Wild(), P)(VehicleState(), _scan(), [1, 0])
    assert cmd.dv == P.dv_max and cmd.dxi == -P.dxi_max

    class Broken:
        def predict(self, x):
            return np.full((1, il.RMP_DIM), np.nan)

    assert il.RmpStudentController(Broken(), params=P)(VehicleState(), _scan(), [1, 0]).fallback


def _scan():
    env = Environment.box(-3, -3, 3, 3)
    return EpisodeSetup().scan(env, VehicleState())


def test_dagger_mix_extremes():
    setup = EpisodeSetup(sim=SimParams(max_steps=60))
    expert = ExpertController(params=P)

    class Still:
        def __call__(self, state, scan, wp):
            from rmpnav.vehicle import Command
            return Command()

    pure = il.dagger_round(Still(), expert, [_corridor()], setup, 0.0, max_speed_init=0.0)
    ref = il.expert_rollout_dataset([_corridor()], expert, EpisodeSetup(sim=SimParams(max_steps=60)),
                                    max_speed_init=0.0, relabel_prob=0.0)
    np.testing.assert_array_equal(pure.x[:len(ref)], ref.x[:len(pure)])
    student_only = il.dagger_round(Still(), expert, [_corridor()], setup, 1.0, max_speed_init=0.0)
    # a parked student never moves, so every visited state has the start pose
    assert np.all(student_only.odom == 0)
    with pytest.raises(ValueError):
        il.dagger_round(Still(), expert, [], setup, 1.5)


def test_model_save_load(tmp_path):
    model = il.Mlp((3, 4, 2), seed=1)
    model.set_standardization(np.array([[1.0, 2.0], [3.0, 5.0]]))
    model.save(tmp_path / "m.npz", {"kind": "rmp"})
    again, meta = il.Mlp.load(tmp_path / "m.npz")
    assert meta == {"kind": "rmp"}
    x = np.ones((2, 3))
    np.testing.assert_array_equal(again.predict(x), model.predict(x))


def test_dataset_save_load(tmp_path):
    d = il.Dataset(np.ones((2, il.FEATURE_DIM)), np.zeros((2, il.RMP_DIM)), np.ones((2, 2)), np.zeros((2, 2)))
    d.save(tmp_path / "d.npz")
    e = il.Dataset.load(tmp_path / "d.npz")
    assert len(e) == 2 and np.array_equal(e.x, d.x)


def test_equal_footing():
    tc = il.TrainingConfig()
    a, b = il.new_model("rmp", tc), il.new_model("control", tc)
    assert a.sizes[:-1] == b.sizes[:-1] and a.sizes[-1] == 60 and b.sizes[-1] == 2


def _random_targets(rng, n=4):
    t = rng.normal(scale=5.0, size=(n, il.N_POINTS, 5))
    g = rng.normal(size=(n, il.N_POINTS, 2, 2))
    a = g @ np.swapaxes(g, -1, -2)
    t[..., 2], t[..., 3], t[..., 4] = a[..., 0, 0], a[..., 0, 1], a[..., 1, 1]
    return t.reshape(n, -1)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_canonical_targets_disabled_is_identity(seed):
    t = _random_targets(np.random.default_rng(seed))
    np.testing.assert_array_equal(il.canonical_targets(t), t)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1.0), st.floats(0.5, 20.0))
def test_canonical_targets_projection_and_cap(seed, tol, cap):
    rng = np.random.default_rng(seed)
    t = _random_targets(rng)
    # one point per row gets a rank-one metric along u
    u = rng.normal(size=2)
    u /= np.linalg.norm(u)
    t = t.reshape(-1, il.N_POINTS, 5)
    t[:, 0, 2:] = 2.0 * u[0] ** 2, 2.0 * u[0] * u[1], 2.0 * u[1] ** 2
    out = il.canonical_targets(t.reshape(len(t), -1), tol, cap).reshape(t.shape)
    assert np.all(np.linalg.norm(out[..., :2], axis=-1) <= cap * (1 + 1e-12))
    # nothing survives orthogonal to the metric's range
    assert np.abs(out[:, 0, :2] @ np.array([-u[1], u[0]])).max() < 1e-9
    np.testing.assert_array_equal(out[..., 2:], t[..., 2:])
    again = il.canonical_targets(out.reshape(len(t), -1), tol, cap).reshape(t.shape)
    np.testing.assert_allclose(again, out, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_canonical_targets_keep_well_posed_commands(seed):
    # full-rank metrics above the cutoff and small f: the resolved command is untouched
    rng = np.random.default_rng(seed)
    t = _random_targets(rng, 1).reshape(il.N_POINTS, 5)
    t[:, :2] = rng.uniform(-1, 1, (il.N_POINTS, 2))
    t[:, 2] += 1.0
    t[:, 4] += 1.0
    student = il.RmpStudentController(None, params=P)
    a = student.command_from_target(t.reshape(-1), 0.5, 0.1)
    b = student.command_from_target(il.canonical_targets(t.reshape(-1), 1e-5, 50.0), 0.5, 0.1)
    assert abs(a.dv - b.dv) < 1e-9 and abs(a.dxi - b.dxi) < 1e-9
