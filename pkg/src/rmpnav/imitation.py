"""Imitation of the expert: scan features, RMP and command targets, a numpy MLP, DAgger.

Two students share features, hidden sizes, data and budget. One regresses the
expert's per-control-point RMPs and resolves them with the expert's solver, the
other regresses (dv, dxi) directly.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .policies import ControllerConfig, ExpertController, solve_point_sums
from .rmp_core import pseudoinverse
from .vehicle import Command, VehicleParams, VehicleState, clamp_command
from .world import EpisodeSetup, LaserScan, Outcome, Scenario, simulate_episode

N_POINTS = 12
N_SCAN = 60
FEATURE_DIM = N_SCAN + 3 + 2
RMP_DIM = N_POINTS * 5
COMMAND_DIM = 2
_LOG_RANGE = math.log1p(20.0)  # goal distances beyond 20 m saturate
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainingConfig:
    hidden: tuple[int, ...] = (128, 128, 128)
    epochs: int = 40
    lr: float = 0.02
    momentum: float = 0.9
    batch_size: int = 128
    seed: int = 0
    train_worlds: int = 10
    episodes_per_world: int = 25
    dagger_ratios: tuple[float, ...] = (0.2, 0.5, 0.8)
    dagger_episodes_per_world: int = 10
    dagger_epochs: int = 15
    max_speed_init: float = 2.0  # initial v ~ U(0, max_speed_init)
    waypoint_relabel_prob: float = 0.2  # extra sample with the waypoint rotated uniformly
    metric_mode: str = "cholesky"  # or "direct": emit (a11, a12, a22) with no PSD guarantee
    accel_cap: float = 50.0  # per-point |f| bound on RMP training targets, m/s^2; 0 disables
    null_metric_tol: float = 1e-5  # f components along metric eigenvalues below this are zeroed; 0 disables

    def __post_init__(self):
        if self.epochs < 0 or self.dagger_epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.lr <= 0 or self.batch_size < 1:
            raise ValueError("lr and batch_size must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if any(not 0 <= r <= 1 for r in self.dagger_ratios):
            raise ValueError("dagger_ratios must lie in [0, 1]")
        if not 0 <= self.waypoint_relabel_prob <= 1:
            raise ValueError("waypoint_relabel_prob must lie in [0, 1]")
        if self.accel_cap < 0 or self.null_metric_tol < 0:
            raise ValueError("accel_cap and null_metric_tol must be non-negative")
        if self.metric_mode not in ("cholesky", "direct"):
            raise ValueError("metric_mode must be 'cholesky' or 'direct'")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden sizes must be positive")


# -- features ---------------------------------------------------------------

def _body(theta: float, vec: np.ndarray) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([c * vec[0] + s * vec[1], -s * vec[0] + c * vec[1]])


def features(state: VehicleState, scan: LaserScan, waypoint, params: VehicleParams) -> np.ndarray:
    """Scan ranges, body-frame waypoint (direction and log distance) and odometry, all in [-1, 1]."""
    ranges = scan.downsample(N_SCAN).ranges
    if len(ranges) != N_SCAN:
        raise ValueError(f"scan must have at least {N_SCAN} beams")
    rel = _body(state.theta, np.asarray(waypoint, dtype=float) - state.position)
    dist = float(np.hypot(*rel))
    direction = rel / dist if dist > 0 else np.zeros(2)
    out = np.empty(FEATURE_DIM)
    out[:N_SCAN] = ranges / scan.max_range
    out[N_SCAN:N_SCAN + 2] = direction
    out[N_SCAN + 2] = min(math.log1p(dist) / _LOG_RANGE, 1.0)
    out[N_SCAN + 3] = state.v / max(params.v_max, -params.v_min)
    out[N_SCAN + 4] = state.xi / params.xi_max
    return out


def odometry_state(v: float, xi: float) -> VehicleState:
    """Body-frame state used to resolve body-frame RMPs (pose is irrelevant there)."""
    return VehicleState(0.0, 0.0, 0.0, v, xi)


# -- RMP targets --------------------------------------------------------------

def rmp_target(state: VehicleState, metric_sums: np.ndarray, force_sums: np.ndarray,
               tol: float = 1e-10) -> np.ndarray:
    """Per point body-frame (f, a11, a12, a22) of the combined RMP, metrics scaled to unit total trace.

    A uniform metric scale leaves the resolved command unchanged, so the scale is
    dropped to keep targets bounded.
    """
    c, s = math.cos(state.theta), math.sin(state.theta)
    rot = np.array([[c, -s], [s, c]])
    m = np.einsum("ji,njk,kl->nil", rot, metric_sums, rot)
    force = force_sums @ rot
    scale = float(np.trace(m, axis1=1, axis2=2).sum())
    if scale <= 0 or not math.isfinite(scale):
        raise ValueError("expert metrics have no positive trace")
    m, force = m / scale, force / scale
    out = np.empty((N_POINTS, 5))
    for i in range(N_POINTS):
        out[i, :2] = pseudoinverse(m[i], tol) @ force[i]
        out[i, 2:] = m[i, 0, 0], m[i, 0, 1], m[i, 1, 1]
    return out.reshape(-1)


def target_sums(target: np.ndarray):
    """Inverse of ``rmp_target`` up to scale: body-frame (sum A, sum A f) per point."""
    t = np.asarray(target, dtype=float).reshape(N_POINTS, 5)
    m = np.empty((N_POINTS, 2, 2))
    m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1] = t[:, 2], t[:, 3], t[:, 3], t[:, 4]
    return m, np.einsum("nij,nj->ni", m, t[:, :2])


def cholesky_encode(target: np.ndarray) -> np.ndarray:
    """(f, a11, a12, a22) -> (f, l11, l21, l22) with A = L L^T, L lower triangular."""
    t = np.asarray(target, dtype=float).reshape(-1, N_POINTS, 5).copy()
    a11, a12, a22 = t[..., 2], t[..., 3], t[..., 4]
    l11 = np.sqrt(np.maximum(a11, 0.0))
    l21 = np.divide(a12, l11, out=np.zeros_like(a12), where=l11 > 1e-12)
    l22 = np.sqrt(np.maximum(a22 - l21 ** 2, 0.0))
    t[..., 2], t[..., 3], t[..., 4] = l11, l21, l22
    return t.reshape(np.shape(target))


def cholesky_decode(encoded: np.ndarray) -> np.ndarray:
    """(f, l11, l21, l22) -> (f, a11, a12, a22); any real input gives a PSD metric."""
    t = np.asarray(encoded, dtype=float).reshape(-1, N_POINTS, 5).copy()
    l11, l21, l22 = t[..., 2].copy(), t[..., 3].copy(), t[..., 4].copy()
    t[..., 2], t[..., 3], t[..., 4] = l11 ** 2, l11 * l21, l21 ** 2 + l22 ** 2
    return t.reshape(np.shape(encoded))


def command_target(cmd: Command, params: VehicleParams) -> np.ndarray:
    return np.array([cmd.dv / params.dv_max, cmd.dxi / params.dxi_max])


# -- network ----------------------------------------------------------------

class Mlp:
    """Fully connected tanh network with a linear output layer and output standardization."""

    def __init__(self, sizes: Sequence[int], seed: int = 0):
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError("sizes must list at least input and output widths")
        self.sizes = tuple(int(s) for s in sizes)
        rng = np.random.default_rng(seed)
        self.weights = [rng.normal(0.0, 1.0 / math.sqrt(a), (a, b)) for a, b in zip(self.sizes, self.sizes[1:])]
        self.biases = [np.zeros(b) for b in self.sizes[1:]]
        self.out_mean = np.zeros(self.sizes[-1])
        self.out_std = np.ones(self.sizes[-1])

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, x: np.ndarray, cache: bool = False):
        acts = [np.asarray(x, dtype=float)]
        h = acts[0]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = np.tanh(h)
            acts.append(h)
        return (h, acts) if cache else h

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Outputs in target units."""
        return self.forward(x) * self.out_std + self.out_mean

    def loss_and_grads(self, x: np.ndarray, y_std: np.ndarray):
        """Mean squared error over all scalars against standardized targets, and its gradients."""
        out, acts = self.forward(x, cache=True)
        diff = out - y_std
        loss = float(np.mean(diff ** 2))
        delta = 2.0 * diff / diff.size
        grads = []
        for k in range(len(self.weights) - 1, -1, -1):
            grads.append(delta.sum(axis=0))
            grads.append(acts[k].T @ delta)
            if k > 0:
                delta = (delta @ self.weights[k].T) * (1.0 - acts[k] ** 2)
        grads.reverse()  # now [w0, b0, w1, b1, ...]
        return loss, grads

    def set_standardization(self, y: np.ndarray) -> None:
        self.out_mean = y.mean(axis=0)
        std = y.std(axis=0)
        self.out_std = np.where(std > 1e-8, std, 1.0)

    def standardize(self, y: np.ndarray) -> np.ndarray:
        return (y - self.out_mean) / self.out_std

    def save(self, path, meta: dict | None = None) -> None:
        header = {"format": FORMAT_VERSION, "sizes": list(self.sizes), "meta": meta or {}}
        arrays = {f"w{k}": w for k, w in enumerate(self.weights)}
        arrays.update({f"b{k}": b for k, b in enumerate(self.biases)})
        buf = io.BytesIO()
        np.savez(buf, header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
                 out_mean=self.out_mean, out_std=self.out_std, **arrays)
        with open(path, "wb") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path) -> tuple["Mlp", dict]:
        with np.load(path) as data:
            header = json.loads(bytes(data["header"]).decode())
            if header.get("format") != FORMAT_VERSION:
                raise ValueError(f"format: unsupported model version {header.get('format')}")
            model = cls(header["sizes"])
            n = len(model.weights)
            model.weights = [data[f"w{k}"].copy() for k in range(n)]
            model.biases = [data[f"b{k}"].copy() for k in range(n)]
            model.out_mean, model.out_std = data["out_mean"].copy(), data["out_std"].copy()
        return model, header["meta"]


class TrainingDiverged(RuntimeError):
    pass


def train(model: Mlp, x: np.ndarray, y: np.ndarray, epochs: int, lr: float = 0.02,
          momentum: float = 0.9, batch_size: int = 128, seed: int = 0,
          restandardize: bool = True) -> list[float]:
    """Mini-batch SGD with momentum on the MSE of standardized targets; returns per-epoch loss."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) == 0:
        raise ValueError("dataset is empty")
    if len(x) != len(y):
        raise ValueError("features and targets differ in length")
    if restandardize:
        model.set_standardization(y)
    ys = model.standardize(y)
    rng = np.random.default_rng(seed)
    velocity = [np.zeros_like(p) for p in model.params]
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            loss, grads = model.loss_and_grads(x[idx], ys[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}")
            total += loss * len(idx)
            for p, v, g in zip(model.params, velocity, grads):
                v *= momentum
                v -= lr * g
                p += v
        history.append(total / len(x))
    return history


def dataset_loss(model: Mlp, x: np.ndarray, y: np.ndarray) -> float:
    out = model.forward(np.asarray(x, dtype=float))
    return float(np.mean((out - model.standardize(np.asarray(y, dtype=float))) ** 2))


# -- data -------------------------------------------------------------------

@dataclass
class Dataset:
    """Parallel arrays: features, RMP targets, commands (normalized) and odometry (v, xi)."""

    x: np.ndarray = field(default_factory=lambda: np.zeros((0, FEATURE_DIM)))
    rmp: np.ndarray = field(default_factory=lambda: np.zeros((0, RMP_DIM)))
    cmd: np.ndarray = field(default_factory=lambda: np.zeros((0, COMMAND_DIM)))
    odom: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __len__(self):
        return len(self.x)

    def extend(self, other: "Dataset") -> "Dataset":
        return Dataset(*(np.concatenate([a, b]) for a, b in
                         ((self.x, other.x), (self.rmp, other.rmp), (self.cmd, other.cmd), (self.odom, other.odom))))

    def save(self, path) -> None:
        np.savez(path, x=self.x, rmp=self.rmp, cmd=self.cmd, odom=self.odom)

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(path) as d:
            return cls(d["x"], d["rmp"], d["cmd"], d["odom"])


class _Recorder:
    """Collects expert labels for visited states; optionally executes the expert's command."""

    def __init__(self, expert: ExpertController, rng: np.random.Generator, relabel_prob: float,
                 mix_ratio: float | None):
        self.expert = expert
        self.rng = rng
        self.relabel_prob = relabel_prob
        self.mix_ratio = mix_ratio
        self.rows: list[tuple] = []

    def label(self, state, scan, waypoint):
        m, force = self.expert.point_sums(state, scan, waypoint)
        cmd = solve_point_sums(state, m, force, self.expert.geom, self.expert.params, self.expert.cfg.tol,
                               self.expert.cfg.steer_speed_floor, self.expert.cfg.bounded)
        row = (features(state, scan, waypoint, self.expert.params), rmp_target(state, m, force, self.expert.cfg.tol),
               command_target(cmd, self.expert.params), (state.v, state.xi))
        return row, cmd

    def __call__(self, state, scan, waypoint, cmd):
        row, expert_cmd = self.label(state, scan, waypoint)
        self.rows.append(row)
        if self.relabel_prob > 0 and self.rng.random() < self.relabel_prob:
            ang = self.rng.uniform(0.0, 2 * math.pi)
            rel = np.asarray(waypoint, dtype=float) - state.position
            c, s = math.cos(ang), math.sin(ang)
            rotated = state.position + np.array([c * rel[0] - s * rel[1], s * rel[0] + c * rel[1]])
            self.rows.append(self.label(state, scan, rotated)[0])
        if self.mix_ratio is None:
            return None
        return None if self.rng.random() < self.mix_ratio else expert_cmd

    def dataset(self) -> Dataset:
        if not self.rows:
            return Dataset()
        cols = list(zip(*self.rows))
        return Dataset(*(np.asarray(c, dtype=float) for c in cols))


def randomize_start(scn: Scenario, rng: np.random.Generator, max_speed: float) -> Scenario:
    v = float(rng.uniform(0.0, max_speed)) if max_speed > 0 else 0.0
    s = scn.start
    return Scenario(scn.env, VehicleState(s.x, s.y, s.theta, v, s.xi), scn.goal, scn.seed, scn.name)


def expert_rollout_dataset(scenarios: Iterable[Scenario], expert: ExpertController, setup: EpisodeSetup,
                           seed: int = 0, max_speed_init: float = 2.0, relabel_prob: float = 0.2) -> Dataset:
    """Expert rollouts with randomized initial speed; failed episodes are dropped."""
    rng = np.random.default_rng(seed)
    data = Dataset()
    for scn in scenarios:
        rec = _Recorder(expert, rng, relabel_prob, mix_ratio=None)
        tr = simulate_episode(randomize_start(scn, rng, max_speed_init), expert, setup, observer=rec)
        if tr.outcome == Outcome.REACHED:
            data = data.extend(rec.dataset())
    return data


def dagger_round(student, expert: ExpertController, scenarios: Iterable[Scenario], setup: EpisodeSetup,
                 mix_ratio: float, seed: int = 0, max_speed_init: float = 2.0) -> Dataset:
    """Roll out a per-step mixture (student with probability ``mix_ratio``), label every visited state."""
    if not 0 <= mix_ratio <= 1:
        raise ValueError("mix_ratio must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    data = Dataset()
    for scn in scenarios:
        rec = _Recorder(expert, rng, 0.0, mix_ratio=mix_ratio)
        simulate_episode(randomize_start(scn, rng, max_speed_init), student, setup, observer=rec)
        data = data.extend(rec.dataset())
    return data


# -- students ---------------------------------------------------------------

def canonical_targets(rmp: np.ndarray, null_tol: float = 0.0, cap: float = 0.0) -> np.ndarray:
    """Drop the parts of f that the metric (nearly) ignores, then bound |f| per point.

    f only enters the solve through A f, so its components along eigenvalues
    below ``null_tol`` (metrics have unit total trace) are arbitrary. Leaving
    them in makes the regression chase values that barely move the command.
    """
    t = np.array(rmp, dtype=float).reshape(-1, N_POINTS, 5)
    if null_tol > 0:
        m = np.stack([t[..., 2], t[..., 3], t[..., 3], t[..., 4]], axis=-1).reshape(*t.shape[:2], 2, 2)
        lam, vec = np.linalg.eigh(m)
        kept = vec * (lam >= null_tol)[..., None, :]
        t[..., :2] = np.einsum("...ik,...jk,...j->...i", kept, vec, t[..., :2])
    if cap > 0:
        norm = np.linalg.norm(t[..., :2], axis=-1, keepdims=True)
        t[..., :2] *= np.minimum(1.0, cap / np.maximum(norm, 1e-300))
    return t.reshape(np.shape(rmp))


def encode_rmp_targets(rmp: np.ndarray, metric_mode: str = "cholesky", null_tol: float = 0.0,
                       accel_cap: float = 0.0) -> np.ndarray:
    rmp = canonical_targets(rmp, null_tol, accel_cap)
    return cholesky_encode(rmp) if metric_mode == "cholesky" else rmp


def decode_rmp_outputs(out: np.ndarray, metric_mode: str = "cholesky") -> np.ndarray:
    return cholesky_decode(out) if metric_mode == "cholesky" else np.asarray(out, dtype=float)


class RmpStudentController:
    """Predicts per-point RMPs and resolves them with the expert's solver (picklable)."""

    kind = "rmp"

    def __init__(self, model, cfg: ControllerConfig | None = None, params: VehicleParams | None = None,
                 metric_mode: str = "cholesky"):
        self.model = model
        self.cfg = cfg or ControllerConfig()
        self.params = params or VehicleParams()
        self.metric_mode = metric_mode
        self.geom = ExpertController(self.cfg, self.params).geom

    def command_from_target(self, target: np.ndarray, v: float, xi: float) -> Command:
        m, force = target_sums(target)
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(force))):
            return Command(0.0, 0.0, fallback=True)
        return solve_point_sums(odometry_state(v, xi), m, force, self.geom, self.params, self.cfg.tol,
                                self.cfg.steer_speed_floor, self.cfg.bounded)

    def __call__(self, state: VehicleState, scan: LaserScan, waypoint) -> Command:
        out = self.model.predict(features(state, scan, waypoint, self.params)[None])[0]
        if not np.all(np.isfinite(out)):
            return Command(0.0, 0.0, fallback=True)
        return self.command_from_target(decode_rmp_outputs(out, self.metric_mode), state.v, state.xi)


class ControlStudentController:
    """Predicts normalized (dv, dxi) directly (picklable)."""

    kind = "control"

    def __init__(self, model, params: VehicleParams | None = None):
        self.model = model
        self.params = params or VehicleParams()

    def __call__(self, state: VehicleState, scan: LaserScan, waypoint) -> Command:
        out = self.model.predict(features(state, scan, waypoint, self.params)[None])[0]
        if not np.all(np.isfinite(out)):
            return Command(0.0, 0.0, fallback=True)
        return clamp_command(Command(float(out[0]) * self.params.dv_max, float(out[1]) * self.params.dxi_max),
                             self.params)


def student_targets(data: Dataset, kind: str, metric_mode: str = "cholesky", null_tol: float = 0.0,
                    accel_cap: float = 0.0) -> np.ndarray:
    if kind == "rmp":
        return encode_rmp_targets(data.rmp, metric_mode, null_tol, accel_cap)
    if kind == "control":
        return data.cmd
    raise ValueError(f"kind: unknown student kind {kind!r}")


def new_model(kind: str, tc: TrainingConfig, seed: int | None = None) -> Mlp:
    out = RMP_DIM if kind == "rmp" else COMMAND_DIM
    return Mlp((FEATURE_DIM, *tc.hidden, out), seed=tc.seed if seed is None else seed)


def make_student(kind: str, model: Mlp, cfg: ControllerConfig, params: VehicleParams, metric_mode: str = "cholesky"):
    if kind == "rmp":
        return RmpStudentController(model, cfg, params, metric_mode)
    if kind == "control":
        return ControlStudentController(model, params)
    raise ValueError(f"kind: unknown student kind {kind!r}")


@dataclass
class StudentRun:
    kind: str
    model: Mlp
    losses: list[float]
    dataset_sizes: list[int]


def train_student(kind: str, base: Dataset, expert: ExpertController, dagger_scenarios: Sequence[Sequence[Scenario]],
                  setup: EpisodeSetup, tc: TrainingConfig, seed: int = 0) -> StudentRun:
    """Train on the shared expert dataset, then one DAgger round per mix ratio on its own rollouts."""
    model = new_model(kind, tc, seed)
    data = base
    losses = train(model, data.x, student_targets(data, kind, tc.metric_mode, tc.null_metric_tol, tc.accel_cap), tc.epochs, tc.lr, tc.momentum,
                   tc.batch_size, seed)
    sizes = [len(data)]
    for r, (ratio, scns) in enumerate(zip(tc.dagger_ratios, dagger_scenarios)):
        student = make_student(kind, model, expert.cfg, expert.params, tc.metric_mode)
        data = data.extend(dagger_round(student, expert, scns, setup, ratio, seed=seed * 1000 + r,
                                        max_speed_init=tc.max_speed_init))
        sizes.append(len(data))
        losses += train(model, data.x, student_targets(data, kind, tc.metric_mode, tc.null_metric_tol, tc.accel_cap), tc.dagger_epochs, tc.lr,
                        tc.momentum, tc.batch_size, seed + r + 1)
    return StudentRun(kind, model, losses, sizes)


def training_meta(kind: str, tc: TrainingConfig) -> dict:
    return {"kind": kind, "training": asdict(tc)}
