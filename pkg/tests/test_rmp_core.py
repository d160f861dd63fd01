import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmpnav.rmp_core import (PulledBackPolicy, Rmp2, SolverError, combine_at_point, metric_norm_sq,
                             pseudoinverse, pullback, pullback_sums, resolve, resolve_box, resolve_sums)

seeds = st.integers(0, 2**32 - 1)


def random_psd(rng, rank=None):
    g = rng.normal(size=(2, 2 if rank is None else rank))
    return g @ g.T


def stacked_oracle(jacs, metrics, accels):
    """Minimizer of sum 1/2 ||f_i - J_i q||^2_{A_i} as one dense least-squares problem in sqrt(A_i) J_i."""
    rows, rhs = [], []
    for j, a, f in zip(jacs, metrics, accels):
        lam, vec = np.linalg.eigh(a)
        root = (vec * np.sqrt(np.clip(lam, 0, None))) @ vec.T
        rows.append(root @ j)
        rhs.append(root @ f)
    return np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)[0]


def test_metric_norm_examples():
    assert metric_norm_sq([1, 0], np.eye(2)) == 1.0
    assert metric_norm_sq([0, 1], np.outer([1, 0], [1, 0])) == 0.0
    assert metric_norm_sq([1, 2], [[2, 1], [1, 3]]) == 18.0


def test_metric_norm_rejects_asymmetric():
    with pytest.raises(ValueError):
        metric_norm_sq([1, 0], [[1, 2], [0, 1]])


def test_rmp2_symmetric_storage():
    r = Rmp2.from_metric([1, 2], [[2, 0.5], [0.5, 1]])
    assert r.metric[0, 1] == r.metric[1, 0] == 0.5
    with pytest.raises(ValueError):
        Rmp2.from_metric([1, 2], [[2, 0.4], [0.5, 1]])


def test_pullback_examples():
    p = pullback(Rmp2.from_metric([1, 2], np.eye(2)), np.eye(2))
    np.testing.assert_array_equal(p.weight, np.eye(2))
    np.testing.assert_array_equal(p.bias, [1, 2])
    z = pullback(Rmp2.from_metric([1, 2], np.eye(2)), np.zeros((2, 3)))
    assert not z.weight.any() and not z.bias.any()


@settings(max_examples=50)
@given(seeds, st.integers(1, 4))
def test_pullback_matches_matrix_products(seed, k):
    rng = np.random.default_rng(seed)
    a, f, j = random_psd(rng), rng.normal(size=2), rng.normal(size=(2, k))
    p = pullback(Rmp2.from_metric(f, a), j)
    np.testing.assert_allclose(p.weight, j.T @ a @ j, atol=1e-12)
    np.testing.assert_allclose(p.bias, j.T @ a @ f, atol=1e-12)
    assert np.linalg.eigvalsh(p.weight).min() >= -1e-10


def test_pseudoinverse_examples():
    np.testing.assert_allclose(pseudoinverse(np.eye(2)), np.eye(2))
    np.testing.assert_allclose(pseudoinverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    assert not pseudoinverse(np.zeros((2, 2))).any()


@settings(max_examples=50)
@given(seeds)
def test_pseudoinverse_of_spd_is_inverse(seed):
    rng = np.random.default_rng(seed)
    m = random_psd(rng) + 0.1 * np.eye(2)
    np.testing.assert_allclose(m @ pseudoinverse(m), np.eye(2), atol=1e-10)


@settings(max_examples=50)
@given(seeds)
def test_pseudoinverse_penrose_conditions_rank_one(seed):
    rng = np.random.default_rng(seed)
    m = random_psd(rng, rank=1)
    p = pseudoinverse(m)
    np.testing.assert_allclose(m @ p @ m, m, atol=1e-9)
    np.testing.assert_allclose(p @ m @ p, p, atol=1e-9)


def test_resolve_examples():
    single = pullback(Rmp2.from_metric([3, -1], np.eye(2)), np.eye(2))
    np.testing.assert_allclose(resolve([single]), [3, -1])
    two = [pullback(Rmp2.from_metric(f, np.eye(2)), np.eye(2)) for f in ([1, 0], [3, 0])]
    np.testing.assert_allclose(resolve(two), [2, 0])


def test_resolve_errors():
    with pytest.raises(SolverError, match="no policies"):
        resolve([])
    bad = PulledBackPolicy(np.array([[np.inf, 0], [0, 1]]), np.zeros(2))
    with pytest.raises(SolverError, match="numerical failure"):
        resolve([bad])


@settings(max_examples=100)
@given(seeds, st.integers(1, 10), st.sampled_from([2, 3]))
def test_resolve_matches_stacked_least_squares(seed, n, k):
    rng = np.random.default_rng(seed)
    jacs = [rng.normal(size=(2, k)) for _ in range(n)]
    metrics = [random_psd(rng, rank=int(rng.integers(1, 3))) for _ in range(n)]
    accels = [rng.normal(size=2) for _ in range(n)]
    weight = sum(j.T @ a @ j for j, a in zip(jacs, metrics))
    if np.linalg.cond(weight) > 1e6:
        return  # the oracle's minimizer is only unique for well-conditioned sums
    got = resolve([pullback(Rmp2.from_metric(f, a), j) for j, a, f in zip(jacs, metrics, accels)])
    want = stacked_oracle(jacs, metrics, accels)
    assert np.linalg.norm(got - want) <= 1e-8 * max(1.0, np.linalg.norm(want))


@settings(max_examples=50)
@given(seeds, st.floats(1e-3, 1e3))
def test_uniform_metric_scaling_invariance(seed, c):
    rng = np.random.default_rng(seed)
    policies = [(rng.normal(size=2), random_psd(rng), rng.normal(size=(2, 2))) for _ in range(5)]
    base = resolve([pullback(Rmp2.from_metric(f, a), j) for f, a, j in policies])
    scaled = resolve([pullback(Rmp2.from_metric(f, c * a), j) for f, a, j in policies])
    np.testing.assert_allclose(scaled, base, rtol=1e-9, atol=1e-9)


@settings(max_examples=50)
@given(seeds, st.integers(1, 8))
def test_identity_metrics_average(seed, n):
    rng = np.random.default_rng(seed)
    fs = rng.normal(size=(n, 2))
    got = resolve([pullback(Rmp2.from_metric(f, np.eye(2)), np.eye(2)) for f in fs])
    np.testing.assert_allclose(got, fs.mean(axis=0), atol=1e-12)


def test_singular_sum_gives_minimum_norm_solution():
    # one rank-1 policy: only the x component is determined, y stays 0
    p = pullback(Rmp2.from_metric([2.0, 5.0], np.diag([1.0, 0.0])), np.eye(2))
    np.testing.assert_allclose(resolve([p]), [2.0, 0.0])


@settings(max_examples=50)
@given(seeds, st.integers(1, 6))
def test_pullback_sums_match_loop(seed, n):
    rng = np.random.default_rng(seed)
    accel = rng.normal(size=(n, 2))
    metric = np.stack([random_psd(rng) for _ in range(n)])
    jac = rng.normal(size=(n, 2, 2))
    w, b = pullback_sums(accel, metric, jac)
    loop = [pullback(Rmp2.from_metric(f, a), j) for f, a, j in zip(accel, metric, jac)]
    np.testing.assert_allclose(w, sum(p.weight for p in loop), atol=1e-10)
    np.testing.assert_allclose(b, sum(p.bias for p in loop), atol=1e-10)


@settings(max_examples=50)
@given(seeds, st.integers(1, 6))
def test_combine_at_point_reproduces_pullback(seed, n):
    rng = np.random.default_rng(seed)
    accels = rng.normal(size=(n, 2))
    metrics = np.stack([random_psd(rng, rank=1) for _ in range(n)])
    eq = combine_at_point(accels, metrics)
    j = rng.normal(size=(2, 2))
    w, b = pullback_sums(accels, metrics, np.broadcast_to(j, (n, 2, 2)))
    p = pullback(eq, j)
    np.testing.assert_allclose(p.weight, w, atol=1e-9)
    np.testing.assert_allclose(p.bias, b, atol=1e-9)


def _kkt_ok(w, b, q, lo, hi, tol=1e-7):
    """First-order optimality for a convex box QP (an independent check of the minimizer)."""
    g = w @ q - b
    scale = max(1.0, np.abs(w).max(), np.abs(b).max())
    for i in range(2):
        if q[i] < lo[i] - tol or q[i] > hi[i] + tol:
            return False
        at_lo, at_hi = abs(q[i] - lo[i]) <= tol, abs(q[i] - hi[i]) <= tol
        if at_lo and not at_hi and g[i] < -tol * scale:
            return False
        if at_hi and not at_lo and g[i] > tol * scale:
            return False
        if not at_lo and not at_hi and abs(g[i]) > tol * scale:
            return False
    return True


@settings(max_examples=200)
@given(seeds, st.integers(1, 2))
def test_resolve_box_satisfies_kkt(seed, rank):
    rng = np.random.default_rng(seed)
    w = random_psd(rng, rank=rank)
    b = rng.normal(size=2) * 5
    if rank == 1:
        b = w @ rng.normal(size=2) * 3  # keep the problem bounded below along the null space
    lo = -rng.uniform(0, 2, size=2)
    hi = rng.uniform(0, 2, size=2)
    q = resolve_box(w, b, lo, hi)
    assert _kkt_ok(w, b, q, lo, hi)


@settings(max_examples=100)
@given(seeds)
def test_resolve_box_beats_grid_search(seed):
    rng = np.random.default_rng(seed)
    w, b = random_psd(rng) + 0.01 * np.eye(2), rng.normal(size=2) * 4
    lo, hi = np.array([-1.0, -0.5]), np.array([0.5, 1.0])
    q = resolve_box(w, b, lo, hi)
    xs, ys = np.meshgrid(np.linspace(lo[0], hi[0], 81), np.linspace(lo[1], hi[1], 81))
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
    grid = 0.5 * np.einsum("ni,ij,nj->n", pts, w, pts) - pts @ b
    assert 0.5 * q @ w @ q - b @ q <= grid.min() + 1e-12


def test_resolve_box_keeps_interior_solution():
    w, b = np.eye(2), np.array([0.2, -0.3])
    np.testing.assert_allclose(resolve_box(w, b, [-1, -1], [1, 1]), resolve_sums(w, b))


def test_resolve_box_rejects_other_dimensions():
    with pytest.raises(ValueError):
        resolve_box(np.eye(3), np.zeros(3), np.zeros(3), np.ones(3))
