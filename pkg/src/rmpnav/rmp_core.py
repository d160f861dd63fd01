"""Riemannian motion policies in a 2D task space and their closed-form resolution.

A policy is an acceleration ``f`` paired with a symmetric PSD metric ``A``.
Policies living on different control points are pulled back into a shared
configuration space through their Jacobians and combined as

    qdd* = (sum_i J_i^T A_i J_i)^+ (sum_i J_i^T A_i f_i)

which is the minimum-norm minimizer of ``sum_i 1/2 ||f_i - J_i qdd||^2_{A_i}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_TOL = 1e-10
_SYM_TOL = 1e-12


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Rmp2:
    """Acceleration plus metric stored as the triple (a11, a12, a22)."""

    accel: np.ndarray
    a11: float
    a12: float
    a22: float

    @classmethod
    def from_metric(cls, accel, metric) -> "Rmp2":
        metric = np.asarray(metric, dtype=float)
        _check_symmetric(metric)
        return cls(np.asarray(accel, dtype=float).reshape(2),
                   float(metric[0, 0]), float(0.5 * (metric[0, 1] + metric[1, 0])), float(metric[1, 1]))

    @classmethod
    def zero(cls) -> "Rmp2":
        return cls(np.zeros(2), 0.0, 0.0, 0.0)

    @property
    def metric(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    def scaled(self, accel_scale: float = 1.0, metric_scale: float = 1.0) -> "Rmp2":
        return Rmp2(self.accel * accel_scale, self.a11 * metric_scale,
                    self.a12 * metric_scale, self.a22 * metric_scale)


@dataclass(frozen=True)
class PulledBackPolicy:
    weight: np.ndarray  # k x k, J^T A J
    bias: np.ndarray  # k, J^T A f

    @property
    def k(self) -> int:
        return self.bias.shape[0]


def _check_symmetric(m: np.ndarray, tol: float = _SYM_TOL) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"metric must be square, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > tol * scale:
        raise ValueError("metric is not symmetric")


def metric_norm_sq(v, metric) -> float:
    """Squared length of ``v`` under ``metric``: v^T A v."""
    metric = np.asarray(metric, dtype=float)
    _check_symmetric(metric)
    v = np.asarray(v, dtype=float)
    return float(v @ metric @ v)


def pullback(rmp: Rmp2, jac) -> PulledBackPolicy:
    jac = np.asarray(jac, dtype=float)
    if jac.ndim != 2 or jac.shape[0] != 2:
        raise ValueError(f"jacobian must be 2 x k, got {jac.shape}")
    ja = jac.T @ rmp.metric
    weight = ja @ jac
    return PulledBackPolicy(0.5 * (weight + weight.T), ja @ rmp.accel)


def pseudoinverse(m, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix by eigendecomposition.

    Eigenvalues with ``|lam| < tol * max|lam|`` are treated as zero.
    """
    m = np.asarray(m, dtype=float)
    m = 0.5 * (m + m.T)
    lam, vec = np.linalg.eigh(m)
    top = np.max(np.abs(lam)) if lam.size else 0.0
    if top == 0.0:
        return np.zeros_like(m)
    keep = np.abs(lam) >= tol * top
    inv = np.zeros_like(lam)
    inv[keep] = 1.0 / lam[keep]
    return (vec * inv) @ vec.T


def resolve_sums(weight, bias, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve from already-summed pulled-back terms."""
    q = pseudoinverse(weight, tol) @ np.asarray(bias, dtype=float)
    if not np.all(np.isfinite(q)):
        raise SolverError("numerical failure")
    return q


def resolve_box(weight, bias, lower, upper, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Minimize 0.5 q^T W q - b^T q over a box, for a 2-dimensional q.

    The unconstrained (pseudoinverse) solution is kept when it is feasible;
    otherwise the optimum of a convex QP lies on an edge, and each edge is a
    clipped 1-D problem.
    """
    w = np.asarray(weight, dtype=float)
    b = np.asarray(bias, dtype=float)
    lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    if w.shape != (2, 2):
        raise ValueError("resolve_box handles two-dimensional problems only")
    q = resolve_sums(w, b, tol)
    if np.all(q >= lo) and np.all(q <= hi):
        return q

    def cost(x):
        return 0.5 * x @ w @ x - b @ x

    scale = max(float(np.abs(w).max()), 1.0)
    best, best_cost = None, np.inf
    for fixed in (0, 1):
        free = 1 - fixed
        for bound in (lo[fixed], hi[fixed]):
            x = np.empty(2)
            x[fixed] = bound
            wff = w[free, free]
            x[free] = (b[free] - w[free, fixed] * bound) / wff if wff > tol * scale else 0.0
            x[free] = min(max(x[free], lo[free]), hi[free])
            c = cost(x)
            if c < best_cost:
                best, best_cost = x, c
    return best


def resolve(policies: Sequence[PulledBackPolicy], tol: float = DEFAULT_TOL) -> np.ndarray:
    if len(policies) == 0:
        raise SolverError("no policies")
    k = policies[0].k
    weight = np.zeros((k, k))
    bias = np.zeros(k)
    for p in policies:
        if p.k != k:
            raise ValueError("policies have mismatched configuration dimension")
        weight += p.weight
        bias += p.bias
    if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
        raise SolverError("numerical failure")
    return resolve_sums(weight, bias, tol)


def pullback_sums(accel: np.ndarray, metric: np.ndarray, jac: np.ndarray):
    """Batched pullback: accel (n,2), metric (n,2,2), jac (n,2,k) -> summed (k,k), (k,)."""
    ja = np.einsum("nij,nik->njk", jac, metric)  # J^T A, (n,k,2)
    weight = np.einsum("nkj,nji->ki", ja, jac)
    bias = np.einsum("nkj,nj->k", ja, accel)
    return 0.5 * (weight + weight.T), bias


def combine_at_point(accels: np.ndarray, metrics: np.ndarray, tol: float = DEFAULT_TOL) -> Rmp2:
    """Merge several policies acting on the same point into one equivalent policy.

    With a shared Jacobian J, ``J^T (sum A_k) J`` and ``J^T sum A_k f_k`` are
    reproduced exactly by (A_eq, f_eq) = (sum A_k, A_eq^+ sum A_k f_k).
    """
    accels = np.asarray(accels, dtype=float).reshape(-1, 2)
    metrics = np.asarray(metrics, dtype=float).reshape(-1, 2, 2)
    if accels.shape[0] == 0:
        return Rmp2.zero()
    a_eq = metrics.sum(axis=0)
    force = np.einsum("nij,nj->i", metrics, accels)
    f_eq = pseudoinverse(a_eq, tol) @ force
    return Rmp2.from_metric(f_eq, 0.5 * (a_eq + a_eq.T))
