"""Vectorized planar segment primitives shared by the simulator and planner."""
from __future__ import annotations

import numpy as np


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def point_segment_distances(points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Euclidean distances, shape (n_points, n_segments)."""
    a = segments[None, :, 0, :]
    e = segments[None, :, 1, :] - a
    ap = points[:, None, :] - a
    ee = np.einsum("...i,...i->...", e, e)
    t = np.clip(np.einsum("...i,...i->...", ap, e) / np.where(ee > 0, ee, 1.0), 0.0, 1.0)
    closest = a + t[..., None] * e
    return np.linalg.norm(points[:, None, :] - closest, axis=-1)


def _on_segment(p, q, r):
    """r collinear with p-q lies within their bounding box."""
    return ((np.minimum(p[..., 0], q[..., 0]) <= r[..., 0]) & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0]))
            & (np.minimum(p[..., 1], q[..., 1]) <= r[..., 1]) & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1])))


def segments_intersect(p1, p2, q1, q2) -> np.ndarray:
    """Closed segment intersection test (touching counts), broadcasting."""
    d1 = _cross(p2 - p1, q1 - p1)
    d2 = _cross(p2 - p1, q2 - p1)
    d3 = _cross(q2 - q1, p1 - q1)
    d4 = _cross(q2 - q1, p2 - q1)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)
    if not ((d1 == 0).any() or (d2 == 0).any() or (d3 == 0).any() or (d4 == 0).any()):
        return proper
    touch = ((d1 == 0) & _on_segment(p1, p2, q1)) | ((d2 == 0) & _on_segment(p1, p2, q2)) \
        | ((d3 == 0) & _on_segment(q1, q2, p1)) | ((d4 == 0) & _on_segment(q1, q2, p2))
    return proper | touch


def segment_segment_distances(starts: np.ndarray, ends: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Distances between segments starts[i]->ends[i] and each wall segment, shape (n, S)."""
    starts = np.asarray(starts, dtype=float).reshape(-1, 2)
    ends = np.asarray(ends, dtype=float).reshape(-1, 2)
    if len(segments) == 0:
        return np.full((len(starts), 0), np.inf)
    cross = segments_intersect(starts[:, None, :], ends[:, None, :],
                               segments[None, :, 0, :], segments[None, :, 1, :])
    own = np.stack([starts, ends], axis=1)
    d = np.minimum(point_segment_distances(starts, segments), point_segment_distances(ends, segments))
    # wall endpoints against the query segments
    for k in (0, 1):
        d = np.minimum(d, point_segment_distances(segments[:, k, :], own).T)
    return np.where(cross, 0.0, d)


def ray_distances(origin, directions: np.ndarray, segments: np.ndarray, max_range: float) -> np.ndarray:
    """Distance along each unit direction to the nearest segment, capped at ``max_range``.

    A ray lying on a segment reports the nearer endpoint (0 if it starts on it).
    """
    origin = np.asarray(origin, dtype=float)
    if len(segments) == 0:
        return np.full(len(directions), float(max_range))
    d = directions[:, None, :]
    a = segments[None, :, 0, :]
    b = segments[None, :, 1, :]
    e = b - a
    ap = a - origin
    denom = _cross(d, e)
    num_t = _cross(ap, e)
    num_s = _cross(ap, d)
    nz = denom != 0
    safe = np.where(nz, denom, 1.0)
    t = num_t / safe
    s = num_s / safe
    hit = nz & (t >= 0) & (s >= 0) & (s <= 1)
    dist = np.where(hit, t, np.inf)
    # collinear overlap
    col = ~nz & (num_s == 0)
    if np.any(col):
        ta = np.einsum("...i,...i->...", a - origin, d)
        tb = np.einsum("...i,...i->...", b - origin, d)
        lo, hi = np.minimum(ta, tb), np.maximum(ta, tb)
        cdist = np.where(hi < 0, np.inf, np.maximum(lo, 0.0))
        dist = np.where(col, np.minimum(dist, cdist), dist)
    return np.minimum(dist.min(axis=1), max_range)
