"""Coarse guidance: inflated occupancy grid, 8-connected A*, furthest visible waypoint."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .geometry import point_segment_distances, segment_segment_distances, segments_intersect

SQRT2 = math.sqrt(2.0)

# (di, dj, diagonal)
_MOVES = ((-1, -1, True), (-1, 0, False), (-1, 1, True), (0, -1, False),
          (0, 1, False), (1, -1, True), (1, 0, False), (1, 1, True))


@dataclass(frozen=True)
class PlannerParams:
    resolution: float = 0.1
    inflation_margin: float = 0.05  # added to the vehicle circumradius
    sight_clearance: float = 0.25  # free band required around a waypoint sight line

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.inflation_margin < 0:
            raise ValueError("inflation_margin must be non-negative")
        if self.sight_clearance < 0:
            raise ValueError("sight_clearance must be non-negative")


@dataclass(frozen=True)
class OccupancyGrid:
    """Boolean occupancy; ``cells[i, j]`` is row i (y) and column j (x).

    Cell (i, j) has its centre at ``origin + ((j + .5) * res, (i + .5) * res)``.
    """

    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray
    inflation: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def in_bounds(self, cell) -> bool:
        i, j = cell
        return 0 <= i < self.cells.shape[0] and 0 <= j < self.cells.shape[1]

    def is_free(self, cell) -> bool:
        return self.in_bounds(cell) and not self.cells[cell[0], cell[1]]

    def world_to_cell(self, p) -> tuple[int, int]:
        j = int(math.floor((p[0] - self.origin[0]) / self.resolution))
        i = int(math.floor((p[1] - self.origin[1]) / self.resolution))
        return i, j

    def cell_to_world(self, cell) -> np.ndarray:
        i, j = cell
        return np.array([self.origin[0] + (j + 0.5) * self.resolution,
                         self.origin[1] + (i + 0.5) * self.resolution])

    def centers(self) -> np.ndarray:
        ny, nx = self.cells.shape
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.resolution
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def nearest_free(self, cell, max_radius: int = 10):
        """Closest free cell by ring search, or None."""
        if self.is_free(cell):
            return cell
        best, best_d = None, math.inf
        for r in range(1, max_radius + 1):
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    if max(abs(di), abs(dj)) != r:
                        continue
                    c = (cell[0] + di, cell[1] + dj)
                    if self.is_free(c):
                        d = di * di + dj * dj
                        if d < best_d or (d == best_d and c < best):
                            best, best_d = c, d
            if best is not None:
                return best
        return None


@dataclass(frozen=True)
class Path:
    waypoints: np.ndarray  # (n, 2) world coordinates of cell centres
    cells: tuple[tuple[int, int], ...]
    n_straight: int
    n_diagonal: int
    resolution: float

    @property
    def cost(self) -> float:
        return self.resolution * (self.n_straight + SQRT2 * self.n_diagonal)

    def remaining_lengths(self) -> np.ndarray:
        """Arc length from each waypoint to the end of the path."""
        if len(self.waypoints) < 2:
            return np.zeros(len(self.waypoints))
        seg = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
        return np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])


def rasterize(env, resolution: float, inflation: float) -> OccupancyGrid:
    """Mark every cell whose centre is within ``inflation`` of a segment."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    xmin, ymin, xmax, ymax = env.bounds
    nx = int(math.ceil((xmax - xmin) / resolution - 1e-9))
    ny = int(math.ceil((ymax - ymin) / resolution - 1e-9))
    grid = OccupancyGrid(resolution, (xmin, ymin), np.zeros((ny, nx), dtype=bool), inflation)
    pts = grid.centers().reshape(-1, 2)
    occupied = np.zeros(pts.shape[0], dtype=bool)
    for chunk in np.array_split(np.arange(len(env.segments)), max(1, len(env.segments) // 16)):
        d = point_segment_distances(pts, env.segments[chunk])
        occupied |= np.any(d <= inflation, axis=1)
    return OccupancyGrid(resolution, (xmin, ymin), occupied.reshape(ny, nx), inflation)


def octile(a, b) -> float:
    di, dj = abs(a[0] - b[0]), abs(a[1] - b[1])
    return (max(di, dj) - min(di, dj)) + SQRT2 * min(di, dj)


def astar(grid: OccupancyGrid, start, goal) -> Path | None:
    """Shortest 8-connected path; diagonal moves may not cut occupied corners.

    Returns None when no path exists or either endpoint is occupied. Ties in
    f are broken by lower heuristic, then by (row, col).
    """
    start, goal = tuple(start), tuple(goal)
    if not (grid.is_free(start) and grid.is_free(goal)):
        return None
    ny, nx = grid.shape
    occ = grid.cells.ravel().tolist()
    s, g = start[0] * nx + start[1], goal[0] * nx + goal[1]
    gi, gj = goal
    inf = math.inf
    dist = [inf] * (ny * nx)
    parent = [-1] * (ny * nx)
    closed = [False] * (ny * nx)
    dist[s] = 0.0

    def h(i, j):
        di, dj = abs(i - gi), abs(j - gj)
        return (di + dj) + (SQRT2 - 2.0) * min(di, dj)

    h0 = h(*start)
    heap = [(h0, h0, s)]
    while heap:
        _, _, u = heapq.heappop(heap)
        if closed[u]:
            continue
        if u == g:
            break
        closed[u] = True
        ui, uj = divmod(u, nx)
        du = dist[u]
        for di, dj, diag in _MOVES:
            vi, vj = ui + di, uj + dj
            if vi < 0 or vj < 0 or vi >= ny or vj >= nx:
                continue
            v = vi * nx + vj
            if occ[v] or closed[v]:
                continue
            if diag and (occ[ui * nx + vj] or occ[vi * nx + uj]):
                continue
            nd = du + (SQRT2 if diag else 1.0)
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                hv = h(vi, vj)
                heapq.heappush(heap, (nd + hv, hv, v))
    if dist[g] == inf:
        return None
    idx = [g]
    while idx[-1] != s:
        idx.append(parent[idx[-1]])
    idx.reverse()
    cells = tuple(divmod(k, nx) for k in idx)
    n_diag = sum(1 for a, b in zip(cells, cells[1:]) if a[0] != b[0] and a[1] != b[1])
    waypoints = np.array([grid.cell_to_world(c) for c in cells])
    return Path(waypoints, cells, len(cells) - 1 - n_diag, n_diag, grid.resolution)


def plan(grid: OccupancyGrid, start_xy, goal_xy, snap_radius: int = 10) -> Path | None:
    """A* between world points, snapping occupied endpoints to the nearest free cell."""
    s = grid.nearest_free(grid.world_to_cell(start_xy), snap_radius)
    g = grid.nearest_free(grid.world_to_cell(goal_xy), snap_radius)
    if s is None or g is None:
        return None
    return astar(grid, s, g)


def visible_mask(pos, points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """For each target point, whether the segment pos->point avoids every wall."""
    pos = np.asarray(pos, dtype=float)
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    starts = np.broadcast_to(pos, points.shape)
    blocked = segments_intersect(starts[:, None, :], points[:, None, :],
                                 segments[None, :, 0, :], segments[None, :, 1, :])
    return ~np.any(blocked, axis=1)


def _visible(pos: np.ndarray, wps: np.ndarray, segments: np.ndarray, clearance: float, own: float) -> np.ndarray:
    vis = visible_mask(pos, wps, segments)
    if clearance > 0 and len(segments) and vis.any():
        idx = np.flatnonzero(vis)
        gap = segment_segment_distances(np.broadcast_to(pos, wps[idx].shape), wps[idx], segments).min(axis=1)
        ends = point_segment_distances(wps[idx], segments).min(axis=1)
        vis[idx] = gap >= np.minimum(clearance, 0.9 * np.minimum(own, ends))
    return vis


def furthest_visible_waypoint(path: Path, pos, env, clearance: float = 0.0) -> np.ndarray:
    """Last path waypoint in line of sight, else the nearest one.

    With ``clearance > 0`` the sight line must also keep that distance from every
    wall, relaxed near its ends when pos or the waypoint sits closer than that.
    """
    wps = path.waypoints
    pos = np.asarray(pos, dtype=float)
    nearest = int(np.argmin(np.linalg.norm(wps - pos, axis=1)))
    own = point_segment_distances(pos[None], env.segments).min() if clearance > 0 and len(env.segments) else 0.0
    # the answer is the largest visible index, so later waypoints are tried first
    for lo, hi in ((nearest, len(wps)), (0, nearest)):
        if hi <= lo:
            continue
        hits = np.flatnonzero(_visible(pos, wps[lo:hi], env.segments, clearance, own))
        if hits.size:
            return wps[lo + hits[-1]].copy()
    return wps[nearest].copy()
