"""Static SVG trajectory plots: walls, guidance path, driven path, start arrow, collision cross."""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .world import Environment, Outcome, Trajectory

_COLORS = ("#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


class _Canvas:
    def __init__(self, bounds, px_per_m: float = 60.0, margin: float = 0.3):
        self.xmin, self.ymin, self.xmax, self.ymax = bounds
        self.k = px_per_m
        self.m = margin
        self.w = (self.xmax - self.xmin + 2 * margin) * px_per_m
        self.h = (self.ymax - self.ymin + 2 * margin) * px_per_m
        self.parts: list[str] = []

    def xy(self, p) -> tuple[float, float]:
        # y axis points up in the world, down in SVG
        return ((p[0] - self.xmin + self.m) * self.k, (self.ymax - p[1] + self.m) * self.k)

    def line(self, a, b, color="#000", width=2.0):
        (x1, y1), (x2, y2) = self.xy(a), self.xy(b)
        self.parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                          f'stroke="{color}" stroke-width="{width}"/>')

    def polyline(self, pts, color, width=1.5, dash: str | None = None):
        if len(pts) < 2:
            return
        coords = " ".join("{:.2f},{:.2f}".format(*self.xy(p)) for p in pts)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"{extra}/>')

    def arrow(self, x, y, theta, color="#d62728", length=0.4):
        tip = (x + length * math.cos(theta), y + length * math.sin(theta))
        self.line((x, y), tip, color, 3.0)
        for side in (2.6, -2.6):
            wing = (tip[0] + 0.15 * math.cos(theta + side), tip[1] + 0.15 * math.sin(theta + side))
            self.line(tip, wing, color, 3.0)

    def cross(self, p, color="#d62728", size=0.15):
        self.line((p[0] - size, p[1] - size), (p[0] + size, p[1] + size), color, 3.0)
        self.line((p[0] - size, p[1] + size), (p[0] + size, p[1] - size), color, 3.0)

    def circle(self, p, r, color):
        x, y = self.xy(p)
        self.parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r * self.k:.2f}" fill="none" '
                          f'stroke="{color}" stroke-width="2"/>')

    def text(self, p, s, size=14):
        x, y = self.xy(p)
        self.parts.append(f'<text x="{x:.2f}" y="{y:.2f}" font-family="monospace" font-size="{size}">{s}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w:.0f}" height="{self.h:.0f}" '
                f'viewBox="0 0 {self.w:.2f} {self.h:.2f}">\n<rect width="100%" height="100%" fill="white"/>')
        return "\n".join([head, *self.parts, "</svg>"]) + "\n"


def trajectory_svg(env: Environment, trajectories: Trajectory | Sequence[Trajectory],
                   labels: Iterable[str] | None = None, goal_radius: float = 0.5, title: str = "") -> str:
    """Overlay one or more trajectories on the environment."""
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    canvas = _Canvas(env.bounds)
    for a, b in env.segments:
        canvas.line(a, b, "#000", 2.5)
    labels = list(labels) if labels is not None else [""] * len(trajectories)
    for k, tr in enumerate(trajectories):
        color = _COLORS[k % len(_COLORS)]
        if tr.path is not None:
            canvas.polyline(tr.path, "#999", 1.0, dash="4,3")
        pts = np.array([[s.x, s.y] for _, s, _ in tr.samples])
        canvas.polyline(pts, color, 2.0)
        start = tr.samples[0][1]
        canvas.arrow(start.x, start.y, start.theta)
        if tr.goal is not None:
            canvas.circle(tr.goal, goal_radius, "#2ca02c")
        if tr.outcome == Outcome.COLLISION:
            canvas.cross(pts[-1])
        if labels[k]:
            canvas.text((env.bounds[0] + 0.1, env.bounds[3] - 0.3 * (k + 1)), f"{labels[k]}: {tr.outcome.value}")
    if title:
        canvas.text((env.bounds[0], env.bounds[1] - 0.2), title)
    return canvas.render()
