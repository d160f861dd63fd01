"""Evaluation suites: seeded scenarios per world, outcome counts with Wilson intervals, comparison tables."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .vehicle import Command
from .world import EpisodeSetup, Environment, Outcome, Scenario, simulate_episode
from .worldgen import sample_scenario

OUTCOMES = tuple(o.value for o in Outcome)


class SuiteMismatch(ValueError):
    pass


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion (as fractions)."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class EpisodeRecord:
    world: int
    index: int
    seed: int
    outcome: str
    duration: float
    fallbacks: int


@dataclass
class SuiteResult:
    agent: str
    seed: int
    world_names: list[str]
    n_per_world: int
    episodes: list[EpisodeRecord] = field(default_factory=list)
    shortfalls: dict[str, int] = field(default_factory=dict)  # world -> episodes that could not be sampled
    scenario_digest: str = ""

    def counts(self, world: int | None = None) -> dict[str, int]:
        out = dict.fromkeys(OUTCOMES, 0)
        for e in self.episodes:
            if world is None or e.world == world:
                out[e.outcome] += 1
        return out

    def total(self, world: int | None = None) -> int:
        return sum(self.counts(world).values())

    def percent(self, outcome: str, world: int | None = None) -> float:
        n = self.total(world)
        return 100.0 * self.counts(world)[outcome] / n if n else 0.0

    def _rows(self):
        keys = [(k, name) for k, name in enumerate(self.world_names)] + [(None, "all")]
        for k, name in keys:
            c, n = self.counts(k), self.total(k)
            lo, hi = wilson_interval(c["reached"], n)
            yield [self.agent, self.seed, name, n, c["reached"], c["collision"], c["stuck"],
                   f"{self.percent('reached', k):.2f}", f"{self.percent('collision', k):.2f}",
                   f"{self.percent('stuck', k):.2f}", f"{100 * lo:.2f}", f"{100 * hi:.2f}"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["agent", "seed", "world", "episodes", "reached", "collision", "stuck",
                    "reached_pct", "collision_pct", "stuck_pct", "reached_ci_lo", "reached_ci_hi"])
        w.writerows(self._rows())
        return buf.getvalue()

    def to_json(self) -> str:
        data = asdict(self)
        return json.dumps(data, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SuiteResult":
        data = json.loads(text)
        data["episodes"] = [EpisodeRecord(**e) for e in data["episodes"]]
        return cls(**data)

    def summary(self) -> str:
        lo, hi = wilson_interval(self.counts()["reached"], self.total())
        return (f"{self.agent}: reached {self.percent('reached'):.1f}% [{100 * lo:.1f}, {100 * hi:.1f}] "
                f"collision {self.percent('collision'):.1f}% stuck {self.percent('stuck'):.1f}% "
                f"({self.total()} episodes)")


def suite_scenarios(worlds: Sequence[Environment], n_per_world: int, seed: int, setup: EpisodeSetup,
                    names: Sequence[str] | None = None) -> list[list[Scenario]]:
    """Scenario lists per world; they depend only on (worlds, n, seed), never on the agent."""
    if n_per_world < 1:
        raise ValueError("n_per_world must be >= 1")
    names = list(names) if names is not None else [f"world{k}" for k in range(len(worlds))]
    out = []
    for k, env in enumerate(worlds):
        rng = np.random.default_rng([seed, k])
        scns = []
        # infeasible draws are replaced by fresh seeds so every world yields n scenarios when it can
        for _ in range(10 * n_per_world):
            if len(scns) == n_per_world:
                break
            ep_seed = int(rng.integers(2 ** 31))
            scn = sample_scenario(env, setup, np.random.default_rng(ep_seed), seed=ep_seed,
                                  name=f"{names[k]}/{len(scns)}")
            if scn is not None:
                scns.append(scn)
        out.append(scns)
    return out


def scenario_digest(scenarios: Sequence[Sequence[Scenario]]) -> str:
    h = hashlib.sha256()
    for scns in scenarios:
        for s in scns:
            h.update(s.dumps().encode())
    return h.hexdigest()


def _run_world(args) -> list[tuple]:
    k, scns, agent, setup = args
    rows = []
    for i, scn in enumerate(scns):
        tr = simulate_episode(scn, agent, setup)
        rows.append((k, i, scn.seed, tr.outcome.value, round(tr.duration, 6), tr.fallbacks))
    return rows


def run_suite(worlds: Sequence[Environment], n_per_world: int, agent: Callable, seed: int,
              setup: EpisodeSetup | None = None, name: str = "agent", world_names: Sequence[str] | None = None,
              parallel: int = 1) -> SuiteResult:
    """Run ``agent`` on seeded scenarios; with ``parallel > 1`` worlds run in worker processes
    (the agent must then be picklable). Results do not depend on ``parallel``."""
    setup = setup or EpisodeSetup()
    names = list(world_names) if world_names is not None else [f"world{k}" for k in range(len(worlds))]
    scenarios = suite_scenarios(worlds, n_per_world, seed, setup, names)
    jobs = [(k, scns, agent, setup) for k, scns in enumerate(scenarios)]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            chunks = list(pool.map(_run_world, jobs))
    else:
        chunks = [_run_world(j) for j in jobs]
    episodes = [EpisodeRecord(*row) for rows in chunks for row in rows]
    shortfalls = {names[k]: n_per_world - len(s) for k, s in enumerate(scenarios) if len(s) < n_per_world}
    return SuiteResult(name, seed, names, n_per_world, episodes, shortfalls, scenario_digest(scenarios))


@dataclass
class Table:
    header: list[str]
    rows: list[list[str]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Table":
        rows = list(csv.reader(io.StringIO(text)))
        return cls(rows[0], rows[1:])

    def to_text(self) -> str:
        cells = [self.header] + self.rows
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.header))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def compare(results: Sequence[SuiteResult]) -> Table:
    """Rows are agents; columns give reached% and collision% per world and overall."""
    if not results:
        raise ValueError("no results to compare")
    ref = results[0]
    for r in results[1:]:
        if (r.seed, r.world_names, r.n_per_world, r.scenario_digest) != \
                (ref.seed, ref.world_names, ref.n_per_world, ref.scenario_digest):
            raise SuiteMismatch(f"suite of {r.agent!r} differs from suite of {ref.agent!r}")
    header = ["agent"]
    for name in ref.world_names + ["all"]:
        header += [f"{name} reached%", f"{name} collision%"]
    rows = []
    for r in results:
        row = [r.agent]
        for k in list(range(len(ref.world_names))) + [None]:
            row += [f"{r.percent('reached', k):.1f}", f"{r.percent('collision', k):.1f}"]
        rows.append(row)
    return Table(header, rows)


class ConstantAgent:
    """Open-loop agent issuing one fixed command (sanity baseline)."""

    def __init__(self, dv: float, dxi: float = 0.0):
        self.cmd = Command(dv, dxi)

    def __call__(self, state, scan, waypoint) -> Command:
        return self.cmd
