"""End-to-end pipelines shared by the CLI, the scripts and the acceptance tests."""
from __future__ import annotations

from dataclasses import dataclass

from . import imitation as il
from .config import Config
from .evaluation import SuiteResult, run_suite, suite_scenarios
from .world import Environment
from .worldgen import generate_world

AGENTS = ("expert", "rmp-student", "control-student")
_KIND = {"rmp-student": "rmp", "control-student": "control"}


def holdout_worlds(cfg: Config) -> tuple[list[str], list[Environment]]:
    seeds = [cfg.suite.holdout_seed + k for k in range(cfg.suite.holdout_worlds)]
    return [f"holdout{s}" for s in seeds], [generate_world(s, cfg.worldgen) for s in seeds]


def training_worlds(cfg: Config) -> tuple[list[str], list[Environment]]:
    seeds = [cfg.suite.train_seed + k for k in range(cfg.training.train_worlds)]
    return [f"train{s}" for s in seeds], [generate_world(s, cfg.worldgen) for s in seeds]


def expert_dataset(cfg: Config, seed: int) -> il.Dataset:
    names, envs = training_worlds(cfg)
    setup = cfg.setup()
    scns = suite_scenarios(envs, cfg.training.episodes_per_world, seed, setup, names)
    flat = [s for group in scns for s in group]
    return il.expert_rollout_dataset(flat, cfg.expert(), setup, seed=seed,
                                     max_speed_init=cfg.training.max_speed_init,
                                     relabel_prob=cfg.training.waypoint_relabel_prob)


def dagger_scenarios(cfg: Config, seed: int):
    """One scenario batch per DAgger round, disjoint from the expert-data scenarios by seed."""
    names, envs = training_worlds(cfg)
    setup = cfg.setup()
    out = []
    for r in range(len(cfg.training.dagger_ratios)):
        groups = suite_scenarios(envs, cfg.training.dagger_episodes_per_world, seed * 7919 + 101 + r, setup, names)
        out.append([s for g in groups for s in g])
    return out


def train_student(cfg: Config, kind: str, data: il.Dataset, seed: int) -> il.StudentRun:
    return il.train_student(kind, data, cfg.expert(), dagger_scenarios(cfg, seed), cfg.setup(), cfg.training, seed)


def make_agent(agent: str, cfg: Config, model: il.Mlp | None = None):
    if agent == "expert":
        return cfg.expert()
    if agent not in _KIND:
        raise ValueError(f"agent: unknown agent {agent!r}")
    if model is None:
        raise ValueError("model: a trained model is required for student agents")
    return il.make_student(_KIND[agent], model, cfg.controller, cfg.vehicle, cfg.training.metric_mode)


def evaluate_holdout(cfg: Config, agent_name: str, agent, episodes: int | None = None,
                     parallel: int = 1) -> SuiteResult:
    names, envs = holdout_worlds(cfg)
    n = cfg.suite.episodes_per_world if episodes is None else episodes
    return run_suite(envs, n, agent, cfg.suite.scenario_seed, cfg.setup(), agent_name, names, parallel)


@dataclass
class Comparison:
    seed: int
    dataset_size: int
    rmp: SuiteResult
    control: SuiteResult
    rmp_run: il.StudentRun
    control_run: il.StudentRun

    @property
    def reached_gap(self) -> float:
        return self.rmp.percent("reached") - self.control.percent("reached")

    @property
    def satisfied(self) -> bool:
        return self.reached_gap >= 10.0 and self.rmp.percent("collision") < self.control.percent("collision")


def compare_students(cfg: Config, seed: int, episodes: int | None = None, parallel: int = 1) -> Comparison:
    """Same expert data, features, architecture and budget; only the output head differs."""
    if episodes is None:
        episodes = cfg.suite.student_episodes_per_world
    data = expert_dataset(cfg, seed)
    runs = {kind: train_student(cfg, kind, data, seed) for kind in ("rmp", "control")}
    results = {}
    for kind, run in runs.items():
        agent = il.make_student(kind, run.model, cfg.controller, cfg.vehicle, cfg.training.metric_mode)
        results[kind] = evaluate_holdout(cfg, f"{kind}-student", agent, episodes, parallel)
    return Comparison(seed, len(data), results["rmp"], results["control"], runs["rmp"], runs["control"])
