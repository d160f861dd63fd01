"""Command line: simulate, gen-worlds, gen-data, train, evaluate, compare.

Exit codes: 0 success (simulate: Reached), 2 Collision, 3 Stuck, 1 malformed input.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import imitation as il
from .config import Config, ConfigError, load_config
from .evaluation import SuiteMismatch, SuiteResult, compare, run_suite
from .svg import trajectory_svg
from .world import Environment, Outcome, Scenario, ScenarioError, load_scenario, simulate_episode
from .worldgen import generate_world, sample_scenario

EXIT_CODES = {Outcome.REACHED: 0, Outcome.COLLISION: 2, Outcome.STUCK: 3}


class InputError(Exception):
    pass


def _config(args) -> Config:
    return load_config(args.config, args.set or ())


def _load_model(path: str | None, agent: str):
    if agent == "expert":
        return None
    if path is None:
        raise InputError("model: --model is required for student agents")
    try:
        model, meta = il.Mlp.load(path)
    except FileNotFoundError:
        raise InputError(f"model: no such file {path}") from None
    except (KeyError, ValueError, OSError) as exc:
        raise InputError(f"model: cannot read {path} ({exc})") from None
    want = "rmp" if agent == "rmp-student" else "control"
    if meta.get("kind") != want:
        raise InputError(f"model: file holds a {meta.get('kind')!r} student, not {want!r}")
    return model


def cmd_simulate(args) -> int:
    cfg = _config(args)
    try:
        scn = load_scenario(args.scenario)
    except FileNotFoundError:
        raise InputError(f"scenario: no such file {args.scenario}") from None
    agent = ex.make_agent(args.agent, cfg, _load_model(args.model, args.agent))
    tr = simulate_episode(scn, agent, cfg.setup())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{out}.jsonl").write_text(tr.to_jsonl())
    Path(f"{out}.svg").write_text(trajectory_svg(scn.env, tr, [args.agent], cfg.sim.goal_radius, scn.name))
    print(f"{tr.outcome.value} after {tr.duration:.2f} s ({len(tr.samples)} samples)")
    return EXIT_CODES[tr.outcome]


def cmd_gen_worlds(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    setup = cfg.setup()
    written = 0
    for k in range(args.count):
        world_seed = args.seed + k
        env = generate_world(world_seed, cfg.worldgen)
        scn = sample_scenario(env, setup, np.random.default_rng(world_seed), seed=world_seed,
                              name=f"world{world_seed}")
        if scn is None:
            print(f"world{world_seed}: no feasible start/goal pair, skipped", file=sys.stderr)
            continue
        (out / f"world{world_seed:05d}.json").write_text(json.dumps(scn.to_dict(), indent=1, sort_keys=True) + "\n")
        written += 1
    print(f"wrote {written} scenario files to {out}")
    return 0


def cmd_gen_data(args) -> int:
    cfg = _training_cfg(args)
    data = ex.expert_dataset(cfg, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.save(out)
    print(f"wrote {len(data)} samples to {out}")
    return 0


def _training_cfg(args) -> Config:
    cfg = _config(args)
    tc = cfg.training
    if getattr(args, "worlds", None) is not None:
        tc = replace(tc, train_worlds=int(args.worlds))
    if getattr(args, "episodes", None) is not None:
        tc = replace(tc, episodes_per_world=args.episodes)
    return replace(cfg, training=tc)


def cmd_train(args) -> int:
    cfg = _training_cfg(args)
    if args.agent == "expert":
        raise InputError("agent: the expert is not trained")
    kind = "rmp" if args.agent == "rmp-student" else "control"
    try:
        data = il.Dataset.load(args.data)
    except FileNotFoundError:
        raise InputError(f"data: no such file {args.data}") from None
    except (KeyError, ValueError, OSError) as exc:
        raise InputError(f"data: cannot read {args.data} ({exc})") from None
    if len(data) == 0:
        raise InputError("data: dataset is empty")
    run = ex.train_student(cfg, kind, data, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    run.model.save(out, il.training_meta(kind, cfg.training))
    Path(f"{out}.loss.csv").write_text("epoch,loss\n" + "".join(f"{k},{v:.10g}\n" for k, v in enumerate(run.losses)))
    print(f"trained {args.agent} on {run.dataset_sizes[-1]} samples, final loss {run.losses[-1]:.4g}")
    return 0


def _worlds_from(args, cfg: Config) -> tuple[list[str], list[Environment]]:
    spec = args.worlds
    if spec is not None and not str(spec).isdigit():
        folder = Path(spec)
        if not folder.is_dir():
            raise InputError(f"worlds: {spec} is neither a count nor a directory")
        names, envs = [], []
        for f in sorted(folder.glob("*.json")):
            names.append(f.stem)
            envs.append(load_scenario(f).env)
        if not envs:
            raise InputError(f"worlds: no scenario files in {spec}")
        return names, envs
    if spec is not None:
        cfg = replace(cfg, suite=replace(cfg.suite, holdout_worlds=int(spec)))
    return ex.holdout_worlds(cfg)


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    agent = ex.make_agent(args.agent, cfg, _load_model(args.model, args.agent))
    names, envs = _worlds_from(args, cfg)
    n = args.episodes if args.episodes is not None else cfg.suite.episodes_per_world
    seed = args.seed if args.seed is not None else cfg.suite.scenario_seed
    res = run_suite(envs, n, agent, seed, cfg.setup(), args.agent, names, args.parallel)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{out}.csv").write_text(res.to_csv())
    Path(f"{out}.json").write_text(res.to_json())
    print(res.summary())
    return 0


def cmd_compare(args) -> int:
    results = []
    for p in args.results:
        try:
            results.append(SuiteResult.from_json(Path(p).read_text()))
        except FileNotFoundError:
            raise InputError(f"results: no such file {p}") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"results: cannot read {p} ({exc})") from None
    table = compare(results)
    if args.out:
        Path(args.out).write_text(table.to_csv())
    print(table.to_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmpnav", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (partial files allowed)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, e.g. controller.goal.alpha=2")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run one scenario, write JSON-lines and SVG")
    p.add_argument("scenario")
    p.add_argument("--out", default="trajectory")
    p.add_argument("--agent", choices=ex.AGENTS, default="expert")
    p.add_argument("--model")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-worlds", parents=[common], help="write seeded scenario files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--out", default="worlds")
    p.set_defaults(func=cmd_gen_worlds)

    p = sub.add_parser("gen-data", parents=[common], help="expert rollouts on the training worlds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--worlds", type=int)
    p.add_argument("--episodes", type=int, help="episodes per training world")
    p.add_argument("--out", default="data.npz")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train a student (plus DAgger rounds)")
    p.add_argument("--data", required=True)
    p.add_argument("--agent", choices=ex.AGENTS[1:], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--worlds", type=int)
    p.add_argument("--episodes", type=int, help="unused for training; accepted for symmetry")
    p.add_argument("--out", default="model.npz")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="run a suite and write CSV and JSON")
    p.add_argument("--agent", choices=ex.AGENTS, default="expert")
    p.add_argument("--model")
    p.add_argument("--worlds", help="holdout world count, or a directory of scenario files")
    p.add_argument("--episodes", type=int, help="episodes per world")
    p.add_argument("--seed", type=int)
    p.add_argument("--parallel", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default="suite")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", parents=[common], help="side-by-side comparison of suite results")
    p.add_argument("results", nargs="+", help="suite JSON files")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigError, ScenarioError, SuiteMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
