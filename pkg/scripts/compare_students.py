"""RMP student vs control student: shared expert data, features, network and budget.

Prints one comparison line per seed and writes the suite results and a table.
"""
import argparse
import os
import time
from pathlib import Path

from rmpnav import experiments as ex
from rmpnav.config import load_config
from rmpnav.evaluation import compare

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--episodes", type=int, help="holdout episodes per world (default from config)")
    ap.add_argument("--parallel", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default=str(ROOT / "results" / "students"))
    ap.add_argument("--set", action="append", default=[])
    args = ap.parse_args()
    cfg = load_config(None, args.set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    wins = 0
    for seed in args.seeds:
        t0 = time.perf_counter()
        c = ex.compare_students(cfg, seed, args.episodes, args.parallel)
        for res in (c.rmp, c.control):
            (out / f"{res.agent}-seed{seed}.json").write_text(res.to_json())
        (out / f"table-seed{seed}.csv").write_text(compare([c.rmp, c.control]).to_csv())
        wins += c.satisfied
        print(f"seed {seed}: {c.dataset_size} samples; {c.rmp.summary()}; {c.control.summary()}; "
              f"gap {c.reached_gap:+.1f} pts; {'ok' if c.satisfied else 'not satisfied'} "
              f"({time.perf_counter() - t0:.0f} s)", flush=True)
    print(f"{wins}/{len(args.seeds)} seeds satisfy the comparison")


if __name__ == "__main__":
    main()
