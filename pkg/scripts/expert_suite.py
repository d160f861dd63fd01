"""Expert on the seeded holdout worlds: per-world counts, Wilson intervals, CSV/JSON outputs."""
import argparse
import os
import time
from pathlib import Path

from rmpnav import experiments as ex
from rmpnav.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--episodes", type=int, help="per world (default from config)")
    ap.add_argument("--parallel", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default=str(ROOT / "results" / "expert_suite"))
    ap.add_argument("--set", action="append", default=[])
    args = ap.parse_args()
    cfg = load_config(None, args.set)
    t0 = time.perf_counter()
    res = ex.evaluate_holdout(cfg, "expert", cfg.expert(), args.episodes, args.parallel)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{out}.csv").write_text(res.to_csv())
    Path(f"{out}.json").write_text(res.to_json())
    print(res.to_csv(), end="")
    print(res.summary(), f"in {elapsed:.0f} s")


if __name__ == "__main__":
    main()
