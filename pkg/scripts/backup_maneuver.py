"""Run the expert on the bundled facing-the-wall scenario and write its trajectory and SVG."""
import argparse
from pathlib import Path

from rmpnav.config import load_config
from rmpnav.svg import trajectory_svg
from rmpnav.world import load_scenario, simulate_episode

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=str(ROOT / "scenarios" / "backup.json"))
    ap.add_argument("--out", default=str(ROOT / "results" / "backup"))
    ap.add_argument("--set", action="append", default=[])
    args = ap.parse_args()
    cfg = load_config(None, args.set)
    scn = load_scenario(args.scenario)
    tr = simulate_episode(scn, cfg.expert(), cfg.setup())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{out}.jsonl").write_text(tr.to_jsonl())
    Path(f"{out}.svg").write_text(trajectory_svg(scn.env, tr, ["expert"], cfg.sim.goal_radius, scn.name))
    first = tr.samples[0][2]
    backed = [t for t, s, _ in tr.samples if s.v < 0]
    resume = next((t for t, s, _ in tr.samples if backed and t > backed[0] and s.v > 0), None)
    print(f"outcome {tr.outcome.value} after {tr.duration:.2f} s")
    print(f"first command dv={first.dv:+.2f} dxi={first.dxi:+.2f}; reversed until t={resume}")
    print(f"wrote {out}.jsonl and {out}.svg")


if __name__ == "__main__":
    main()
