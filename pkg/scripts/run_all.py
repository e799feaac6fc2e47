"""Run every shipped config and print the per-check outcome.

    python scripts/run_all.py [--out DIR] [--jobs K]
"""

import argparse
import sys
from pathlib import Path

from spinpath.cli_runner import load_config, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    failed = []
    for path in sorted(CONFIGS.glob("*.json")):
        cfg = load_config(path)
        report = run(cfg, out=str(Path(args.out) / cfg.experiment), jobs=args.jobs)
        print(f"{cfg.experiment}: {'PASS' if report.passed else 'FAIL'} ({report.wall_clock:.1f} s)")
        for c in report.checks:
            if not c.passed:
                print(f"    {c.name}: {c.value:.6g} {c.comparison} {c.threshold:.6g}")
        if not report.passed:
            failed.append(cfg.experiment)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
