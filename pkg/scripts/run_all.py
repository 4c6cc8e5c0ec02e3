"""Run every config in configs/ into results/<config name>/."""
import argparse
import sys
import time
from pathlib import Path

from perturbiga.cli import main

ROOT = Path(__file__).resolve().parent.parent


def run_all(out: Path, only=None) -> int:
    failures = 0
    for cfg in sorted((ROOT / "configs").glob("*.cfg")):
        if only and cfg.stem not in only:
            continue
        t0 = time.perf_counter()
        rc = main(["run", "--config", str(cfg), "--out", str(out / cfg.stem)])
        print(f"{cfg.stem}: exit {rc} in {time.perf_counter() - t0:.1f}s")
        failures += rc != 0
    return failures


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "results")
    ap.add_argument("names", nargs="*", help="config stems to run (default: all)")
    a = ap.parse_args()
    sys.exit(1 if run_all(a.out, a.names) else 0)
