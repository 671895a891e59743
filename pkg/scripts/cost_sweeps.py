#!/usr/bin/env python3
"""Regenerate the cost-model sweeps for the microbenchmarks and workloads.

Writes one CSV per experiment into the output directory:

    python3 scripts/cost_sweeps.py --out results/
"""
import argparse
import sys
from pathlib import Path

from pimhe import bench


def experiments(out: Path, seed: int):
    for sec in (27, 54, 109):
        yield out / f"add_{sec}.csv", ["--mode", "microbench-add", "--security", str(sec), "--cost-only"]
        yield out / f"mul_{sec}.csv", ["--mode", "microbench-mul", "--security", str(sec), "--cost-only"]
    for users in (640, 1280, 2560):
        for mode in ("mean", "variance"):
            yield out / f"{mode}_{users}.csv", ["--mode", f"workload-{mode}", "--security", "109",
                                                "--users", str(users), "--cost-only"]
    for cts in (32, 64):
        yield out / f"linreg_640x{cts}.csv", ["--mode", "workload-linreg", "--security", "109",
                                               "--users", "640", "--cts-per-user", str(cts), "--cost-only"]
    # tasklet scaling at the largest add sweep point
    for t in range(1, 17):
        yield out / f"tasklets_{t:02d}.csv", ["--mode", "microbench-add", "--security", "109",
                                               "--items", "327680", "--tasklets", str(t), "--cost-only"]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path, argv in experiments(out, args.seed):
        code = bench.main(argv + ["--seed", str(args.seed), "--out", str(path)])
        if code:
            print(f"failed: {path.name} (exit {code})", file=sys.stderr)
            return code
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
