#!/usr/bin/env python3
"""Noise budget (bits) after encryption, one add and one multiply, per parameter set and t.

    python3 scripts/noise_table.py --trials 10
"""
import argparse

import numpy as np

from pimhe import bfv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    grid = {27: (3, 5, 7, 11, 13, 17), 54: (257, 65536), 109: (257, 65536)}
    print("security,t,fresh_min,add_min,mul_min,mul_failures")
    for sec, ts in grid.items():
        for t in ts:
            params = bfv.standard_params(sec, t=t)
            sk, pk = bfv.keygen(params, args.seed)
            rng = np.random.default_rng(args.seed)
            fresh, added, mult, bad = [], [], [], 0
            for i in range(args.trials):
                a, b = (int(v) for v in rng.integers(0, t, 2))
                ca = bfv.encrypt(pk, bfv.encode_scalar(params, a), 2 * i)
                cb = bfv.encrypt(pk, bfv.encode_scalar(params, b), 2 * i + 1)
                prod = bfv.he_mul(ca, cb)
                fresh.append(bfv.noise_budget(sk, ca))
                added.append(bfv.noise_budget(sk, bfv.he_add(ca, cb)))
                mult.append(bfv.noise_budget(sk, prod))
                bad += bfv.decode_scalar(bfv.decrypt(sk, prod)) != a * b % t
            print(f"{sec},{t},{min(fresh)},{min(added)},{min(mult)},{bad}")


if __name__ == "__main__":
    main()
