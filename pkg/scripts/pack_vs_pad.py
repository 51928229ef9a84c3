"""Packing versus pad-and-clip on log-uniform length workloads."""

import argparse

import numpy as np

from lrc.packer import compare_padding


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--capacities", type=int, nargs="+", default=[1024, 4096, 16384])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print("capacity,pad_util,pack_util,iteration_ratio")
    for T in args.capacities:
        lens = np.exp(rng.uniform(np.log(16), np.log(T), args.n)).astype(int)
        c = compare_padding(lens.tolist(), T)
        print(f"{T},{c.pad_util:.4f},{c.pack_util:.4f},{c.iteration_ratio:.3f}")


if __name__ == "__main__":
    main()
