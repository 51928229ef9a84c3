"""Compare NIAH recall at several merge targets and print one CSV row per target."""

import argparse

from lrc.dropout import DropoutConfig
from lrc.niah import DEFAULT_DEPTHS, DEFAULT_LENGTHS, NiahConfig, evaluate_grid, memorized_length


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--targets", type=int, nargs="+", default=[16, 32, 64, 128, 256])
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--keep-prob", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    drop = DropoutConfig(keep_prob=args.keep_prob, early_layers={0}) if args.keep_prob < 1 else DropoutConfig()
    print("target_tokens_per_clip,mean_recall,memorized_length")
    for n in args.targets:
        cfg = NiahConfig(target_tokens_per_clip=n, dropout=drop)
        grid = evaluate_grid(DEFAULT_LENGTHS, DEFAULT_DEPTHS, args.trials, cfg, args.seed, args.workers)
        print(f"{n},{grid.mean_recall():.4f},{memorized_length(grid) or ''}")


if __name__ == "__main__":
    main()
