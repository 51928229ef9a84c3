"""Best 2D sequence-parallel split per total degree under both link mappings."""

import argparse

from lrc.planner import ClusterSpec, enumerate_plans, select_plan


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seq-len", type=int, default=1_000_000)
    ap.add_argument("--heads", type=int, default=32)
    ap.add_argument("--bytes-per-token", type=int, default=8192)
    ap.add_argument("--nodes", type=int, default=4)
    ap.add_argument("--gpus", type=int, default=8)
    args = ap.parse_args()

    cluster = ClusterSpec(args.nodes, args.gpus, 25e9, 300e9)
    print("mapping,degree,ulysses,ring,est_comm_time_s")
    for mapping in ("paper", "inverted"):
        P = 1
        while P <= cluster.devices:
            plans = enumerate_plans(args.seq_len, args.heads, args.bytes_per_token, cluster, mapping, degree=P)
            if plans:
                best = select_plan(plans)
                print(f"{mapping},{P},{best.ulysses_degree},{best.ring_degree},{best.est_comm_time_per_layer:.6g}")
            P *= 2


if __name__ == "__main__":
    main()
