"""Command-line entry point: ``lrc {compress,niah,pack,plan,demo}``.

Exit codes: 0 on success, 1 on I/O failure, 2 on invalid arguments or
configuration. Outputs are written to a temporary file and renamed into place.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .core import InvalidInputError, SeedSpec, TokenSeq
from .dropout import DropoutConfig
from .merger import MergeConfig, compress_segment
from .niah import (
    DEFAULT_DEPTHS,
    DEFAULT_LENGTHS,
    DEFAULT_TRIALS,
    NiahConfig,
    evaluate_grid,
    memorized_length,
)
from .packer import pack_sequences
from .planner import ClusterSpec, enumerate_plans
from .sampler import SamplerConfig, plan_sampling

log = logging.getLogger("lrc")


class ConfigError(Exception):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class Field:
    default: Any
    kind: type | tuple[type, ...]
    check: Callable[[Any], bool] = lambda v: True
    rule: str = ""


def _pos_int(v):
    return isinstance(v, int) and not isinstance(v, bool) and v >= 1


def _pos_real(v):
    return v > 0 and math.isfinite(v)


def _prob(v):
    return 0 < v <= 1


def _int_list(v):
    return all(isinstance(i, int) and not isinstance(i, bool) and i >= 0 for i in v)


SAMPLER_FIELDS = {
    "dense_fps": Field(15.0, (int, float), _pos_real, "> 0"),
    "sparse_fps": Field(1.0, (int, float), _pos_real, "> 0"),
    "threshold_s": Field(60.0, (int, float), _pos_real, "> 0"),
    "min_frames": Field(64, int, _pos_int, "integer >= 1"),
    "max_frames": Field(512, int, _pos_int, "integer >= 1"),
}

COMPRESS_FIELDS = {
    **SAMPLER_FIELDS,
    "duration_s": Field(10.0, (int, float), _pos_real, "> 0"),
    "tokens_per_frame": Field(256, int, _pos_int, "integer >= 1"),
    "target_tokens_per_frame": Field(16, int, _pos_int, "integer >= 1"),
    "frames_per_clip": Field(8, int, _pos_int, "integer >= 1"),
    "feature_dim": Field(64, int, _pos_int, "integer >= 1"),
    "noise_sigma": Field(0.05, (int, float), lambda v: v >= 0, ">= 0"),
    "max_iterations": Field(16, int, _pos_int, "integer >= 1"),
}

NIAH_FIELDS = {
    "lengths": Field(list(DEFAULT_LENGTHS), list, lambda v: bool(v) and all(_pos_int(i) for i in v), "non-empty list of integers >= 1"),
    "depths": Field(list(DEFAULT_DEPTHS), list, lambda v: bool(v) and all(isinstance(d, (int, float)) and 0 <= d <= 1 for d in v), "non-empty list of reals in [0, 1]"),
    "trials": Field(DEFAULT_TRIALS, int, _pos_int, "integer >= 1"),
    "tokens_per_frame": Field(32, int, _pos_int, "integer >= 1"),
    "frames_per_clip": Field(8, int, _pos_int, "integer >= 1"),
    "feature_dim": Field(64, int, _pos_int, "integer >= 1"),
    "noise_sigma": Field(0.05, (int, float), lambda v: v >= 0, ">= 0"),
    "target_tokens_per_clip": Field(256, int, _pos_int, "integer >= 1"),
    "max_iterations": Field(16, int, _pos_int, "integer >= 1"),
    "keep_prob": Field(1.0, (int, float), _prob, "in (0, 1]"),
    "deep_keep_ratio": Field(1.0, (int, float), _prob, "in (0, 1]"),
    "early_layers": Field([], list, _int_list, "list of layer indices"),
    "deep_layers": Field([], list, _int_list, "list of layer indices"),
    "layers": Field(4, int, _pos_int, "integer >= 1"),
    "heads": Field(2, int, _pos_int, "integer >= 1"),
    "stack_seed": Field(0, int, lambda v: v >= 0, "integer >= 0"),
}

PACK_FIELDS = {"capacity": Field(None, int, _pos_int, "integer >= 1")}

PLAN_FIELDS = {
    "seq_len": Field(None, int, _pos_int, "integer >= 1"),
    "heads": Field(None, int, _pos_int, "integer >= 1"),
    "nodes": Field(1, int, _pos_int, "integer >= 1"),
    "gpus": Field(8, int, _pos_int, "integer >= 1"),
    "bytes_per_token": Field(None, int, _pos_int, "integer >= 1"),
    "inter_bw": Field(25e9, (int, float), _pos_real, "> 0"),
    "intra_bw": Field(300e9, (int, float), _pos_real, "> 0"),
    "mapping": Field("paper", str, lambda v: v in ("paper", "inverted"), "'paper' or 'inverted'"),
    "degree": Field(None, int, _pos_int, "integer >= 1"),
}


def validate(raw: dict, fields: dict[str, Field], required: tuple[str, ...] = ()) -> dict:
    """Fill defaults and check every key; raise :class:`ConfigError` on the first problem."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    out = {}
    for key, f in fields.items():
        v = raw.get(key, f.default)
        if v is None:
            if key in required:
                raise ConfigError(key, "required")
            out[key] = None
            continue
        kinds = f.kind if isinstance(f.kind, tuple) else (f.kind,)
        if isinstance(v, bool) or not isinstance(v, kinds):
            raise ConfigError(key, f"expected {f.rule or kinds}, got {v!r}")
        try:
            ok = f.check(v)
        except TypeError:
            ok = False
        if not ok:
            raise ConfigError(key, f"must be {f.rule}, got {v!r}")
        out[key] = v
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError("--config", f"cannot read {path}: {e.strerror}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("--config", f"invalid JSON: {e}") from e


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory."""
    dest = Path(path)
    fd, tmp = tempfile.mkstemp(dir=dest.parent or ".", prefix=f".{dest.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, dest)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write_atomic(out, text)
        log.info("wrote %s", out)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _merge_flags(cfg: dict, args: argparse.Namespace, keys) -> dict:
    cfg = dict(cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def niah_config(c: dict) -> NiahConfig:
    try:
        drop = DropoutConfig(
            keep_prob=float(c["keep_prob"]),
            early_layers=frozenset(c["early_layers"]),
            deep_layers=frozenset(c["deep_layers"]),
            deep_keep_ratio=float(c["deep_keep_ratio"]),
        )
    except InvalidInputError as e:
        raise ConfigError("early_layers", str(e)) from e
    bad = [l for l in drop.early_layers | drop.deep_layers if l >= c["layers"]]
    if bad:
        raise ConfigError("early_layers" if set(bad) & drop.early_layers else "deep_layers",
                          f"layer {min(bad)} >= layers={c['layers']}")
    if c["feature_dim"] % c["heads"]:
        raise ConfigError("heads", f"must divide feature_dim={c['feature_dim']}")
    short = [f for f in c["lengths"] if f < c["frames_per_clip"]]
    if short:
        raise ConfigError("lengths", f"{short[0]} < frames_per_clip={c['frames_per_clip']}")
    return NiahConfig(
        tokens_per_frame=c["tokens_per_frame"],
        frames_per_clip=c["frames_per_clip"],
        feature_dim=c["feature_dim"],
        noise_sigma=float(c["noise_sigma"]),
        target_tokens_per_clip=c["target_tokens_per_clip"],
        max_iterations=c["max_iterations"],
        dropout=drop,
        layers=c["layers"],
        heads=c["heads"],
        stack_seed=c["stack_seed"],
    )


def cmd_niah(args) -> int:
    c = validate(load_config(args.config), NIAH_FIELDS)
    cfg = niah_config(c)
    grid = evaluate_grid(c["lengths"], c["depths"], c["trials"], cfg, args.seed, args.workers)
    _emit(grid.to_csv(), args.out)
    log.info("mean recall %.4f, memorized length %s", grid.mean_recall(), memorized_length(grid))
    return 0


def synthetic_clip_tokens(n_frames, tokens_per_frame, dim, sigma, seed: SeedSpec) -> np.ndarray:
    """Noisy copies of random unit frame vectors, ``tokens_per_frame`` per frame."""
    frames = seed.child("frames").rng().standard_normal((n_frames, dim))
    frames /= np.linalg.norm(frames, axis=1, keepdims=True)
    toks = np.repeat(frames, tokens_per_frame, axis=0)
    if sigma > 0:
        toks = toks + sigma * seed.child("noise").rng().standard_normal(toks.shape)
    return toks


def run_compress(c: dict, seed: int) -> dict:
    try:
        scfg = SamplerConfig(
            c["dense_fps"], c["sparse_fps"], c["threshold_s"], c["min_frames"], c["max_frames"]
        )
    except InvalidInputError as e:
        raise ConfigError("dense_fps" if "fps" in str(e) else "min_frames", str(e)) from e
    if c["target_tokens_per_frame"] > c["tokens_per_frame"]:
        raise ConfigError("target_tokens_per_frame", "must not exceed tokens_per_frame")
    plan = plan_sampling(float(c["duration_s"]), scfg)
    m, fpc = c["tokens_per_frame"], c["frames_per_clip"]
    root = SeedSpec(seed, (("compress", 0),))
    feats = synthetic_clip_tokens(plan.final_frame_count, m, c["feature_dim"], c["noise_sigma"], root)
    clips = []
    total_in = total_out = 0
    for k, start in enumerate(range(0, plan.final_frame_count, fpc)):
        n_frames = min(fpc, plan.final_frame_count - start)
        lo, hi = start * m, (start + n_frames) * m
        toks = TokenSeq.fresh(feats[lo:hi], range(lo, hi))
        target = n_frames * c["target_tokens_per_frame"]
        out, trace = compress_segment(toks, MergeConfig(target, c["max_iterations"]))
        clips.append({
            "clip": k,
            "frames": n_frames,
            "tokens_in": len(toks),
            "tokens_out": len(out),
            "iterations": trace.iterations_used,
            "size_sum": float(out.sizes.sum()),
        })
        total_in += len(toks)
        total_out += len(out)
    return {
        "sampling": {
            "duration_s": plan.duration_s,
            "rate_fps": plan.rate_fps,
            "raw_frame_count": plan.raw_frame_count,
            "final_frame_count": plan.final_frame_count,
            "clamped": plan.clamped,
        },
        "clips": clips,
        "total_tokens_in": total_in,
        "total_tokens_out": total_out,
        "tokens_per_frame_out": total_out / plan.final_frame_count,
    }


def cmd_compress(args) -> int:
    raw = _merge_flags(load_config(args.config), args, ("duration_s", "target_tokens_per_frame"))
    c = validate(raw, COMPRESS_FIELDS)
    _emit(_dumps(run_compress(c, args.seed)), args.out)
    return 0


def read_lengths(path: str) -> list[int]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise ConfigError("--lengths", f"cannot read {path}: {e.strerror}") from e
    out = []
    for no, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            v = int(line)
        except ValueError:
            raise ConfigError("--lengths", f"line {no}: not an integer: {line!r}") from None
        if v < 1:
            raise ConfigError("--lengths", f"line {no}: length must be >= 1")
        out.append(v)
    return out


def cmd_pack(args) -> int:
    c = validate(_merge_flags(load_config(args.config), args, ("capacity",)), PACK_FIELDS, ("capacity",))
    if args.lengths is None:
        raise ConfigError("--lengths", "required")
    plan = pack_sequences(read_lengths(args.lengths), c["capacity"])
    _emit(_dumps(plan.to_dict()), args.out)
    return 0


def cmd_plan(args) -> int:
    keys = tuple(PLAN_FIELDS)
    c = validate(
        _merge_flags(load_config(args.config), args, keys),
        PLAN_FIELDS,
        ("seq_len", "heads", "bytes_per_token"),
    )
    cluster = ClusterSpec(c["nodes"], c["gpus"], float(c["inter_bw"]), float(c["intra_bw"]))
    plans = enumerate_plans(
        c["seq_len"], c["heads"], c["bytes_per_token"], cluster, c["mapping"], c["degree"]
    )
    _emit(_dumps([p.to_dict() for p in plans]), args.out)
    return 0


def cmd_demo(args) -> int:
    lines = []
    plan = plan_sampling(10.0)
    lines.append(f"sampling 10 s: {plan.rate_fps:g} fps -> {plan.final_frame_count} frames")
    plan = plan_sampling(3600.0)
    lines.append(f"sampling 1 h: {plan.rate_fps:g} fps -> {plan.raw_frame_count} raw, {plan.final_frame_count} kept")

    toks = TokenSeq.fresh(
        synthetic_clip_tokens(8, 256, 64, 0.05, SeedSpec(args.seed, (("demo", 0),)))
    )
    out, trace = compress_segment(toks, MergeConfig(128))
    lines.append(
        f"8-frame clip: {len(toks)} -> {len(out)} tokens in {trace.iterations_used} iterations "
        f"({len(out) / 8:g} per frame), size sum {out.sizes.sum():g}"
    )

    presets = {
        "lossless": NiahConfig(tokens_per_frame=16, target_tokens_per_clip=128),
        "lossy": NiahConfig(
            tokens_per_frame=16,
            target_tokens_per_clip=16,
            dropout=DropoutConfig(keep_prob=0.5, early_layers={0}),
        ),
    }
    for name, cfg in presets.items():
        grid = evaluate_grid([64], DEFAULT_DEPTHS, 4, cfg, args.seed, 1)
        lines.append(f"niah 64 frames, {name}: mean recall {grid.mean_recall():.4f}")

    pk = pack_sequences([900, 3000, 1200, 5000, 700, 2500, 400], 4096)
    lines.append(
        f"packing 7 sequences at 4096: {len(pk.packs)} packs, util {pk.utilization:.3f} "
        f"vs padded {pk.baseline_utilization:.3f}"
    )
    best = enumerate_plans(65536, 32, 8192, ClusterSpec(2, 8, 25e9, 300e9), degree=16)[0]
    lines.append(
        f"16-way plan for 64k tokens: u={best.ulysses_degree} r={best.ring_degree}, "
        f"{best.est_comm_time_per_layer * 1e3:.3f} ms/layer"
    )
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--workers", type=int, default=1)

    p = argparse.ArgumentParser(prog="lrc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("compress", parents=[common], help="sample and compress a synthetic video")
    s.add_argument("--duration", dest="duration_s", type=float)
    s.add_argument("--target-tokens-per-frame", type=int)
    s.set_defaults(func=cmd_compress)

    s = sub.add_parser("niah", parents=[common], help="needle-in-a-haystack recall grid (CSV)")
    s.set_defaults(func=cmd_niah)

    s = sub.add_parser("pack", parents=[common], help="pack sequence lengths (JSON)")
    s.add_argument("--lengths", help="file with one length per line")
    s.add_argument("--capacity", type=int)
    s.set_defaults(func=cmd_pack)

    s = sub.add_parser("plan", parents=[common], help="enumerate 2D sequence-parallel plans (JSON)")
    s.add_argument("--seq-len", type=int)
    s.add_argument("--heads", type=int)
    s.add_argument("--nodes", type=int)
    s.add_argument("--gpus", type=int)
    s.add_argument("--bytes-per-token", type=int)
    s.add_argument("--inter-bw", type=float)
    s.add_argument("--intra-bw", type=float)
    s.add_argument("--mapping", choices=("paper", "inverted"))
    s.add_argument("--degree", type=int)
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("demo", parents=[common], help="tiny end-to-end run")
    s.set_defaults(func=cmd_demo)
    return p


def run(argv=None) -> int:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("LRC_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers: must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except InvalidInputError as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
