import math
from dataclasses import replace

import numpy as np
import pytest

from lrc.core import InvalidInputError, SeedSpec
from lrc.dropout import DropoutConfig
from lrc.merger import MergeConfig, compress_segment
from lrc.niah import (
    HaystackSpec,
    NiahConfig,
    NiahGrid,
    cell_seed,
    evaluate_grid,
    generate_haystack,
    memorized_length,
    run_trial,
    run_trial_detailed,
)
from lrc.toyattn import AttnStack

from oracles import py_cosine

STACK = AttnStack(4, 2, 16, seed=0)


def spec(frames=32, depth=0.5, m=8, sigma=0.05, seed=0, d=16):
    return HaystackSpec(frames, depth, m, 8, d, sigma, SeedSpec(seed))


def test_needle_frame_index():
    assert spec(frames=100, depth=0).needle_frame == 0
    assert spec(frames=100, depth=1).needle_frame == 99
    assert spec(frames=101, depth=0.5).needle_frame == 50


def test_zero_noise_tokens_equal_frame():
    hay = generate_haystack(spec(sigma=0.0))
    for clip in hay.clips:
        f = clip.features.reshape(8, 8, -1)
        assert np.all(f == f[:, :1, :])
        np.testing.assert_allclose(np.linalg.norm(f[:, 0], axis=1), 1.0, rtol=1e-12)


def test_needle_at_depth_zero_in_first_clip():
    hay = generate_haystack(spec(depth=0.0, sigma=0.0))
    assert hay.needle_ids <= set(hay.clips[0].ids.tolist())
    np.testing.assert_array_equal(hay.clips[0].features[0], hay.signature)


def test_haystack_shape_and_ids():
    hay = generate_haystack(spec(frames=20))  # last clip holds 4 frames
    assert [len(c) for c in hay.clips] == [64, 64, 32]
    ids = np.concatenate([c.ids for c in hay.clips])
    assert ids.tolist() == list(range(160)) and hay.signature_id == 160


def test_haystack_frames_near_orthogonal():
    d = 64
    hay = generate_haystack(HaystackSpec(1001, 0.0, 1, 1, d, 0.0, SeedSpec(5)))
    frames = np.concatenate([c.features for c in hay.clips])[1:]
    sims = [py_cosine(frames[2 * k], frames[2 * k + 1]) for k in range(500)]
    sims += [py_cosine(frames[k], frames[k + 500]) for k in range(500)]
    assert abs(np.mean(sims)) <= 3 / math.sqrt(d)


def test_haystack_validation():
    with pytest.raises(InvalidInputError):
        HaystackSpec(4, 0.5, frames_per_clip=8)
    with pytest.raises(InvalidInputError):
        HaystackSpec(8, 1.5)


@pytest.mark.parametrize("frames", [8, 24, 64])
@pytest.mark.parametrize("depth", [0.0, 0.3, 1.0])
def test_lossless_trial_succeeds(frames, depth):
    s = spec(frames=frames, depth=depth, seed=frames)
    assert run_trial(s, MergeConfig(64), DropoutConfig(), STACK)


def test_lossless_through_full_stack():
    # p = 1 and rho = 1 still run every layer; nothing may be dropped
    s = spec(frames=16, depth=0.7)
    cfg = DropoutConfig.default_split(4, keep_prob=1.0, deep_keep_ratio=1.0)
    res = run_trial_detailed(s, MergeConfig(64), cfg, STACK)
    assert res.success and res.survivors == 16 * 8


def test_one_token_per_clip_matches_bruteforce():
    # sigma = 0 and one merged token per clip: retrieval must pick the merged
    # token most similar to the signature, and success is decided by its cluster
    for seed in range(10):
        s = spec(frames=48, depth=seed / 9, sigma=0.0, seed=seed)
        res = run_trial_detailed(s, MergeConfig(1), DropoutConfig(), STACK)
        hay = generate_haystack(s)
        merged = [compress_segment(c, MergeConfig(1)) for c in hay.clips]
        sims = [py_cosine(out.features[0], hay.signature) for out, _ in merged]
        k = int(np.argmax(sims))
        cluster = merged[k][1].clusters[0]
        assert res.retrieved_id == int(merged[k][0].ids[0])
        assert res.success == bool(cluster & hay.needle_ids)


def test_success_confirmed_by_cluster():
    s = spec(frames=64, depth=0.25, m=8)
    res = run_trial_detailed(s, MergeConfig(4), DropoutConfig(keep_prob=0.5, early_layers={0}), STACK)
    hay = generate_haystack(s)
    assert res.retrieved_id in res.cluster
    assert res.success == bool(res.cluster & hay.needle_ids)


def test_attention_guided_trial_runs():
    cfg = DropoutConfig.default_split(4, keep_prob=0.7, deep_keep_ratio=0.5)
    res = run_trial_detailed(spec(frames=32), MergeConfig(16), cfg, STACK)
    # 4 clips x 16 merged tokens go in
    assert 0 < res.survivors < 64


def test_cell_seed_labels():
    assert cell_seed(7, 128, 0.5, 3).labels == (("F", 128), ("depth_pm", 500), ("trial", 3))


SMALL = NiahConfig(tokens_per_frame=4, feature_dim=16, target_tokens_per_clip=32)


def test_grid_lossless_all_ones():
    g = evaluate_grid([16, 32], [0.0, 0.5, 1.0], 1, SMALL, base_seed=3)
    assert g.recall.tolist() == [[1.0] * 3] * 2


def test_grid_workers_bit_identical():
    cfg = replace(SMALL, target_tokens_per_clip=2, dropout=DropoutConfig(keep_prob=0.5, early_layers={0}))
    one = evaluate_grid([16, 32], [0.0, 1.0], 3, cfg, base_seed=9, workers=1)
    two = evaluate_grid([32, 16], [1.0, 0.0], 3, cfg, base_seed=9, workers=2)
    assert one == two and one.to_csv() == two.to_csv()


def test_csv_format():
    g = NiahGrid((64, 128), (0.0, 0.5), 3, ((3, 2), (1, 0)))
    assert g.to_csv() == (
        "context_frames,depth_fraction,trials,recall\n"
        "64,0.0000,3,1.0000\n"
        "64,0.5000,3,0.6667\n"
        "128,0.0000,3,0.3333\n"
        "128,0.5000,3,0.0000\n"
    )


def test_memorized_length():
    g = NiahGrid((64, 128, 256), (0.0, 1.0), 20, ((20, 19), (19, 19), (20, 17)))
    assert memorized_length(g) == 128
    assert memorized_length(NiahGrid((64,), (0.0,), 20, ((18,),))) is None
