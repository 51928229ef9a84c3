import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrc.core import InvalidInputError
from lrc.packer import compare_padding, pack_sequences

from oracles import min_contiguous_packs


def shape(plan):
    return [[e.used for e in p] for p in plan.packs]


def test_three_fit_one_pack():
    plan = pack_sequences([3, 3, 3], 10)
    assert shape(plan) == [[3, 3, 3]]
    assert plan.utilization == pytest.approx(0.9)


def test_next_fit_example():
    plan = pack_sequences([7, 5, 4, 6], 10)
    assert shape(plan) == [[7], [5, 4], [6]]
    assert len(plan.packs) == min_contiguous_packs([7, 5, 4, 6], 10) == 3


def test_oversized_clipped_and_flagged():
    plan = pack_sequences([15], 10)
    assert shape(plan) == [[10]] and plan.clipped == (0,)


def test_empty_input():
    plan = pack_sequences([], 8)
    assert plan.packs == () and plan.utilization == 0.0 and plan.iteration_ratio == 0.0


def test_bad_inputs():
    with pytest.raises(InvalidInputError):
        pack_sequences([1], 0)
    with pytest.raises(InvalidInputError):
        pack_sequences([3, 0], 5)


def test_compare_padding_examples():
    c = compare_padding([1, 1, 1, 1], 4)
    assert (c.pad_util, c.pack_util, c.iteration_ratio) == (0.25, 1.0, 4.0)
    c = compare_padding([6, 6, 6], 6)
    assert (c.pad_util, c.pack_util, c.iteration_ratio) == (1.0, 1.0, 1.0)


def test_log_uniform_workload_dominance():
    T = 4096
    rng = np.random.default_rng(2024)
    lens = np.exp(rng.uniform(np.log(16), np.log(T), 1000)).astype(int)
    c = compare_padding(lens.tolist(), T)
    assert c.pack_util >= c.pad_util
    assert c.iteration_ratio > 1


workloads = st.integers(1, 40).flatmap(
    lambda T: st.tuples(st.just(T), st.lists(st.integers(1, 2 * T), max_size=30))
)


@given(workloads)
def test_plan_invariants(w):
    T, lens = w
    plan = pack_sequences(lens, T)
    flat = [e.seq for p in plan.packs for e in p]
    assert flat == list(range(len(lens)))
    assert all(sum(e.used for e in p) <= T for p in plan.packs)
    assert plan.used_tokens == sum(min(x, T) for x in lens)
    assert plan.clipped == tuple(i for i, x in enumerate(lens) if x > T)
    if lens:
        assert plan.utilization >= plan.baseline_utilization
        assert 0 < plan.utilization <= 1


@given(st.integers(1, 32).flatmap(lambda T: st.tuples(st.just(T), st.lists(st.integers(1, T), min_size=1, max_size=10))))
def test_next_fit_is_optimal(w):
    T, lens = w
    assert len(pack_sequences(lens, T).packs) == min_contiguous_packs(lens, T)
