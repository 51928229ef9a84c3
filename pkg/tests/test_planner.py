from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from lrc.core import InvalidInputError, NoFeasiblePlanError
from lrc.planner import (
    ClusterSpec,
    enumerate_plans,
    estimate_cost,
    link_bandwidths,
    select_plan,
)

from oracles import plan_costs

CL = ClusterSpec(4, 8, 25e9, 300e9)


def test_ulysses_candidates_at_full_degree():
    plans = enumerate_plans(8192, 32, 1024, CL, degree=32)
    assert sorted(p.ulysses_degree for p in plans) == [1, 2, 4, 8, 16, 32]


def test_degenerate_zeroes():
    assert estimate_cost(8, 1, 4096, 32, 4096, CL).p2p_bytes_per_device_per_layer == 0
    assert estimate_cost(1, 8, 4096, 32, 4096, CL).a2a_bytes_per_device_per_layer == 0
    p = estimate_cost(1, 1, 4096, 32, 4096, CL)
    assert p.est_comm_time_per_layer == 0


def test_a2a_example():
    p = estimate_cost(8, 1, 4096, 32, 4096, CL)
    assert p.tokens_per_device == 512
    assert p.a2a_bytes_per_device_per_layer == 7_340_032 == 4 * 512 * 4096 * 7 / 8


def test_bandwidth_doubling_halves_time():
    fast = ClusterSpec(4, 8, 50e9, 600e9)
    for a, b in zip(enumerate_plans(10_000, 16, 2048, CL), enumerate_plans(10_000, 16, 2048, fast)):
        assert b.est_comm_time_per_layer == pytest.approx(a.est_comm_time_per_layer / 2, rel=1e-12)


def test_mapping_swaps_links():
    assert link_bandwidths(CL, "paper") == (25e9, 300e9)
    assert link_bandwidths(CL, "inverted") == (300e9, 25e9)
    with pytest.raises(InvalidInputError):
        link_bandwidths(CL, "other")


def test_invalid_degrees():
    with pytest.raises(InvalidInputError):
        estimate_cost(3, 1, 100, 32, 8, CL)
    with pytest.raises(InvalidInputError):
        estimate_cost(0, 1, 100, 32, 8, CL)
    with pytest.raises(InvalidInputError):
        estimate_cost(8, 8, 100, 32, 8, CL)


def test_select_plan_rules():
    only = estimate_cost(2, 2, 100, 4, 8, CL)
    assert select_plan([only]) is only
    with pytest.raises(NoFeasiblePlanError):
        select_plan([])


def test_select_tie_prefers_smaller_u():
    # equal bandwidths and sizes where a2a == p2p cost: u=2,r=1 vs u=1,r=2
    cl = ClusterSpec(1, 2, 1.0, 1.0)
    u2 = estimate_cost(2, 1, 8, 2, 1, cl)  # 4*4*1*1/2 = 8
    r2 = estimate_cost(1, 2, 8, 2, 1, cl)  # 2*4*1*1 = 8
    assert u2.est_comm_time_per_layer == r2.est_comm_time_per_layer
    assert select_plan([u2, r2]) is r2


def test_select_matches_linear_scan():
    plans = enumerate_plans(65536, 32, 8192, ClusterSpec(2, 8, 25e9, 300e9))
    best = plans[0]
    for p in plans:
        assert best.est_comm_time_per_layer <= p.est_comm_time_per_layer
    assert select_plan(reversed(plans)) == best


clusters = st.builds(
    ClusterSpec, st.integers(1, 4), st.integers(1, 8),
    st.floats(1e6, 1e12), st.floats(1e6, 1e12),
)


@given(st.integers(1, 10**6), st.integers(1, 64), st.integers(1, 8192), clusters, st.sampled_from(["paper", "inverted"]))
def test_enumerated_plans_invariants(S, h, b, cl, mapping):
    plans = enumerate_plans(S, h, b, cl, mapping)
    assert plans, "u = r = 1 is always feasible"
    bw_u, bw_r = link_bandwidths(cl, mapping)
    for p in plans:
        u, r, P = p.ulysses_degree, p.ring_degree, p.degree
        assert h % u == 0 and P <= cl.devices
        assert S <= p.tokens_per_device * P < S + P
        assert p.heads_per_device * u == h
        t, a2a, p2p, time = plan_costs(u, r, S, b, bw_u, bw_r)
        assert p.tokens_per_device == t
        assert Fraction(p.a2a_bytes_per_device_per_layer) == Fraction(float(a2a))
        assert p.p2p_bytes_per_device_per_layer == p2p
        assert p.est_comm_time_per_layer == time
    keys = [(p.est_comm_time_per_layer, p.ulysses_degree, p.degree) for p in plans]
    assert keys == sorted(keys)


@given(st.integers(1, 10**5), st.integers(1, 4096))
def test_cost_monotone_in_degree(S, b):
    # total degree fixed at 16: growing u (shrinking r) trades p2p for a2a
    cl = ClusterSpec(2, 8, 1e9, 1e9)
    plans = {p.ulysses_degree: p for p in enumerate_plans(S, 16, b, cl, degree=16)}
    us = sorted(plans)
    for lo, hi in zip(us, us[1:]):
        assert plans[lo].a2a_bytes_per_device_per_layer <= plans[hi].a2a_bytes_per_device_per_layer
        assert plans[lo].p2p_bytes_per_device_per_layer >= plans[hi].p2p_bytes_per_device_per_layer
