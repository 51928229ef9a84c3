"""Cost model for 2D sequence parallelism (head all-to-all x KV ring).

A plan splits ``P`` devices into ``u`` all-to-all ranks (attention heads are
redistributed among them, so ``u`` must divide the head count) times ``r``
ring ranks (key/value blocks circulate around the ring). Only communication
volume and time per layer are modelled.

Per device and layer, with ``t = ceil(S / P)`` tokens and ``b`` bytes per
token:

    a2a_bytes = 4 * t * b * (u - 1) / u     # Q, K, V in and O back out
    p2p_bytes = 2 * t * b * (r - 1)         # K and V passed r - 1 times
    time      = a2a_bytes / bw_u + p2p_bytes / bw_r
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal

from .core import InvalidInputError, NoFeasiblePlanError

Mapping = Literal["paper", "inverted"]


@dataclass(frozen=True)
class ClusterSpec:
    nodes: int
    devices_per_node: int
    inter_node_bw: float
    intra_node_bw: float

    def __post_init__(self):
        if self.nodes < 1 or self.devices_per_node < 1:
            raise InvalidInputError("nodes and devices_per_node must be >= 1")
        if not (self.inter_node_bw > 0 and self.intra_node_bw > 0):
            raise InvalidInputError("bandwidths must be positive")

    @property
    def devices(self) -> int:
        return self.nodes * self.devices_per_node


@dataclass(frozen=True)
class ParallelPlan:
    ulysses_degree: int
    ring_degree: int
    tokens_per_device: int
    heads_per_device: int
    a2a_bytes_per_device_per_layer: float
    p2p_bytes_per_device_per_layer: int
    est_comm_time_per_layer: float
    # which degree spans inter-node links: "ulysses" or "ring"
    inter_node_dim: str

    @property
    def degree(self) -> int:
        return self.ulysses_degree * self.ring_degree

    def to_dict(self) -> dict:
        d = asdict(self)
        d["degree"] = self.degree
        return d


def link_bandwidths(cluster: ClusterSpec, mapping: Mapping = "paper") -> tuple[float, float]:
    """(bandwidth for all-to-all, bandwidth for ring P2P).

    ``"paper"`` puts all-to-all on inter-node links and the ring on
    intra-node links; ``"inverted"`` swaps them.
    """
    if mapping == "paper":
        return cluster.inter_node_bw, cluster.intra_node_bw
    if mapping == "inverted":
        return cluster.intra_node_bw, cluster.inter_node_bw
    raise InvalidInputError(f"unknown mapping {mapping!r}")


def estimate_cost(
    u: int,
    r: int,
    seq_len: int,
    heads: int,
    bytes_per_token: int,
    cluster: ClusterSpec,
    mapping: Mapping = "paper",
) -> ParallelPlan:
    if u < 1 or r < 1:
        raise InvalidInputError(f"degrees must be >= 1, got u={u}, r={r}")
    if heads % u:
        raise InvalidInputError(f"ulysses degree {u} does not divide {heads} heads")
    if u * r > cluster.devices:
        raise InvalidInputError(f"u*r={u * r} exceeds {cluster.devices} devices")
    if seq_len < 1 or bytes_per_token < 1:
        raise InvalidInputError("seq_len and bytes_per_token must be >= 1")
    p = u * r
    t = -(-seq_len // p)  # ceil without float rounding
    a2a = 4 * t * bytes_per_token * (u - 1) / u
    p2p = 2 * t * bytes_per_token * (r - 1)
    bw_u, bw_r = link_bandwidths(cluster, mapping)
    time = a2a / bw_u + p2p / bw_r
    return ParallelPlan(
        u, r, t, heads // u, a2a, p2p, time,
        "ulysses" if mapping == "paper" else "ring",
    )


def _rank(plan: ParallelPlan):
    return (plan.est_comm_time_per_layer, plan.ulysses_degree, plan.degree)


def enumerate_plans(
    seq_len: int,
    heads: int,
    bytes_per_token: int,
    cluster: ClusterSpec,
    mapping: Mapping = "paper",
    degree: int | None = None,
) -> list[ParallelPlan]:
    """Every feasible (u, r) with u | heads and u*r <= devices, cheapest first.

    ``degree`` restricts the search to one total degree ``P``.
    """
    if seq_len < 1 or heads < 1:
        raise InvalidInputError("seq_len and heads must be >= 1")
    degrees = range(1, cluster.devices + 1) if degree is None else [degree]
    plans = []
    for p in degrees:
        if not 1 <= p <= cluster.devices:
            continue
        for u in range(1, p + 1):
            if p % u == 0 and heads % u == 0:
                plans.append(estimate_cost(u, p // u, seq_len, heads, bytes_per_token, cluster, mapping))
    plans.sort(key=_rank)
    return plans


def select_plan(plans) -> ParallelPlan:
    """Cheapest plan; ties go to smaller u, then smaller total degree."""
    plans = list(plans)
    if not plans:
        raise NoFeasiblePlanError("no feasible parallel plan")
    return min(plans, key=_rank)
