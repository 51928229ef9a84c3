"""Long-context video token pipeline at desk scale.

Frame sampling, token merging with provenance, two-phase token dropout,
synthetic needle-in-a-haystack recall, sequence packing and a 2D
sequence-parallelism cost model.
"""

from .core import (
    CapacityError,
    InvalidInputError,
    NoFeasiblePlanError,
    SeedSpec,
    TokenSeq,
    cosine_sim,
    derive_seed,
)
from .dropout import DropoutConfig, SurvivorSet, attention_select, run_with_dropout, uniform_prune
from .merger import MergeConfig, MergeTrace, bipartite_match_step, compress_segment
from .niah import HaystackSpec, NiahConfig, NiahGrid, evaluate_grid, generate_haystack, run_trial
from .packer import PackPlan, compare_padding, pack_sequences
from .planner import ClusterSpec, ParallelPlan, enumerate_plans, estimate_cost, select_plan
from .sampler import SamplePlan, SamplerConfig, plan_sampling
from .toyattn import AttnMap, AttnStack, LossTerms, compose_total_loss, forward_layer, total_loss_grad

__version__ = "0.1.0"
