"""Multi-timescale popularity tensor completion.

Completes a partially observed (user x post x time) popularity tensor by
splitting it into per-timescale components, soft-thresholding the singular
values of small tensor blocks, and recombining the components with an
ADMM-style residual-sharing loop.  Ships reference baselines (neighbour
average, ridge regression, bipartite-graph propagation, temporal matrix
factorization), a synthetic data generator, and a cross-validated
evaluation harness behind a CLI.
"""

from mtpop.tensor import (
    Block,
    MaskedTensor,
    add,
    embed_block,
    extract_block,
    fold_time,
    new_tensor,
    scale,
    unfold_time,
)
from mtpop.rearrange import ContextFeatures, Rearrangement, build_rearrangement, kmeans
from mtpop.multiscale import BlockLayout, ScalePlan, TimeScale, default_scale_plan, partition, plan_layout
from mtpop.solver import SolverConfig, SolverState, admm_fit, blockwise_svt, nuclear_norm, predict, svt
from mtpop.popularity import Dataset, PopularityRecord, ingest, log_popularity, to_tensor
from mtpop.evaluate import EvalReport, ExperimentConfig, kfold_split, run_experiment, spearman
from mtpop.synth import ScaleSpec, SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "Block",
    "BlockLayout",
    "ContextFeatures",
    "Dataset",
    "EvalReport",
    "ExperimentConfig",
    "MaskedTensor",
    "PopularityRecord",
    "Rearrangement",
    "ScalePlan",
    "ScaleSpec",
    "SolverConfig",
    "SolverState",
    "SynthConfig",
    "TimeScale",
    "add",
    "admm_fit",
    "blockwise_svt",
    "build_rearrangement",
    "default_scale_plan",
    "embed_block",
    "extract_block",
    "fold_time",
    "generate",
    "ingest",
    "kfold_split",
    "kmeans",
    "log_popularity",
    "new_tensor",
    "nuclear_norm",
    "partition",
    "plan_layout",
    "predict",
    "run_experiment",
    "scale",
    "spearman",
    "svt",
    "to_tensor",
    "unfold_time",
]
