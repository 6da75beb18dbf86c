"""Density-adaptive LSH similarity join for a simulated MPC cluster."""

from simjoin.adaptive import (
    JoinConfig,
    JoinResult,
    LevelAssignment,
    Status,
    estimate_levels_exact,
    estimate_levels_sampled,
    point_status,
    run_phase,
    select_level_bucket_tree,
    similarity_join,
    static_baseline_join,
)
from simjoin.datagen import DatasetSpec, gen_planted_clusters, gen_uniform, read_dataset, write_dataset
from simjoin.equijoin import equi_join, join_load_bound
from simjoin.lsh import (
    HashFunctionSpec,
    LshParams,
    bit_sampling_family,
    collision_probability,
    eval_hash,
    kappa,
)
from simjoin.mpc import Cluster, LoadReport, broadcast, load_summary, mpc_prefix_sum, mpc_sort
from simjoin.oracle import (
    DensityProfile,
    brute_force_join,
    density_profile,
    recall,
    theoretical_load_bound,
)
from simjoin.points import Point, PointSet, Relation

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "DatasetSpec",
    "DensityProfile",
    "HashFunctionSpec",
    "JoinConfig",
    "JoinResult",
    "LevelAssignment",
    "LoadReport",
    "LshParams",
    "Point",
    "PointSet",
    "Relation",
    "Status",
    "bit_sampling_family",
    "broadcast",
    "brute_force_join",
    "collision_probability",
    "density_profile",
    "equi_join",
    "estimate_levels_exact",
    "estimate_levels_sampled",
    "eval_hash",
    "gen_planted_clusters",
    "gen_uniform",
    "join_load_bound",
    "kappa",
    "load_summary",
    "mpc_prefix_sum",
    "mpc_sort",
    "point_status",
    "read_dataset",
    "recall",
    "run_phase",
    "select_level_bucket_tree",
    "similarity_join",
    "static_baseline_join",
    "theoretical_load_bound",
    "write_dataset",
]
