"""Distributed feature selection with knockoffs and adaptive vote aggregation."""

from .aggregation import (
    ADAGES,
    ADAGES_M,
    INTERSECTION,
    MEDIAN,
    UNION,
    AggregationError,
    AggregationOutcome,
    DegenerateInputError,
    DimensionError,
    Rule,
    SelectionSet,
    VoteProfile,
    adaptive_threshold,
    aggregate,
    aggregate_profile,
    c_upper,
    complexity_ratio,
    fixed_threshold,
    modified_threshold,
    parse_rule,
    threshold_select,
    vote_counts,
)
from .datagen import LinearModelSpec, gen_instance, partition
from .harness import ExperimentConfig, run_appendix_cases, run_sweep
from .knockoffs import DatasetShard, knockoff_plus_threshold, machine_select, machine_w_stats
from .metrics import diff_count, fdp, tpp
from .selections import aggregate_file, read_selections, write_selections
from .service import Client, Coordinator, CoordinatorServer

__version__ = "0.1.0"
