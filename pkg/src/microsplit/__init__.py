"""Queueing analysis of splitting a monolithic service into microservices."""

__version__ = "0.1.0"

from .queueing import (
    Discipline,
    StageMetrics,
    UnstableQueue,
    md1_sojourn,
    mm1_sojourn,
    sojourn,
    utilization,
)
from .decomposition import (
    Best,
    ChainSpec,
    ComparisonResult,
    Custom,
    InfeasibleGridPoint,
    InvalidN,
    SweepTable,
    UnstableMonolith,
    Worst,
    analyze,
    build_best_case,
    build_worst_case,
    custom_chain,
    sweep,
    verify_improvement,
    worst_case_monolith_rate,
)
from .des import FeedMode, InvalidConfig, SimConfig, SimEstimate, simulate_chain, simulate_single_queue
