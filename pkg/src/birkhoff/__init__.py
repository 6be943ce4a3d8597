"""Ranking model on partial rankings (injections of r positions into n candidates).

Exact sufficient statistics, brute-force fibers, Markov basis counts, the
swap-based connector between datasets of a common fiber, and fiber samplers.
"""

from .errors import BirkhoffError
from .model import (
    Config,
    Dataset,
    DatasetKind,
    ImproperSym,
    ModelParams,
    SuffStat,
    VoteKind,
    classify_vote,
    compute_Z,
    config_matrix,
    enumerate_votes,
    suff_stat,
)

__all__ = [
    "BirkhoffError",
    "Config",
    "Dataset",
    "DatasetKind",
    "ImproperSym",
    "ModelParams",
    "SuffStat",
    "VoteKind",
    "classify_vote",
    "compute_Z",
    "config_matrix",
    "enumerate_votes",
    "suff_stat",
]
