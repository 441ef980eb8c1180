"""Differentially private causal-graph discovery with adaptive budgets.

Two pipelines share one privacy ledger format: a constraint-based PC
skeleton search whose per-order budgets are re-optimised as edges are
pruned, and a score-based learner that spends a growing budget on noisy
gradients of a continuous acyclicity-constrained objective.
"""

from .accountant import BudgetExhausted, LeakageLedger
from .data import DataError, DataMatrix
from .graph import EdgeList, UndirectedGraph
from .kendall import kendall_tau, weighted_tau
from .metrics import f1_score
from .score import ScoreConfig, adaptive_priv_minimize, augmented_lagrangian
from .skeleton import SkeletonConfig, curate_skeleton, pc_skeleton_nonprivate, uniform_budget_skeleton

__version__ = "0.1.0"

__all__ = [
    "BudgetExhausted",
    "DataError",
    "DataMatrix",
    "EdgeList",
    "LeakageLedger",
    "ScoreConfig",
    "SkeletonConfig",
    "UndirectedGraph",
    "adaptive_priv_minimize",
    "augmented_lagrangian",
    "curate_skeleton",
    "f1_score",
    "kendall_tau",
    "pc_skeleton_nonprivate",
    "uniform_budget_skeleton",
    "weighted_tau",
]
