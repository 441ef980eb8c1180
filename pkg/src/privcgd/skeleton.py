"""Skeleton discovery: adaptive private PC, non-private PC and a uniform-budget baseline.

All three share one control flow. Orders ``i = 0, 1, ...`` run strictly in
sequence; inside an order every surviving pair ``(a, b)`` (lexicographic,
``a < b``) is tested against each size-``i`` subset of ``Adj(a) \\ {b}``
until one test deletes it. Deletions take effect immediately.

The modes differ only in how a p-value becomes a decision and in what they
charge to the ledger:

``curate``
    Per-order budgets are re-planned before every order with
    :func:`privcgd.budget.opt_budgets`; the p-value is perturbed with
    Laplace noise and pushed through the three-way margin rule.
``uniform``
    One per-test budget for the whole run, spread over the data-agnostic
    test bound ``sum_i C(d,2) C(d-2,i)``.
``nonprivate``
    Plain PC: delete when ``p > T``; nothing is charged.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

from .accountant import BudgetExhausted, LeakageLedger, order_leakage
from .budget import ErrorModelParams, opt_budgets, uniform_plan
from .data import DataMatrix
from .graph import SeparationSets, UndirectedGraph, adjacent_candidates, complete_graph
from .kendall import UntestableError, sensitivity_weighted_tau, weighted_tau
from .mechanisms import RngStream, laplace_noise, subsample

MODES = ("curate", "uniform", "nonprivate")

# stream ids; each order gets its own noise/coin streams so runs stay
# reproducible even when an order is skipped
_SUBSAMPLE_STREAM = 1
_NOISE_STREAM = 1000
_COIN_STREAM = 2000


class Decision(enum.Enum):
    DELETE = "delete"
    KEEP = "keep"


@dataclass
class SkeletonConfig:
    epsilon_total: float = 1.0
    delta_total: float = 1e-8
    delta_prime: float = 1e-12
    delta: float = 0.0
    T: float = 0.05
    beta1: float = 0.1
    beta2: float = 0.1
    q: float = 1.0
    c1: float = 0.5
    c2: float = 0.5
    seed: int = 0
    max_order: Optional[int] = None
    max_levels: Optional[int] = 20
    plan_stratum: Optional[int] = None
    alternative: str = "two-sided"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("threshold T must be positive")
        if not 0 < self.q <= 1:
            raise ValueError("sub-sampling rate q must lie in (0, 1]")
        if not self.epsilon_total > 0:
            raise ValueError("epsilon_total must be positive")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("margins must be non-negative")
        if not 0 < self.delta_prime < 1:
            raise ValueError("delta_prime must lie in (0, 1)")
        if self.delta < 0:
            raise ValueError("per-test delta must be non-negative")


@dataclass
class OrderRecord:
    order: int
    edges_before: int
    tests: int
    untestable: int
    eps: Optional[float]
    plan: List[float] = field(default_factory=list)


@dataclass
class SkeletonResult:
    graph: UndirectedGraph
    sepsets: SeparationSets
    ledger: LeakageLedger
    ci_test_count: Dict[int, int]
    orders: List[OrderRecord]
    wall_time: float
    mode: str
    truncated: bool = False
    notes: List[str] = field(default_factory=list)

    @property
    def total_tests(self) -> int:
        return sum(self.ci_test_count.values())

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "graph": self.graph.to_dict(),
            "sepsets": self.sepsets.to_list(),
            "ledger": self.ledger.to_dict(),
            "ci_test_count": {str(k): v for k, v in sorted(self.ci_test_count.items())},
            "orders": [asdict(o) for o in self.orders],
            "truncated": self.truncated,
            "notes": list(self.notes),
        }


def dp_ci_decision(f_hat: float, T: float, beta1: float, beta2: float, coin: RngStream) -> Decision:
    """Three-way rule on a perturbed p-value; the band in between is a fair coin."""
    if beta1 < 0 or beta2 < 0:
        raise ValueError("margins must be non-negative")
    if f_hat > T * (1.0 + beta2):
        return Decision.DELETE
    if f_hat < T * (1.0 - beta1):
        return Decision.KEEP
    return Decision.KEEP if coin.uniform() < 0.5 else Decision.DELETE


def naive_test_bound(d: int) -> int:
    return sum(math.comb(d, 2) * math.comb(d - 2, i) for i in range(d - 1))


def uniform_test_budget(epsilon_total: float, d: int, delta_prime: float) -> float:
    """Constant per-test budget that spends ``epsilon_total`` on the naive test bound."""
    counts = [math.comb(d, 2) * math.comb(d - 2, i) for i in range(d - 1)]
    return float(uniform_plan(epsilon_total, counts, delta_prime)[0])


def _last_order(d: int, cfg: SkeletonConfig) -> int:
    last = d - 2
    if cfg.max_order is not None:
        last = min(last, cfg.max_order)
    return last


def _eligible(g: UndirectedGraph, i: int) -> bool:
    return any(len(g.neighbors(a) - {b}) >= i for a, b in g.sorted_edges())


def _run(data: DataMatrix, cfg: SkeletonConfig, mode: str) -> SkeletonResult:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if data.d < 2:
        raise ValueError("need at least two features")
    start = time.perf_counter()
    root = RngStream(cfg.seed)
    private = mode != "nonprivate"

    sample = subsample(data, cfg.q, root.child(_SUBSAMPLE_STREAM)) if private else data
    n, d = sample.n, sample.d
    g = complete_graph(d)
    sepsets = SeparationSets()
    ledger = LeakageLedger(
        epsilon_total=cfg.epsilon_total if private else math.inf,
        delta_total=cfg.delta_total if private else 1.0,
        delta_prime=cfg.delta_prime,
    )
    counts: Dict[int, int] = {}
    orders: List[OrderRecord] = []
    notes: List[str] = []
    truncated = False

    err = ErrorModelParams(
        T=cfg.T,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        c1=cfg.c1,
        c2=cfg.c2,
        delta1=sensitivity_weighted_tau(n, max(3, cfg.plan_stratum or n)),
    )
    eps_uniform = uniform_test_budget(cfg.epsilon_total, d, cfg.delta_prime) if mode == "uniform" else None
    if mode == "curate":
        notes.append("planner sees surviving edge counts e_i, which derive from noisy decisions")

    prev_eps: Optional[float] = None
    for i in range(_last_order(d, cfg) + 1):
        e_i = g.num_edges()
        if e_i == 0 or not _eligible(g, i):
            break

        plan: List[float] = []
        if mode == "curate":
            left = ledger.remaining()
            if left <= 0:
                truncated = True
                break
            budget_plan = opt_budgets(left, e_i, i, d, err, cfg.delta_prime, cap=prev_eps)
            if not budget_plan.feasible or not budget_plan.per_order:
                truncated = True
                break
            plan = budget_plan.per_order
            eps_i = budget_plan.first
        elif mode == "uniform":
            eps_i = eps_uniform
        else:
            eps_i = math.inf

        noise = root.child(_NOISE_STREAM + i)
        coin = root.child(_COIN_STREAM + i)
        spent_before = ledger.epsilon_spent
        t_i = 0
        untestable = 0
        order_truncated = False

        for a, b in g.sorted_edges():
            if order_truncated:
                break
            if not g.has_edge(a, b):
                continue
            for S in adjacent_candidates(g, a, b, i):
                try:
                    res = weighted_tau(sample, a, b, S, max_levels=cfg.max_levels, alternative=cfg.alternative)
                except UntestableError:
                    untestable += 1
                    continue
                if private:
                    cost = order_leakage(t_i + 1, eps_i, cfg.delta_prime)
                    delta_cost = cfg.delta_prime + (t_i + 1) * cfg.delta
                    if (
                        spent_before + cost > ledger.epsilon_total + 1e-9
                        or ledger.delta_spent + delta_cost > ledger.delta_total
                    ):
                        order_truncated = True
                        break
                    f_hat = res.p_value + laplace_noise(res.sensitivity / eps_i, noise)
                    decision = dp_ci_decision(f_hat, cfg.T, cfg.beta1, cfg.beta2, coin)
                else:
                    decision = Decision.DELETE if res.p_value > cfg.T else Decision.KEEP
                t_i += 1
                if decision is Decision.DELETE:
                    g.remove_edge(a, b)
                    sepsets.add(a, b, S)
                    break

        counts[i] = t_i
        if t_i > 0 and mode == "curate":
            prev_eps = eps_i
        orders.append(OrderRecord(i, e_i, t_i, untestable, None if math.isinf(eps_i) else eps_i, plan))
        if private and t_i > 0:
            try:
                ledger.charge_order(i, t_i, eps_i, cfg.delta)
            except BudgetExhausted:
                # the per-test guard above keeps this unreachable
                truncated = True
                break
        if order_truncated:
            truncated = True
            notes.append(f"budget exhausted during order {i}; untested pairs kept")
            break
        if private and ledger.delta_spent >= ledger.delta_total:
            truncated = True
            notes.append(f"delta budget exhausted after order {i}")
            break

    return SkeletonResult(
        graph=g,
        sepsets=sepsets,
        ledger=ledger,
        ci_test_count=counts,
        orders=orders,
        wall_time=time.perf_counter() - start,
        mode=mode,
        truncated=truncated,
        notes=notes,
    )


def curate_skeleton(data: DataMatrix, cfg: SkeletonConfig) -> SkeletonResult:
    return _run(data, cfg, "curate")


def uniform_budget_skeleton(data: DataMatrix, cfg: SkeletonConfig) -> SkeletonResult:
    return _run(data, cfg, "uniform")


def pc_skeleton_nonprivate(data: DataMatrix, cfg: Optional[SkeletonConfig] = None) -> SkeletonResult:
    return _run(data, cfg or SkeletonConfig(), "nonprivate")


def run_skeleton(data: DataMatrix, cfg: SkeletonConfig, mode: str = "curate") -> SkeletonResult:
    return _run(data, cfg, mode)
