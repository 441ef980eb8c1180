"""Privacy-budget planning.

Two planners live here:

* :func:`opt_budgets` splits the remaining budget of the constraint-based
  pipeline across the CI-test orders still to run, minimising a surrogate
  for the probability of recovering the wrong skeleton.
* ``schedule_*`` give per-iteration budget sequences (additive, exponential,
  multiplicative growth) for the score-based pipeline together with the
  number of iterations a total budget affords.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import optimize

from .accountant import order_leakage


@dataclass(frozen=True)
class ErrorModelParams:
    T: float = 0.05
    beta1: float = 0.1
    beta2: float = 0.1
    delta1: float = 1e-3
    c1: float = 0.5
    c2: float = 0.5

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("threshold T must be positive")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("margins must be non-negative")
        if not (0 < self.c1 < 1 and 0 < self.c2 < 1):
            raise ValueError("c1 and c2 must lie in (0, 1)")
        if not self.delta1 > 0:
            raise ValueError("sensitivity must be positive")


def q1(eps, p: ErrorModelParams):
    """Bound on keeping an edge the noiseless test would delete."""
    return p.c1 / 2.0 + 0.5 * np.exp(-p.T * p.beta1 * np.asarray(eps, dtype=float) / p.delta1)


def q2(eps, p: ErrorModelParams):
    """Bound on deleting an edge the noiseless test would keep."""
    return p.c2 / 2.0 + 0.5 * np.exp(-p.T * p.beta2 * np.asarray(eps, dtype=float) / p.delta1)


def surrogate_objective(eps_vec, p: ErrorModelParams) -> float:
    eps_vec = np.asarray(eps_vec, dtype=float)
    return float(np.prod(q1(eps_vec, p)) + (1.0 - np.prod(1.0 - q2(eps_vec, p))))


@dataclass
class BudgetPlan:
    per_order: List[float] = field(default_factory=list)
    start_order: int = 0
    predicted_counts: List[float] = field(default_factory=list)
    predicted_leakage: float = 0.0
    objective: Optional[float] = None
    feasible: bool = True
    solver: str = ""

    @property
    def first(self) -> float:
        return self.per_order[0]


def predicted_test_counts(e_i: int, i: int, d: int) -> np.ndarray:
    """``e_i * C(d-2, j)`` for every remaining order ``j = i..d-2``."""
    return np.array([e_i * math.comb(d - 2, j) for j in range(i, d - 1)], dtype=float)


def planned_leakage(eps_vec, counts, delta_prime: float) -> float:
    return math.fsum(order_leakage(t, e, delta_prime) if t > 0 else 0.0 for t, e in zip(counts, eps_vec))


def _scale_to_budget(eps_vec: np.ndarray, counts: np.ndarray, budget: float, delta_prime: float) -> np.ndarray:
    """Uniformly rescale ``eps_vec`` so its planned leakage equals ``budget``.

    Leakage of ``c * eps`` is ``c^2 A + c B``; solve that quadratic for ``c``.
    """
    log_term = 2.0 * math.log(1.0 / delta_prime)
    A = float(np.sum(counts * eps_vec**2))
    B = float(np.sum(eps_vec * np.sqrt(log_term * counts)))
    if A + B == 0:
        return eps_vec
    if A == 0:
        c = budget / B
    else:
        c = 2.0 * budget / (B + math.sqrt(B * B + 4.0 * A * budget))
    return eps_vec * c


def uniform_plan(budget: float, counts, delta_prime: float) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    return _scale_to_budget(np.ones_like(counts), counts, budget, delta_prime)


def opt_budgets(
    eps_remaining: float,
    e_i: int,
    i: int,
    d: int,
    p: ErrorModelParams,
    delta_prime: float = 1e-12,
    cap: Optional[float] = None,
) -> BudgetPlan:
    """Per-order budgets ``eps_i >= ... >= eps_{d-2}`` for the remaining orders.

    Minimises the error surrogate subject to the composed leakage of all
    remaining orders fitting in ``eps_remaining``. Future test counts are
    predicted from the current edge count ``e_i``.

    The problem is solved with SLSQP from the uniform feasible plan; the
    result is projected onto the monotone cone and back onto the budget
    constraint, and the uniform plan is kept if the solver fails to beat it.

    ``cap`` bounds every entry from above. Passing the budget used by the
    previous order keeps the realised per-order budgets non-increasing
    across re-plans.
    """
    if not 0 <= i <= d - 2:
        raise ValueError(f"order {i} outside [0, {d - 2}]")
    if e_i == 0:
        return BudgetPlan(start_order=i, solver="empty")
    if not eps_remaining > 0:
        return BudgetPlan(start_order=i, feasible=False, solver="infeasible")

    counts = predicted_test_counts(e_i, i, d)
    start = uniform_plan(eps_remaining, counts, delta_prime)
    if cap is not None:
        start = np.minimum(start, cap)
    best = start
    best_obj = surrogate_objective(start, p)
    solver = "uniform"

    if len(counts) > 1:
        scale = float(start[0])
        log_term = 2.0 * math.log(1.0 / delta_prime)

        def objective(x):
            return surrogate_objective(x * scale, p)

        def leakage_slack(x):
            e = x * scale
            return (eps_remaining - np.sum(counts * e**2 + e * np.sqrt(log_term * counts))) / eps_remaining

        m = len(counts)
        diff = np.zeros((m - 1, m))
        diff[np.arange(m - 1), np.arange(m - 1)] = 1.0
        diff[np.arange(m - 1), np.arange(1, m)] = -1.0
        cons = [
            {"type": "ineq", "fun": leakage_slack},
            {"type": "ineq", "fun": lambda x: diff @ x, "jac": lambda x: diff},
        ]
        res = optimize.minimize(
            objective,
            np.ones(m),
            method="SLSQP",
            bounds=[(0.0, None if cap is None else cap / scale)] * m,
            constraints=cons,
            options={"ftol": 1e-14, "maxiter": 500},
        )
        x = np.maximum(np.asarray(res.x, dtype=float), 0.0) * scale
        if np.all(np.isfinite(x)) and np.any(x > 0):
            if cap is not None:
                x = np.minimum(x, cap)
            x = np.minimum.accumulate(x)
            if planned_leakage(x, counts, delta_prime) > eps_remaining:
                x = _scale_to_budget(x, counts, eps_remaining, delta_prime)
                x = np.minimum.accumulate(x)
            obj = surrogate_objective(x, p)
            if obj < best_obj:
                best, best_obj, solver = x, obj, "slsqp"

    return BudgetPlan(
        per_order=[float(v) for v in best],
        start_order=i,
        predicted_counts=[float(c) for c in counts],
        predicted_leakage=planned_leakage(best, counts, delta_prime),
        objective=best_obj,
        feasible=True,
        solver=solver,
    )


# --- iteration schedules -------------------------------------------------


@dataclass
class Schedule:
    kind: str
    iterations: int
    closed_form: float
    budgets: List[float]

    @property
    def total(self) -> float:
        return math.fsum(self.budgets)


def additive_budgets(eps0: float, I: int) -> List[float]:
    return [eps0 * (1.0 + k / I) for k in range(I)]


def exponential_budgets(eps0: float, I: int) -> List[float]:
    return [eps0 * math.exp(k / I) for k in range(I)]


def multiplicative_budgets(eps0: float, I: int) -> List[float]:
    return [eps0 ** (1.0 + k / I) for k in range(I)]


def iterations_additive(eps_total: float, eps0: float) -> float:
    return (eps_total + eps0 / 2.0) / (eps0 + eps0 / 2.0)


def iterations_exponential(eps_total: float, eps0: float) -> float:
    return eps_total / (eps0 * math.e)


def iterations_multiplicative(eps_total: float, eps0: float) -> float:
    if eps0 == 1:
        return math.floor(eps_total)
    if eps0 < 1:
        return math.log(eps0) / math.log(1.0 - eps0 * (1.0 - eps0) / eps_total)
    return math.log(eps0) / math.log(1.0 + eps0 * (eps0 - 1.0) / eps_total)


_SCHEDULES = {
    "additive": (iterations_additive, additive_budgets),
    "exponential": (iterations_exponential, exponential_budgets),
    "multiplicative": (iterations_multiplicative, multiplicative_budgets),
}


def _schedule(kind: str, eps_total: float, eps0: float) -> Schedule:
    if not eps0 > 0:
        raise ValueError(f"initial budget must be positive, got {eps0}")
    if eps0 >= eps_total:
        return Schedule(kind, 0, 0.0, [])
    closed, budgets_of = _SCHEDULES[kind]
    if kind == "multiplicative" and eps0 == 1:
        I = int(math.floor(eps_total))
        return Schedule(kind, I, float(I), [1.0] * I)
    cf = closed(eps_total, eps0)
    I = max(int(math.floor(cf + 1e-9)), 0)
    # floating error at an exact integer must not push the schedule over budget
    while I > 0 and math.fsum(budgets_of(eps0, I)) > eps_total * (1 + 1e-12):
        I -= 1
    return Schedule(kind, I, cf, budgets_of(eps0, I) if I else [])


def schedule_additive(eps_total: float, eps0: float) -> Schedule:
    return _schedule("additive", eps_total, eps0)


def schedule_exponential(eps_total: float, eps0: float) -> Schedule:
    return _schedule("exponential", eps_total, eps0)


def schedule_multiplicative(eps_total: float, eps0: float) -> Schedule:
    return _schedule("multiplicative", eps_total, eps0)

