"""Privacy-leakage bookkeeping.

Within one CI-test order every test shares the same budget, so the order's
leakage is composed with the advanced-composition form used by the
constraint-based pipeline::

    eps_order = t * eps**2 + sqrt(2 * ln(1/delta') * t * eps**2)
    delta_order = delta' + t * delta

Orders (and score-based iterations) are then summed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

COMPOSITION_FORMULA = "order: t*eps^2 + sqrt(2 ln(1/delta') t eps^2); across orders: sum"
SLACK = 1e-9


class BudgetExhausted(RuntimeError):
    pass


def order_leakage(t: int, eps: float, delta_prime: float) -> float:
    if t < 0 or eps < 0:
        raise ValueError("test count and epsilon must be non-negative")
    if not 0 < delta_prime <= 1:
        raise ValueError(f"delta' must lie in (0, 1], got {delta_prime}")
    if t == 0:
        return 0.0
    sq = t * eps * eps
    return sq + math.sqrt(2.0 * math.log(1.0 / delta_prime) * sq)


def order_delta(t: int, delta: float, delta_prime: float) -> float:
    return delta_prime + t * delta


@dataclass
class LedgerEntry:
    index: int
    kind: str
    t: int
    eps: float
    delta: float
    eps_composed: float
    delta_composed: float


@dataclass
class LeakageLedger:
    """Append-only record of privacy spend with enforced caps."""

    epsilon_total: float
    delta_total: float = 1.0
    delta_prime: float = 1e-12
    entries: List[LedgerEntry] = field(default_factory=list)

    @property
    def epsilon_spent(self) -> float:
        return math.fsum(e.eps_composed for e in self.entries)

    @property
    def delta_spent(self) -> float:
        return math.fsum(e.delta_composed for e in self.entries)

    def remaining(self) -> float:
        return self.epsilon_total - self.epsilon_spent

    def fits(self, eps: float, delta: float = 0.0) -> bool:
        return (
            self.epsilon_spent + eps <= self.epsilon_total + SLACK
            and self.delta_spent + delta <= self.delta_total
        )

    def _append(self, entry: LedgerEntry) -> LedgerEntry:
        if not self.fits(entry.eps_composed, entry.delta_composed):
            raise BudgetExhausted(
                f"charge of eps={entry.eps_composed:.6g}, delta={entry.delta_composed:.3g} "
                f"exceeds remaining eps={self.remaining():.6g}"
            )
        self.entries.append(entry)
        return entry

    def charge_order(self, order: int, t: int, eps: float, delta: float = 0.0) -> LedgerEntry:
        return self._append(
            LedgerEntry(
                index=order,
                kind="order",
                t=t,
                eps=eps,
                delta=delta,
                eps_composed=order_leakage(t, eps, self.delta_prime),
                delta_composed=order_delta(t, delta, self.delta_prime),
            )
        )

    def charge_iteration(self, eps_k: float, delta: float = 0.0, kind: str = "iteration") -> LedgerEntry:
        if not eps_k > 0:
            raise ValueError(f"iteration budget must be positive, got {eps_k}")
        index = sum(1 for e in self.entries if e.kind == kind)
        return self._append(
            LedgerEntry(index=index, kind=kind, t=1, eps=eps_k, delta=delta, eps_composed=eps_k, delta_composed=delta)
        )

    def replay(self) -> "LeakageLedger":
        """Rebuild a fresh ledger from this one's raw charges."""
        fresh = LeakageLedger(self.epsilon_total, self.delta_total, self.delta_prime)
        for e in self.entries:
            if e.kind == "order":
                fresh.charge_order(e.index, e.t, e.eps, e.delta)
            else:
                fresh.charge_iteration(e.eps, e.delta, kind=e.kind)
        return fresh

    def to_dict(self) -> dict:
        return {
            "formula": COMPOSITION_FORMULA,
            "epsilon_total": _num(self.epsilon_total),
            "delta_total": self.delta_total,
            "delta_prime": self.delta_prime,
            "epsilon_spent": self.epsilon_spent,
            "delta_spent": self.delta_spent,
            "entries": [asdict(e) for e in self.entries],
        }


def _num(x: float) -> Optional[float]:
    return None if math.isinf(x) else x


def remaining_budget(ledger: LeakageLedger) -> float:
    """Budget left for later orders; raises once the cap has been crossed."""
    left = ledger.remaining()
    if left < -SLACK:
        raise BudgetExhausted(f"ledger overspent by {-left:.3g}")
    return max(left, 0.0)


def charge_iteration(ledger: LeakageLedger, eps_k: float, delta: float = 0.0) -> LeakageLedger:
    ledger.charge_iteration(eps_k, delta)
    return ledger
