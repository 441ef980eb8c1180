import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from privcgd.accountant import (
    BudgetExhausted,
    LeakageLedger,
    charge_iteration,
    order_delta,
    order_leakage,
    remaining_budget,
)
from privcgd.budget import schedule_multiplicative


def test_order_leakage_examples():
    assert order_leakage(0, 0.3, 1e-12) == 0.0
    # 40-digit evaluation of t eps^2 + sqrt(2 ln(1/delta') t eps^2)
    assert order_leakage(10, 0.1, 1e-12) == pytest.approx(2.4507880004767996, rel=1e-14)
    assert order_leakage(1, 0.3, 1.0) == pytest.approx(0.09)


def test_order_delta_examples():
    assert order_delta(0, 0.0, 1e-12) == 1e-12
    assert order_delta(100, 0.0, 1e-12) == 1e-12
    assert order_delta(5, 1e-6, 1e-12) == pytest.approx(5e-6 + 1e-12, rel=1e-15)


@given(st.integers(0, 500), st.floats(0, 5), st.integers(1, 50), st.floats(1e-6, 1.0))
def test_order_leakage_monotone(t, eps, dt, de):
    assert order_leakage(t + dt, eps, 1e-12) >= order_leakage(t, eps, 1e-12)
    assert order_leakage(t, eps + de, 1e-12) >= order_leakage(t, eps, 1e-12)


def test_remaining_budget():
    ledger = LeakageLedger(1.0)
    assert remaining_budget(ledger) == 1.0
    ledger.charge_iteration(0.3)
    ledger.charge_iteration(0.5)
    assert remaining_budget(ledger) == pytest.approx(0.2)
    full = LeakageLedger(1.0)
    full.charge_iteration(1.0)
    assert remaining_budget(full) == 0.0


def test_ten_charges_fit_eleventh_rejected():
    ledger = LeakageLedger(1.0)
    for _ in range(10):
        charge_iteration(ledger, 0.1)
    assert remaining_budget(ledger) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(BudgetExhausted):
        charge_iteration(ledger, 0.1)
    assert len(ledger.entries) == 10


def test_order_charge_rejected_when_it_would_breach():
    ledger = LeakageLedger(3.0)
    ledger.charge_order(0, 10, 0.1)
    with pytest.raises(BudgetExhausted):
        ledger.charge_order(1, 10, 0.1)
    assert ledger.epsilon_spent == pytest.approx(order_leakage(10, 0.1, 1e-12))


def test_delta_cap_enforced():
    ledger = LeakageLedger(10.0, delta_total=1e-6)
    ledger.charge_iteration(0.1, 5e-7)
    with pytest.raises(BudgetExhausted):
        ledger.charge_iteration(0.1, 6e-7)


def test_multiplicative_schedule_fits_ledger():
    sched = schedule_multiplicative(10.0, 0.1)
    ledger = LeakageLedger(10.0)
    for e in sched.budgets:
        ledger.charge_iteration(e)
    assert len(ledger.entries) == sched.iterations
    assert ledger.epsilon_spent <= 10.0


@given(st.lists(st.tuples(st.integers(0, 30), st.floats(0.0, 0.05)), max_size=6), st.floats(0.5, 5))
def test_replay_reproduces_totals(charges, cap):
    ledger = LeakageLedger(cap, delta_total=1.0)
    for k, (t, eps) in enumerate(charges):
        try:
            ledger.charge_order(k, t, eps, 1e-9)
        except BudgetExhausted:
            break
    again = ledger.replay()
    assert again.epsilon_spent == ledger.epsilon_spent
    assert again.delta_spent == ledger.delta_spent
    assert ledger.remaining() >= -1e-9


def test_serialises_infinite_cap_as_null():
    obj = LeakageLedger(math.inf).to_dict()
    assert obj["epsilon_total"] is None
    assert "ln(1/delta')" in obj["formula"]
