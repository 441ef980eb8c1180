"""Stratified Kendall's tau conditional-independence test.

Rows are split by the joint level of the conditioning columns, tau-b is
computed inside every stratum, and the per-stratum values are pooled with
inverse-variance weights ``w = 9 m (m - 1) / (2 (2 m + 5))``::

    tau = sum(w_k * tau_k) / sqrt(sum(w_k))

which is approximately standard normal under independence. The p-value
is what the private pipelines perturb, so this module also provides the
l1-sensitivity bound of that p-value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .data import DataMatrix

MIN_STRATUM = 3


class DegenerateInputError(ValueError):
    pass


class UntestableError(ValueError):
    """Every stratum was too small or constant; no statistic is available."""


@dataclass(frozen=True)
class CITestResult:
    tau_pooled: float
    p_value: float
    sensitivity: float
    bins: int
    min_bin: int
    dropped: int = 0


def kendall_tau(x, y) -> float:
    """Tie-corrected Kendall tau-b of two paired samples."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateInputError("x and y must be 1-D and of equal length")
    if len(x) < 2:
        raise DegenerateInputError(f"need at least 2 pairs, got {len(x)}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInputError("zero variance in x or y")
    tau = stats.kendalltau(x, y, variant="b").statistic
    return float(tau)


def tau_weight(m: int) -> float:
    return 9.0 * m * (m - 1) / (2.0 * (2.0 * m + 5.0))


def normal_cdf(z: float) -> float:
    return 0.5 * special.erfc(-z / math.sqrt(2.0))


def p_value_from_z(z: float, alternative: str = "two-sided") -> float:
    if alternative == "two-sided":
        p = special.erfc(abs(z) / math.sqrt(2.0))
    elif alternative == "greater":
        p = 0.5 * special.erfc(z / math.sqrt(2.0))
    elif alternative == "less":
        p = 0.5 * special.erfc(-z / math.sqrt(2.0))
    else:
        raise ValueError(f"unknown alternative {alternative!r}")
    return float(min(1.0, max(0.0, p)))


def sensitivity_weighted_tau(n: int, n_i: int) -> float:
    """l1-sensitivity bound of the pooled-tau p-value.

    ``2/sqrt(n pi) * (|9 m (m+1) / (2 (2(m+1)+5))| - |9 m^2 / (2 (2m+5))|) / (m-1)``
    with ``m`` the size of the stratum touched by the neighbouring record.
    Callers pass the smallest stratum used, which is the worst case.
    """
    if n_i < 2:
        raise DegenerateInputError(f"stratum size must be >= 2, got {n_i}")
    if n < 2:
        raise DegenerateInputError(f"sample size must be >= 2, got {n}")
    grown = abs(9.0 * n_i * (n_i + 1) / (2.0 * (2.0 * (n_i + 1) + 5.0)))
    current = abs(9.0 * n_i**2 / (2.0 * (2.0 * n_i + 5.0)))
    return 2.0 / math.sqrt(n * math.pi) * (grown - current) / (n_i - 1)


def _strata(codes: np.ndarray) -> list:
    if codes.shape[1] == 0:
        return [np.arange(codes.shape[0])]
    if codes.shape[1] == 1:
        key = codes[:, 0]
    else:
        _, key = np.unique(codes, axis=0, return_inverse=True)
        key = key.ravel()
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    cuts = np.flatnonzero(np.diff(sorted_key)) + 1
    return np.split(order, cuts)


def _residuals(v: np.ndarray, Z: np.ndarray) -> np.ndarray:
    A = np.column_stack([np.ones(len(v)), Z])
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    return v - A @ coef


def weighted_tau(
    data: DataMatrix,
    a: int,
    b: int,
    S: Sequence[int] = (),
    *,
    max_levels: Optional[int] = None,
    alternative: str = "two-sided",
) -> CITestResult:
    """Test ``a _||_ b | S`` with the stratified, weighted Kendall statistic.

    Rows are split by the joint value of the conditioning columns. With
    ``max_levels`` set, conditioning columns having more distinct values
    than that are treated as continuous: they do not split rows but are
    regressed out of ``a`` and ``b`` (least squares with intercept) inside
    each stratum before tau is taken.

    Strata with fewer than three usable rows, or constant in ``a`` or
    ``b``, are dropped and counted in ``dropped``.

    Raises
    ------
    UntestableError
        If every stratum is dropped.
    """
    S = tuple(S)
    if a == b:
        raise ValueError("a and b must differ")
    if a in S or b in S:
        raise ValueError("conditioning set must exclude a and b")
    x_all = data.values[:, a]
    y_all = data.values[:, b]
    if max_levels is None:
        discrete, continuous = list(S), []
    else:
        levels = data.level_counts()
        discrete = [c for c in S if levels[c] <= max_levels]
        continuous = [c for c in S if levels[c] > max_levels]
    codes = data.stratum_codes()[:, discrete]
    need = MIN_STRATUM + len(continuous)

    num = 0.0
    wsum = 0.0
    used = 0
    dropped = 0
    min_bin = None
    for rows in _strata(codes):
        m = len(rows)
        if m < need:
            dropped += 1
            continue
        x = x_all[rows]
        y = y_all[rows]
        if continuous:
            Z = data.values[np.ix_(rows, continuous)]
            x = _residuals(x, Z)
            y = _residuals(y, Z)
        if np.ptp(x) <= 1e-12 * (1 + np.abs(x).max()) or np.ptp(y) <= 1e-12 * (1 + np.abs(y).max()):
            dropped += 1
            continue
        tau_k = stats.kendalltau(x, y, variant="b").statistic
        if not np.isfinite(tau_k):
            dropped += 1
            continue
        w = tau_weight(m)
        num += w * tau_k
        wsum += w
        used += 1
        min_bin = m if min_bin is None else min(min_bin, m)

    if used == 0:
        raise UntestableError(f"no usable stratum for ({a}, {b} | {list(S)})")
    z = num / math.sqrt(wsum)
    return CITestResult(
        tau_pooled=float(z),
        p_value=p_value_from_z(z, alternative),
        sensitivity=sensitivity_weighted_tau(data.n, min_bin),
        bins=used,
        min_bin=int(min_bin),
        dropped=dropped,
    )
