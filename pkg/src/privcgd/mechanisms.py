"""Noise mechanisms, analytic Gaussian calibration, clipping and sub-sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy import special

from .data import DataMatrix


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float = 0.0
    sensitivity: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")
        if not self.sensitivity > 0:
            raise ValueError(f"sensitivity must be positive, got {self.sensitivity}")

    @property
    def laplace_scale(self) -> float:
        return self.sensitivity / self.epsilon


@dataclass
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream)``.

    Distinct stream ids give statistically independent generators, so
    parallel callers never share draws.
    """

    seed: int = 0
    stream: int = 0
    _gen: np.random.Generator = field(default=None, init=False, repr=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=(int(self.stream),))
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def uniform(self, size=None):
        return self.generator.random(size)

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)


def laplace_noise(scale: float, rng: RngStream, size=None):
    """Laplace draws by inverse CDF; exactly one uniform per sample."""
    u = rng.uniform(size) - 0.5
    tail = np.maximum(1.0 - 2.0 * np.abs(u), np.finfo(float).tiny)
    out = -scale * np.sign(u) * np.log(tail)
    return float(out) if size is None else out


def laplace_perturb(value: float, params: PrivacyParams, rng: RngStream) -> float:
    if math.isinf(params.epsilon):
        return float(value)
    return float(value) + laplace_noise(params.laplace_scale, rng)


def _log_ndtr(x: float) -> float:
    return float(special.log_ndtr(x))


def gaussian_dp_delta(sigma: float, epsilon: float, delta2: float) -> float:
    """Smallest delta achieved by Gaussian noise ``sigma`` at level epsilon.

    ``Phi(D/(2s) - e s/D) - exp(e) Phi(-D/(2s) - e s/D)``, evaluated in log
    space so that large epsilon does not overflow.
    """
    r = delta2 / sigma
    a = r / 2.0 - epsilon / r
    b = -r / 2.0 - epsilon / r
    log_first = _log_ndtr(a)
    log_second = epsilon + _log_ndtr(b)
    if log_second >= log_first:
        return 0.0
    return float(math.exp(log_first) * -math.expm1(log_second - log_first))


def classical_gaussian_sigma(delta2: float, epsilon: float, delta: float) -> float:
    return delta2 * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def analytic_gaussian_sigma(delta2: float, epsilon: float, delta: float, max_steps: int = 200) -> float:
    """Minimal Gaussian std that makes output perturbation (epsilon, delta)-DP.

    Bisection on ``sigma`` (the privacy curve is monotone decreasing in it),
    stopping once the curve is within ``1e-9 * delta`` of the target or the
    bracket collapses to machine precision. Returns the feasible end of the
    bracket.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not delta2 > 0:
        raise ValueError(f"sensitivity must be positive, got {delta2}")
    if math.isinf(epsilon):
        return 0.0

    tol = 1e-9 * delta
    lo = 1e-6 * delta2
    hi = 1e3 * classical_gaussian_sigma(delta2, epsilon, delta)
    for _ in range(200):
        if gaussian_dp_delta(lo, epsilon, delta2) > delta:
            break
        lo /= 10.0
    else:
        raise CalibrationError("could not bracket sigma from below")
    for _ in range(200):
        if gaussian_dp_delta(hi, epsilon, delta2) <= delta:
            break
        hi *= 10.0
    else:
        raise CalibrationError("could not bracket sigma from above")

    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return hi
        val = gaussian_dp_delta(mid, epsilon, delta2)
        if val <= delta:
            hi = mid
            if delta - val <= tol:
                return hi
        else:
            lo = mid
    if delta - gaussian_dp_delta(hi, epsilon, delta2) <= tol:
        return hi
    raise CalibrationError(f"bisection did not converge in {max_steps} steps")


def clip_sensitivity(d: int, s: float, n: int) -> float:
    """Refined l2-sensitivity of the averaged clipped gradient."""
    return min(d * s / n, math.sqrt(d * (d - 1)) * s / n)


def clip_matrix(contributions: np.ndarray, s: float) -> Tuple[np.ndarray, float]:
    """Clip per-sample ``d x d`` contributions to Frobenius norm ``s`` and average.

    Parameters
    ----------
    contributions : ndarray, shape (n, d, d)
    s : float
        Clipping threshold.

    Returns
    -------
    mean : ndarray, shape (d, d)
        Average of the clipped contributions.
    sensitivity : float
        ``min(d s / n, sqrt(d (d - 1)) s / n)``.
    """
    if not s > 0:
        raise ValueError(f"clip threshold must be positive, got {s}")
    contributions = np.asarray(contributions, dtype=float)
    n, d, _ = contributions.shape
    norms = np.sqrt(np.einsum("kij,kij->k", contributions, contributions))
    scale = np.ones_like(norms)
    big = norms > s
    scale[big] = s / norms[big]
    mean = np.einsum("k,kij->ij", scale, contributions) / n
    return mean, clip_sensitivity(d, s, n)


def gaussian_perturb_matrix(M: np.ndarray, sigma: float, rng: RngStream) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    M = np.asarray(M, dtype=float)
    if sigma == 0:
        return M.copy()
    return M + sigma * rng.generator.standard_normal(M.shape)


def subsample(data: DataMatrix, q: float, rng: RngStream) -> DataMatrix:
    """Draw ``ceil(q n)`` rows without replacement; ``q = 1`` is a no-op."""
    if not 0 < q <= 1:
        raise ValueError(f"sub-sampling rate must lie in (0, 1], got {q}")
    if q == 1:
        return data
    m = math.ceil(q * data.n)
    rows = np.sort(rng.generator.choice(data.n, size=m, replace=False))
    return data.take(rows)


def amplified_epsilon(epsilon: float, q: float) -> float:
    """Privacy amplification by sub-sampling: ``ln(1 + q (e^eps - 1))``."""
    if not 0 < q <= 1:
        raise ValueError(f"sub-sampling rate must lie in (0, 1], got {q}")
    return math.log1p(q * math.expm1(epsilon))
