"""Score-based DAG learning with adaptively budgeted noisy gradients.

The weighted adjacency ``W`` of a linear SEM is fitted by minimising::

    loss(W) + lam * |W|_1 + rho/2 * h(W)^2 + alpha * h(W)
    loss(W) = 1/(2n) * ||X - X W||_F^2
    h(W)    = tr(exp(W * W)) - d

inside an augmented-Lagrangian loop that drives ``h`` to zero. Only the
data term of the gradient touches the sample; it is built from per-sample
contributions clipped to Frobenius norm ``s`` and released with Gaussian
noise calibrated by the analytic Gaussian mechanism. Iteration ``k`` spends
``eps0 ** (1 + k / (I - 1))``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, List, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from .accountant import BudgetExhausted, LeakageLedger
from .budget import schedule_multiplicative
from .data import DataMatrix
from .mechanisms import (
    RngStream,
    analytic_gaussian_sigma,
    clip_sensitivity,
    gaussian_perturb_matrix,
    laplace_noise,
)

_GRAD_STREAM = 3000
_LINESEARCH_STREAM = 500_000


def _X(data) -> np.ndarray:
    return data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=float)


def loss(W: np.ndarray, data) -> float:
    X = _X(data)
    R = X - X @ W
    return 0.5 / X.shape[0] * float(np.sum(R * R))


def acyclicity(W: np.ndarray) -> float:
    W = np.asarray(W, dtype=float)
    return float(np.trace(expm(W * W)) - W.shape[0])


def grad_acyclicity(W: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    return expm(W * W).T * 2.0 * W


def is_dag(W: np.ndarray) -> bool:
    """Cycle check on the support of ``W`` (edge ``i -> j`` when ``W[i, j] != 0``)."""
    A = np.asarray(W) != 0
    d = A.shape[0]
    indeg = A.sum(axis=0).astype(int)
    ready = [v for v in range(d) if indeg[v] == 0]
    seen = 0
    while ready:
        v = ready.pop()
        seen += 1
        for c in np.flatnonzero(A[v]):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(int(c))
    return seen == d


@dataclass
class ScoreState:
    W: np.ndarray
    alpha: float = 0.0
    rho: float = 1.0
    lam: float = 0.0
    ledger: Optional[LeakageLedger] = None
    iterations: int = 0
    memory: Deque[Tuple[np.ndarray, np.ndarray]] = field(default_factory=lambda: deque(maxlen=10))

    @classmethod
    def zeros(cls, d: int, **kw) -> "ScoreState":
        return cls(W=np.zeros((d, d)), **kw)


def score_objective(state: ScoreState, data) -> float:
    h = acyclicity(state.W)
    return loss(state.W, data) + state.lam * float(np.abs(state.W).sum()) + 0.5 * state.rho * h * h + state.alpha * h


def per_sample_contributions(W: np.ndarray, data) -> np.ndarray:
    """Row-wise data-term gradients ``x_r^T (x_r W - x_r)``, diagonal zeroed; shape (n, d, d)."""
    X = _X(data)
    R = X @ W - X
    G = X[:, :, None] * R[:, None, :]
    idx = np.arange(X.shape[1])
    G[:, idx, idx] = 0.0
    return G


def clipped_data_gradient(W: np.ndarray, data, s: float) -> np.ndarray:
    """Mean of per-sample contributions clipped to Frobenius norm ``s``.

    Same result as :func:`privcgd.mechanisms.clip_matrix` on
    :func:`per_sample_contributions`, without materialising the (n, d, d)
    array: each contribution is a rank-one outer product minus its diagonal.
    """
    X = _X(data)
    n = X.shape[0]
    R = X @ W - X
    sq = np.sum(X * X, axis=1) * np.sum(R * R, axis=1) - np.sum((X * R) ** 2, axis=1)
    norms = np.sqrt(np.maximum(sq, 0.0))
    scale = np.ones_like(norms)
    big = norms > s
    scale[big] = s / norms[big]
    G = (X * scale[:, None]).T @ R / n
    np.fill_diagonal(G, 0.0)
    return G


def penalty_gradient(state: ScoreState) -> np.ndarray:
    """Data-free part: augmented-Lagrangian terms plus the l1 subgradient (sign(0) = 0)."""
    h = acyclicity(state.W)
    G = (state.rho * h + state.alpha) * grad_acyclicity(state.W) + state.lam * np.sign(state.W)
    np.fill_diagonal(G, 0.0)
    return G


def penalty_curvature(state: ScoreState, direction: np.ndarray, tau: float = 1e-6) -> float:
    """Curvature of the data-free terms along ``direction`` (finite difference).

    Costs no privacy; used to scale the first quasi-Newton step so that a
    large ``rho`` does not turn a unit step into an overshoot.
    """
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        return 0.0
    u = direction / norm
    shifted = ScoreState(state.W + tau * u, state.alpha, state.rho, 0.0)
    base = ScoreState(state.W, state.alpha, state.rho, 0.0)
    return max(0.0, float(np.sum((penalty_gradient(shifted) - penalty_gradient(base)) * u)) / tau)


def grad_objective(state: ScoreState, data) -> np.ndarray:
    X = _X(data)
    G = X.T @ (X @ state.W - X) / X.shape[0] + penalty_gradient(state)
    np.fill_diagonal(G, 0.0)
    return G


def lbfgs_direction(grad: np.ndarray, memory, h0: float = 1.0) -> np.ndarray:
    """Two-loop recursion: ``-H grad`` from stored ``(s, y)`` pairs, oldest first.

    ``h0`` scales the initial inverse Hessian when the memory is empty;
    otherwise the usual ``s'y / y'y`` scaling of the newest pair is used.
    """
    q = grad.ravel().copy()
    pairs = [(s.ravel(), y.ravel()) for s, y in memory]
    alphas = []
    for s, y in reversed(pairs):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        alphas.append((rho, a))
    if pairs:
        s, y = pairs[-1]
        q *= float(s @ y) / float(y @ y)
    else:
        q *= h0
    for (s, y), (rho, a) in zip(pairs, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q.reshape(grad.shape)


def backtracking_step(
    f: Callable[[float], float],
    f0: float,
    slope: float,
    eta0: float = 1.0,
    c: float = 1e-4,
    shrink: float = 0.5,
    max_backtracks: int = 20,
    eta_min: float = 1e-8,
) -> float:
    """Armijo backtracking; ``f(eta)`` is the objective along the search ray."""
    eta = eta0
    for _ in range(max_backtracks + 1):
        val = f(eta)
        if math.isfinite(val) and val <= f0 + c * eta * slope:
            return eta
        eta *= shrink
    return eta_min


@dataclass
class LineSearchConfig:
    mode: str = "fixed"
    eta0: float = 1.0
    eta_min: float = 1e-8
    budget_fraction: float = 0.1
    loss_clip: float = 1.0
    max_step: float = 1.0


def _noisy_objective(W: np.ndarray, state: ScoreState, X: np.ndarray, clip: float, scale: float, rng: RngStream) -> float:
    R = X - X @ W
    per_row = np.minimum(0.5 * np.sum(R * R, axis=1), clip)
    h = acyclicity(W)
    value = float(per_row.mean()) + state.lam * float(np.abs(W).sum()) + 0.5 * state.rho * h * h + state.alpha * h
    return value + laplace_noise(scale, rng)


def private_line_search(
    direction: np.ndarray,
    grad: np.ndarray,
    state: ScoreState,
    data,
    cfg: LineSearchConfig,
    eps_k: float,
    rng: Optional[RngStream] = None,
) -> float:
    """Step size along ``direction``.

    ``fixed`` uses ``eta0 / (1 + ||grad||_F)``: it reads only the already
    released noisy gradient and costs nothing. ``noisy-armijo`` backtracks
    on objective values whose per-row loss is clipped at ``loss_clip`` and
    perturbed with Laplace noise; every evaluation is charged
    ``budget_fraction * eps_k`` to the ledger.
    """
    if not np.all(np.isfinite(direction)):
        raise ValueError("search direction is not finite")
    if cfg.mode == "fixed":
        return cfg.eta0 / (1.0 + float(np.linalg.norm(grad)))
    if cfg.mode not in ("noisy", "noisy-armijo"):
        raise ValueError(f"unknown line-search mode {cfg.mode!r}")

    X = _X(data)
    eps_eval = cfg.budget_fraction * eps_k
    scale = 0.0 if math.isinf(eps_eval) else (cfg.loss_clip / X.shape[0]) / eps_eval
    rng = rng or RngStream()

    def evaluate(W: np.ndarray) -> float:
        if state.ledger is not None:
            state.ledger.charge_iteration(eps_eval, kind="linesearch")
        return _noisy_objective(W, state, X, cfg.loss_clip, scale, rng)

    f0 = evaluate(state.W)
    slope = float(np.sum(grad * direction))
    return backtracking_step(lambda eta: evaluate(state.W + eta * direction), f0, slope, cfg.eta0, eta_min=cfg.eta_min)


@dataclass
class MinimizeResult:
    W: np.ndarray
    budgets: List[float]
    sigmas: List[float]
    steps: List[float]
    truncated: bool = False


def iteration_budgets(eps0: float, I: int) -> List[float]:
    return [eps0 ** (1.0 + k / (I - 1)) for k in range(I)]


def adaptive_priv_minimize(
    data,
    eps0: float,
    delta: float,
    I: int,
    s: float,
    state: ScoreState,
    *,
    linesearch: Optional[LineSearchConfig] = None,
    rng: Optional[RngStream] = None,
) -> MinimizeResult:
    """Run ``I`` quasi-Newton steps on privately released gradients.

    The gradient used at step ``k`` is clipped, perturbed with
    ``N(0, sigma_k^2)`` where ``sigma_k`` is calibrated to budget
    ``eps_k = eps0 ** (1 + k/(I-1))`` and ``delta``, and has its diagonal
    zeroed. Each release is charged to ``state.ledger``; when a charge is
    refused the current ``W`` is returned with ``truncated`` set.
    """
    if I < 2:
        raise ValueError("need at least two iterations")
    if not eps0 > 0:
        raise ValueError("initial budget must be positive")
    X = _X(data)
    n, d = X.shape
    linesearch = linesearch or LineSearchConfig()
    rng = rng or RngStream()
    sensitivity = clip_sensitivity(d, s, n)
    budgets = iteration_budgets(eps0, I)
    charged: List[float] = []
    sigmas: List[float] = []
    steps: List[float] = []

    def release(k: int) -> Optional[np.ndarray]:
        if state.ledger is not None:
            try:
                state.ledger.charge_iteration(budgets[k], delta)
            except BudgetExhausted:
                return None
        charged.append(budgets[k])
        sigma = analytic_gaussian_sigma(sensitivity, budgets[k], delta)
        sigmas.append(sigma)
        noisy = gaussian_perturb_matrix(clipped_data_gradient(state.W, X, s), sigma, rng.child(_GRAD_STREAM + k))
        G = noisy + penalty_gradient(state)
        np.fill_diagonal(G, 0.0)
        return G

    grad = release(0)
    if grad is None:
        return MinimizeResult(state.W.copy(), charged, sigmas, steps, truncated=True)
    truncated = False
    for k in range(I):
        h0 = 1.0 / (1.0 + penalty_curvature(state, grad)) if not state.memory else 1.0
        p = lbfgs_direction(grad, state.memory, h0)
        np.fill_diagonal(p, 0.0)
        if not np.all(np.isfinite(p)) or float(np.sum(p * grad)) >= 0.0:
            # curvature memory built from noisy gradients went bad; restart
            state.memory.clear()
            p = -grad / (1.0 + penalty_curvature(state, grad))
        eta = private_line_search(p, grad, state, X, linesearch, budgets[k], rng.child(_LINESEARCH_STREAM + k))
        # trust cap: quasi-Newton steps on noisy curvature can be wild
        eta = min(eta, linesearch.max_step / max(float(np.linalg.norm(p)), 1e-300))
        for _ in range(30):
            W_new = state.W + eta * p
            # only the data-free terms can overflow for finite W; checking
            # them keeps this guard free of data access
            h_new = acyclicity(W_new) if np.all(np.isfinite(W_new)) else math.inf
            if math.isfinite(0.5 * state.rho * h_new * h_new + state.alpha * h_new):
                break
            eta *= 0.5
        else:
            break
        steps.append(eta)
        W_old = state.W
        state.W = W_new
        state.iterations += 1
        if k < I - 1:
            new_grad = release(k + 1)
            if new_grad is None:
                truncated = True
                break
            s_k = state.W - W_old
            y_k = new_grad - grad
            if float(np.sum(s_k * y_k)) > 1e-12:
                state.memory.append((s_k, y_k))
            grad = new_grad
    return MinimizeResult(state.W.copy(), charged, sigmas, steps, truncated)


def threshold_to_dag(W: np.ndarray, omega: float) -> Tuple[np.ndarray, float]:
    """Zero entries below ``omega``, then drop the weakest edges until acyclic."""
    W = np.where(np.abs(W) >= omega, W, 0.0)
    np.fill_diagonal(W, 0.0)
    used = omega
    while not is_dag(W):
        mags = np.abs(W[W != 0])
        used = float(mags.min())
        W = np.where(np.abs(W) > used, W, 0.0)
    return W, used


@dataclass
class ScoreConfig:
    epsilon_total: float = 10.0
    delta: float = 1e-5
    delta_total: float = 1.0
    eps0: float = 0.5
    iters: Optional[int] = 20
    auto_iters: bool = False
    clip: float = 5.0
    lam: float = 0.05
    omega: float = 0.3
    linesearch: str = "fixed"
    eta0: float = 1.0
    seed: int = 0
    rho0: float = 1.0
    alpha0: float = 0.0
    h_tol: float = 1e-8
    max_rounds: int = 10
    rho_max: float = 1e16

    def resolve_iters(self) -> int:
        """``iters``, or with ``auto_iters`` the largest schedule length whose round fits."""
        if not (self.auto_iters or self.iters is None):
            return int(self.iters)
        I = schedule_multiplicative(self.epsilon_total, self.eps0).iterations
        # the schedule counts with exponent k/I, a round spends k/(I-1)
        while I >= 2 and math.fsum(iteration_budgets(self.eps0, I)) > self.epsilon_total:
            I -= 1
        return I


@dataclass
class ScoreResult:
    W: np.ndarray
    W_raw: np.ndarray
    omega_used: float
    ledger: LeakageLedger
    h_history: List[float]
    rounds: int
    iterations: int
    budgets: List[float]
    stop_reason: str
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "W": self.W.tolist(),
            "W_raw": self.W_raw.tolist(),
            "omega_used": self.omega_used,
            "ledger": self.ledger.to_dict(),
            "h_history": self.h_history,
            "rounds": self.rounds,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "truncated": self.truncated,
        }


def augmented_lagrangian(data, cfg: ScoreConfig) -> ScoreResult:
    """Outer loop around :func:`adaptive_priv_minimize` sharing one ledger.

    After each round ``alpha += rho * h``; ``rho`` grows tenfold when ``h``
    failed to drop below a quarter of its previous value. Stops at
    ``h <= h_tol``, after ``max_rounds``, or when the next round's budget
    no longer fits.
    """
    X = _X(data)
    d = X.shape[1]
    I = cfg.resolve_iters()
    if I < 2:
        raise ValueError(f"budget affords only {I} iteration(s); need at least 2")
    ledger = LeakageLedger(cfg.epsilon_total, cfg.delta_total)
    state = ScoreState.zeros(d, alpha=cfg.alpha0, rho=cfg.rho0, lam=cfg.lam, ledger=ledger)
    ls = LineSearchConfig(mode=cfg.linesearch, eta0=cfg.eta0)
    root = RngStream(cfg.seed)
    round_cost = math.fsum(iteration_budgets(cfg.eps0, I))
    if round_cost > cfg.epsilon_total + 1e-9:
        raise ValueError(
            f"one round of {I} iterations at eps0={cfg.eps0} costs {round_cost:.4g} "
            f"> epsilon_total={cfg.epsilon_total}; lower iters or eps0, or use auto_iters"
        )
    h_prev = math.inf
    history: List[float] = []
    budgets: List[float] = []
    reason = "max_rounds"
    truncated = False
    rounds = 0

    for r in range(cfg.max_rounds):
        if ledger.remaining() + 1e-9 < round_cost or ledger.delta_spent + I * cfg.delta > ledger.delta_total:
            reason = "budget"
            break
        state.memory.clear()
        res = adaptive_priv_minimize(X, cfg.eps0, cfg.delta, I, cfg.clip, state, linesearch=ls, rng=root.child(r))
        rounds += 1
        budgets.extend(res.budgets)
        h = acyclicity(state.W)
        history.append(h)
        if res.truncated:
            truncated = True
            reason = "budget"
            break
        if h <= cfg.h_tol:
            reason = "converged"
            break
        state.alpha += state.rho * h
        if h > 0.25 * h_prev and state.rho < cfg.rho_max:
            state.rho *= 10.0
        h_prev = h

    W_raw = state.W.copy()
    W, omega_used = threshold_to_dag(W_raw, cfg.omega)
    return ScoreResult(
        W=W,
        W_raw=W_raw,
        omega_used=omega_used,
        ledger=ledger,
        h_history=history,
        rounds=rounds,
        iterations=state.iterations,
        budgets=budgets,
        stop_reason=reason,
        truncated=truncated,
    )
