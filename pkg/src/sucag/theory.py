"""Numerical side of the convergence analysis.

Covers the step-size rule and contraction factors for the curvature-aided
method, the hitting-time tail bound for random-walk activation, and the
delayed nonlinear recursion

    R(k+1) <= p R(k) + sum_j q_j m1_j(k) max_{(k - m2_j(k))_+ <= l <= k} R(l)^eta_j

together with its sufficient condition for ``R(k) <= delta^k R(0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

# exponent eta_j of each higher-order term
ETA_TILDE = (1.5, 2.5, 2.0, 4.0)


def q_tilde(L: float, L_H_bar: float) -> tuple:
    return (2.0 * L_H_bar * L**2, 32.0 * L_H_bar**3, 8.0 * L_H_bar**2 * L**4, 2048.0 * L_H_bar**6)


@dataclass(frozen=True)
class StepSizeInputs:
    mu: float
    L: float
    L_H_bar: float
    R0: float
    Delta: Optional[float] = None
    c0: float = 1.0
    beta: float = 0.1
    m0: float = 2.0

    def resolved_delta(self) -> float:
        if self.Delta is not None:
            return self.Delta
        return default_delta(self.mu, self.L)


def default_delta(mu: float, L: float) -> float:
    return min(0.1, (mu + L) ** 2 / (8.0 * mu * L))


def _normalize(mu, L, L_H_bar):
    """Rescale ``F -> F / mu`` when ``mu < 1``; returns constants and the scale."""
    if mu >= 1.0:
        return mu, L, L_H_bar, 1.0
    return 1.0, L / mu, L_H_bar / mu, mu


def theorem1_stepsize(inp: StepSizeInputs) -> float:
    """Largest step size admitted by the linear-convergence theorem.

    ``gamma = min(2/(mu+L), min_j (3 m0/2 * mu L/(mu+L) * Delta + 1/C_j)^-1)``
    over the terms with ``q~_j > 0``; a vanishing curvature term imposes no
    constraint. When ``mu < 1`` the rule is applied to ``F / mu`` and the
    result is mapped back, so the returned value is a step for ``F`` itself.
    """
    if not inp.mu > 0 or inp.L < inp.mu:
        raise ValueError(f"need 0 < mu <= L, got mu={inp.mu}, L={inp.L}")
    if inp.L_H_bar < 0 or inp.R0 < 0:
        raise ValueError("L_H_bar and R0 must be non-negative")
    Delta = inp.resolved_delta()
    if not 0.0 < Delta < 1.0:
        raise ValueError(f"Delta must lie in (0, 1), got {Delta}")
    if Delta >= (inp.mu + inp.L) ** 2 / (4.0 * inp.mu * inp.L):
        raise ValueError("Delta violates Delta < (mu+L)^2 / (4 mu L)")
    if not 0.0 < inp.beta < 1.0 / 3.0:
        raise ValueError("beta must lie in (0, 1/3)")
    if inp.c0 < 0 or inp.m0 <= 0:
        raise ValueError("need c0 >= 0 and m0 > 0")

    mu, L, LH, scale = _normalize(inp.mu, inp.L, inp.L_H_bar)
    A = 2.0 * mu * L / (mu + L)
    gamma = 2.0 / (mu + L)
    lin = 1.5 * inp.m0 * (mu * L / (mu + L)) * Delta
    for qt, eta in zip(q_tilde(L, LH), ETA_TILDE):
        if qt == 0.0 or inp.R0 == 0.0:
            continue
        # log-domain: C_j can under/overflow for strongly curved problems
        log_c = ((1.0 - inp.c0) + math.log(inp.beta * Delta * (1.0 - Delta)) + 2.0 * math.log(A)
                 - math.log(4.0) - math.log(qt) - (eta - 1.0) * math.log(inp.R0))
        inv_c = math.exp(-log_c) if -log_c < 700 else math.inf
        gamma = min(gamma, 1.0 / (lin + inv_c))
    return gamma / scale


def convergence_rate(gamma: float, mu: float, L: float, Delta: float):
    """Return ``(delta, asymptotic_rate)`` for a step size ``gamma``.

    ``delta = 1 - Delta gamma 2 mu L/(mu+L)`` is the guaranteed per-step
    contraction of ``|theta - theta*|^2``; ``asymptotic_rate`` is the
    limiting ratio of the upper-bound sequence.
    """
    if not 0 < gamma <= 2.0 / (mu + L) * (1 + 1e-12):
        raise ValueError(f"gamma must lie in (0, 2/(mu+L)], got {gamma}")
    if not 0 < Delta < 1:
        raise ValueError("Delta must lie in (0, 1)")
    A = 2.0 * mu * L / (mu + L)
    return 1.0 - Delta * gamma * A, 1.0 - gamma * A


def hitting_time_tail(tau_bar: float, x, clamp: bool = True):
    """``exp(1 - x / (1 + e tau_bar))`` bounding ``P(k - tau_i^{k-1} > x)``."""
    if tau_bar <= 0:
        raise ValueError("tau_bar must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    raw = np.exp(1.0 - x / (1.0 + math.e * tau_bar))
    out = np.minimum(raw, 1.0) if clamp else raw
    return float(out) if out.ndim == 0 else out


# --- nonlinear recursion -------------------------------------------------

DelaySeq = Callable[[int], float]


def eval_sequence(f, ks: np.ndarray) -> np.ndarray:
    """Evaluate a delay profile on integer array ``ks`` (vectorised if possible)."""
    try:
        out = np.asarray(f(ks), dtype=float)
        if out.shape == ks.shape:
            return out
        if out.ndim == 0:
            return np.full(ks.shape, float(out))
    except (TypeError, ValueError):
        pass
    return np.fromiter((f(int(k)) for k in ks), dtype=float, count=ks.size)


def constant(c: float) -> DelaySeq:
    def f(k):
        return np.full(np.shape(k), float(c)) if np.ndim(k) else float(c)
    return f


@dataclass
class RecursionSpec:
    p: float
    q: Sequence[float]
    eta: Sequence[float]
    m1: Sequence[DelaySeq]
    m2: Sequence[DelaySeq]
    R0: float

    def __post_init__(self):
        J = len(self.q)
        if not (len(self.eta) == len(self.m1) == len(self.m2) == J):
            raise ValueError("q, eta, m1, m2 must have equal length")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        if any(qj < 0 for qj in self.q):
            raise ValueError("q_j must be non-negative")
        if any(e <= 1.0 for e in self.eta):
            raise ValueError("every eta_j must exceed 1")
        if self.R0 < 0:
            raise ValueError("R0 must be non-negative")

    @property
    def J(self) -> int:
        return len(self.q)


class ScanHorizonError(RuntimeError):
    """The minimiser of the xi* scan sits on the scan boundary."""


def xi_horizon(delta: float, c1: float = 1.0, beta: Optional[float] = None, floor: int = 100_000) -> int:
    """Scan length: ``floor`` or 10x the minimiser of the convex lower bound."""
    if beta is None:
        return floor
    k_star = c1 / (beta * math.log(1.0 / delta))
    return int(max(floor, math.ceil(10.0 * k_star)))


def xi_star(delta: float, m1: DelaySeq, m2: DelaySeq, eta: float, K_max: Optional[int] = None) -> float:
    """``min_k log m1(k)/log delta + eta (k - m2(k))_+ - k`` over ``k = 0..K_max``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    K_max = xi_horizon(delta) if K_max is None else int(K_max)
    ks = np.arange(K_max + 1)
    a = eval_sequence(m1, ks)
    if np.any(a < 1):
        raise ValueError("m1(k) must be >= 1")
    b = eval_sequence(m2, ks)
    expr = np.log(a) / math.log(delta) + eta * np.maximum(ks - b, 0.0) - ks
    j = int(np.argmin(expr))
    if j == K_max and K_max > 0:
        raise ScanHorizonError(f"xi* minimiser at scan boundary K_max={K_max}; enlarge K_max")
    return float(expr[j])


def q_thresholds(spec: RecursionSpec, delta: float, K_max: Optional[int] = None) -> np.ndarray:
    """Right-hand sides ``R0^{1-eta_j} delta^{-xi_j*} (delta - p) / J``."""
    if not spec.p < delta < 1.0:
        raise ValueError(f"delta must lie in (p, 1) = ({spec.p}, 1)")
    out = np.empty(spec.J)
    for j in range(spec.J):
        xi = xi_star(delta, spec.m1[j], spec.m2[j], spec.eta[j], K_max)
        log_thr = -xi * math.log(delta) + math.log(delta - spec.p) - math.log(spec.J)
        if spec.R0 > 0:
            log_thr -= (spec.eta[j] - 1.0) * math.log(spec.R0)
        out[j] = math.exp(min(log_thr, 700.0))
    return out


def check_q_condition(spec: RecursionSpec, delta: float, K_max: Optional[int] = None) -> bool:
    if not spec.p < delta:
        raise ValueError("delta must exceed p")
    if all(qj == 0 for qj in spec.q):
        return True
    thr = q_thresholds(spec, delta, K_max)
    return bool(np.all(np.asarray(spec.q) <= thr))


def simulate_recursion_log(spec: RecursionSpec, K: int) -> np.ndarray:
    """``log Rbar(0..K)`` of the recursion taken with equality.

    Computed in the log domain so long horizons do not underflow.
    Raises ``OverflowError`` when the sequence blows up.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if spec.R0 == 0:
        return np.full(K + 1, -np.inf)
    ks = np.arange(K)
    logm1 = [np.log(eval_sequence(f, ks)) for f in spec.m1]
    m2 = [np.floor(eval_sequence(f, ks)).astype(np.int64) for f in spec.m2]
    logq = [math.log(qj) if qj > 0 else -np.inf for qj in spec.q]
    logp = math.log(spec.p)
    logR = np.empty(K + 1)
    logR[0] = math.log(spec.R0)
    for k in range(K):
        terms = [logp + logR[k]]
        for j in range(spec.J):
            if logq[j] == -np.inf:
                continue
            lo = max(k - int(m2[j][k]), 0)
            wmax = logR[lo] if lo == k else np.max(logR[lo:k + 1])
            terms.append(logq[j] + logm1[j][k] + spec.eta[j] * wmax)
        top = max(terms)
        logR[k + 1] = top + math.log(sum(math.exp(t - top) for t in terms))
        if logR[k + 1] > 700.0:
            raise OverflowError(f"recursion diverged at k={k + 1}")
    return logR


def simulate_recursion(spec: RecursionSpec, K: int) -> np.ndarray:
    """``Rbar(0..K)``; values below the float range underflow to 0."""
    return np.exp(simulate_recursion_log(spec, K))


def sucag_recursion(gamma: float, mu: float, L: float, L_H_bar: float, m: DelaySeq, R0: float) -> RecursionSpec:
    """Recursion obtained from the descent inequality for a step ``gamma``.

    ``m(k)`` is the staleness bound ``m_k``; term ``j`` uses
    ``m1_j = m_k^(2 ceil(j/2))`` and ``m2_j = 2 m_k``.
    """
    qt = q_tilde(L, L_H_bar)
    q = [gamma**3 * qt[0], gamma**3 * qt[1], gamma**6 * qt[2], gamma**6 * qt[3]]
    m1 = [_power_of(m, 2), _power_of(m, 2), _power_of(m, 4), _power_of(m, 4)]
    m2 = [_scaled(m, 2.0)] * 4
    p = 1.0 - 2.0 * gamma * mu * L / (mu + L)
    return RecursionSpec(p=p, q=q, eta=list(ETA_TILDE), m1=m1, m2=m2, R0=R0)


def _power_of(f, e):
    def g(k):
        return eval_sequence(f, np.asarray(k)) ** e if np.ndim(k) else f(k) ** e
    return g


def _scaled(f, s):
    def g(k):
        return s * eval_sequence(f, np.asarray(k)) if np.ndim(k) else s * f(k)
    return g


def descent_rhs(gamma: float, mu: float, L: float, L_H_bar: float, m_k: float, window) -> float:
    """Bound on ``|theta^{k+1} - theta*|^2`` given recent squared distances.

    ``window`` holds ``|theta^l - theta*|^2`` for ``l`` in
    ``[(k - 2 m_k)_+, k]``, oldest first; its last entry is iteration ``k``.
    """
    r = np.asarray(window, dtype=float)
    if r.size == 0:
        raise ValueError("window must be non-empty")
    q1, q2, q3, q4 = q_tilde(L, L_H_bar)
    lead = (1.0 - 2.0 * gamma * mu * L / (mu + L)) * r[-1]
    if L_H_bar == 0.0:
        return float(lead)
    t1 = np.max(q1 * r**1.5 + q2 * r**2.5)
    t2 = np.max(q3 * r**2 + q4 * r**4)
    return float(lead + gamma**3 * m_k**2 * t1 + gamma**6 * m_k**4 * t2)
