"""Incremental gradient estimators sharing one select/aggregate/update loop.

Every method keeps, per component ``i``, the iterate at which ``f_i`` was
last evaluated together with the gradient (and, for the curvature-aided
methods, the Hessian) found there. With ``tau_i = -1`` the stored values
are zero, so the first pass starts from an empty memory.

Methods
-------
SUCAG
    ``g = [grad f_i(theta) - g_i(theta)] + b + H theta`` where
    ``g_i(theta) = grad_i + hess_i (theta - theta_i)`` is the stored
    first-order Taylor model of ``f_i``; unbiased under uniform sampling.
SAGA
    ``g = [grad f_i(theta) - grad_i] + mean_j grad_j``.
SAG
    as SAGA with the bracket scaled by ``1/N`` (biased).
CIAG
    ``g = b + H theta`` after refreshing component ``i`` (biased).
SG
    ``g = grad f_i(theta)``.

``b`` and ``H`` are the running averages of ``grad_j - hess_j theta_j`` and
``hess_j``; for SAG/SAGA ``b`` holds the average stored gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .objectives import ObjectiveSuite

METHODS = ("SUCAG", "SG", "SAG", "SAGA", "CIAG")
CURVATURE_METHODS = ("SUCAG", "CIAG")

DEFAULT_DRIFT_INTERVAL = 10_000


@dataclass(frozen=True)
class ComponentRecord:
    tau: int
    stored_theta: np.ndarray
    stored_grad: np.ndarray
    stored_hess: Optional[np.ndarray]


@dataclass(frozen=True)
class AggregateState:
    b: np.ndarray
    H: Optional[np.ndarray]


class OptimizerState:
    """Mutable iterate plus per-component memory for one method.

    Records are held as stacked arrays (``tau``, ``stored_theta``,
    ``stored_grad``, ``stored_hess``); ``record(i)`` gives a read-only view.
    ``drift_interval`` (``None`` = off) replaces the recursive aggregates
    by their direct sums every that many iterations.
    """

    def __init__(self, method: str, N: int, d: int, gamma: float, theta0=None,
                 drift_interval: Optional[int] = None):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        if gamma < 0:
            raise ValueError("gamma must be non-negative")
        if drift_interval is not None and drift_interval < 1:
            raise ValueError("drift_interval must be a positive integer or None")
        self.method = method
        self.N, self.d = N, d
        self.gamma = float(gamma)
        self.drift_interval = drift_interval
        self.theta = np.zeros(d) if theta0 is None else np.array(theta0, dtype=float)
        if self.theta.shape != (d,):
            raise ValueError(f"theta0 must have shape ({d},)")
        self.k = 0
        self.tau = np.full(N, -1, dtype=np.int64)
        self.stored_theta = np.zeros((N, d))
        self.stored_grad = np.zeros((N, d))
        self.curvature = method in CURVATURE_METHODS
        self.stored_hess = np.zeros((N, d, d)) if self.curvature else None
        self.b = np.zeros(d)
        self.H = np.zeros((d, d)) if self.curvature else None

    @classmethod
    def for_suite(cls, method: str, suite: ObjectiveSuite, gamma: float, theta0=None,
                  drift_interval: Optional[int] = None) -> "OptimizerState":
        return cls(method, suite.N, suite.d, gamma, theta0, drift_interval)

    def record(self, i: int) -> ComponentRecord:
        hess = None if self.stored_hess is None else self.stored_hess[i].copy()
        return ComponentRecord(int(self.tau[i]), self.stored_theta[i].copy(),
                               self.stored_grad[i].copy(), hess)

    @property
    def aggregates(self) -> AggregateState:
        return AggregateState(self.b.copy(), None if self.H is None else self.H.copy())

    def all_visited(self) -> bool:
        return bool(np.all(self.tau >= 0))

    def copy(self) -> "OptimizerState":
        new = object.__new__(OptimizerState)
        new.__dict__.update(self.__dict__)
        for name in ("theta", "tau", "stored_theta", "stored_grad", "stored_hess", "b", "H"):
            val = getattr(self, name)
            setattr(new, name, None if val is None else val.copy())
        return new


def _check_index(state, i):
    if not 0 <= i < state.N:
        raise IndexError(f"component index {i} out of range [0, {state.N})")


def taylor_model(state: OptimizerState, i: int, theta) -> np.ndarray:
    """Stored linear model ``g_i(theta)`` of ``grad f_i`` around its last access."""
    return state.stored_grad[i] + state.stored_hess[i] @ (theta - state.stored_theta[i])


def update_aggregates(state: OptimizerState, i: int, theta_k, fresh_grad, fresh_hess) -> AggregateState:
    """Aggregates after replacing record ``i`` by an evaluation at ``theta_k``.

    ``state`` must still hold the old record ``i``; nothing is mutated.
    """
    N = state.N
    old = state.stored_grad[i] - state.stored_hess[i] @ state.stored_theta[i]
    new = fresh_grad - fresh_hess @ theta_k
    b = state.b + (new - old) / N
    H = state.H + (fresh_hess - state.stored_hess[i]) / N
    return AggregateState(b, H)


def recompute_aggregates(state: OptimizerState) -> AggregateState:
    """Aggregates summed directly over the current records."""
    if state.curvature:
        b = np.mean(state.stored_grad - np.einsum("nij,nj->ni", state.stored_hess, state.stored_theta), axis=0)
        H = np.mean(state.stored_hess, axis=0)
        return AggregateState(b, H)
    return AggregateState(np.mean(state.stored_grad, axis=0), None)


def _estimate(state, suite, i):
    """Return ``(g, fresh_grad, fresh_hess, new_aggregates_or_None)``."""
    _check_index(state, i)
    theta = state.theta
    method = state.method
    if method == "SG":
        fg = suite.component_grad(i, theta)
        return fg, fg, None, None
    if method in ("SAG", "SAGA"):
        fg = suite.component_grad(i, theta)
        diff = fg - state.stored_grad[i]
        if method == "SAG":
            diff = diff / state.N
        return diff + state.b, fg, None, None
    fg, fh = suite.component_grad_hess(i, theta)
    if method == "SUCAG":
        g = (fg - taylor_model(state, i, theta)) + state.b + state.H @ theta
        return g, fg, fh, None
    # CIAG: record i is refreshed at theta before the model is evaluated
    agg = update_aggregates(state, i, theta, fg, fh)
    return agg.b + agg.H @ theta, fg, fh, agg


def estimator(state: OptimizerState, suite: ObjectiveSuite, i: int):
    """Gradient estimate for component choice ``i`` at the current iterate.

    Returns ``(g, fresh_grad, fresh_hess)``; ``fresh_hess`` is ``None`` for
    the first-order methods. The state is left untouched.
    """
    g, fg, fh, _ = _estimate(state, suite, i)
    return g, fg, fh


def step(state: OptimizerState, suite: ObjectiveSuite, i: int) -> OptimizerState:
    """Apply one iteration with component ``i`` (in place; returns ``state``)."""
    g, fg, fh, agg = _estimate(state, suite, i)
    theta_k = state.theta
    if state.method in CURVATURE_METHODS:
        if agg is None:
            agg = update_aggregates(state, i, theta_k, fg, fh)
        state.b, state.H = agg.b, agg.H
        state.stored_hess[i] = fh
    elif state.method in ("SAG", "SAGA"):
        state.b = state.b + (fg - state.stored_grad[i]) / state.N
    state.tau[i] = state.k
    state.stored_theta[i] = theta_k
    state.stored_grad[i] = fg
    state.theta = theta_k - state.gamma * g
    state.k += 1
    if state.drift_interval is not None and state.k % state.drift_interval == 0:
        agg = recompute_aggregates(state)
        state.b, state.H = agg.b, agg.H
    return state


def full_gradient_descent(suite: ObjectiveSuite, theta0, gamma: float, K: int) -> np.ndarray:
    """Iterates ``theta^0..theta^K`` of plain gradient descent on ``F``."""
    out = np.empty((K + 1, suite.d))
    out[0] = theta0
    theta = np.array(theta0, dtype=float)
    for k in range(K):
        theta = theta - gamma * suite.full_eval(theta)[1]
        out[k + 1] = theta
    return out
