"""Finite-sum objectives ``F(theta) = (1/N) sum_i f_i(theta)``.

Two families are provided:

* ``LogisticSuite``: each agent holds ``B`` labelled samples and
  ``f_i(theta) = sum_b log(1 + exp(-y_ib <theta, x_ib>)) + B/(2N) |theta|^2``.
* ``QuadraticSuite``: ``f_i(theta) = 0.5 theta^T A_i theta - c_i^T theta``.

Both expose per-component value/gradient/Hessian and the averaged
value/gradient, and are treated as immutable once built.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, B, d)
    labels: np.ndarray  # (N, B), entries in {-1, +1}

    def __post_init__(self):
        if self.features.ndim != 3:
            raise ValueError("features must have shape (N, B, d)")
        if self.labels.shape != self.features.shape[:2]:
            raise ValueError("labels must have shape (N, B)")
        if not np.all(np.abs(self.labels) == 1.0):
            raise ValueError("labels must be exactly -1 or +1")

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def B(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[2]


@dataclass(frozen=True)
class SmoothnessConstants:
    L: float
    mu: float
    L_H_bar: float

    @property
    def kappa(self) -> float:
        return self.L / self.mu


def _check_theta(theta, d):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (d,):
        raise ValueError(f"theta must have shape ({d},), got {theta.shape}")
    return theta


class ObjectiveSuite:
    """Common interface; subclasses fill in the component maths."""

    kind: str
    N: int
    d: int

    def _check_index(self, i):
        if not 0 <= i < self.N:
            raise IndexError(f"component index {i} out of range [0, {self.N})")

    def component_eval(self, i: int, theta):
        """Return ``(value, grad, hess)`` of ``f_i`` at ``theta``."""
        self._check_index(i)
        return self._component(i, _check_theta(theta, self.d), want_value=True)

    def component_grad_hess(self, i: int, theta):
        """Gradient and Hessian only; skips the value computation."""
        self._check_index(i)
        _, g, h = self._component(i, theta, want_value=False)
        return g, h

    def component_grad(self, i: int, theta):
        self._check_index(i)
        return self._component_grad(i, theta)

    def full_eval(self, theta):
        """Return ``(F(theta), grad F(theta))``."""
        raise NotImplementedError

    def full_hessian(self, theta):
        raise NotImplementedError

    def smoothness_constants(self) -> SmoothnessConstants:
        raise NotImplementedError


class LogisticSuite(ObjectiveSuite):
    kind = "logistic"

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self.N, self.B, self.d = dataset.N, dataset.B, dataset.d
        self.reg = self.B / self.N  # curvature of the B/(2N)|theta|^2 term
        self._X = dataset.features
        self._y = dataset.labels
        self._Xflat = self._X.reshape(-1, self.d)
        self._yflat = self._y.reshape(-1)

    @staticmethod
    def _softplus_neg(m):
        # log(1 + exp(-m)) without overflow
        return np.log1p(np.exp(-np.abs(m))) + np.maximum(0.0, -m)

    @staticmethod
    def _sigmoid(t):
        e = np.exp(-np.abs(t))
        return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def _component(self, i, theta, want_value):
        X, y = self._X[i], self._y[i]
        m = y * (X @ theta)
        s = self._sigmoid(-m)  # = 1 - sigmoid(m)
        grad = X.T @ (-y * s) + self.reg * theta
        w = s * (1.0 - s)
        hess = (X.T * w) @ X
        hess = 0.5 * (hess + hess.T)
        hess.flat[:: self.d + 1] += self.reg
        value = None
        if want_value:
            value = float(np.sum(self._softplus_neg(m)) + 0.5 * self.reg * (theta @ theta))
        return value, grad, hess

    def _component_grad(self, i, theta):
        X, y = self._X[i], self._y[i]
        s = self._sigmoid(-(y * (X @ theta)))
        return X.T @ (-y * s) + self.reg * theta

    def full_eval(self, theta):
        theta = _check_theta(theta, self.d)
        m = self._yflat * (self._Xflat @ theta)
        s = self._sigmoid(-m)
        value = np.sum(self._softplus_neg(m)) / self.N + 0.5 * self.reg * (theta @ theta)
        grad = self._Xflat.T @ (-self._yflat * s) / self.N + self.reg * theta
        return float(value), grad

    def full_hessian(self, theta):
        theta = _check_theta(theta, self.d)
        s = self._sigmoid(-(self._yflat * (self._Xflat @ theta)))
        w = s * (1.0 - s)
        h = (self._Xflat.T * w) @ self._Xflat / self.N
        h = 0.5 * (h + h.T)
        h.flat[:: self.d + 1] += self.reg
        return h

    def smoothness_constants(self) -> SmoothnessConstants:
        gram = self._Xflat.T @ self._Xflat / (4.0 * self.N)
        L = float(np.linalg.eigvalsh(0.5 * (gram + gram.T))[-1]) + self.reg
        # |d^3/dt^3 log(1+e^-t)| <= 1/(6 sqrt 3)
        norms3 = np.sum(np.linalg.norm(self._X, axis=2) ** 3, axis=1)
        L_H = float(np.max(norms3)) / (6.0 * math.sqrt(3.0))
        return SmoothnessConstants(L=L, mu=self.reg, L_H_bar=L_H)


class QuadraticSuite(ObjectiveSuite):
    kind = "quadratic"

    def __init__(self, A, c, psd_tol: float = 1e-10):
        A = np.asarray(A, dtype=float)
        c = np.asarray(c, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError("A must have shape (N, d, d)")
        if c.shape != A.shape[:2]:
            raise ValueError("c must have shape (N, d)")
        if not np.allclose(A, np.swapaxes(A, 1, 2), atol=1e-12, rtol=0):
            raise ValueError("every A_i must be symmetric")
        A = 0.5 * (A + np.swapaxes(A, 1, 2))
        eig = np.linalg.eigvalsh(A)
        if np.min(eig) < -psd_tol:
            raise ValueError("every A_i must be positive semidefinite")
        self.A, self.c = A, c
        self.N, self.d = A.shape[0], A.shape[1]
        self.A_bar = A.mean(axis=0)
        self.c_bar = c.mean(axis=0)
        spec = np.linalg.eigvalsh(self.A_bar)
        if spec[0] <= 0:
            raise ValueError("average of A_i must be positive definite")
        self._spectrum = spec

    def _component(self, i, theta, want_value):
        Ai = self.A[i]
        grad = Ai @ theta - self.c[i]
        value = None
        if want_value:
            value = float(0.5 * theta @ Ai @ theta - self.c[i] @ theta)
        return value, grad, Ai.copy()

    def _component_grad(self, i, theta):
        return self.A[i] @ theta - self.c[i]

    def full_eval(self, theta):
        theta = _check_theta(theta, self.d)
        value = 0.5 * theta @ self.A_bar @ theta - self.c_bar @ theta
        return float(value), self.A_bar @ theta - self.c_bar

    def full_hessian(self, theta):
        _check_theta(theta, self.d)
        return self.A_bar.copy()

    def smoothness_constants(self) -> SmoothnessConstants:
        return SmoothnessConstants(L=float(self._spectrum[-1]), mu=float(self._spectrum[0]), L_H_bar=0.0)

    def minimizer(self):
        return np.linalg.solve(self.A_bar, self.c_bar)


# Function-style aliases for the operations.

def component_eval(suite: ObjectiveSuite, i: int, theta):
    return suite.component_eval(i, theta)


def full_eval(suite: ObjectiveSuite, theta):
    return suite.full_eval(theta)


def smoothness_constants(suite: ObjectiveSuite) -> SmoothnessConstants:
    return suite.smoothness_constants()


def generate_synthetic(d: int, N: int, B: int, seed: int):
    """Random linearly separable classification data.

    The ground-truth classifier and every feature vector are drawn from
    ``U[-1, 1]^d``; labels are ``sign(<x, theta0>)`` with ``sign(0) = +1``.
    Returns ``(Dataset, theta0)``.
    """
    if min(d, N, B) < 1:
        raise ValueError("d, N and B must all be >= 1")
    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(-1.0, 1.0, size=d)
    X = rng.uniform(-1.0, 1.0, size=(N, B, d))
    return Dataset(X, sign_labels(X @ theta0)), theta0


def sign_labels(margins) -> np.ndarray:
    """``sign`` with ``sign(0) = +1``."""
    return np.where(np.asarray(margins) >= 0.0, 1.0, -1.0)


def random_quadratic(d: int, N: int, kappa: float, seed: int, rank: int | None = None) -> QuadraticSuite:
    """Quadratic suite whose average Hessian has condition number ``kappa``.

    Each ``A_i`` is a random PSD matrix (rank ``rank``, default ``d``); the
    family is then congruence-transformed so the average has eigenvalues
    spread evenly on ``[1, kappa]``.
    """
    rng = np.random.default_rng(seed)
    rank = d if rank is None else rank
    A = np.empty((N, d, d))
    for i in range(N):
        G = rng.standard_normal((d, rank))
        A[i] = G @ G.T / rank
    Abar = A.mean(axis=0)
    w, V = np.linalg.eigh(Abar)
    # T maps Abar to V diag(target) V^T
    target = np.linspace(1.0, kappa, d)
    T = V @ np.diag(np.sqrt(target / w)) @ V.T
    A = np.einsum("ab,nbc,cd->nad", T, A, T)
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    c = rng.standard_normal((N, d))
    return QuadraticSuite(A, c)


def write_dataset_csv(ds: Dataset, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["agent", "batch", "y"] + [f"x{j}" for j in range(ds.d)])
    for i in range(ds.N):
        for b in range(ds.B):
            w.writerow([i, b, f"{ds.labels[i, b]:.17g}"] + [f"{v:.17g}" for v in ds.features[i, b]])


def read_dataset_csv(fh: TextIO) -> Dataset:
    r = csv.reader(fh)
    header = next(r)
    if header[:3] != ["agent", "batch", "y"]:
        raise ValueError(f"unexpected dataset header {header[:3]}")
    d = len(header) - 3
    rows = [row for row in r if row]
    N = 1 + max(int(row[0]) for row in rows)
    B = 1 + max(int(row[1]) for row in rows)
    X = np.full((N, B, d), np.nan)
    y = np.zeros((N, B))
    for row in rows:
        i, b = int(row[0]), int(row[1])
        y[i, b] = float(row[2])
        X[i, b] = [float(v) for v in row[3:]]
    if np.isnan(X).any():
        raise ValueError("dataset CSV is missing (agent, batch) rows")
    return Dataset(X, y)
