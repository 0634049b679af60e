"""Per-agent convex objectives with analytic derivatives.

Four variants are built in.  New variants can be added to :data:`REGISTRY`
as long as they provide ``value``, ``gradient``, ``hessian``, ``params`` and
a ``from_params`` classmethod.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, ObjectiveError


def _vec(x, n=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or (n is not None and x.shape[0] != n):
        raise DimensionMismatch(f"expected vector of length {n}, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class Zero:
    """Constant zero objective (edge-agreement-only problems)."""

    kind = "zero"

    def value(self, x):
        _vec(x)
        return 0.0

    def gradient(self, x):
        return np.zeros_like(_vec(x))

    def hessian(self, x):
        x = _vec(x)
        return np.zeros((x.size, x.size))

    def params(self):
        return {}

    @classmethod
    def from_params(cls, params):
        return cls()


@dataclass(frozen=True, eq=False)
class SquaredDistance:
    """``w * ||x - target||^2``."""

    target: np.ndarray
    weight: float = 1.0
    kind = "squared_distance"

    def __post_init__(self):
        object.__setattr__(self, "target", _vec(self.target))
        if not self.weight > 0:
            raise ObjectiveError(f"weight must be positive, got {self.weight}")

    def value(self, x):
        r = _vec(x, self.target.size) - self.target
        return float(self.weight * (r @ r))

    def gradient(self, x):
        return 2.0 * self.weight * (_vec(x, self.target.size) - self.target)

    def hessian(self, x):
        _vec(x, self.target.size)
        return 2.0 * self.weight * np.eye(self.target.size)

    def params(self):
        return {"target": self.target.tolist(), "weight": self.weight}

    @classmethod
    def from_params(cls, params):
        return cls(target=params["target"], weight=params.get("weight", 1.0))


@dataclass(frozen=True, eq=False)
class Quadratic:
    """``x'Qx + c'x + r`` with ``Q`` symmetric PSD."""

    Q: np.ndarray
    c: np.ndarray
    r: float = 0.0
    kind = "quadratic"

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        c = _vec(self.c)
        if Q.shape != (c.size, c.size):
            raise DimensionMismatch(f"Q is {Q.shape} but c has length {c.size}")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12):
            raise ObjectiveError("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-10:
            raise ObjectiveError("Q must be positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "r", float(self.r))

    def value(self, x):
        x = _vec(x, self.c.size)
        return float(x @ self.Q @ x + self.c @ x + self.r)

    def gradient(self, x):
        return 2.0 * self.Q @ _vec(x, self.c.size) + self.c

    def hessian(self, x):
        _vec(x, self.c.size)
        return 2.0 * self.Q

    def params(self):
        return {"Q": self.Q.tolist(), "c": self.c.tolist(), "r": self.r}

    @classmethod
    def from_params(cls, params):
        return cls(Q=params["Q"], c=params["c"], r=params.get("r", 0.0))


@dataclass(frozen=True, eq=False)
class ExpSum:
    """``sum_k exp(x[k])``."""

    kind = "exp_sum"

    def value(self, x):
        return float(np.exp(_vec(x)).sum())

    def gradient(self, x):
        return np.exp(_vec(x))

    def hessian(self, x):
        return np.diag(np.exp(_vec(x)))

    def params(self):
        return {}

    @classmethod
    def from_params(cls, params):
        return cls()


REGISTRY = {cls.kind: cls for cls in (Zero, SquaredDistance, Quadratic, ExpSum)}
QUADRATIC_KINDS = frozenset({"zero", "squared_distance", "quadratic"})


def make_objective(kind: str, params: dict | None = None):
    try:
        cls = REGISTRY[kind]
    except KeyError:
        raise ObjectiveError(f"unknown objective type {kind!r}; known: {sorted(REGISTRY)}") from None
    return cls.from_params(params or {})


def value(f, x) -> float:
    return f.value(x)


def gradient(f, x) -> np.ndarray:
    return f.gradient(x)


def hessian(f, x) -> np.ndarray:
    return f.hessian(x)


def fd_check(f, x, h: float = 1e-6) -> float:
    """Max relative gap between the analytic and central-difference gradient.

    Relative error per coordinate is ``|g - g_fd| / max(1, |g|)``.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    x = _vec(x)
    g = f.gradient(x)
    worst = 0.0
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        fd = (f.value(x + e) - f.value(x - e)) / (2 * h)
        worst = max(worst, abs(g[k] - fd) / max(1.0, abs(g[k])))
    return worst


# stacked helpers: f(x) = sum_i f_i(x_i)

def total_value(objectives: Sequence, x, n: int) -> float:
    X = np.asarray(x, dtype=float).reshape(len(objectives), n)
    return float(sum(f.value(xi) for f, xi in zip(objectives, X)))


def total_gradient(objectives: Sequence, x, n: int) -> np.ndarray:
    X = np.asarray(x, dtype=float).reshape(len(objectives), n)
    return np.concatenate([f.gradient(xi) for f, xi in zip(objectives, X)])


def total_hessian(objectives: Sequence, x, n: int) -> np.ndarray:
    X = np.asarray(x, dtype=float).reshape(len(objectives), n)
    m = len(objectives)
    out = np.zeros((m * n, m * n))
    for i, (f, xi) in enumerate(zip(objectives, X)):
        out[i * n:(i + 1) * n, i * n:(i + 1) * n] = f.hessian(xi)
    return out
