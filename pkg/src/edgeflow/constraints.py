"""Edge constraints ``A_ij (x_i - x_j) = b_ij`` and their projected, stacked form.

Each edge constraint is rewritten as ``P_ij (x_i - x_j - bbar_ij) = 0`` with
``P_ij`` the orthogonal projector onto the row space of ``A_ij``.  Stacking the
edges in graph order gives ``Pbar (Hbar x - bbar) = 0`` with
``Hbar = kron(H, I_n)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    MissingEdgeConstraint,
    OrientationMismatch,
    RankDeficient,
)
from .graph import Graph, incidence_matrix

DEFAULT_FEASIBILITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class EdgeConstraint:
    """Constraint on the 0-based edge ``(i, j)``: ``A (x_i - x_j) = b``."""

    i: int
    j: int
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if b.ndim != 1 or A.shape[0] != b.shape[0]:
            raise DimensionMismatch(
                f"edge ({self.i + 1}, {self.j + 1}): A is {A.shape}, b has shape {b.shape}"
            )
        if A.shape[0] > A.shape[1]:
            raise RankDeficient(
                f"edge ({self.i + 1}, {self.j + 1}): {A.shape[0]} rows exceed dimension {A.shape[1]}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class ProjectedConstraint:
    P: np.ndarray
    b_bar: np.ndarray


@dataclass(frozen=True, eq=False)
class StackedSystem:
    graph: Graph
    n: int
    H: np.ndarray
    P_bar: np.ndarray
    b_bar: np.ndarray
    H_bar: np.ndarray
    blocks: tuple[ProjectedConstraint, ...]

    @property
    def PH(self) -> np.ndarray:
        """``Pbar @ Hbar``, the projected constraint operator."""
        return self.P_bar @ self.H_bar

    @property
    def Pb(self) -> np.ndarray:
        return self.P_bar @ self.b_bar

    @property
    def M(self) -> np.ndarray:
        """Error-dynamics matrix ``Pbar Hbar Hbar' Pbar``."""
        PH = self.PH
        return PH @ PH.T


def numerical_rank(X: np.ndarray, sv=None) -> int:
    if X.size == 0:
        return 0
    if sv is None:
        sv = np.linalg.svd(X, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    tol = max(X.shape) * np.finfo(float).eps * sv[0]
    return int(np.sum(sv > tol))


def project_constraint(c: EdgeConstraint) -> ProjectedConstraint:
    """Projector ``A'(AA')^-1 A`` and offset ``A'(AA')^-1 b`` for one edge.

    Both are formed from the thin SVD ``A = U S V'`` so that
    ``P = V V'`` is symmetric by construction.
    """
    A = c.A
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if numerical_rank(A, s) < A.shape[0]:
        raise RankDeficient(
            f"edge ({c.i + 1}, {c.j + 1}): A has dependent rows (singular values {s})"
        )
    V = Vt.T
    P = V @ V.T
    b_bar = V @ ((U.T @ c.b) / s)
    return ProjectedConstraint(P=P, b_bar=b_bar)


def mirror(c: EdgeConstraint) -> EdgeConstraint:
    return EdgeConstraint(i=c.j, j=c.i, A=c.A, b=-c.b)


def stack(g: Graph, constraints: Sequence[EdgeConstraint], n: int) -> StackedSystem:
    by_pair = {}
    for c in constraints:
        if c.n != n:
            raise DimensionMismatch(
                f"edge ({c.i + 1}, {c.j + 1}): A has {c.n} columns, expected {n}"
            )
        by_pair[(c.i, c.j)] = c
    blocks = []
    for i, j in g.edges:
        c = by_pair.pop((i, j), None)
        if c is None:
            if (j, i) in by_pair:
                raise OrientationMismatch(
                    f"constraint given as ({j + 1}, {i + 1}) but edge is listed as ({i + 1}, {j + 1})"
                )
            raise MissingEdgeConstraint(f"no constraint for edge ({i + 1}, {j + 1})")
        blocks.append(project_constraint(c))
    if by_pair:
        extra = ", ".join(f"({i + 1}, {j + 1})" for i, j in by_pair)
        raise MissingEdgeConstraint(f"constraints given for edges not in the graph: {extra}")

    mbar = g.edge_count
    P_bar = np.zeros((mbar * n, mbar * n))
    b_bar = np.zeros(mbar * n)
    for k, blk in enumerate(blocks):
        sl = slice(k * n, (k + 1) * n)
        P_bar[sl, sl] = blk.P
        b_bar[sl] = blk.b_bar
    H = incidence_matrix(g)
    H_bar = np.kron(H, np.eye(n))
    return StackedSystem(
        graph=g, n=n, H=H, P_bar=P_bar, b_bar=b_bar, H_bar=H_bar, blocks=tuple(blocks)
    )


def _check_x(s: StackedSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (s.graph.m * s.n,):
        raise DimensionMismatch(f"expected state of length {s.graph.m * s.n}, got {x.shape}")
    return x


def residual(s: StackedSystem, x) -> np.ndarray:
    """Stacked edge residual ``e = Pbar (Hbar x - bbar)``."""
    x = _check_x(s, x)
    return s.P_bar @ (s.H_bar @ x - s.b_bar)


def agreement_error(constraints: Sequence[EdgeConstraint], x, n: int | None = None) -> float:
    """``V = 1/2 sum ||A_ij (x_i - x_j) - b_ij||^2`` over the listed edges."""
    x = np.asarray(x, dtype=float)
    if n is None:
        if not constraints:
            return 0.0
        n = constraints[0].n
    X = x.reshape(-1, n)
    total = 0.0
    for c in constraints:
        r = c.A @ (X[c.i] - X[c.j]) - c.b
        total += r @ r
    return 0.5 * total


@dataclass(frozen=True)
class WellConfiguredReport:
    ok: bool
    rank_PH: int
    rank_HPH: int


def well_configured(s: StackedSystem) -> WellConfiguredReport:
    """Compare ``rank(Hbar' Pbar Hbar)`` against ``rank(Pbar Hbar)``.

    Equal ranks mean ``Hbar' Pbar r = 0`` forces ``r = 0`` for every residual
    ``r`` in the range of ``Pbar Hbar``, which is where residuals of a
    consistent system live.
    """
    PH = s.PH
    r1 = numerical_rank(PH)
    r2 = numerical_rank(PH.T @ PH)
    return WellConfiguredReport(ok=r1 == r2, rank_PH=r1, rank_HPH=r2)


@dataclass(frozen=True, eq=False)
class Feasibility:
    ok: bool
    x: np.ndarray
    residual: float


def feasible_point(s: StackedSystem, tol: float = DEFAULT_FEASIBILITY_TOL) -> Feasibility:
    """Least-squares minimizer of ``||Pbar (Hbar x - bbar)||`` and its attained residual."""
    PH = s.PH
    x, *_ = np.linalg.lstsq(PH, s.Pb, rcond=None)
    res = float(np.linalg.norm(PH @ x - s.Pb))
    return Feasibility(ok=res <= tol, x=x, residual=res)
