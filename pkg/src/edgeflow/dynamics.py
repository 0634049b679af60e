"""Saddle-point and edge-only flows, in compact and per-agent form.

Compact saddle-point flow on the augmented Lagrangian::

    xdot   = -grad f(x) - Hbar' Pbar Hbar lam - Hbar' Pbar (Hbar x - bbar)
    lamdot =  Hbar' Pbar (Hbar x - bbar)

and the multiplier-free edge-only flow ``xdot = -Hbar' Pbar (Hbar x - bbar)``.
The per-agent versions touch only the agent's own data and a snapshot of its
neighbors; :class:`DistributedRHS` assembles them and logs which neighbor
slices each agent received.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .constraints import ProjectedConstraint, StackedSystem, residual
from .errors import DimensionMismatch, MissingNeighbor, UnexpectedNeighbor
from .objectives import Zero, total_gradient, total_value


@dataclass(frozen=True, eq=False)
class SystemState:
    x: np.ndarray
    lam: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        lam = np.asarray(self.lam, dtype=float)
        if x.shape != lam.shape or x.ndim != 1:
            raise DimensionMismatch(f"x {x.shape} and lambda {lam.shape} must be equal-length vectors")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "lam", lam)


class NeighborData(NamedTuple):
    j: int
    x: np.ndarray
    lam: np.ndarray | None = None


def _check(s: StackedSystem, *vecs):
    N = s.graph.m * s.n
    out = []
    for v in vecs:
        v = np.asarray(v, dtype=float)
        if v.shape != (N,):
            raise DimensionMismatch(f"expected vector of length {N}, got {v.shape}")
        out.append(v)
    return out


def lagrangian_value(s: StackedSystem, objectives, x, lam) -> float:
    x, lam = _check(s, x, lam)
    e = residual(s, x)
    return total_value(objectives, x, s.n) + lam @ (s.H_bar.T @ e) + 0.5 * (e @ e)


def saddle_rhs_compact(s: StackedSystem, objectives, x, lam):
    x, lam = _check(s, x, lam)
    HtP = s.H_bar.T @ s.P_bar
    g = HtP @ (s.H_bar @ x - s.b_bar)
    xdot = -total_gradient(objectives, x, s.n) - HtP @ (s.H_bar @ lam) - g
    return xdot, g


def edge_only_rhs_compact(s: StackedSystem, x) -> np.ndarray:
    (x,) = _check(s, x)
    return -s.H_bar.T @ residual(s, x)


def local_constraints(s: StackedSystem, i: int) -> dict[int, ProjectedConstraint]:
    """Projected constraints seen from agent ``i``, keyed by neighbor.

    An edge listed as ``(j, i)`` contributes the mirrored offset ``-bbar``.
    """
    out = {}
    for k, (a, b) in enumerate(s.graph.edges):
        blk = s.blocks[k]
        if a == i:
            out[b] = blk
        elif b == i:
            out[a] = ProjectedConstraint(P=blk.P, b_bar=-blk.b_bar)
    return out


def _match(i, neighbor_data, constraints):
    given = {nd.j for nd in neighbor_data}
    if len(given) != len(neighbor_data):
        raise UnexpectedNeighbor(f"agent {i + 1}: duplicate neighbor entries")
    extra = given - constraints.keys()
    if extra:
        raise UnexpectedNeighbor(f"agent {i + 1}: no edge to {sorted(j + 1 for j in extra)}")
    missing = constraints.keys() - given
    if missing:
        raise MissingNeighbor(f"agent {i + 1}: no data for neighbors {sorted(j + 1 for j in missing)}")
    return sorted(neighbor_data, key=lambda nd: nd.j)


def saddle_rhs_local(
    i: int,
    x_i,
    lam_i,
    neighbor_data: Sequence[NeighborData],
    constraints: Mapping[int, ProjectedConstraint],
    objective=None,
):
    """Per-agent saddle-point update.

    Returns ``(xdot_i, lamdot_i)`` computed from ``x_i``, ``lam_i`` and the
    neighbor snapshot only.
    """
    x_i = np.asarray(x_i, dtype=float)
    lam_i = np.asarray(lam_i, dtype=float)
    coupling = np.zeros_like(x_i)
    lam_dot = np.zeros_like(x_i)
    for nd in _match(i, neighbor_data, constraints):
        c = constraints[nd.j]
        lam_dot += c.P @ (x_i - nd.x - c.b_bar)
        coupling += c.P @ (lam_i - nd.lam)
    grad = objective.gradient(x_i) if objective is not None else 0.0
    return -grad - coupling - lam_dot, lam_dot


def edge_only_rhs_local(
    i: int,
    x_i,
    neighbor_data: Sequence[NeighborData],
    constraints: Mapping[int, ProjectedConstraint],
) -> np.ndarray:
    x_i = np.asarray(x_i, dtype=float)
    out = np.zeros_like(x_i)
    for nd in _match(i, neighbor_data, constraints):
        c = constraints[nd.j]
        out -= c.P @ (x_i - nd.x - c.b_bar)
    return out


@dataclass
class LocalityLog:
    """Distinct neighbor sets handed to each agent, plus call counts."""

    observed: dict[int, set[frozenset[int]]] = field(default_factory=dict)
    calls: int = 0

    def record(self, i: int, js) -> None:
        self.observed.setdefault(i, set()).add(frozenset(js))
        self.calls += 1


class DistributedRHS:
    """Global derivative assembled from per-agent updates.

    ``neighbor_sets`` defaults to the graph's; overriding it is only useful
    for negative tests of the locality audit.
    """

    def __init__(self, s: StackedSystem, objectives=None, mode="saddle_point", neighbor_sets=None):
        if mode not in ("saddle_point", "edge_only"):
            raise ValueError(f"unknown mode {mode!r}")
        self.system = s
        self.mode = mode
        self.m, self.n = s.graph.m, s.n
        self.objectives = list(objectives) if objectives is not None else [Zero()] * self.m
        self.neighbor_sets = [
            sorted(ns) for ns in (neighbor_sets if neighbor_sets is not None else s.graph.neighbors)
        ]
        self.constraints = [local_constraints(s, i) for i in range(self.m)]
        self.log = LocalityLog()

    @property
    def size(self) -> int:
        N = self.m * self.n
        return 2 * N if self.mode == "saddle_point" else N

    def __call__(self, t, z):
        N = self.m * self.n
        X = z[:N].reshape(self.m, self.n)
        if self.mode == "edge_only":
            out = np.empty(N)
            for i in range(self.m):
                nbrs = self.neighbor_sets[i]
                self.log.record(i, nbrs)
                snap = [NeighborData(j, X[j]) for j in nbrs]
                out[i * self.n:(i + 1) * self.n] = edge_only_rhs_local(
                    i, X[i], snap, self.constraints[i]
                )
            return out
        L = z[N:].reshape(self.m, self.n)
        out = np.empty(2 * N)
        for i in range(self.m):
            nbrs = self.neighbor_sets[i]
            self.log.record(i, nbrs)
            snap = [NeighborData(j, X[j], L[j]) for j in nbrs]
            xd, ld = saddle_rhs_local(i, X[i], L[i], snap, self.constraints[i], self.objectives[i])
            out[i * self.n:(i + 1) * self.n] = xd
            out[N + i * self.n:N + (i + 1) * self.n] = ld
        return out


def equilibrium_residual(s: StackedSystem, objectives, x, lam):
    """``(||Hbar' Pbar (Hbar x - bbar)||, ||grad f(x) + Hbar' Pbar Hbar lam||)``."""
    x, lam = _check(s, x, lam)
    HtP = s.H_bar.T @ s.P_bar
    r_primal = np.linalg.norm(HtP @ (s.H_bar @ x - s.b_bar))
    r_stat = np.linalg.norm(total_gradient(objectives, x, s.n) + HtP @ (s.H_bar @ lam))
    return float(r_primal), float(r_stat)


def error_dynamics_check(s: StackedSystem, times, xs) -> float:
    """Max deviation between a numerical derivative of ``e(t)`` and ``-M e(t)``.

    ``e`` is differentiated with second-order central differences on the
    (possibly non-uniform) sample times; endpoints are skipped.
    """
    times = np.asarray(times, dtype=float)
    xs = np.asarray(xs, dtype=float)
    if len(times) < 3:
        return 0.0
    E = (s.P_bar @ (s.H_bar @ xs.T - s.b_bar[:, None])).T
    dE = np.gradient(E, times, axis=0, edge_order=2)
    pred = -(s.M @ E.T).T
    return float(np.max(np.abs(dE[1:-1] - pred[1:-1])))
