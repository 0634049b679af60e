"""Centralized solvers for ``min f(x) s.t. Pbar (Hbar x - bbar) = 0``.

These give the ground-truth optimum that distributed runs are measured
against.  Multipliers here live in constraint space (one per row of
``Pbar Hbar``); :func:`node_multiplier` converts them to the agent-indexed
multiplier used by the saddle-point flow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import StackedSystem, numerical_rank
from .errors import DimensionMismatch, NoConvergence, ObjectiveError, Unbounded
from .objectives import QUADRATIC_KINDS, total_gradient, total_hessian, total_value

KKT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    x_star: np.ndarray
    mu_star: np.ndarray
    kkt_residual: float
    primal_residual: float
    objective_value: float
    iterations: int = 0
    method: str = ""
    unique: bool = True

    @property
    def valid(self) -> bool:
        return self.kkt_residual <= KKT_TOL and self.primal_residual <= KKT_TOL


def kkt_residuals(s: StackedSystem, objectives, x, mu):
    """``(stationarity, primal)`` norms of the constraint-space KKT system."""
    C = s.PH
    stat = np.linalg.norm(total_gradient(objectives, x, s.n) + C.T @ mu)
    primal = np.linalg.norm(C @ x - s.Pb)
    return float(stat), float(primal)


def _finish(s, objectives, x, mu, iterations, method, tol=KKT_TOL):
    stat, primal = kkt_residuals(s, objectives, x, mu)
    kkt = max(stat, primal)
    N = x.size
    G = total_hessian(objectives, x, s.n)
    unique = numerical_rank(np.vstack([G, s.PH])) == N
    sol = ReferenceSolution(
        x_star=x,
        mu_star=mu,
        kkt_residual=kkt,
        primal_residual=primal,
        objective_value=total_value(objectives, x, s.n),
        iterations=iterations,
        method=method,
        unique=unique,
    )
    if kkt > tol:
        raise NoConvergence(f"{method}: KKT residual {kkt:.3e} above {tol:.0e}", residual=kkt)
    return sol


def solve_quadratic_kkt(s: StackedSystem, objectives) -> ReferenceSolution:
    """Solve the linear KKT system exactly (least-norm least squares).

    Raises :class:`Unbounded` when the Hessian and constraints leave a
    direction free, e.g. all-zero objectives.
    """
    bad = [f.kind for f in objectives if f.kind not in QUADRATIC_KINDS]
    if bad:
        raise ObjectiveError(f"exact KKT solve needs quadratic objectives, got {bad}")
    N = s.graph.m * s.n
    x0 = np.zeros(N)
    G = total_hessian(objectives, x0, s.n)
    g = total_gradient(objectives, x0, s.n)
    C = s.PH
    if numerical_rank(np.vstack([G, C])) < N:
        raise Unbounded("objective and constraints leave free directions; no unique minimizer")
    K = np.block([[G, C.T], [C, np.zeros((C.shape[0], C.shape[0]))]])
    rhs = np.concatenate([-g, s.Pb])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return _finish(s, objectives, sol[:N], sol[N:], 1, "quadratic_kkt")


def _newton_inner(s, objectives, x, mu, rho, gtol, max_iter=100):
    """Damped Newton on the augmented Lagrangian in ``x``."""
    C, d = s.PH, s.Pb
    CtC = C.T @ C

    def L(z):
        r = C @ z - d
        return total_value(objectives, z, s.n) + mu @ r + 0.5 * rho * (r @ r)

    def grad(z):
        return total_gradient(objectives, z, s.n) + C.T @ (mu + rho * (C @ z - d))

    g = grad(x)
    for _ in range(max_iter):
        if np.linalg.norm(g) <= gtol:
            break
        Hm = total_hessian(objectives, x, s.n) + rho * CtC
        p, *_ = np.linalg.lstsq(Hm, -g, rcond=None)
        slope = g @ p
        if slope >= 0:
            p, slope = -g, -(g @ g)
        step, f0 = 1.0, L(x)
        while step > 1e-12:
            x_try = x + step * p
            if L(x_try) <= f0 + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break
        x_new = x + step * p
        g_new = grad(x_new)
        if np.linalg.norm(g_new) >= np.linalg.norm(g) and step < 1e-8:
            break
        x, g = x_new, g_new
    return x


def solve_general(
    s: StackedSystem,
    objectives,
    init=None,
    tol: float = 1e-9,
    max_outer: int = 50,
    rho0: float = 10.0,
    rho_max: float = 1e6,
) -> ReferenceSolution:
    """Method of multipliers with a damped-Newton inner solve.

    The multiplier starts at the least-squares fit to stationarity at
    ``init``, so an optimal ``init`` converges in one outer iteration.  The
    penalty grows tenfold (capped at ``rho_max``) whenever the constraint
    violation fails to drop by a factor of four.
    """
    N = s.graph.m * s.n
    C, d = s.PH, s.Pb
    x = np.zeros(N) if init is None else np.array(init, dtype=float)
    mu, *_ = np.linalg.lstsq(C.T, -total_gradient(objectives, x, s.n), rcond=None)
    rho = rho0
    prev_viol = np.inf
    kkt = np.inf
    for it in range(1, max_outer + 1):
        x = _newton_inner(s, objectives, x, mu, rho, gtol=1e-10)
        r = C @ x - d
        mu = mu + rho * r
        stat, primal = kkt_residuals(s, objectives, x, mu)
        kkt = max(stat, primal)
        if kkt <= tol:
            return _finish(s, objectives, x, mu, it, "method_of_multipliers", tol=tol)
        viol = np.linalg.norm(r)
        if viol > 0.25 * prev_viol:
            rho = min(rho * 10.0, rho_max)
        prev_viol = viol
    raise NoConvergence(
        f"method of multipliers: KKT residual {kkt:.3e} after {max_outer} outer iterations",
        residual=kkt,
    )


def solve_reference(s: StackedSystem, objectives, init=None) -> ReferenceSolution:
    """Exact KKT solve for quadratic objectives, method of multipliers otherwise."""
    if all(f.kind in QUADRATIC_KINDS for f in objectives):
        return solve_quadratic_kkt(s, objectives)
    return solve_general(s, objectives, init=init)


def node_multiplier(s: StackedSystem, objectives, ref: ReferenceSolution) -> np.ndarray:
    """Agent-indexed multiplier ``lam`` with ``grad f(x*) + Hbar'Pbar Hbar lam = 0``.

    Least-squares fit; it exists because ``Hbar'Pbar mu*`` lies in the range
    of ``Hbar'Pbar Hbar``.
    """
    A = s.H_bar.T @ s.P_bar @ s.H_bar
    lam, *_ = np.linalg.lstsq(A, -total_gradient(objectives, ref.x_star, s.n), rcond=None)
    return lam


def distance_to_opt(x, ref: ReferenceSolution) -> float:
    """``W = 1/2 ||x - x*||^2``."""
    x = np.asarray(x, dtype=float)
    if x.shape != ref.x_star.shape:
        raise DimensionMismatch(f"state has shape {x.shape}, optimum has {ref.x_star.shape}")
    r = x - ref.x_star
    return 0.5 * float(r @ r)
