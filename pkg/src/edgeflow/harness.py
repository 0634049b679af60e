"""Experiment runner: scenario validation, simulation, metrics and audits."""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import graph as graph_mod
from .constraints import (
    DEFAULT_FEASIBILITY_TOL,
    EdgeConstraint,
    StackedSystem,
    agreement_error,
    feasible_point,
    project_constraint,
    stack,
    well_configured,
)
from .dynamics import DistributedRHS, LocalityLog, SystemState, equilibrium_residual
from .errors import (
    DimensionMismatch,
    EdgeflowError,
    InsufficientData,
    NoConvergence,
    Unbounded,
    ValidationFailed,
)
from .graph import Graph
from .integrate import IntegratorConfig, integrate
from .objectives import Zero, total_hessian
from .reference import ReferenceSolution, distance_to_opt, solve_reference

log = logging.getLogger(__name__)

MODES = ("saddle_point", "edge_only")
RATE_FLOOR = 1e-13


@dataclass(frozen=True, eq=False)
class ExplicitInit:
    x0: np.ndarray
    lam0: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.lam0 is not None:
            object.__setattr__(self, "lam0", np.asarray(self.lam0, dtype=float))


@dataclass(frozen=True)
class UniformInit:
    seed: int
    low: float = -10.0
    high: float = 10.0

    def __post_init__(self):
        if not self.high > self.low:
            raise ValueError(f"uniform init needs high > low, got [{self.low}, {self.high}]")


@dataclass(frozen=True, eq=False)
class Scenario:
    n: int
    graph: Graph
    constraints: tuple[EdgeConstraint, ...]
    objectives: tuple
    mode: str = "saddle_point"
    init: ExplicitInit | UniformInit = UniformInit(seed=0)
    integrator: IntegratorConfig = IntegratorConfig()
    allow_objectives_in_edge_only: bool = False
    name: str = ""

    @property
    def m(self) -> int:
        return self.graph.m

    @cached_property
    def system(self) -> StackedSystem:
        return stack(self.graph, self.constraints, self.n)

    @property
    def has_objective(self) -> bool:
        return any(not isinstance(f, Zero) for f in self.objectives)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


@dataclass
class Check:
    name: str
    ok: bool
    message: str = ""
    evidence: dict = field(default_factory=dict)


@dataclass
class ValidationReport:
    checks: list[Check]
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def first_failure(self) -> Check | None:
        return next((c for c in self.checks if not c.ok), None)


def validate_scenario(sc: Scenario, feasibility_tol: float = DEFAULT_FEASIBILITY_TOL) -> ValidationReport:
    """Run the consistency, rank, connectivity, well-configuredness and feasibility checks.

    Later checks need the stacked system and are reported as failed
    (``skipped``) when consistency or rank fails.
    """
    checks, warnings = [], []
    problems = []
    if sc.mode not in MODES:
        problems.append(f"unknown mode {sc.mode!r}")
    if len(sc.objectives) != sc.m:
        problems.append(f"{len(sc.objectives)} objectives for {sc.m} agents")
    if len(sc.constraints) != sc.graph.edge_count:
        problems.append(f"{len(sc.constraints)} constraints for {sc.graph.edge_count} edges")
    listed = {(c.i, c.j) for c in sc.constraints}
    for i, j in sc.graph.edges:
        if (i, j) not in listed:
            problems.append(f"edge ({i + 1}, {j + 1}) has no constraint in listing orientation")
    for c in sc.constraints:
        if c.n != sc.n:
            problems.append(f"edge ({c.i + 1}, {c.j + 1}): A has {c.n} columns, n = {sc.n}")
    if sc.mode == "edge_only" and sc.has_objective and not sc.allow_objectives_in_edge_only:
        problems.append("edge_only mode with non-zero objectives needs allow_objectives_in_edge_only")
    stop = sc.integrator.stop_on
    if stop is not None and stop.metric == "W" and (sc.mode != "saddle_point" or not sc.has_objective):
        problems.append("stop_on W needs saddle_point mode with a non-zero objective")
    checks.append(Check("consistency", not problems, "; ".join(problems)))

    rank_msgs = []
    for c in sc.constraints:
        try:
            project_constraint(c)
        except EdgeflowError as exc:
            rank_msgs.append(str(exc))
    checks.append(Check("rank", not rank_msgs, "; ".join(rank_msgs)))

    ncomp = graph_mod.connected_components(sc.graph)
    checks.append(
        Check("connectivity", ncomp == 1, "" if ncomp == 1 else f"{ncomp} components", {"components": ncomp})
    )

    if problems or rank_msgs:
        checks.append(Check("well_configured", False, "skipped"))
        checks.append(Check("feasibility", False, "skipped"))
        return ValidationReport(checks, warnings)

    s = sc.system
    wc = well_configured(s)
    checks.append(
        Check(
            "well_configured",
            wc.ok,
            "" if wc.ok else "rank(H'PH) != rank(PH)",
            {"rank_PH": wc.rank_PH, "rank_HPH": wc.rank_HPH},
        )
    )
    feas = feasible_point(s, tol=feasibility_tol)
    checks.append(
        Check(
            "feasibility",
            feas.ok,
            "" if feas.ok else f"least-squares residual {feas.residual:.3e}",
            {"residual": feas.residual},
        )
    )

    if sc.mode == "saddle_point" and sc.has_objective:
        x0 = np.zeros(sc.m * sc.n)
        if isinstance(sc.init, ExplicitInit) and sc.init.x0.shape == x0.shape:
            x0 = sc.init.x0
        if all(np.linalg.eigvalsh(total_hessian([f], xi, sc.n)).max() <= 1e-12
               for f, xi in zip(sc.objectives, x0.reshape(sc.m, sc.n))):
            warnings.append("every agent Hessian is singular at the initial point; strict convexity unverified")
    return ValidationReport(checks, warnings)


def initialize(sc: Scenario, seed: int | None = None):
    """Initial ``(x0, lam0)``; ``seed`` overrides the scenario's uniform seed."""
    N = sc.m * sc.n
    init = sc.init
    if isinstance(init, ExplicitInit):
        x0 = init.x0
        lam0 = init.lam0 if init.lam0 is not None else np.zeros(N)
        if x0.shape != (N,) or lam0.shape != (N,):
            raise DimensionMismatch(f"explicit init needs vectors of length {N}")
        return SystemState(x=x0.copy(), lam=lam0.copy(), t=0.0)
    rng = np.random.default_rng(init.seed if seed is None else seed)
    return SystemState(x=rng.uniform(init.low, init.high, size=N), lam=np.zeros(N), t=0.0)


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    V: np.ndarray
    W: np.ndarray | None = None

    def __len__(self):
        return len(self.times)

    def state(self, k: int):
        return SystemState(x=self.x[k], lam=self.lam[k], t=float(self.times[k]))


@dataclass
class RunSummary:
    final_V: float
    final_W: float | None
    final_rhs_norm: float
    fitted_rate: float | None
    fit_r_squared: float | None
    fit_metric: str
    locality_ok: bool
    wall_time: float
    seed: int | None
    t_final: float
    stop_reason: str
    mode: str
    equilibrium_residual: tuple[float, float] | None = None
    reference: dict | None = None
    integrator: dict = field(default_factory=dict)
    nfev: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["equilibrium_residual"] is not None:
            d["equilibrium_residual"] = {
                "primal": self.equilibrium_residual[0],
                "stationarity": self.equilibrium_residual[1],
            }
        return d


def locality_audit(record: LocalityLog, g: Graph) -> bool:
    """True iff every agent was called and only ever saw its graph neighbors."""
    if record.calls == 0:
        return False
    for i in range(g.m):
        if record.observed.get(i) != {g.neighbors[i]}:
            return False
    return set(record.observed) == set(range(g.m))


def fit_exponential_rate(times, series, window: float = 0.6, floor: float = RATE_FLOOR):
    """Fit ``series ~ exp(-rate * t)`` by least squares on ``log(series)``.

    Samples from the first one at or below ``floor`` onward are dropped, then
    the samples in the middle ``window`` fraction of the remaining time span
    are fitted.  The window is measured in time rather than sample count
    because adaptive recording is dense early and sparse late.  Returns
    ``(rate, r_squared)``.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    low = np.nonzero(~(y > floor))[0]
    end = low[0] if low.size else y.size
    t, y = t[:end], y[:end]
    if y.size:
        margin = 0.5 * (1.0 - window) * (t[-1] - t[0])
        keep = (t >= t[0] + margin) & (t <= t[-1] - margin)
        t, y = t[keep], y[keep]
    if y.size < 10:
        raise InsufficientData(f"only {y.size} usable samples for the rate fit")
    ly = np.log(y)
    slope, intercept = np.polyfit(t, ly, 1)
    resid = ly - (slope * t + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return float(-slope), float(r2)


def _stop_fn(sc: Scenario, rhs: DistributedRHS, ref: ReferenceSolution | None):
    rule = sc.integrator.stop_on
    if rule is None:
        return None
    N = sc.m * sc.n
    if rule.metric == "V":
        return lambda t, z: agreement_error(sc.constraints, z[:N], sc.n) <= rule.threshold
    if rule.metric == "W":
        return lambda t, z: distance_to_opt(z[:N], ref) <= rule.threshold
    return lambda t, z: float(np.linalg.norm(rhs(t, z))) <= rule.threshold


def run(sc: Scenario, seed: int | None = None, reference: ReferenceSolution | None = None):
    """Simulate the scenario's flow; returns ``(Trajectory, RunSummary)``.

    The global derivative is assembled only from per-agent updates.  W is
    recorded in saddle-point mode when a reference optimum is available,
    either passed in or computed here.
    """
    report = validate_scenario(sc)
    bad = report.first_failure()
    if bad is not None:
        raise ValidationFailed(bad.name, bad.message)
    for w in report.warnings:
        log.warning(w)

    t_start = time.perf_counter()
    s = sc.system
    N = sc.m * sc.n
    notes = list(report.warnings)
    state0 = initialize(sc, seed)
    if seed is None and isinstance(sc.init, UniformInit):
        seed = sc.init.seed

    ref = None
    if sc.mode == "saddle_point" and sc.has_objective:
        if reference is not None:
            ref = reference
        else:
            try:
                ref = solve_reference(s, sc.objectives)
            except (NoConvergence, Unbounded) as exc:
                notes.append(f"reference solve failed, W not recorded: {exc}")
        if ref is not None and not ref.unique:
            notes.append("objective not strictly convex at x*; W measured against one optimum")
    if sc.integrator.stop_on is not None and sc.integrator.stop_on.metric == "W" and ref is None:
        raise ValidationFailed("consistency", "stop_on W but no reference optimum")

    rhs = DistributedRHS(s, sc.objectives, mode=sc.mode)
    if sc.mode == "saddle_point":
        z0 = np.concatenate([state0.x, state0.lam])
    else:
        z0 = state0.x.copy()
    sol = integrate(rhs, z0, sc.integrator, stop=_stop_fn(sc, rhs, ref))

    X = sol.states[:, :N]
    if sc.mode == "saddle_point":
        Lam = sol.states[:, N:]
    else:
        Lam = np.broadcast_to(state0.lam, X.shape).copy()
    V = np.array([agreement_error(sc.constraints, x, sc.n) for x in X])
    W = np.array([distance_to_opt(x, ref) for x in X]) if ref is not None else None
    traj = Trajectory(times=sol.times, x=X, lam=Lam, V=V, W=W)

    final_rhs = float(np.linalg.norm(rhs(sol.t_final, sol.y_final)))
    fit_metric = "W" if W is not None else "V"
    try:
        rate, r2 = fit_exponential_rate(traj.times, W if W is not None else V)
    except InsufficientData as exc:
        rate = r2 = None
        notes.append(f"rate fit skipped: {exc}")

    eq = None
    if sc.mode == "saddle_point":
        eq = equilibrium_residual(s, sc.objectives, X[-1], Lam[-1])

    summary = RunSummary(
        final_V=float(V[-1]),
        final_W=float(W[-1]) if W is not None else None,
        final_rhs_norm=final_rhs,
        fitted_rate=rate,
        fit_r_squared=r2,
        fit_metric=fit_metric,
        locality_ok=locality_audit(rhs.log, sc.graph),
        wall_time=time.perf_counter() - t_start,
        seed=seed,
        t_final=sol.t_final,
        stop_reason=sol.stop_reason,
        mode=sc.mode,
        equilibrium_residual=eq,
        reference=None if ref is None else {
            "kkt_residual": ref.kkt_residual,
            "objective_value": ref.objective_value,
            "method": ref.method,
            "unique": ref.unique,
        },
        integrator=dataclasses.asdict(sc.integrator),
        nfev=sol.nfev,
        notes=notes,
    )
    return traj, summary
