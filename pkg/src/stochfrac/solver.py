"""Incremental loading with staggered minimization over (u, alpha, d)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse
from scipy.sparse.linalg import MatrixRankWarning, splu

from .errors import ArgumentError, ConfigurationError, NonConvergenceError, NumericalError
from .fem import assembly as asm
from .fem.problem import DiscreteProblem
from .stochastic import QoICurve

REGIMES = ("E-D", "E-P-D", "E-P-DP")
DENSE_LIMIT = 400
ROUNDOFF = 1e3 * np.finfo(float).eps


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and loop controls.

    ``E-D`` skips the hardening block. ``E-P-D`` and ``E-P-DP`` run the same
    coupled solver; which response appears is decided by the parameters.
    """

    regime: str = "E-D"
    tol_stag: float = 1.0e-6
    max_stag: int = 200
    newton_tol: float = 1.0e-10
    newton_max: int = 25
    qp_max: int = 100
    tau: float = 1.0
    early_stop: bool = True
    failure_fraction: float = 0.01
    failure_steps: int = 3
    reaction_tag: str = "right"
    check_descent: bool = False
    descent_tol: float = 1.0e-8

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigurationError(f"regime must be one of {REGIMES}")
        for name in ("tol_stag", "newton_tol", "tau"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("max_stag", "newton_max", "qp_max", "failure_steps"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if not 0 <= self.failure_fraction < 1:
            raise ConfigurationError("failure_fraction must lie in [0, 1)")

    @property
    def plastic(self) -> bool:
        return self.regime != "E-D"


@dataclass
class StepResult:
    step: int
    time: float
    converged: bool
    iterations: int
    reaction: float
    displacement: float
    energies: dict
    descent_violations: list = field(default_factory=list)
    fields: dict | None = None


@dataclass
class SimulationResult:
    curve: QoICurve
    displacements: np.ndarray
    steps: list[StepResult]
    stopped_early: bool = False

    @property
    def forces(self) -> np.ndarray:
        return self.curve.values

    @property
    def peak(self) -> float:
        return self.curve.peak()


# --------------------------------------------------------------------------
# block solvers
# --------------------------------------------------------------------------


def _solve_linear(A: sparse.spmatrix, b: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            x = splu(sparse.csc_matrix(A)).solve(b)
        except (RuntimeError, MatrixRankWarning) as exc:
            raise NumericalError("singular system matrix", reason=str(exc)) from None
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite linear solve")
    return x


def solve_bounded_qp(A: sparse.spmatrix, b: np.ndarray, x0: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                     max_iter: int = 100) -> tuple[np.ndarray, int]:
    """Minimize ``x.A.x / 2 + b.x`` subject to ``lo <= x <= hi``.

    Primal-dual active set iteration with ``c = diag(A)``, started from the
    unconstrained minimizer; falls back to L-BFGS-B if the active sets cycle.
    ``A`` must be symmetric positive definite. Small systems are solved densely.
    """
    n = len(b)
    dense = n <= DENSE_LIMIT
    A = A.toarray() if dense else sparse.csr_matrix(A)
    solve = np.linalg.solve if dense else _solve_linear

    def sub(mask):
        return A[np.ix_(mask, mask)] if dense else A[mask][:, mask]

    try:
        x = solve(A, -b)
    except (np.linalg.LinAlgError, NumericalError):
        # singular without bounds (e.g. AT1 with no drive): rely on the active set
        x = np.asarray(x0, dtype=float)
    else:
        if np.all(x >= lo) and np.all(x <= hi):
            return x, 0
    c = np.diag(A) if dense else A.diagonal()
    x = np.clip(x, lo, hi)
    lam = -(A @ x + b)
    # slack so that roundoff-level bound contacts do not flip the active sets
    tol = 1e-12 * (np.max(np.abs(b)) + np.max(c) * max(np.max(np.abs(x)), 1.0))
    prev = None
    for it in range(1, max_iter + 1):
        up = lam + c * (x - hi) > tol
        low = (lam + c * (x - lo) < -tol) & ~up
        key = (up.tobytes(), low.tobytes())
        if key == prev:
            return x, it - 1
        prev = key
        act = up | low
        xn = np.where(up, hi, np.where(low, lo, 0.0))
        free = ~act
        if free.any():
            xa = np.where(act, xn, 0.0)
            rhs = -(b + A @ xa)[free]
            xn[free] = solve(sub(free), rhs)
        lam = -(A @ xn + b)
        lam[free] = 0.0
        x = xn
    # cycling: polish with a bound-constrained quasi-Newton method
    res = optimize.minimize(lambda z: (0.5 * z @ (A @ z) + b @ z, A @ z + b), x, jac=True, method="L-BFGS-B",
                            bounds=list(zip(lo, np.where(np.isinf(hi), None, hi))),
                            options={"maxiter": 10 * n + 1000, "ftol": 1e-15, "gtol": 1e-12})
    return np.clip(res.x, lo, hi), max_iter


def solve_u(problem: DiscreteProblem, u0, alpha, d, load: float, cfg: SolverConfig):
    """Damped Newton on the u-block potential with ``alpha`` and ``d`` frozen."""
    lay = problem.layout
    fixed = lay.u_fixed
    u = np.array(u0, dtype=float)
    u[fixed] = lay.dirichlet_values(load)
    f_ext = lay.external_force(load)
    w = problem.geometry.wdet.ravel()
    pat = asm.u_pattern(problem)
    pf = asm.point_fields(problem, u, alpha, d)
    energy = float(w @ pf.W - f_ext @ u)
    for it in range(cfg.newton_max + 1):
        f_int, Kt = asm.internal_force(problem, u, alpha, d, pf=pf)
        r = f_int - f_ext
        r[fixed] = 0.0
        rn = np.linalg.norm(r)
        # roundoff floor: f_int sums terms of size |K||u|, which dwarf it once a crack has opened
        floor = ROUNDOFF * np.linalg.norm(abs(Kt) @ np.abs(u))
        if rn <= max(cfg.newton_tol * (np.linalg.norm(f_int) + np.linalg.norm(f_ext)), floor) or rn == 0.0:
            return u, it
        if it == cfg.newton_max:
            break
        Kc = pat.condense(Kt, fixed)
        du = np.linalg.solve(Kc.toarray(), -r) if len(r) <= DENSE_LIMIT else _solve_linear(Kc, -r)
        slope = float(r @ du)
        step = 1.0
        for _ in range(30):
            trial = u + step * du
            pf_t = asm.point_fields(problem, trial, alpha, d)
            e_t = float(w @ pf_t.W - f_ext @ trial)
            if e_t <= energy + 1e-4 * step * slope or abs(e_t - energy) <= 1e-14 * max(abs(energy), 1e-300):
                break
            step *= 0.5
        if np.max(np.abs(step * du)) <= 1e-15 * max(np.max(np.abs(u)), 1e-300):
            return trial, it + 1
        u, pf, energy = trial, pf_t, e_t
    raise NumericalError("Newton iteration for u did not converge", residual=float(rn), iterations=cfg.newton_max)


def solve_alpha(problem: DiscreteProblem, u, alpha0, d, cfg: SolverConfig):
    """Bound-constrained quadratic minimization of the hardening block, ``alpha >= alpha_n``."""
    st = problem.state
    pf = asm.point_fields(problem, u, alpha0, d)
    mass, stiff, src = asm._alpha_coefficients(problem, pf, cfg.tau)
    A, b = asm._scalar_system(problem, mass, stiff, src)
    lo = st.alpha_n.copy()
    hi = np.full_like(lo, np.inf)
    fix = problem.layout.alpha_fixed
    hi[fix] = lo[fix]
    x, _ = solve_bounded_qp(A, b, alpha0, lo, hi, cfg.qp_max)
    return x


def solve_d(problem: DiscreteProblem, d0, history, cfg: SolverConfig):
    """Bound-constrained quadratic minimization of the damage block, ``d_n <= d <= 1``."""
    st = problem.state
    b, A = asm.assemble_d(problem, np.zeros_like(d0), history, cfg.tau)
    lo = st.d_n.copy()
    hi = np.ones_like(lo)
    fix = problem.layout.d_fixed
    hi[fix] = lo[fix]
    x, _ = solve_bounded_qp(A, b, d0, lo, hi, cfg.qp_max)
    return x


# --------------------------------------------------------------------------
# staggered step
# --------------------------------------------------------------------------


def _rel_change(new, old, floor):
    if new.size == 0:
        return 0.0
    return float(np.max(np.abs(new - old)) / max(float(np.max(np.abs(new))), floor))


def _prescribed_displacement(problem: DiscreteProblem, u: np.ndarray, tag: str) -> float:
    mesh = problem.mesh
    n = mesh.outward_normal(tag)
    nodes = mesh.boundary_nodes[tag]
    return float(np.mean(sum(n[k] * u[nodes * mesh.dim + k] for k in range(mesh.dim))))


def _check_descent(before, after, what, it, out, tol):
    if after > before + tol * max(abs(before), abs(after), 1e-300):
        out.append((it, what, before, after))


def solve_step(problem: DiscreteProblem, config: SolverConfig, n: int, store_fields: bool = False) -> StepResult:
    """Advance the committed state to load step ``n`` (1-based) by staggered minimization."""
    if not 1 <= n <= len(problem.schedule):
        raise ArgumentError(f"step index {n} outside the schedule")
    cfg = config
    st = problem.state
    t = float(problem.schedule[n - 1])
    st.load = t
    u, alpha, d = st.u_n.copy(), st.alpha_n.copy(), st.d_n.copy()
    history = st.history_n.copy()
    violations: list = []
    tau = cfg.tau
    converged = False
    for it in range(1, cfg.max_stag + 1):
        u_old, a_old, d_old = u, alpha, d
        if cfg.check_descent:
            e0 = asm.potential_mech(problem, u, alpha, d, t, tau)
        u, _ = solve_u(problem, u, alpha, d, t, cfg)
        if cfg.check_descent:
            e1 = asm.potential_mech(problem, u, alpha, d, t, tau)
            if it > 1:
                # the first u-solve also moves the Dirichlet values, so it is not a pure descent step
                _check_descent(e0, e1, "u", it, violations, cfg.descent_tol)
        if cfg.plastic:
            alpha = solve_alpha(problem, u, alpha, d, cfg)
            if cfg.check_descent:
                e2 = asm.potential_mech(problem, u, alpha, d, t, tau)
                _check_descent(e1, e2, "alpha", it, violations, cfg.descent_tol)
        pf = asm.point_fields(problem, u, alpha, d)
        history = asm.update_history(problem, pf)
        if cfg.check_descent:
            p0 = asm.potential_d(problem, d, history, tau)
        d = solve_d(problem, d, history, cfg)
        if cfg.check_descent:
            p1 = asm.potential_d(problem, d, history, tau)
            _check_descent(p0, p1, "d", it, violations, cfg.descent_tol)
        change = max(_rel_change(u, u_old, 1e-300), _rel_change(alpha, a_old, 1e-10), _rel_change(d, d_old, 1.0))
        if change <= cfg.tol_stag:
            converged = True
            break
    if not converged:
        raise NonConvergenceError(
            f"staggered iteration did not converge in {cfg.max_stag} iterations",
            last_iterate={"u": u, "alpha": alpha, "d": d, "history": history},
            step=n, change=change,
        )

    reaction = asm.reaction_force(problem, u, alpha, d, cfg.reaction_tag, t)
    pf = asm.point_fields(problem, u, alpha, d)
    w = problem.geometry.wdet.ravel()
    da = pf.a - pf.a_n
    energies = {
        "elastic": float(w @ pf.W),
        "hardening": float(w @ (0.5 * asm._coef(problem, "H") * pf.gh * pf.a**2)),
        "fracture": asm.fracture_surface_energy(problem, d),
        "plastic_dissipation": float(w @ (pf.g * asm._coef(problem, "sigma_Y") * da)) if cfg.plastic else 0.0,
    }
    # commit
    st.eps_p_n = asm.plastic_strain(problem, u, alpha)
    st.u, st.alpha, st.d, st.history = u, alpha, d, history
    st.u_n, st.alpha_n, st.d_n, st.history_n = u.copy(), alpha.copy(), d.copy(), history.copy()
    st.step = n
    fields = {"u": u.copy(), "alpha": alpha.copy(), "d": d.copy(), "history": history.copy()} if store_fields else None
    return StepResult(n, t, True, it, reaction, _prescribed_displacement(problem, u, cfg.reaction_tag), energies,
                      violations, fields)


def run_simulation(problem: DiscreteProblem, config: SolverConfig, schedule=None,
                   store_fields: bool = False) -> SimulationResult:
    """Solve every load step in order and record the reaction on ``config.reaction_tag``.

    With ``early_stop`` the run ends once the reaction stays below
    ``failure_fraction`` of its running peak for ``failure_steps`` steps.
    """
    if schedule is not None:
        problem.schedule = np.asarray(schedule, dtype=float)
        problem.__post_init__()
    problem.mesh.outward_normal(config.reaction_tag)
    steps: list[StepResult] = []
    peak = -math.inf
    low_count = 0
    stopped = False
    for n in range(1, len(problem.schedule) + 1):
        try:
            res = solve_step(problem, config, n, store_fields)
        except NumericalError as exc:
            exc.diagnostics.setdefault("step", n)
            raise
        steps.append(res)
        peak = max(peak, res.reaction)
        if config.early_stop and peak > 0:
            low_count = low_count + 1 if res.reaction < config.failure_fraction * peak else 0
            if low_count >= config.failure_steps:
                stopped = n < len(problem.schedule)
                break
    times = np.array([s.time for s in steps])
    curve = QoICurve(times, np.array([s.reaction for s in steps]))
    return SimulationResult(curve, np.array([s.displacement for s in steps]), steps, stopped)
