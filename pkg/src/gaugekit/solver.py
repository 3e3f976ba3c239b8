"""Fully corrective conditional-gradient solver.

Each iteration queries the family's linear minimization oracle with the
current gradient, appends the returned atom(s), and re-solves the problem
restricted to the conic hull of the selected atoms plus the lineality
space.  The iterate is therefore an explicit AtomicRepresentation at all
times.

Squared-l2 fits use an exact active-set method for the restricted problem
(a nonnegative least-squares problem with a linear cost term).  Equality
fits use linear programming, so the outer loop is column generation with
the LP duals playing the role of the gradient.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .core import (
    EQUALITY,
    SQUARED_L2,
    TRUNCATED_QUADRATIC,
    AtomicRepresentation,
    DataFit,
    GaugeError,
    Problem,
    compute_d,
    compute_delta,
    evaluate_gauge,
    evaluate_objective,
)

__all__ = [
    "SolverConfig",
    "SolveResult",
    "CapActive",
    "NoProgress",
    "NonConvexFit",
    "Infeasible",
    "nonneg_quadratic",
    "solve_master",
    "solve",
    "solve_tiny_nonconvex",
]

logger = logging.getLogger(__name__)


class CapActive(GaugeError):
    """The cone section radius bounds the solution."""


class NoProgress(GaugeError):
    """The oracle keeps returning atoms the master has already priced out."""


class NonConvexFit(GaugeError):
    pass


class Infeasible(GaugeError):
    """No combination of atoms reproduces the data exactly."""


@dataclass(frozen=True)
class SolverConfig:
    """Solver tolerances.

    ``dual_gap_tol`` is relative: iteration stops once the Frank-Wolfe gap
    is below ``dual_gap_tol * max(1, objective)``.  For conic gauges the gap
    is measured over the section ``{mass <= conic_radius}``; an explicit
    radius that the solution reaches raises CapActive.  None uses
    ``max(10 * max(1, ||y||) / sigma_min(Phi), 2 * mass)``, which keeps the
    iterate strictly inside.
    """

    max_iters: int = 500
    dual_gap_tol: float = 1e-10
    master_tol: float = 1e-12
    conic_radius: float | None = None
    prune_tol: float = 1e-10
    seed: int = 0
    max_candidates: int = 8

    def __post_init__(self):
        for name in ("dual_gap_tol", "master_tol", "prune_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.conic_radius is not None and not self.conic_radius > 0:
            raise ValueError("conic_radius must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class SolveResult:
    rep: AtomicRepresentation
    objective: float
    dual_gap: float
    t_star: float
    delta: int
    d: int
    iterations: int
    converged: bool
    problem: Problem = field(repr=False)
    history: list = field(default_factory=list, repr=False)

    @property
    def u(self):
        return self.rep.assemble()


# -- restricted problems -----------------------------------------------------


def _subproblem(M, b, lin, rtol=1e-10):
    """Unconstrained minimizer of ``0.5 ||M z - b||^2 + lin . z``.

    Returns ``(z, None)``, or ``(None, d)`` with ``M d = 0`` and
    ``lin . d < 0`` when the objective is unbounded below.
    """
    k = M.shape[1]
    U, s, Vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    V = Vt.T
    Vr, Vn = V[:, :rank], V[:, rank:]
    if Vn.shape[1]:
        ln = Vn.T @ lin
        if np.linalg.norm(ln) > 1e-12 * (1.0 + np.linalg.norm(lin)):
            return None, -(Vn @ ln)
    if rank == 0:
        return np.zeros(k), None
    sr = s[:rank]
    coef = (U[:, :rank].T @ b) / sr - (Vr.T @ lin) / sr**2
    return Vr @ coef, None


def nonneg_quadratic(M, b, lin=None, x0=None, tol=1e-12, max_iter=None):
    """Minimize ``0.5 ||M x - b||^2 + lin . x`` subject to ``x >= 0``.

    Primal active-set method in the style of Lawson and Hanson, extended
    with a linear term.  When the passive columns are linearly dependent
    and the linear term has a component along their null space, the step
    follows that null direction to the boundary instead.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    r = M.shape[1]
    lin = np.zeros(r) if lin is None else np.asarray(lin, dtype=float)
    if r == 0:
        return np.zeros(0)
    if max_iter is None:
        max_iter = 10 * r + 50
    gscale = 1.0 + np.abs(M.T @ b).max() + np.abs(lin).max()
    gtol = tol * gscale * max(1.0, np.abs(M).max()) ** 2

    x = np.zeros(r)
    passive = np.zeros(r, dtype=bool)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        passive = x0 > 0
        x = np.where(passive, x0, 0.0)
    blocked = np.zeros(r, dtype=bool)
    pending = bool(passive.any())

    for _ in range(max_iter):
        if not pending:
            grad = M.T @ (M @ x - b) + lin
            cand = ~passive & ~blocked & (grad < -gtol)
            if not cand.any():
                break
            j = int(np.flatnonzero(cand)[np.argmin(grad[cand])])
            passive[j] = True
        else:
            j = None
        pending = False
        x_before = x.copy()
        for _inner in range(r + 5):
            P = np.flatnonzero(passive)
            z, direction = _subproblem(M[:, P], b, lin[P])
            xp = x[P]
            if direction is None:
                if np.all(z > 0):
                    x = np.zeros(r)
                    x[P] = z
                    break
                neg = z <= 0
                t = float(np.min(xp[neg] / (xp[neg] - z[neg])))
                xp = xp + t * (z - xp)
            else:
                neg = direction < 0
                if not neg.any():
                    raise GaugeError("restricted problem is unbounded below")
                t = float(np.min(xp[neg] / -direction[neg]))
                xp = xp + t * direction
            x = np.zeros(r)
            x[P] = np.maximum(xp, 0.0)
            passive = x > 0
            if not passive.any():
                break
        if j is not None and not passive[j] and np.array_equal(x, x_before):
            blocked[j] = True
        else:
            blocked[:] = False
    return x


def _lineality_fit(phi_B, target):
    if phi_B.shape[1] == 0:
        return np.zeros(0)
    return np.linalg.lstsq(phi_B, target, rcond=None)[0]


def solve_master(atoms, problem, quotient=None, x0=None, master_tol=1e-12):
    """Solve the problem restricted to ``u_K + sum alpha_k psi_k``.

    Returns ``(alphas, w, duals)`` where ``u_K = B w`` with ``B`` the
    lineality basis.  ``duals`` is None for squared-l2 fits; for equality
    fits it holds the multipliers of ``Phi u = y``.
    """
    gauge, fit = problem.gauge, problem.fit
    Phi = problem.phi.matrix
    B = gauge.lineality_basis
    phi_B = Phi @ B
    Psi = np.column_stack([a.vector for a in atoms]) if atoms else np.zeros((problem.n, 0))
    A = Phi @ Psi
    costs = np.array([a.cost for a in atoms], dtype=float)
    y = fit.y
    if fit.kind == SQUARED_L2:
        if quotient is None:
            quotient = compute_d(gauge, problem.phi)
        Q = quotient.projector
        alphas = nonneg_quadratic(Q @ A, Q @ y, problem.reg_weight * costs, x0=x0, tol=master_tol)
        objective = 0.5 * float(np.sum((Q @ (A @ alphas - y)) ** 2))
        objective += problem.reg_weight * float(costs @ alphas)
        if not np.isfinite(objective):
            raise GaugeError("restricted objective is not finite")
        w = _lineality_fit(phi_B, y - A @ alphas)
        return alphas, w, None
    if fit.kind == EQUALITY:
        alphas, w, duals, _ = _equality_master(A, phi_B, y, problem.reg_weight * costs, phase=2)
        return alphas, w, duals
    raise NonConvexFit("restricted problems are only defined for convex fits")


def _equality_master(A, phi_B, y, costs, phase):
    """LP over ``A alpha + phi_B w (+ s_plus - s_minus) = y``, ``alpha >= 0``.

    Phase 1 minimizes the slack mass; phase 2 minimizes ``costs . alpha``
    without slacks.  Returns ``(alphas, w, duals, objective)`` or raises
    Infeasible in phase 2.
    """
    m, r = A.shape
    k = phi_B.shape[1]
    if phase == 2 and r + k == 0:
        if np.linalg.norm(y) > 1e-10 * (1.0 + np.linalg.norm(y)):
            raise Infeasible("no atoms to represent a nonzero y")
        return np.zeros(0), np.zeros(0), np.zeros(m), 0.0
    blocks = [A, phi_B]
    c = [np.zeros(r) if phase == 1 else costs, np.zeros(k)]
    bounds = [(0, None)] * r + [(None, None)] * k
    if phase == 1:
        eye = np.eye(m)
        blocks += [eye, -eye]
        c += [np.ones(m), np.ones(m)]
        bounds += [(0, None)] * (2 * m)
    res = linprog(
        np.concatenate(c),
        A_eq=np.hstack(blocks),
        b_eq=y,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise Infeasible(f"restricted LP failed: {res.message}")
    x = res.x
    return np.maximum(x[:r], 0.0), x[r : r + k], np.asarray(res.eqlin.marginals), float(res.fun)


def _polish_equality(A, phi_B, y, alphas):
    """Least-squares clean-up of an LP vertex: refit the support exactly."""
    S = np.flatnonzero(alphas > 0)
    mat = np.hstack([A[:, S], phi_B])
    if mat.shape[1] == 0 or np.linalg.matrix_rank(mat) < mat.shape[1]:
        return None
    sol = np.linalg.lstsq(mat, y, rcond=None)[0]
    a_new = sol[: S.size]
    if np.any(a_new <= 0):
        return None
    out = np.zeros_like(alphas)
    out[S] = a_new
    return out, sol[S.size :]


# -- outer loop -----------------------------------------------------------------


def _default_radius(problem):
    s = np.linalg.svd(problem.phi.matrix, compute_uv=False)
    s = s[s > 1e-12 * s[0]] if s.size and s[0] > 0 else np.array([1.0])
    return 10.0 * max(1.0, float(np.linalg.norm(problem.fit.y))) / float(s[-1])


def _useful(atoms):
    return [a for a in atoms if not a.is_zero]


class _State:
    """Selected atoms with label-based de-duplication."""

    def __init__(self, dim):
        self.atoms = []
        self.labels = {}
        self.alphas = np.zeros(0)
        self.w = None
        self.dim = dim

    def add(self, atom):
        key = atom.label if atom.label is not None else id(atom)
        if key in self.labels:
            return False
        self.labels[key] = len(self.atoms)
        self.atoms.append(atom)
        self.alphas = np.append(self.alphas, 0.0)
        return True

    def prune(self, tol):
        keep = self.alphas > tol
        if keep.all():
            return
        self.atoms = [a for a, k in zip(self.atoms, keep) if k]
        self.alphas = self.alphas[keep]
        self.labels = {(a.label if a.label is not None else id(a)): i for i, a in enumerate(self.atoms)}

    def rep(self, B):
        u_K = B @ self.w if self.w is not None and self.w.size else np.zeros(self.dim)
        return AtomicRepresentation(u_K, self.alphas, tuple(self.atoms))


def solve(problem, config=None):
    """Minimize ``f(Phi u) + reg_weight * J_C(u)`` for a convex fit.

    Raises
    ------
    NonConvexFit
        The fit is not convex; see :func:`solve_tiny_nonconvex`.
    CapActive
        A conic solution reaches an explicitly configured conic_radius.
    NoProgress
        The oracle keeps proposing atoms that are already priced out.
    Infeasible
        An equality fit cannot be met by any conical combination.
    """
    config = config or SolverConfig()
    fit = problem.fit
    if not fit.convex:
        raise NonConvexFit(f"{fit.kind} is not convex; use solve_tiny_nonconvex")
    quotient = compute_d(problem.gauge, problem.phi)
    if fit.kind == EQUALITY:
        state, gap, iters, history, converged = _column_generation(problem, config)
    else:
        state, gap, iters, history, converged = _frank_wolfe(problem, config, quotient)
    return _finish(problem, config, quotient, state, gap, iters, history, converged)


def _frank_wolfe(problem, config, quotient):
    gauge = problem.gauge
    Phi = problem.phi.matrix
    B = gauge.lineality_basis
    lam = problem.reg_weight
    state = _State(problem.n)
    radius = config.conic_radius or (_default_radius(problem) if gauge.conic else None)
    history = []
    stalls = 0
    gap = np.inf
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        alphas, w, _ = solve_master(
            state.atoms, problem, quotient, x0=state.alphas if state.atoms else None,
            master_tol=config.master_tol,
        )
        state.alphas, state.w = alphas, w
        state.prune(config.prune_tol)
        rep = state.rep(B)
        u = rep.assemble()
        z = Phi @ u
        g = Phi.T @ problem.fit.gradient(z)
        objective = problem.fit(z) + lam * rep.total_cost
        history.append(objective)

        cands = _useful(gauge.lmo_candidates(g))[: config.max_candidates]
        reduced = [float(g @ a.vector) + lam * a.cost for a in cands]
        min_red = min(reduced, default=0.0)
        if gauge.conic and config.conic_radius is None:
            # keep the iterate strictly inside the section so the gap
            # certifies the uncapped problem
            radius = max(radius, 2.0 * float(state.alphas.sum()))
        bound = radius if gauge.conic else objective / lam
        gap = float(g @ u) + lam * rep.total_cost - min(0.0, bound * min_red)
        gap = max(gap, 0.0)
        if gap <= config.dual_gap_tol * max(1.0, abs(objective)):
            converged = True
            break
        added = [state.add(a) for a, red in zip(cands, reduced) if red < 0]
        if not any(added):
            stalls += 1
            if stalls >= 3:
                raise NoProgress(
                    f"oracle atoms already selected but gap {gap:.3e} remains"
                )
        else:
            stalls = 0
    if gauge.conic and state.atoms and config.conic_radius is not None:
        mass = float(state.alphas.sum())
        if mass >= radius:
            raise CapActive(f"solution mass {mass:.4g} reaches conic_radius {radius:.4g}")
    return state, gap, it, history, converged


def _column_generation(problem, config):
    gauge = problem.gauge
    Phi = problem.phi.matrix
    y = problem.fit.y
    B = gauge.lineality_basis
    phi_B = Phi @ B
    lam = problem.reg_weight
    state = _State(problem.n)
    history = []
    feas_tol = 1e-10 * (1.0 + float(np.linalg.norm(y, 1)))
    it = 0

    def matrix():
        if not state.atoms:
            return np.zeros((problem.m, 0))
        return Phi @ np.column_stack([a.vector for a in state.atoms])

    # phase 1: reach exact feasibility
    stalls = 0
    while True:
        it += 1
        if it > config.max_iters:
            raise NoProgress("phase 1 did not reach feasibility within max_iters")
        alphas, w, duals, slack = _equality_master(matrix(), phi_B, y, None, phase=1)
        state.alphas, state.w = alphas, w
        history.append(slack)
        if slack <= feas_tol:
            break
        g = -(Phi.T @ duals)
        cands = _useful(gauge.lmo_candidates(g))[: config.max_candidates]
        improving = [a for a in cands if float(g @ a.vector) < -1e-12 * (1 + np.abs(g).max())]
        if not improving:
            raise Infeasible(f"no atom reduces the residual {slack:.3e}")
        if not any([state.add(a) for a in improving]):
            stalls += 1
            if stalls >= 3:
                raise NoProgress("phase 1 stalled on already selected atoms")
        else:
            stalls = 0
    state.prune(0.0)

    costs_all = lambda: np.array([a.cost for a in state.atoms])  # noqa: E731
    gap = 0.0
    converged = True
    if not gauge.conic:
        converged = False
        stalls = 0
        while it < config.max_iters:
            it += 1
            alphas, w, duals, objective = _equality_master(
                matrix(), phi_B, y, lam * costs_all(), phase=2
            )
            state.alphas, state.w = alphas, w
            history.append(objective)
            g = -(Phi.T @ duals)
            cands = _useful(gauge.lmo_candidates(g))[: config.max_candidates]
            reduced = [float(g @ a.vector) + lam * a.cost for a in cands]
            min_red = min(reduced, default=0.0)
            gap = max(0.0, -(objective / lam) * min(0.0, min_red))
            if gap <= config.dual_gap_tol * max(1.0, abs(objective)):
                converged = True
                break
            if not any([state.add(a) for a, red in zip(cands, reduced) if red < 0]):
                stalls += 1
                if stalls >= 3:
                    raise NoProgress(f"phase 2 stalled with gap {gap:.3e}")
            else:
                stalls = 0
    state.prune(config.prune_tol)
    polished = _polish_equality(matrix(), phi_B, y, state.alphas)
    if polished is not None:
        state.alphas, state.w = polished
    return state, gap, it, history, converged


def _finish(problem, config, quotient, state, gap, iters, history, converged):
    gauge = problem.gauge
    rep = state.rep(gauge.lineality_basis)
    decompose = gauge.metadata.get("decompose")
    if decompose is not None and rep.r:
        # re-express through level sets: same vector, cost never larger
        u = rep.assemble()
        alphas, atoms = decompose(u)
        candidate = AtomicRepresentation(rep.u_K, alphas, tuple(atoms))
        if candidate.total_cost <= rep.total_cost * (1 + 1e-12) + 1e-12:
            rep = candidate
    u = rep.assemble()
    objective = evaluate_objective(problem, u)
    t_star = evaluate_gauge(gauge, u) if not gauge.conic else 0.0
    return SolveResult(
        rep=rep,
        objective=objective,
        dual_gap=gap,
        t_star=t_star,
        delta=compute_delta(problem, t_star),
        d=quotient.d,
        iterations=iters,
        converged=converged,
        problem=problem,
        history=history,
    )


# -- tiny non-convex problems ------------------------------------------------------


def _grid_axes(problem, points, radius):
    gauge = problem.gauge
    if radius is None:
        if gauge.conic:
            raise ValueError("conic gauges need an explicit grid radius")
        radius = problem.fit(np.zeros(problem.m)) / problem.reg_weight
    lo = 0.0 if gauge.conic else -radius
    return np.linspace(lo, radius, points), radius


def _grid_search(problem, axis, chunk=200_000):
    n = problem.n
    Phi = problem.phi.matrix
    best_val, best_u = np.inf, None
    total = axis.size**n
    idx = np.arange(total)
    for start in range(0, total, chunk):
        block = idx[start : start + chunk]
        digits = np.stack(np.unravel_index(block, (axis.size,) * n), axis=1)
        U = axis[digits]
        Z = U @ Phi.T
        r = Z - problem.fit.y
        vals = np.minimum(0.5 * r * r, problem.fit.cap).sum(axis=1)
        gauges = np.array([problem.gauge.gauge_fn(u) for u in U]) if problem.gauge.conic else None
        if gauges is None:
            tag = problem.gauge.family_tag
            if tag in ("L1Ball", "MeasureMass"):
                gauges = np.abs(U).sum(axis=1)
            else:
                gauges = np.array([problem.gauge.gauge_fn(u) for u in U])
        vals = vals + problem.reg_weight * gauges
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_u = float(vals[k]), U[k].copy()
    return best_val, best_u


def solve_tiny_nonconvex(problem, grid_spec=None, config=None):
    """Global minimization for a truncated-quadratic fit on tiny instances.

    A uniform grid over the signal box (``grid_spec["points"]`` per axis)
    locates the global basin.  The truncated quadratic is the minimum of
    ``2**m`` convex pieces, one per set ``T`` of saturated measurements, so
    the polish step solves each piece exactly with :func:`solve` and keeps
    the best; the result never exceeds the grid optimum.
    """
    grid_spec = dict(grid_spec or {})
    config = config or SolverConfig()
    fit = problem.fit
    if fit.kind != TRUNCATED_QUADRATIC:
        raise ValueError("solve_tiny_nonconvex expects a TruncatedQuadratic fit")
    if problem.n > 4:
        raise ValueError(f"ambient dimension {problem.n} is too large (max 4)")
    if problem.gauge.atoms is None or problem.gauge.lineality_dim:
        raise ValueError("need a finite atom family with trivial lineality space")
    axis, radius = _grid_axes(problem, grid_spec.get("points", 31), grid_spec.get("radius"))
    grid_value, grid_u = _grid_search(problem, axis)

    Phi, y = problem.phi.matrix, fit.y
    best = None
    for saturated in itertools.product((False, True), repeat=problem.m):
        keep = ~np.array(saturated)
        if keep.any():
            piece = Problem(
                problem.gauge, Phi[keep], DataFit.squared_l2(y[keep]), problem.reg_weight
            )
            result = solve(piece, config)
            rep = result.rep
        else:
            rep = AtomicRepresentation.empty(problem.n)
        value = evaluate_objective(problem, rep.assemble())
        if best is None or value < best[0] - 1e-12:
            best = (value, rep)
    value, rep = best
    if value > grid_value + 1e-9 * max(1.0, abs(grid_value)):
        raise GaugeError("polished solution is worse than the grid optimum")
    quotient = compute_d(problem.gauge, problem.phi)
    u = rep.assemble()
    t_star = evaluate_gauge(problem.gauge, u) if not problem.gauge.conic else 0.0
    return SolveResult(
        rep=rep,
        objective=value,
        dual_gap=max(0.0, value - grid_value),
        t_star=t_star,
        delta=compute_delta(problem, t_star),
        d=quotient.d,
        iterations=axis.size**problem.n,
        converged=True,
        problem=problem,
        history=[grid_value, value],
    )
