"""Carathéodory-type reduction of atomic representations.

Given ``u = u_K + sum_k alpha_k psi_k``, repeatedly pick a nonzero vector
``gamma`` with ``sum_k gamma_k Q Phi psi_k = 0`` and move
``alpha <- alpha + t gamma`` until some coefficient hits zero.  Here ``Q``
projects out ``Phi(C_K)``, so the measurement change is absorbed by a
least-squares refit of ``u_K``.

* Phase A also requires ``sum_k gamma_k cost_k = 0``, so ``Phi u`` and the
  total cost are both preserved: valid for any input and any data fit.
  It stops with at most ``m - d + 1`` atoms.
* Phase B (optimal inputs, convex fits) drops the cost row and steps in
  the direction that does not increase the cost.  At an optimum the cost
  cannot strictly decrease, so the step is cost-neutral; it stops at
  ``m - d + delta`` atoms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import (
    EQUALITY,
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
    "OBJ_TOL",
    "InfeasibleStep",
    "QuotientRankDeficiency",
    "PivotRecord",
    "SparsifyReport",
    "kernel_vector",
    "applicable_bound",
    "sparsify",
    "certify_bound",
]

OBJ_TOL = 1e-8


class InfeasibleStep(GaugeError):
    pass


class QuotientRankDeficiency(GaugeError):
    pass


@dataclass
class PivotRecord:
    phase: str
    gamma: list
    step: float
    removed: list

    def to_dict(self):
        return {
            "phase": self.phase,
            "gamma": self.gamma,
            "step": self.step,
            "removed": [str(label) for label in self.removed],
        }


@dataclass
class SparsifyReport:
    r_in: int
    r_out: int
    bound: int
    bound_met: bool
    phi_residual: float
    cost_change: float
    objective_change: float
    m: int
    d: int
    delta: int
    rays_only: bool
    pivot_log: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def to_dict(self):
        out = {k: v for k, v in self.__dict__.items() if k != "pivot_log"}
        out["pivot_log"] = [p.to_dict() for p in self.pivot_log]
        return out


def kernel_vector(K, rtol=1e-10):
    """A deterministic nonzero null vector of ``K``, or None.

    Columns are ordered by a pivoted QR factorization; the free column with
    the lowest original index gets coefficient 1 and the basic columns are
    solved for.
    """
    rows, r = K.shape
    if r == 0:
        return None
    if rows == 0 or not np.any(K):
        gamma = np.zeros(r)
        gamma[0] = 1.0
        return gamma
    _, R, piv = scipy.linalg.qr(K, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank == r:
        return None
    free = piv[rank:]
    j = int(free.min())
    pos = int(np.flatnonzero(piv == j)[0])
    gamma = np.zeros(r)
    gamma[j] = 1.0
    if rank:
        coef = scipy.linalg.solve_triangular(R[:rank, :rank], R[:rank, pos])
        gamma[piv[:rank]] = -coef
    # numerically dependent columns must give a genuine null vector
    scale = np.abs(K).max() * np.abs(gamma).max()
    if np.abs(K @ gamma).max() > 1e-12 * r * scale:
        return None
    return gamma


def _blocking(alphas, direction):
    neg = direction < 0
    if not neg.any():
        return np.inf, np.array([], dtype=int)
    ratios = np.full(alphas.shape, np.inf)
    ratios[neg] = alphas[neg] / -direction[neg]
    t = float(ratios.min())
    hit = np.flatnonzero(ratios <= t * (1 + 1e-12))
    return t, hit


def _choose_step(alphas, gamma, signs=(1, -1)):
    """Pick the sign with the smallest blocking ratio.

    On ties the step that zeros the highest-index atom wins, so earlier
    atoms survive.
    """
    best = None
    for sign in signs:
        t, hit = _blocking(alphas, sign * gamma)
        if not np.isfinite(t):
            continue
        key = (t, -int(hit.max()))
        if best is None or key[0] < best[0][0] * (1 - 1e-12) or (
            abs(key[0] - best[0][0]) <= 1e-12 * best[0][0] and key[1] < best[0][1]
        ):
            best = (key, sign, t, hit)
    if best is None:
        raise InfeasibleStep("no sign of the kernel vector admits a positive step")
    _, sign, t, hit = best
    if not t > 0:
        raise InfeasibleStep("kernel step has zero length")
    return sign, t, hit


def applicable_bound(m, d, delta, atoms):
    """Atom-count bound for the surviving atoms.

    The ray variant ``m - 1 - d + delta`` applies only when every atom is
    a ray direction; otherwise ``m - d + delta``.
    """
    rays_only = bool(atoms) and all(a.is_ray for a in atoms)
    return (m - 1 - d + delta if rays_only else m - d + delta), rays_only


class _Pivoter:
    def __init__(self, rep, problem, quotient):
        self.problem = problem
        self.Phi = problem.phi.matrix
        self.B = problem.gauge.lineality_basis
        self.phi_B = self.Phi @ self.B
        self.u_K = np.array(rep.u_K)
        self.w_in = self.B.T @ self.u_K if self.B.shape[1] else np.zeros(0)
        self.alphas = np.array(rep.alphas, dtype=float)
        self.atoms = list(rep.atoms)
        self.target = self.Phi @ rep.assemble()
        basis = quotient.basis
        m = self.Phi.shape[0]
        if basis.shape[1]:
            comp = scipy.linalg.null_space(basis.T)
        else:
            comp = np.eye(m)
        if comp.shape[1] != m - quotient.d:
            raise QuotientRankDeficiency(
                f"complement of Phi(C_K) has dimension {comp.shape[1]}, expected {m - quotient.d}"
            )
        self.comp = comp
        self.log = []
        self._drop_nonpositive()

    def _drop_nonpositive(self):
        keep = self.alphas > 0
        self.atoms = [a for a, k in zip(self.atoms, keep) if k]
        self.alphas = self.alphas[keep]

    @property
    def r(self):
        return len(self.atoms)

    def measurement_block(self):
        if not self.atoms:
            return np.zeros((self.comp.shape[1], 0))
        Psi = np.column_stack([a.vector for a in self.atoms])
        return self.comp.T @ (self.Phi @ Psi)

    def costs(self):
        return np.array([a.cost for a in self.atoms], dtype=float)

    def step(self, phase, gamma, signs):
        sign, t, hit = _choose_step(self.alphas, gamma, signs)
        direction = sign * gamma
        removed = [self.atoms[i].label for i in hit]
        new = self.alphas + t * direction
        new[hit] = 0.0
        new[new < 0] = 0.0
        self.log.append(PivotRecord(phase, direction.tolist(), t, removed))
        self.alphas = new
        self._drop_nonpositive()
        self._refit_lineality()
        return float(self.costs() @ self.alphas)

    def _refit_lineality(self):
        if not self.B.shape[1]:
            return
        rep = self.rep()
        residual = self.target - self.Phi @ rep.assemble()
        dw = np.linalg.lstsq(self.phi_B, residual, rcond=None)[0]
        self.u_K = self.u_K + self.B @ dw

    def rep(self):
        return AtomicRepresentation(self.u_K, self.alphas, tuple(self.atoms))


def sparsify(rep, problem, optimal_flag, quotient=None, delta=None, obj_tol=OBJ_TOL):
    """Reduce ``rep`` to few atoms without changing ``Phi u``.

    Parameters
    ----------
    rep : AtomicRepresentation
    problem : Problem
    optimal_flag : bool
        The input is (numerically) optimal for a convex fit, which licenses
        phase B.
    quotient : QuotientInfo, optional
        Output of :func:`compute_d`; computed when omitted.
    delta : int, optional
        Defaults to :func:`compute_delta` at the input's gauge value.

    Returns
    -------
    (AtomicRepresentation, SparsifyReport)
    """
    if quotient is None:
        quotient = compute_d(problem.gauge, problem.phi)
    u_in = rep.assemble()
    if delta is None:
        t = 0.0 if problem.gauge.conic else evaluate_gauge(problem.gauge, u_in)
        delta = compute_delta(problem, t)
    m, d = problem.m, quotient.d
    cost_in = rep.total_cost
    obj_in = evaluate_objective(problem, u_in)
    piv = _Pivoter(rep, problem, quotient)
    diagnostics = []

    # phase A: preserve Q Phi u and the total cost
    while piv.r:
        K = np.vstack([piv.measurement_block(), piv.costs()[None, :]])
        gamma = kernel_vector(K)
        if gamma is None:
            break
        piv.step("A", gamma, (1, -1))

    if optimal_flag and problem.fit.convex:
        lam = problem.reg_weight
        while piv.r > m - d + delta:
            gamma = kernel_vector(piv.measurement_block())
            if gamma is None:
                break
            costs = piv.costs()
            slope = float(costs @ gamma)
            tiny = 1e-12 * (1.0 + np.abs(costs).max()) * np.abs(gamma).max()
            if abs(slope) <= tiny:
                signs = (1, -1)
            else:
                signs = (1,) if slope < 0 else (-1,)
            before = float(costs @ piv.alphas)
            after = piv.step("B", gamma, signs)
            if lam * (before - after) > obj_tol:
                diagnostics.append(
                    f"suboptimal input: phase B lowered the cost by {before - after:.3e}"
                )

    out = piv.rep()
    u_out = out.assemble()
    bound, rays_only = applicable_bound(m, d, delta, out.atoms)
    obj_out = evaluate_objective(problem, u_out)
    if np.isfinite(obj_in) and np.isfinite(obj_out):
        obj_change = obj_out - obj_in
    else:
        obj_change = 0.0 if obj_in == obj_out else np.inf
    if obj_change > obj_tol:
        diagnostics.append(f"objective increased by {obj_change:.3e}")
    report = SparsifyReport(
        r_in=rep.r,
        r_out=out.r,
        bound=bound,
        bound_met=out.r <= bound,
        phi_residual=float(np.linalg.norm(problem.phi.matrix @ (u_in - u_out))),
        cost_change=out.total_cost - cost_in,
        objective_change=float(obj_change),
        m=m,
        d=d,
        delta=int(delta),
        rays_only=rays_only,
        pivot_log=piv.log,
        diagnostics=diagnostics,
    )
    return out, report


def certify_bound(result, gap_tol=1e-6):
    """Sparsify a solver result and check the atom-count bound.

    For convex fits the input counts as optimal when the solver converged
    with a small dual gap.  For non-convex fits the solution is certified
    against ``min J(u) s.t. Phi u = Phi u*``, which it solves whenever it is
    a global minimizer.

    Returns ``(AtomicRepresentation, SparsifyReport)``.
    """
    problem = result.problem
    quotient = compute_d(problem.gauge, problem.phi)
    if problem.fit.convex:
        optimal = bool(result.converged and result.dual_gap <= gap_tol * max(1.0, abs(result.objective)))
        target = problem
    else:
        optimal = bool(result.converged)
        z = problem.phi.matrix @ result.u
        target = Problem(problem.gauge, problem.phi, DataFit(EQUALITY, z), 1.0)
    return sparsify(result.rep, target, optimal, quotient=quotient, delta=result.delta)
