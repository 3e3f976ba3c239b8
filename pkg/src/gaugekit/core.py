"""Data model for gauge-regularized inverse problems.

A regularizer ``J_C`` is described through the convex set ``C`` it is the
gauge of: a lineality space ``C_K`` (directions the gauge ignores), and the
atoms of the line-free part ``C_B`` (extreme points with unit gauge, or
extreme-ray directions with zero gauge).  Problems have the form

    minimize  f(Phi u) + reg_weight * J_C(u)

with ``Phi`` a dense ``m x n`` sensing matrix and ``f`` a data-fit term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "TOL_DELTA",
    "EXTREME_POINT",
    "RAY_DIRECTION",
    "GaugeError",
    "DimensionMismatch",
    "Atom",
    "LMOResult",
    "GaugeModel",
    "SensingOperator",
    "DataFit",
    "Problem",
    "AtomicRepresentation",
    "QuotientInfo",
    "evaluate_gauge",
    "evaluate_objective",
    "compute_d",
    "compute_delta",
    "assemble",
]

TOL_DELTA = 1e-9

EXTREME_POINT = "extreme_point"
RAY_DIRECTION = "ray_direction"

FAMILY_TAGS = (
    "L1Ball",
    "MeasureMass",
    "NonnegOrthant",
    "PsdCone",
    "GeneralizedTV1D",
    "TVGradient2D",
)


class GaugeError(Exception):
    """Base class for errors raised by gaugekit."""


class DimensionMismatch(GaugeError, ValueError):
    pass


def _as_signal(u, dim=None, name="u"):
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise DimensionMismatch(f"{name} must be a 1-d vector, got shape {u.shape}")
    if dim is not None and u.shape[0] != dim:
        raise DimensionMismatch(f"{name} has length {u.shape[0]}, expected {dim}")
    return u


@dataclass(frozen=True, eq=False)
class Atom:
    """An extreme point or extreme-ray direction of ``C_B``.

    ``cost`` is the gauge value carried by one unit of the atom: 1 for
    unit-gauge extreme points, 0 for ray directions of a cone (and for the
    zero extreme point of a cone).
    """

    vector: np.ndarray
    kind: str = EXTREME_POINT
    cost: float = 1.0
    label: Any = None

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)
        if self.kind not in (EXTREME_POINT, RAY_DIRECTION):
            raise ValueError(f"unknown atom kind {self.kind!r}")
        if self.cost < 0:
            raise ValueError("atom cost must be nonnegative")
        if self.kind == RAY_DIRECTION:
            if self.cost != 0:
                raise ValueError("ray directions carry zero cost")
            if not np.any(v):
                raise ValueError("ray directions must be nonzero")

    @property
    def is_ray(self):
        return self.kind == RAY_DIRECTION

    @property
    def is_zero(self):
        return not np.any(self.vector)

    def __repr__(self):
        return f"Atom(label={self.label!r}, kind={self.kind}, cost={self.cost:g})"


class LMOResult(NamedTuple):
    atom: Atom
    value: float
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class GaugeModel:
    """A regularizer described by its atoms.

    Parameters
    ----------
    ambient_dim : int
        Dimension ``n`` of the discretized signal space.
    family_tag : str
        One of the built-in family tags.
    gauge_fn : callable
        Closed-form gauge ``u -> J_C(u)``.
    lmo_fn : callable
        Linear minimization oracle ``g -> LMOResult`` over the atoms.
    lineality_basis : ndarray of shape (n, k)
        Orthonormal basis of ``C_K``; ``k`` may be zero.
    atoms : sequence of Atom, optional
        Finite atom list, or None when the family is procedural.
    candidates_fn : callable, optional
        ``g -> list[Atom]`` returning several good atoms at once; solvers
        use it to add more than one column per iteration.
    """

    ambient_dim: int
    family_tag: str
    gauge_fn: Callable[[np.ndarray], float]
    lmo_fn: Callable[[np.ndarray], LMOResult]
    lineality_basis: np.ndarray = None
    atoms: Sequence[Atom] | None = None
    conic: bool = False
    membership_fn: Callable[[np.ndarray, float], bool] | None = None
    candidates_fn: Callable[[np.ndarray], list] | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ambient_dim < 1:
            raise ValueError("ambient_dim must be positive")
        if self.family_tag not in FAMILY_TAGS:
            raise ValueError(f"unknown family tag {self.family_tag!r}")
        basis = self.lineality_basis
        if basis is None:
            basis = np.zeros((self.ambient_dim, 0))
        basis = np.asarray(basis, dtype=float).reshape(self.ambient_dim, -1)
        if basis.shape[1] and np.linalg.matrix_rank(basis) < basis.shape[1]:
            raise ValueError("lineality basis must be linearly independent")
        basis.setflags(write=False)
        object.__setattr__(self, "lineality_basis", basis)
        if self.atoms is not None:
            object.__setattr__(self, "atoms", tuple(self.atoms))

    @property
    def lineality_dim(self):
        return self.lineality_basis.shape[1]

    @property
    def enumerable(self):
        return self.atoms is not None

    def gauge(self, u):
        return evaluate_gauge(self, u)

    def contains(self, u, tau=1.0):
        """Is ``u`` in ``tau * C``?"""
        u = _as_signal(u, self.ambient_dim)
        if self.membership_fn is not None:
            return bool(self.membership_fn(u, tau))
        return self.gauge_fn(u) <= tau * (1 + 1e-12) + 1e-12

    def lmo(self, g):
        g = _as_signal(g, self.ambient_dim, "g")
        return self.lmo_fn(g)

    def lmo_candidates(self, g):
        g = _as_signal(g, self.ambient_dim, "g")
        if self.candidates_fn is not None:
            return list(self.candidates_fn(g))
        return [self.lmo_fn(g).atom]


@dataclass(frozen=True, eq=False)
class SensingOperator:
    """Dense measurement matrix; row ``i`` is the ``i``-th functional."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float, ndmin=2)
        if mat.ndim != 2:
            raise DimensionMismatch("sensing matrix must be 2-d")
        if mat.shape[0] < 1:
            raise ValueError("need at least one measurement")
        if not np.all(np.isfinite(mat)):
            raise ValueError("sensing matrix has non-finite entries")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def m(self):
        return self.matrix.shape[0]

    @property
    def n(self):
        return self.matrix.shape[1]

    def __call__(self, u):
        return self.matrix @ u

    def adjoint(self, z):
        return self.matrix.T @ z


SQUARED_L2 = "SquaredL2"
EQUALITY = "EqualityIndicator"
TRUNCATED_QUADRATIC = "TruncatedQuadratic"


@dataclass(frozen=True, eq=False)
class DataFit:
    """Data-fit term ``f`` acting on the measurement vector ``z = Phi u``.

    ``SquaredL2`` is ``0.5 * ||z - y||^2``; ``EqualityIndicator`` is 0 when
    ``z == y`` (up to ``eq_tol``) and ``+inf`` otherwise;
    ``TruncatedQuadratic`` is ``sum_i min(0.5 * (z_i - y_i)^2, cap)``.
    """

    kind: str
    y: np.ndarray
    cap: float | None = None
    eq_tol: float = 1e-6

    def __post_init__(self):
        if self.kind not in (SQUARED_L2, EQUALITY, TRUNCATED_QUADRATIC):
            raise ValueError(f"unknown data-fit kind {self.kind!r}")
        y = _as_signal(self.y, name="y").copy()
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        if self.kind == TRUNCATED_QUADRATIC:
            if self.cap is None or not self.cap > 0:
                raise ValueError("TruncatedQuadratic needs cap > 0")

    @classmethod
    def squared_l2(cls, y):
        return cls(SQUARED_L2, y)

    @classmethod
    def equality(cls, y, eq_tol=1e-6):
        return cls(EQUALITY, y, eq_tol=eq_tol)

    @classmethod
    def truncated_quadratic(cls, y, cap):
        return cls(TRUNCATED_QUADRATIC, y, cap=cap)

    @property
    def convex(self):
        return self.kind != TRUNCATED_QUADRATIC

    def __call__(self, z):
        r = np.asarray(z, dtype=float) - self.y
        if self.kind == SQUARED_L2:
            return 0.5 * float(r @ r)
        if self.kind == EQUALITY:
            scale = 1.0 + float(np.linalg.norm(self.y))
            return 0.0 if np.linalg.norm(r) <= self.eq_tol * scale else np.inf
        return float(np.minimum(0.5 * r * r, self.cap).sum())

    def gradient(self, z):
        r = np.asarray(z, dtype=float) - self.y
        if self.kind == SQUARED_L2:
            return r
        if self.kind == TRUNCATED_QUADRATIC:
            return np.where(0.5 * r * r < self.cap, r, 0.0)
        raise GaugeError("the equality indicator has no gradient")


@dataclass(frozen=True, eq=False)
class Problem:
    gauge: GaugeModel
    phi: SensingOperator
    fit: DataFit
    reg_weight: float = 1.0

    def __post_init__(self):
        if not isinstance(self.phi, SensingOperator):
            object.__setattr__(self, "phi", SensingOperator(self.phi))
        if self.phi.n != self.gauge.ambient_dim:
            raise DimensionMismatch(
                f"Phi has {self.phi.n} columns but the gauge lives in "
                f"dimension {self.gauge.ambient_dim}"
            )
        if self.fit.y.shape[0] != self.phi.m:
            raise DimensionMismatch(
                f"y has length {self.fit.y.shape[0]}, Phi has {self.phi.m} rows"
            )
        if not self.reg_weight > 0:
            raise ValueError("reg_weight must be positive")

    @property
    def m(self):
        return self.phi.m

    @property
    def n(self):
        return self.phi.n


@dataclass(frozen=True, eq=False)
class AtomicRepresentation:
    """``u = u_K + sum_k alphas[k] * atoms[k].vector``."""

    u_K: np.ndarray
    alphas: np.ndarray
    atoms: tuple

    def __post_init__(self):
        u_K = _as_signal(self.u_K, name="u_K").copy()
        alphas = np.asarray(self.alphas, dtype=float).reshape(-1).copy()
        atoms = tuple(self.atoms)
        if len(atoms) != alphas.shape[0]:
            raise DimensionMismatch("need one coefficient per atom")
        for a in atoms:
            if a.vector.shape != u_K.shape:
                raise DimensionMismatch("atom dimension differs from u_K")
        u_K.setflags(write=False)
        alphas.setflags(write=False)
        object.__setattr__(self, "u_K", u_K)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros(dim), np.zeros(0), ())

    @property
    def r(self):
        return len(self.atoms)

    @property
    def dim(self):
        return self.u_K.shape[0]

    @property
    def terms(self):
        return list(zip(self.alphas.tolist(), self.atoms))

    @property
    def costs(self):
        return np.array([a.cost for a in self.atoms], dtype=float)

    @property
    def total_cost(self):
        return float(self.alphas @ self.costs) if self.r else 0.0

    def atom_matrix(self):
        if not self.r:
            return np.zeros((self.dim, 0))
        return np.column_stack([a.vector for a in self.atoms])

    def assemble(self):
        return assemble(self)

    def is_valid(self, tol=0.0):
        return bool(np.all(self.alphas > tol))


class QuotientInfo(NamedTuple):
    """``d = dim Phi(C_K)`` with an orthonormal basis of ``Phi(C_K)`` and
    the orthogonal projector onto its complement in ``R^m``."""

    d: int
    basis: np.ndarray
    projector: np.ndarray


def evaluate_gauge(gauge, u):
    """Return ``inf{lam >= 0 : u in lam * C}`` (``inf`` when no such lam)."""
    u = _as_signal(u, gauge.ambient_dim)
    value = float(gauge.gauge_fn(u))
    if np.isnan(value) or value < 0:
        raise GaugeError(f"gauge returned invalid value {value}")
    return value


def evaluate_objective(problem, u):
    u = _as_signal(u, problem.n)
    fit_value = problem.fit(problem.phi(u))
    if np.isinf(fit_value):
        return np.inf
    gauge_value = evaluate_gauge(problem.gauge, u)
    if np.isinf(gauge_value):
        return np.inf
    return fit_value + problem.reg_weight * gauge_value


def _orth(mat, atol):
    """Orthonormal basis for the column space of ``mat``."""
    if mat.size == 0:
        return np.zeros((mat.shape[0], 0))
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    return u[:, : int(np.sum(s > atol))]


def compute_d(gauge, phi, rtol=1e-10):
    """Dimension of ``Phi(C_K)`` plus the quotient projector used by the
    sparsifier."""
    if not isinstance(phi, SensingOperator):
        phi = SensingOperator(phi)
    image = phi.matrix @ gauge.lineality_basis
    atol = rtol * max(1.0, float(np.linalg.norm(phi.matrix, 2)))
    basis = _orth(image, atol)
    projector = np.eye(phi.m) - basis @ basis.T
    return QuotientInfo(basis.shape[1], basis, projector)


def compute_delta(problem, t_star, tol=TOL_DELTA):
    """1 when the optimal gauge value equals ``inf_u J_C(u)`` (which is 0
    for every built-in family), else 0."""
    if problem.gauge.conic:
        return 1
    return int(t_star <= tol)


def assemble(rep):
    u = np.array(rep.u_K, dtype=float)
    for alpha, atom in zip(rep.alphas, rep.atoms):
        u = u + alpha * atom.vector
    return u
