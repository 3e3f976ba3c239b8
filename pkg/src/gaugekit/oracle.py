"""Brute-force verification at desk scale.

Nothing here shares code paths with the fast solvers: atom scans replace
the closed-form oracles, subset enumeration replaces min-cuts, and the
solution set of tiny polyhedral problems is computed by enumerating active
sets of the dual.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from .core import (
    EQUALITY,
    SQUARED_L2,
    Atom,
    DataFit,
    GaugeError,
    LMOResult,
    Problem,
    compute_d,
)
from .families import TIE_RTOL, build_family, psd_mat, psd_vec
from .tvgrad import indicator_atom

__all__ = [
    "Polyhedron",
    "FaceReport",
    "brute_force_lmo",
    "enumerate_subsets_ratio",
    "enumerate_vertices",
    "minimal_face",
    "check_klee_reconstruction",
    "check_face_partition",
    "enumerate_optimal_face",
    "random_tiny_instance",
    "exhaustive_min_cut",
]

TOL = 1e-9
POLYHEDRAL_TAGS = ("L1Ball", "MeasureMass", "NonnegOrthant", "GeneralizedTV1D")


# -- linear minimization by exhaustive scan -------------------------------------


def enumerate_subsets_ratio(g, H, W):
    """Best ``(ratio, sign, mask)`` maximizing ``|<g, 1_F>| / Per(F)`` over all
    nonempty subsets of an ``H x W`` grid (at most 16 cells)."""
    n = H * W
    if n > 16:
        raise ValueError("subset enumeration is limited to 16 cells")
    codes = np.arange(1, 2**n)
    masks = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
    grid = masks.reshape(-1, H, W).astype(np.int64)
    padded = np.pad(grid, ((0, 0), (1, 1), (1, 1)))
    per = np.abs(np.diff(padded, axis=1)).sum(axis=(1, 2)) + np.abs(np.diff(padded, axis=2)).sum(
        axis=(1, 2)
    )
    sums = masks.astype(float) @ np.asarray(g, dtype=float)
    best = None
    for sign in (1, -1):
        ratios = -sign * sums / per
        k = int(np.argmax(ratios))
        if best is None or ratios[k] > best[0]:
            best = (float(ratios[k]), sign, masks[k].reshape(H, W))
    return best


def brute_force_lmo(gauge, g, samples=10_000, seed=0):
    """Minimize ``<g, a>`` over the family's atoms by exhaustive scan.

    Finite families are scanned in their stored order and the first
    minimizer wins, which reproduces the documented tie-breaks (values
    within ``TIE_RTOL * max|g|`` of each other are ties).  Grids with
    at most 16 cells are searched over all subsets.  The PSD cone is not
    enumerable: the minimum over ``samples`` random unit vectors is
    returned, which is only an upper bound on the true minimum.
    """
    g = np.asarray(g, dtype=float)
    if gauge.atoms is not None:
        tol = TIE_RTOL * max(float(np.abs(g).max(initial=0.0)), 1e-300)
        vals = [float(np.dot(g, atom.vector)) for atom in gauge.atoms]
        low = min(vals)
        for atom, val in zip(gauge.atoms, vals):
            if val <= low + tol:
                return LMOResult(atom, val, all(abs(v) <= tol for v in vals))
    if gauge.family_tag == "TVGradient2D":
        H, W = gauge.metadata["H"], gauge.metadata["W"]
        ratio, sign, mask = enumerate_subsets_ratio(g, H, W)
        return LMOResult(indicator_atom(mask, sign), -ratio, ratio <= 0)
    if gauge.family_tag == "PsdCone":
        p = gauge.metadata["p"]
        G = psd_mat(g, p)
        rng = np.random.default_rng(seed)
        V = rng.standard_normal((samples, p))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        vals = np.einsum("ij,jk,ik->i", V, G, V)
        k = int(np.argmin(vals))
        if vals[k] >= 0:
            return LMOResult(Atom(np.zeros(p * p), cost=0.0, label=("zero",)), 0.0, True)
        v = V[k]
        atom = Atom(psd_vec(np.outer(v, v)), "ray_direction", 0.0, ("sample", k))
        return LMOResult(atom, float(vals[k]), False)
    raise GaugeError(f"{gauge.family_tag} atoms are not enumerable")


def exhaustive_min_cut(n_nodes, edges, source, sink):
    """Minimum s-t cut by enumerating every source side (n_nodes <= 18)."""
    others = [v for v in range(n_nodes) if v not in (source, sink)]
    if len(others) > 16:
        raise ValueError("too many nodes for exhaustive enumeration")
    codes = np.arange(2 ** len(others))
    side = np.zeros((codes.size, n_nodes), dtype=bool)
    side[:, source] = True
    for bit, v in enumerate(others):
        side[:, v] = (codes >> bit) & 1
    value = np.zeros(codes.size)
    for e in edges:
        u, v, cap = e[0], e[1], e[2]
        rev = e[3] if len(e) > 3 else 0.0
        value += cap * (side[:, u] & ~side[:, v])
        value += rev * (side[:, v] & ~side[:, u])
    k = int(np.argmin(value))
    return float(value[k]), side[k]


# -- polyhedra ---------------------------------------------------------------------


@dataclass
class Polyhedron:
    """``{x : A_ub x <= b_ub, A_eq x = b_eq}``."""

    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self):
        self.A_ub = np.atleast_2d(np.asarray(self.A_ub, dtype=float))
        self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        n = self.A_ub.shape[1]
        if self.A_eq is None:
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)

    @property
    def dim(self):
        return self.A_ub.shape[1]

    def contains(self, x, tol=TOL):
        x = np.asarray(x, dtype=float)
        ok = np.all(self.A_ub @ x <= self.b_ub + tol)
        return bool(ok and np.all(np.abs(self.A_eq @ x - self.b_eq) <= tol))

    def active(self, x, tol=TOL):
        return np.flatnonzero(np.abs(self.A_ub @ x - self.b_ub) <= tol)

    @classmethod
    def l1_ball(cls, n, radius=1.0):
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
        return cls(signs, np.full(len(signs), radius))

    @classmethod
    def orthant(cls, n):
        return cls(-np.eye(n), np.zeros(n))

    @classmethod
    def box(cls, lo, hi):
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        n = lo.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))

    @classmethod
    def from_dict(cls, data):
        return cls(data["A_ub"], data["b_ub"], data.get("A_eq"), data.get("b_eq"))


def enumerate_vertices(poly, tol=TOL):
    """Vertices and extreme-ray directions of a line-free polyhedron by
    enumerating active constraint sets."""
    n = poly.dim
    E = poly.A_eq
    full = np.vstack([E, poly.A_ub])
    if np.linalg.matrix_rank(full) < n:
        raise GaugeError("polyhedron contains a line")
    rank_e = np.linalg.matrix_rank(E) if E.size else 0
    need = n - rank_e
    m_ub = poly.A_ub.shape[0]
    vertices, rays = [], []
    for I in itertools.combinations(range(m_ub), need):
        M = np.vstack([E, poly.A_ub[list(I)]])
        if np.linalg.matrix_rank(M) < n:
            continue
        rhs = np.concatenate([poly.b_eq, poly.b_ub[list(I)]])
        x = np.linalg.lstsq(M, rhs, rcond=None)[0]
        if np.abs(M @ x - rhs).max(initial=0.0) <= tol and poly.contains(x, tol):
            if not any(np.allclose(x, v, atol=1e-8) for v in vertices):
                vertices.append(x)
    for I in itertools.combinations(range(m_ub), max(need - 1, 0)):
        M = np.vstack([E, poly.A_ub[list(I)]]) if I else E
        N = scipy.linalg.null_space(M) if M.size else np.eye(n)
        if N.shape[1] != 1:
            continue
        for d in (N[:, 0], -N[:, 0]):
            if np.all(poly.A_ub @ d <= tol):
                d = d / np.abs(d).max()
                if not any(np.allclose(d, r, atol=1e-8) for r in rays):
                    rays.append(d)
    return vertices, rays


def _conic_hull_member(x, vertices, rays):
    V = np.column_stack(vertices) if vertices else np.zeros((x.size, 0))
    R = np.column_stack(rays) if rays else np.zeros((x.size, 0))
    nv, nr = V.shape[1], R.shape[1]
    A_eq = np.vstack([np.hstack([V, R]), np.concatenate([np.ones(nv), np.zeros(nr)])[None, :]])
    b_eq = np.concatenate([x, [1.0]])
    res = linprog(np.zeros(nv + nr), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * (nv + nr), method="highs")
    return res.status == 0


def _sample_points(poly, count, rng, cap=10.0):
    """Rejection sampling in a bounding box of the affine hull; the box is
    clipped to ``cap`` in unbounded directions."""
    n = poly.dim
    E = poly.A_eq
    if E.size:
        x0 = np.linalg.lstsq(E, poly.b_eq, rcond=None)[0]
        N = scipy.linalg.null_space(E)
    else:
        x0, N = np.zeros(n), np.eye(n)
    k = N.shape[1]
    if k == 0:
        return [x0] * count, False
    A = poly.A_ub @ N
    b = poly.b_ub - poly.A_ub @ x0
    free = [(None, None)] * k
    if linprog(np.zeros(k), A_ub=A, b_ub=b, bounds=free, method="highs").status != 0:
        raise GaugeError("empty polyhedron")
    lo, hi = np.empty(k), np.empty(k)
    unbounded = False
    for i in range(k):
        c = np.zeros(k)
        c[i] = 1.0
        for sign, store in ((1.0, lo), (-1.0, hi)):
            res = linprog(sign * c, A_ub=A, b_ub=b, bounds=free, method="highs")
            if res.status == 0:
                store[i] = res.x[i]
            elif res.status in (2, 3):
                # feasible, so "infeasible or unbounded" means unbounded
                unbounded = True
                store[i] = -sign * cap
            else:
                raise GaugeError(f"bounding-box LP failed: {res.message}")
    pts = []
    for _ in range(1000 * count):
        t = rng.uniform(lo, hi)
        if np.all(A @ t <= b + TOL):
            pts.append(x0 + N @ t)
            if len(pts) == count:
                break
    return pts, unbounded


def check_klee_reconstruction(poly, n_samples=100, seed=0):
    """Every sampled point of a line-free polyhedron is a convex combination
    of its vertices plus a conical combination of its extreme rays."""
    if poly.dim > 6:
        raise ValueError("Klee reconstruction check is limited to dimension 6")
    vertices, rays = enumerate_vertices(poly)
    rng = np.random.default_rng(seed)
    points, unbounded = _sample_points(poly, n_samples, rng)
    if unbounded and not rays:
        raise GaugeError("unbounded polyhedron but no extreme rays were found")
    if not vertices:
        return False
    return all(_conic_hull_member(x, vertices, rays) for x in points)


@dataclass
class FaceInfo:
    active: tuple
    dim: int
    relint_ok: bool


def minimal_face(poly, p, tol=TOL, probes=8, seed=0):
    """Active set and dimension of the smallest face containing ``p``.

    The face dimension is the dimension of the space of directions ``v``
    with ``p +- eps v`` in the polyhedron, i.e. the open segments through
    ``p``.  ``relint_ok`` confirms by probing that random such directions
    stay inside while directions leaving an active constraint do not.
    """
    p = np.asarray(p, dtype=float)
    I = poly.active(p, tol)
    M = np.vstack([poly.A_eq, poly.A_ub[I]])
    N = scipy.linalg.null_space(M) if M.size else np.eye(poly.dim)
    rng = np.random.default_rng(seed)
    slack = poly.b_ub - poly.A_ub @ p
    inactive = np.setdiff1d(np.arange(poly.A_ub.shape[0]), I)
    eps = 0.5 * float(slack[inactive].min()) if inactive.size else 1.0
    ok = True
    for _ in range(probes if N.shape[1] else 0):
        v = N @ rng.standard_normal(N.shape[1])
        v *= eps / max(np.abs(poly.A_ub @ v).max(initial=0.0), 1e-300)
        ok &= poly.contains(p + v, tol) and poly.contains(p - v, tol)
    for i in I:
        # a segment through p must not cross an active facet
        v = poly.A_ub[i] * eps
        ok &= not (poly.contains(p + v, tol) and poly.contains(p - v, tol))
    return FaceInfo(tuple(int(i) for i in I), int(N.shape[1]), bool(ok))


def check_face_partition(poly, points, tol=TOL):
    """Elementary faces of sampled points partition the polyhedron.

    Checks that (i) each point lies in the relative interior of its minimal
    face, (ii) points with the same active set share the same face (each
    lies in the other's face), (iii) a point belongs to the relative
    interior of no other sampled face.
    """
    if poly.dim > 4:
        raise ValueError("face partition check is limited to dimension 4")
    points = [np.asarray(p, dtype=float) for p in points]
    if not points:
        return True
    if not all(poly.contains(p, tol) for p in points):
        return False
    if not all(minimal_face(poly, p, tol).relint_ok for p in points):
        return False
    P = np.array(points)
    slack = poly.b_ub[:, None] - poly.A_ub @ P.T  # constraints x points
    act = np.abs(slack) <= tol
    # on_face[p, h]: p satisfies every constraint active at sample h
    on_face = np.all(~act[:, None, :] | act[:, :, None], axis=0)
    # strictly[p, h]: p is strictly inside every constraint inactive at h
    strictly = np.all(act[:, None, :] | (slack[:, :, None] > tol), axis=0)
    in_relint = on_face & strictly
    same = np.all(act[:, :, None] == act[:, None, :], axis=0)
    return bool(np.array_equal(in_relint, same))


# -- optimal face of tiny polyhedral problems ------------------------------------------


@dataclass
class FaceReport:
    vertices: list
    rays: list
    s_k_basis: np.ndarray
    vertex_checks: list
    point_checks: list
    bounds_ok: bool
    s_k_ok: bool
    optimal_value: float
    t_star: float
    z_star: np.ndarray
    delta: int
    d: int
    m: int
    dim_s_b: int
    ray_family: bool
    notes: list = field(default_factory=list)

    @property
    def ok(self):
        return self.bounds_ok and self.s_k_ok


def _batched_solutions(G, h, size):
    """All solutions of ``G_I x = h_I`` for row subsets ``I`` of ``size``
    whose rows are linearly independent (square case)."""
    combos = np.array(list(itertools.combinations(range(G.shape[0]), size)), dtype=int)
    if combos.size == 0:
        return combos, np.zeros((0, G.shape[1]))
    mats = G[combos]
    dets = np.linalg.det(mats)
    scale = np.abs(mats).max(axis=(1, 2)) ** size + 1e-300
    good = np.abs(dets) > 1e-9 * scale
    combos, mats = combos[good], mats[good]
    rhs = h[combos]
    xs = np.linalg.solve(mats, rhs[..., None])[..., 0] if len(combos) else np.zeros((0, G.shape[1]))
    return combos, xs


def _project_onto_polyhedron(y, G, h):
    """Euclidean projection of ``y`` onto ``{x : G x <= h}`` by enumerating
    active sets; the first set meeting the KKT conditions is the answer."""
    k = y.size
    if G.shape[0] == 0 or np.all(G @ y <= h + TOL):
        return y.copy()
    for size in range(1, min(k, G.shape[0]) + 1):
        for I in itertools.combinations(range(G.shape[0]), size):
            GI = G[list(I)]
            gram = GI @ GI.T
            if np.linalg.matrix_rank(gram) < size:
                continue
            mu = np.linalg.solve(gram, GI @ y - h[list(I)])
            if np.any(mu < -TOL):
                continue
            x = y - GI.T @ mu
            if np.all(G @ x <= h + TOL):
                return x
    raise GaugeError("no KKT point found for the projection")


def _lp_over_polyhedron(c, G, h):
    """``max c.x`` over the pointed polyhedron ``{G x <= h}`` by vertex
    enumeration; None when the maximum is unbounded."""
    k = c.size
    if k == 0:
        return 0.0, np.zeros(0)
    best_val, best_x = -np.inf, None
    _, xs = _batched_solutions(G, h, k)
    feas = np.all(xs @ G.T <= h + TOL, axis=1) if xs.size else np.zeros(0, dtype=bool)
    if feas.any():
        vals = xs[feas] @ c
        i = int(np.argmax(vals))
        best_val, best_x = float(vals[i]), xs[feas][i]
    # an extreme ray improving c means the LP is unbounded
    for I in itertools.combinations(range(G.shape[0]), k - 1):
        N = _null(G[list(I)]) if I else np.eye(k)
        if N.shape[1] != 1:
            continue
        for dvec in (N[:, 0], -N[:, 0]):
            if np.all(G @ dvec <= TOL) and c @ dvec > TOL:
                return None
    if best_x is None:
        raise GaugeError("dual polyhedron has no vertex")
    return best_val, best_x


def _nonzero_atoms(gauge):
    return [a for a in gauge.atoms if not a.is_zero]


def _count_atoms(gauge, atoms, p):
    """Fewest-cost decomposition ``p = B w + sum beta_k psi_k`` by simplex;
    returns the number of atoms used."""
    B = gauge.lineality_basis
    Psi = np.column_stack([a.vector for a in atoms])
    N, k = Psi.shape[1], B.shape[1]
    res = linprog(
        np.concatenate([np.ones(N), np.zeros(k)]),
        A_eq=np.hstack([Psi, B]),
        b_eq=p,
        bounds=[(0, None)] * N + [(None, None)] * k,
        method="highs-ds",
    )
    if res.status != 0:
        raise GaugeError("point is not a conical combination of the atoms")
    return int(np.sum(res.x[:N] > 1e-9))


def _basis(mat, rtol=1e-9):
    """Orthonormal column-space basis with a tolerance relative to
    ``max(1, ||mat||)``, so rounding noise never counts as a direction."""
    if mat.size == 0:
        return np.zeros((mat.shape[0], 0))
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    return u[:, : int(np.sum(s > rtol * max(1.0, s[0])))]


def _null(mat, rtol=1e-9):
    """Null-space basis; singular values below ``rtol * max(1, ||mat||)``
    count as zero, so a numerically zero matrix has a full null space."""
    if mat.size == 0:
        return np.eye(mat.shape[1])
    _, s, vt = np.linalg.svd(mat)
    rank = int(np.sum(s > rtol * max(1.0, s[0])))
    return vt[rank:].T


def _subspace_projector(basis):
    q = _basis(basis)
    return q @ q.T


def enumerate_optimal_face(problem):
    """Exact solution set of a tiny polyhedral problem and its face
    structure.

    The optimal measurement ``z*`` and gauge value ``t*`` come from the
    dual, a projection (squared-l2 fit) or a linear program (equality fit)
    over ``{nu : <Phi psi_k, nu> <= reg_weight * cost_k, nu _|_ Phi(C_K)}``,
    solved by active-set enumeration.  The solution set is then
    ``{u = B w + sum_{k active} beta_k psi_k : beta >= 0, Phi u = z*}``;
    its vertices and extreme rays are enumerated by support, and atom
    counts are checked against ``m + j - d + delta`` (extreme points) or
    ``m + j - 1 - d + delta`` (rays) for faces of dimension
    ``j = 0, 1, dim``.
    """
    gauge, fit = problem.gauge, problem.fit
    if gauge.family_tag not in POLYHEDRAL_TAGS:
        raise ValueError(f"{gauge.family_tag} is not a polyhedral family")
    if problem.n > 8 or problem.m > 4:
        raise ValueError("instance too large for enumeration (n <= 8, m <= 4)")
    if fit.kind not in (SQUARED_L2, EQUALITY):
        raise ValueError("only SquaredL2 and EqualityIndicator fits are supported")
    Phi = problem.phi.matrix
    m, n = Phi.shape
    y = fit.y
    B = gauge.lineality_basis
    atoms = _nonzero_atoms(gauge)
    Psi = np.column_stack([a.vector for a in atoms])
    costs = np.array([a.cost for a in atoms])
    lam = problem.reg_weight if fit.kind == SQUARED_L2 else 1.0
    ray_family = all(a.is_ray for a in atoms)

    # dual variable nu = V eta + (component outside range(Phi))
    d = compute_d(gauge, problem.phi).d
    phi_B = Phi @ B
    P_B = _subspace_projector(phi_B)
    V = _basis((np.eye(m) - P_B) @ Phi)
    G = (Phi @ Psi).T @ V
    h = lam * costs
    P_range = _subspace_projector(Phi)
    notes = []
    if fit.kind == SQUARED_L2:
        eta = _project_onto_polyhedron(V.T @ y, G, h)
        nu = V @ eta + (np.eye(m) - P_range) @ y
        z_star = y - nu
        t_star = float(nu @ z_star) / lam
        optimal_value = 0.5 * float(nu @ nu) + lam * t_star
    else:
        if np.linalg.norm((np.eye(m) - P_range) @ y) > 1e-8 * (1 + np.linalg.norm(y)):
            raise GaugeError("y is outside the range of Phi")
        out = _lp_over_polyhedron(V.T @ y, G, h)
        if out is None:
            raise GaugeError("equality constraint is infeasible for this gauge")
        t_star, eta = out
        nu = V @ eta
        z_star = y.copy()
        optimal_value = problem.reg_weight * t_star
    if gauge.conic:
        t_star = 0.0
    delta = 1 if (gauge.conic or t_star <= TOL) else 0

    # active atoms and the solution polyhedron in (w, beta) coordinates
    slack = h - G @ (V.T @ nu)
    act = np.flatnonzero(np.abs(slack) <= 1e-7 * (1 + np.abs(h).max()))
    Psi_A = Psi[:, act]
    k = B.shape[1]

    # S_K*: lineality of the solution set, against C_K cap ker(Phi)
    s_k_from_set = B @ _null(phi_B) if k else np.zeros((n, 0))
    direct = _null(np.vstack([Phi, np.eye(n) - B @ B.T]))
    s_k_ok = np.allclose(_subspace_projector(s_k_from_set), _subspace_projector(direct), atol=1e-8)
    S = _basis(direct)

    E = np.vstack([np.hstack([phi_B, Phi @ Psi_A]), np.hstack([S.T @ B, S.T @ Psi_A])])
    rhs = np.concatenate([z_star, np.zeros(S.shape[1])])
    na = act.size

    def u_of(x):
        return B @ x[:k] + Psi_A @ x[k:]

    def face_dim(x):
        support = list(range(k)) + [k + i for i in range(na) if x[k + i] > 1e-9]
        sub = E[:, support]
        return len(support) - (np.linalg.matrix_rank(sub, tol=1e-9) if sub.size else 0)

    vertices_x, rays_x = [], []
    for size in range(0, na + 1):
        for Ssub in itertools.combinations(range(na), size):
            cols = list(range(k)) + [k + i for i in Ssub]
            sub = E[:, cols]
            rank = np.linalg.matrix_rank(sub, tol=1e-9) if sub.size else 0
            if rank == len(cols):
                sol = np.linalg.lstsq(sub, rhs, rcond=None)[0] if cols else np.zeros(0)
                if np.abs(sub @ sol - rhs).max(initial=0.0) > 1e-8:
                    continue
                if size and np.any(sol[k:] <= 1e-9):
                    continue
                x = np.zeros(k + na)
                x[cols] = sol
                vertices_x.append(x)
            elif rank == len(cols) - 1 and size:
                N = _null(sub)
                dvec = N[:, 0]
                dvec = dvec if dvec[k:].sum() > 0 else -dvec
                if np.all(dvec[k:] > 1e-9):
                    x = np.zeros(k + na)
                    x[cols] = dvec / np.abs(dvec[k:]).max()
                    rays_x.append(x)
    if not vertices_x:
        raise GaugeError("solution set has no vertex")

    extra = 0 if not ray_family else -1

    def bound(j):
        return m + j + extra - d + delta

    vertex_checks = []
    for x in vertices_x:
        u = u_of(x)
        count = _count_atoms(gauge, atoms, u)
        vertex_checks.append({"point": u, "j": 0, "count": count, "bound": bound(0)})
    point_checks = []
    samples = []
    for a, b in itertools.combinations(vertices_x, 2):
        samples.append(0.5 * (a + b))
    for a in vertices_x:
        for r in rays_x:
            samples.append(a + r)
    for x in samples:
        j = face_dim(x)
        if j == 1:
            u = u_of(x)
            point_checks.append({"point": u, "j": 1, "count": _count_atoms(gauge, atoms, u), "bound": bound(1)})
    interior = np.mean(vertices_x, axis=0) + (np.sum(rays_x, axis=0) if rays_x else 0.0)
    dim_s_b = face_dim(interior)
    u = u_of(interior)
    point_checks.append(
        {"point": u, "j": dim_s_b, "count": _count_atoms(gauge, atoms, u), "bound": bound(dim_s_b)}
    )
    bounds_ok = all(c["count"] <= c["bound"] for c in vertex_checks + point_checks)
    return FaceReport(
        vertices=[u_of(x) for x in vertices_x],
        rays=[u_of(x) - u_of(np.zeros_like(x)) for x in rays_x],
        s_k_basis=S,
        vertex_checks=vertex_checks,
        point_checks=point_checks,
        bounds_ok=bool(bounds_ok),
        s_k_ok=bool(s_k_ok),
        optimal_value=float(optimal_value),
        t_star=float(t_star),
        z_star=z_star,
        delta=delta,
        d=d,
        m=m,
        dim_s_b=int(dim_s_b),
        ray_family=ray_family,
        notes=notes,
    )


def random_tiny_instance(rng):
    """A small-integer polyhedral instance for the face enumeration suite.

    Roughly one in four instances gets a deliberately rank-deficient
    ``Phi`` (a repeated row or a zero column).
    """
    tag = rng.choice(["L1Ball", "NonnegOrthant", "GeneralizedTV1D"])
    n = int(rng.integers(2, 9))
    m = int(rng.integers(1, 5))
    gauge = build_family(str(tag), n=n)
    Phi = rng.integers(-2, 3, size=(m, n)).astype(float)
    if rng.random() < 0.25:
        if m > 1:
            Phi[-1] = Phi[0]
        else:
            Phi[:, int(rng.integers(n))] = 0.0
    if not np.any(Phi):
        Phi[0, 0] = 1.0
    if rng.random() < 0.5:
        y = rng.integers(-3, 4, size=m).astype(float)
        fit = DataFit.squared_l2(y)
        lam = float(rng.choice([0.5, 1.0, 2.0]))
    else:
        u0 = rng.integers(-2, 3, size=n).astype(float)
        if tag == "NonnegOrthant":
            u0 = np.abs(u0)
        u0[rng.random(n) < 0.5] = 0.0
        fit = DataFit.equality(Phi @ u0)
        lam = 1.0
    return Problem(gauge, Phi, fit, lam)
