"""Built-in gauge families and their linear minimization oracles."""

from __future__ import annotations

import numpy as np

from .core import (
    EXTREME_POINT,
    RAY_DIRECTION,
    Atom,
    GaugeError,
    GaugeModel,
    LMOResult,
)

__all__ = [
    "TOL_PSD",
    "TOL_EIG",
    "TIE_RTOL",
    "l1_family",
    "measure_mass_family",
    "nonneg_family",
    "psd_family",
    "gtv1d_family",
    "build_family",
    "lmo_l1",
    "lmo_nonneg",
    "lmo_psd",
    "lmo_gtv1d",
    "forward_difference",
    "psd_vec",
    "psd_mat",
]

TOL_PSD = 1e-9
TOL_EIG = 1e-9
# relative tolerance for ties between atoms with inexact entries
TIE_RTOL = 1e-12


def _unit(n, i, sign=1.0):
    e = np.zeros(n)
    e[i] = sign
    return e


def _signed_coordinate_atoms(n, label_of):
    atoms = []
    for i in range(n):
        for sign in (1, -1):
            atoms.append(Atom(_unit(n, i, sign), EXTREME_POINT, 1.0, label_of(i, sign)))
    return atoms


def _l1_gauge(u):
    return float(np.abs(u).sum())


def lmo_l1(g, labels=None):
    """Minimize ``<g, a>`` over ``a`` in ``{+-e_i}``.

    Ties go to the smallest index; an exactly zero entry yields ``+e_i``.
    """
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    i = int(np.argmax(np.abs(g)))
    gi = g[i]
    sign = -1 if gi > 0 else 1
    label = ("e", i, sign) if labels is None else labels(i, sign)
    atom = Atom(_unit(n, i, sign), EXTREME_POINT, 1.0, label)
    return LMOResult(atom, -abs(float(gi)), gi == 0)


def l1_family(n):
    """Unit l1 ball in ``R^n``: atoms ``+-e_i``, no rays, trivial lineality."""
    n = _check_size(n, "n")
    label = lambda i, s: ("e", i, s)  # noqa: E731
    return GaugeModel(
        ambient_dim=n,
        family_tag="L1Ball",
        gauge_fn=_l1_gauge,
        lmo_fn=lambda g: lmo_l1(g, label),
        atoms=_signed_coordinate_atoms(n, label),
        metadata={"n": n},
    )


def measure_mass_family(grid):
    """Total mass of a measure discretized on ``grid``: atoms ``+-delta_x``."""
    grid = np.asarray(grid, dtype=float).reshape(-1)
    n = _check_size(grid.shape[0], "grid size")

    def label(i, s):
        return ("delta", float(grid[i]), s)

    return GaugeModel(
        ambient_dim=n,
        family_tag="MeasureMass",
        gauge_fn=_l1_gauge,
        lmo_fn=lambda g: lmo_l1(g, label),
        atoms=_signed_coordinate_atoms(n, label),
        metadata={"grid": grid.tolist()},
    )


def _zero_atom(n):
    return Atom(np.zeros(n), EXTREME_POINT, 0.0, ("zero",))


def lmo_nonneg(g):
    """Minimize ``<g, u>`` over ``{u >= 0, sum(u) <= 1}``.

    Returns ``e_i`` for the smallest index attaining ``min g`` when that
    minimum is negative, and the zero extreme point otherwise.
    """
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    i = int(np.argmin(g))
    if g[i] < 0:
        atom = Atom(_unit(n, i), RAY_DIRECTION, 0.0, ("e", i, 1))
        return LMOResult(atom, float(g[i]), False)
    return LMOResult(_zero_atom(n), 0.0, True)


def _orthant_gauge(u):
    return 0.0 if np.all(u >= 0) else np.inf


def nonneg_family(n):
    """Indicator of the nonnegative orthant: ext = {0}, rays along ``e_i``."""
    n = _check_size(n, "n")
    atoms = [_zero_atom(n)]
    atoms += [Atom(_unit(n, i), RAY_DIRECTION, 0.0, ("e", i, 1)) for i in range(n)]
    return GaugeModel(
        ambient_dim=n,
        family_tag="NonnegOrthant",
        gauge_fn=_orthant_gauge,
        lmo_fn=lmo_nonneg,
        atoms=atoms,
        conic=True,
        membership_fn=lambda u, tau: bool(np.all(u >= 0)),
        metadata={"n": n},
    )


def psd_vec(mat):
    """Row-major flattening of a ``p x p`` matrix."""
    return np.asarray(mat, dtype=float).reshape(-1)


def psd_mat(vec, p=None):
    vec = np.asarray(vec, dtype=float)
    if p is None:
        p = int(round(np.sqrt(vec.shape[0])))
    if p * p != vec.shape[0]:
        raise GaugeError(f"vector of length {vec.shape[0]} is not a square matrix")
    return vec.reshape(p, p)


def _check_symmetric(mat, tol=1e-10):
    scale = max(1.0, float(np.abs(mat).max(initial=0.0)))
    if np.abs(mat - mat.T).max(initial=0.0) > tol * scale:
        raise GaugeError("matrix is not symmetric")


def _sym(G):
    return 0.5 * (G + G.T)


def _canonical_sign(v):
    k = int(np.flatnonzero(np.abs(v) > 1e-12)[0])
    return v if v[k] > 0 else -v


def lmo_psd(G, tol_eig=TOL_EIG):
    """Minimize ``<G, X>`` over ``{X psd, trace X <= 1}``.

    The minimizer is ``v v^T`` for a unit eigenvector of the smallest
    eigenvalue when that eigenvalue is negative, else the zero matrix.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = psd_mat(G)
    _check_symmetric(G)
    p = G.shape[0]
    w, V = np.linalg.eigh(0.5 * (G + G.T))
    lam = float(w[0])
    if lam < -tol_eig * max(1.0, np.linalg.norm(G)):
        v = _canonical_sign(V[:, 0])
        return LMOResult(_psd_atom(v), lam, False)
    return LMOResult(_zero_atom(p * p), 0.0, True)


def _psd_atom(v):
    v = np.asarray(v, dtype=float)
    return Atom(psd_vec(np.outer(v, v)), RAY_DIRECTION, 0.0, ("vvT", tuple(np.round(v, 12))))


def psd_family(p, tol_psd=TOL_PSD):
    """Indicator of the cone of ``p x p`` positive semidefinite matrices,
    acting on row-major vectorized matrices of length ``p**2``."""
    p = _check_size(p, "p")

    def is_psd(u):
        X = u.reshape(p, p)
        scale = max(1.0, float(np.linalg.norm(X)))
        if np.abs(X - X.T).max() > 1e-10 * scale:
            return False
        return bool(np.linalg.eigvalsh(0.5 * (X + X.T))[0] >= -tol_psd * scale)

    return GaugeModel(
        ambient_dim=p * p,
        family_tag="PsdCone",
        gauge_fn=lambda u: 0.0 if is_psd(u) else np.inf,
        # atoms are symmetric, so only the symmetric part of g matters
        lmo_fn=lambda g: lmo_psd(_sym(g.reshape(p, p))),
        atoms=None,
        conic=True,
        membership_fn=lambda u, tau: is_psd(u),
        metadata={"p": p},
    )


def forward_difference(n):
    """``(n-1) x n`` matrix with ``(L u)_j = u_{j+1} - u_j``."""
    L = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    L[idx, idx] = -1.0
    L[idx, idx + 1] = 1.0
    return L


def _step_atoms(n):
    # Minimum-norm solution of L s = delta_j: the unit step after j, centred.
    steps = np.zeros((n, n - 1))
    for j in range(n - 1):
        steps[j + 1 :, j] = 1.0
    return steps - steps.mean(axis=0)


def lmo_gtv1d(g, steps):
    """Exhaustive scan over the signed centred steps ``+-s_j``.

    ``steps`` holds ``s_j`` as columns.  Atoms are ordered
    ``+s_0, -s_0, +s_1, ...`` and the first minimizer wins; values within
    ``TIE_RTOL * max|g|`` of the minimum count as ties, since the centred
    steps are not exactly representable.
    """
    g = np.asarray(g, dtype=float)
    corr = np.asarray(steps).T @ g
    values = np.empty(2 * corr.shape[0])
    values[0::2] = corr
    values[1::2] = -corr
    tol = TIE_RTOL * max(float(np.abs(g).max(initial=0.0)), 1e-300)
    k = int(np.flatnonzero(values <= values.min() + tol)[0])
    j, sign = divmod(k, 2)
    sign = 1 if sign == 0 else -1
    atom = Atom(sign * steps[:, j], EXTREME_POINT, 1.0, ("step", j, sign))
    return LMOResult(atom, float(values[k]), bool(np.all(np.abs(corr) <= tol)))


def gtv1d_family(n):
    """``J(u) = ||L u||_1`` with ``L`` the forward difference on ``n`` samples.

    Lineality space: constants.  Atoms: ``+-s_j`` with ``L s_j = delta_j``
    and ``s_j`` orthogonal to constants.
    """
    n = _check_size(n, "n", minimum=2)
    L = forward_difference(n)
    steps = _step_atoms(n)
    atoms = []
    for j in range(n - 1):
        for sign in (1, -1):
            atoms.append(Atom(sign * steps[:, j], EXTREME_POINT, 1.0, ("step", j, sign)))
    for a in atoms:
        if abs(np.abs(L @ a.vector).sum() - 1.0) > 1e-12:
            raise GaugeError(f"step atom {a.label} does not have unit gauge")
    steps.setflags(write=False)
    return GaugeModel(
        ambient_dim=n,
        family_tag="GeneralizedTV1D",
        gauge_fn=lambda u: float(np.abs(np.diff(u)).sum()),
        lmo_fn=lambda g: lmo_gtv1d(g, steps),
        lineality_basis=np.full((n, 1), 1.0 / np.sqrt(n)),
        atoms=atoms,
        metadata={"n": n, "L": L, "steps": steps},
    )


def _check_size(value, name, minimum=1):
    if int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def build_family(tag, **params):
    """Construct a GaugeModel from a family tag and its parameters.

    >>> len(build_family("L1Ball", n=3).atoms)
    6
    """
    if tag == "L1Ball":
        return l1_family(params["n"])
    if tag == "MeasureMass":
        grid = params.get("grid")
        if grid is None:
            grid = np.linspace(0.0, 1.0, params["n"])
        return measure_mass_family(grid)
    if tag == "NonnegOrthant":
        return nonneg_family(params["n"])
    if tag == "PsdCone":
        return psd_family(params["p"])
    if tag == "GeneralizedTV1D":
        return gtv1d_family(params["n"])
    if tag == "TVGradient2D":
        from .tvgrad import tvgrad_family

        return tvgrad_family(params["H"], params["W"])
    raise ValueError(f"unknown family tag {tag!r}")
