"""Discrete total gradient variation on a 2-D pixel grid.

The gauge is the anisotropic TV of a compactly supported image: the sum of
``|u_a - u_b|`` over 4-connected neighbour pairs, plus ``|u_a|`` for every
edge between a pixel and the exterior of the grid (the background is 0).
On an indicator ``1_F`` it counts cut edges, i.e. the discrete perimeter.
Its atoms are the normalized indicators ``+-1_F / Per(F)``; the linear
minimization oracle maximizes ``|<g, 1_F>| / Per(F)`` by Dinkelbach
iterations, each one an exact s-t minimum cut.
"""

from __future__ import annotations

from collections import deque
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .core import EXTREME_POINT, Atom, GaugeError, GaugeModel, LMOResult

__all__ = [
    "TOL_RATIO",
    "grid_shape_of",
    "exterior_counts",
    "perimeter",
    "tv_gauge",
    "maxflow",
    "MinCut",
    "DinkelbachTrace",
    "best_ratio_set",
    "lmo_tv",
    "tv_candidates",
    "indicator_atom",
    "atom_mask",
    "level_set_decomposition",
    "tvgrad_family",
    "read_pgm",
    "write_pgm",
]

TOL_RATIO = 1e-10
# Integer capacities get this many bits of resolution relative to the
# largest capacity in the graph.
CAPACITY_BITS = 40


def grid_shape_of(gauge):
    return gauge.metadata["H"], gauge.metadata["W"]


def exterior_counts(H, W):
    """Number of grid-boundary edges of every pixel (2 at corners)."""
    ext = np.zeros((H, W), dtype=np.int64)
    ext[0, :] += 1
    ext[-1, :] += 1
    ext[:, 0] += 1
    ext[:, -1] += 1
    return ext


def _as_mask(mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise GaugeError("grid sets are 2-d boolean masks")
    return mask


def perimeter(mask):
    """Cut edges between ``F`` and its complement, exterior edges included."""
    mask = _as_mask(mask)
    if not mask.any():
        raise GaugeError("perimeter of the empty set is undefined here")
    m = mask.astype(np.int64)
    cut = np.abs(np.diff(m, axis=0)).sum() + np.abs(np.diff(m, axis=1)).sum()
    return int(cut + (exterior_counts(*mask.shape) * m).sum())


def tv_gauge(u, H, W):
    u = np.asarray(u, dtype=float)
    if u.shape != (H * W,):
        raise GaugeError(f"expected a vector of length {H * W}, got shape {u.shape}")
    U = u.reshape(H, W)
    inner = np.abs(np.diff(U, axis=0)).sum() + np.abs(np.diff(U, axis=1)).sum()
    return float(inner + (exterior_counts(H, W) * np.abs(U)).sum())


def _grid_edges(H, W):
    idx = np.arange(H * W).reshape(H, W)
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    horz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    return np.vstack([vert, horz])


class _FlowNetwork:
    """Residual network with exact integer capacities (Dinic's algorithm)."""

    def __init__(self, n):
        self.n = n
        self.adj = [[] for _ in range(n)]
        self.to = []
        self.cap = []

    def add_edge(self, u, v, cap, rev_cap=0):
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(cap)
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(rev_cap)

    def _levels(self, s):
        level = [-1] * self.n
        level[s] = 0
        queue = deque([s])
        to, cap, adj = self.to, self.cap, self.adj
        while queue:
            u = queue.popleft()
            for e in adj[u]:
                v = to[e]
                if cap[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level

    def max_flow(self, s, t):
        to, cap, adj = self.to, self.cap, self.adj
        flow = 0
        while True:
            level = self._levels(s)
            if level[t] < 0:
                return flow
            it = [0] * self.n
            while True:
                path = []
                u = s
                while u != t:
                    edges = adj[u]
                    i = it[u]
                    while i < len(edges):
                        e = edges[i]
                        v = to[e]
                        if cap[e] > 0 and level[v] == level[u] + 1:
                            break
                        i += 1
                    it[u] = i
                    if i < len(edges):
                        path.append(edges[i])
                        u = to[edges[i]]
                        continue
                    if u == s:
                        break
                    # dead end: retire it and back up one edge
                    level[u] = -1
                    e = path.pop()
                    u = to[e ^ 1]
                    it[u] += 1
                if u != t:
                    break
                f = min(cap[e] for e in path)
                for e in path:
                    cap[e] -= f
                    cap[e ^ 1] += f
                flow += f

    def source_side(self, s):
        return np.array(self._levels(s)) >= 0


class MinCut(NamedTuple):
    value: float
    source_side: np.ndarray


def maxflow(n_nodes, edges, source, sink):
    """Exact maximum flow / minimum cut.

    Parameters
    ----------
    n_nodes : int
    edges : iterable of (u, v, cap) or (u, v, cap, rev_cap)
        Nonnegative finite capacities.
    source, sink : int

    Returns
    -------
    MinCut
        Cut value (equal to the flow value) and a boolean mask of the nodes
        reachable from the source in the final residual network.

    Capacities are rescaled so the largest becomes ``2**CAPACITY_BITS`` and
    rounded to integers; augmenting paths then run in exact arithmetic.
    """
    edges = [tuple(e) + (0.0,) * (4 - len(e)) for e in edges]
    caps = np.array([[e[2], e[3]] for e in edges], dtype=float).reshape(-1, 2)
    if caps.size and (not np.all(np.isfinite(caps)) or caps.min() < 0):
        raise GaugeError("capacities must be finite and nonnegative")
    top = float(caps.max()) if caps.size else 0.0
    unit = 2.0**CAPACITY_BITS
    ints = np.rint(caps / top * unit) if top > 0 else np.zeros_like(caps)
    net = _FlowNetwork(n_nodes)
    for (u, v, _, _), (c, rc) in zip(edges, ints):
        net.add_edge(int(u), int(v), int(c), int(rc))
    flow = net.max_flow(source, sink)
    return MinCut(flow / unit * top, net.source_side(source))


def _max_parametric(gain, rho, ext, pairs):
    """Maximize ``gain(F) - rho * Per(F)`` over grid sets via a min cut.

    Returns the smallest maximizer (possibly empty).
    """
    n = gain.shape[0]
    s, t = n, n + 1
    unary = rho * ext - gain
    edges = []
    for x in range(n):
        w = unary[x]
        if w > 0:
            edges.append((x, t, w))
        elif w < 0:
            edges.append((s, x, -w))
    if rho > 0:
        edges.extend((int(a), int(b), rho, rho) for a, b in pairs)
    cut = maxflow(n + 2, edges, s, t)
    return cut.source_side[:n]


class DinkelbachTrace(NamedTuple):
    mask: np.ndarray
    ratio: float
    rhos: list


def best_ratio_set(gain, H, W, tol=TOL_RATIO, max_iter=200):
    """Maximize ``gain(F) / Per(F)`` over nonempty grid sets.

    ``gain`` is a per-pixel weight vector.  Returns the set and the
    sequence of Dinkelbach parameters; the set is None when no set has a
    positive ratio.
    """
    gain = np.asarray(gain, dtype=float)
    ext = exterior_counts(H, W).ravel().astype(float)
    pairs = _grid_edges(H, W)
    rho = 0.0
    rhos = [rho]
    mask = _max_parametric(gain, rho, ext, pairs)
    if not mask.any():
        return DinkelbachTrace(None, 0.0, rhos)
    for _ in range(max_iter):
        rho_new = float(gain[mask].sum()) / perimeter(mask.reshape(H, W))
        if rho_new < rho:
            raise GaugeError("Dinkelbach parameter decreased")
        rho = rho_new
        rhos.append(rho)
        cand = _max_parametric(gain, rho, ext, pairs)
        if not cand.any():
            break
        value = float(gain[cand].sum()) - rho * perimeter(cand.reshape(H, W))
        if value <= tol:
            break
        mask = cand
    else:
        raise GaugeError("Dinkelbach iteration did not terminate")
    return DinkelbachTrace(mask.reshape(H, W), rho, rhos)


def _components(mask):
    labels, count = ndimage.label(mask)
    return [labels == k for k in range(1, count + 1)]


def indicator_atom(mask, sign):
    mask = _as_mask(mask)
    per = perimeter(mask)
    label = ("F", int(sign), mask.shape, np.packbits(mask.ravel()).tobytes().hex())
    return Atom(sign * mask.ravel().astype(float) / per, EXTREME_POINT, 1.0, label)


def atom_mask(atom):
    """Recover the grid set behind an indicator atom."""
    _, _, shape, hexbits = atom.label
    bits = np.unpackbits(np.frombuffer(bytes.fromhex(hexbits), dtype=np.uint8))
    return bits[: shape[0] * shape[1]].astype(bool).reshape(shape)


def _ranked_components(g, H, W, tol):
    """(ratio, sign, component mask) for both signs, best first."""
    found = []
    for sign in (1, -1):
        trace = best_ratio_set(-sign * g, H, W, tol)
        if trace.mask is None:
            continue
        for comp in _components(trace.mask):
            ratio = float(-sign * g[comp.ravel()].sum()) / perimeter(comp)
            found.append((ratio, sign, comp))
    # stable sort keeps sign + before sign - on exact ties
    found.sort(key=lambda item: -item[0])
    return found


def lmo_tv(g, H, W, tol=TOL_RATIO):
    """Minimize ``<g, a>`` over the atoms ``+-1_F / Per(F)``.

    Both signs are searched; a disconnected maximizer is split into its
    4-connected components and the best component is returned.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (H * W,):
        raise GaugeError(f"gradient must have length {H * W}")
    found = _ranked_components(g, H, W, tol)
    if not found:
        full = np.ones((H, W), dtype=bool)
        return LMOResult(indicator_atom(full, 1), 0.0, True)
    ratio, sign, comp = found[0]
    return LMOResult(indicator_atom(comp, sign), -ratio, ratio <= 0)


def tv_candidates(g, H, W, limit=8, tol=TOL_RATIO):
    """Several good atoms at once (components from both signs)."""
    found = _ranked_components(np.asarray(g, dtype=float), H, W, tol)
    atoms = [indicator_atom(comp, sign) for ratio, sign, comp in found[:limit] if ratio > 0]
    return atoms or [lmo_tv(g, H, W, tol).atom]


def level_set_decomposition(u, H, W):
    """Write ``u`` as a conical combination of indicator atoms.

    Uses the superlevel sets of the positive part and the sublevel sets of
    the negative part, split into connected components.  The combination's
    cost equals ``tv_gauge(u)`` (coarea formula) and the atom supports form
    a nested-or-disjoint family.
    """
    U = np.asarray(u, dtype=float).reshape(H, W)
    alphas, atoms = [], []
    for sign in (1, -1):
        part = np.maximum(sign * U, 0.0)
        levels = np.unique(part[part > 0])
        prev = 0.0
        for level in levels:
            step = level - prev
            for comp in _components(part >= level):
                atoms.append(indicator_atom(comp, sign))
                alphas.append(step * perimeter(comp))
            prev = level
    return np.array(alphas), atoms


def tvgrad_family(H, W):
    """Anisotropic total gradient variation on an ``H x W`` grid."""
    if H < 1 or W < 1:
        raise ValueError("grid dimensions must be positive")
    H, W = int(H), int(W)
    return GaugeModel(
        ambient_dim=H * W,
        family_tag="TVGradient2D",
        gauge_fn=lambda u: tv_gauge(u, H, W),
        lmo_fn=lambda g: lmo_tv(g, H, W),
        atoms=None,
        candidates_fn=lambda g: tv_candidates(g, H, W),
        metadata={"H": H, "W": W, "decompose": lambda u: level_set_decomposition(u, H, W)},
    )


def read_pgm(path):
    """Read a plain (P2) or binary (P5) graymap; returns (array, maxval)."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    # header: magic, width, height, maxval, with '#' comments
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    magic = tokens[0]
    width, height, maxval = (int(tok) for tok in tokens[1:])
    if magic == b"P2":
        values = np.array(data[pos:].split(), dtype=np.int64)
    elif magic == b"P5":
        pos += 1
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        values = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    else:
        raise GaugeError(f"{path}: not a P2/P5 graymap")
    if values.size != width * height:
        raise GaugeError(f"{path}: expected {width * height} pixels, found {values.size}")
    return values.astype(np.int64).reshape(height, width), maxval


def write_pgm(path, image, maxval=255, binary=True):
    image = np.asarray(image)
    if image.ndim != 2:
        raise GaugeError("graymaps are 2-d")
    pix = np.clip(np.rint(image), 0, maxval).astype(np.int64)
    height, width = pix.shape
    header = f"{'P5' if binary else 'P2'}\n{width} {height}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
            fh.write(pix.astype(dtype).tobytes())
        else:
            for row in pix:
                fh.write((" ".join(str(v) for v in row) + "\n").encode())
