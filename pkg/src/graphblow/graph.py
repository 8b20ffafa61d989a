"""Weighted locally finite graphs, their truncations, and metric/measure queries.

Vertices carry opaque string ids at the boundary (files, CLI) and dense
integer indices internally.  All generators for infinite families (lattices,
homogeneous trees) return metric balls around a center and record the
truncation radius so downstream code can demand interior margins.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp


class GraphValidationError(ValueError):
    """Raised when a graph violates one of the structural invariants."""


class TruncationError(ValueError):
    """Raised when a query needs more of an infinite graph than the truncation holds."""


VertexRef = int | str | np.integer


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Immutable weighted graph ``G = (V, E, omega, mu)``.

    Parameters
    ----------
    ids : sequence of str
        Opaque vertex ids; position ``i`` is the internal index.
    mu : array_like, shape (n,)
        Positive vertex measure.
    edges : array_like, shape (E, 2)
        Unordered vertex index pairs.
    weights : array_like, shape (E,)
        Positive symmetric edge weights.
    truncation_radius, center : int, optional
        Set by generators of infinite families.
    coords : ndarray, optional
        Lattice coordinates (shape (n, N)) or tree depths (shape (n, 1)).
    """

    ids: tuple[str, ...]
    mu: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    truncation_radius: int | None = None
    center: int | None = None
    coords: np.ndarray | None = None
    name: str = ""
    _index: dict = field(init=False, repr=False)
    _nbrs: tuple = field(init=False, repr=False)
    _nbr_w: tuple = field(init=False, repr=False)
    _m: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ids = tuple(str(v) for v in self.ids)
        n = len(ids)
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if n == 0:
            raise GraphValidationError("graph has no vertices")
        index = {}
        for i, v in enumerate(ids):
            if v in index:
                raise GraphValidationError(f"duplicate vertex id {v!r}")
            index[v] = i
        if mu.shape != (n,):
            raise GraphValidationError(f"mu has shape {mu.shape}, expected ({n},)")
        for i in np.flatnonzero(~(mu > 0) | ~np.isfinite(mu)):
            raise GraphValidationError(f"nonpositive measure mu={mu[i]} at vertex {ids[i]!r}")
        if weights.shape != (len(edges),):
            raise GraphValidationError("weights and edges differ in length")
        seen = set()
        for k, (a, b) in enumerate(edges):
            if not (0 <= a < n and 0 <= b < n):
                raise GraphValidationError(f"edge {k} references a missing vertex")
            if a == b:
                raise GraphValidationError(f"loop at vertex {ids[a]!r}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise GraphValidationError(f"duplicate edge {ids[key[0]]!r}-{ids[key[1]]!r}")
            seen.add(key)
            if not (weights[k] > 0) or not math.isfinite(weights[k]):
                raise GraphValidationError(
                    f"nonpositive weight w={weights[k]} on edge {ids[a]!r}-{ids[b]!r}"
                )
        edges = np.sort(edges, axis=1) if len(edges) else edges

        nbrs = [[] for _ in range(n)]
        nbr_w = [[] for _ in range(n)]
        for (a, b), w in zip(edges, weights):
            nbrs[a].append(b)
            nbr_w[a].append(w)
            nbrs[b].append(a)
            nbr_w[b].append(w)
        nbrs_t = tuple(np.asarray(x, dtype=np.int64) for x in nbrs)
        nbr_w_t = tuple(np.asarray(x, dtype=float) for x in nbr_w)
        m = np.array([w.sum() for w in nbr_w_t])

        for name, value in (("ids", ids), ("mu", mu), ("edges", edges), ("weights", weights)):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_nbrs", nbrs_t)
        object.__setattr__(self, "_nbr_w", nbr_w_t)
        object.__setattr__(self, "_m", m)
        for arr in (self.mu, self.edges, self.weights, self._m):
            arr.setflags(write=False)

        if n > 1 and len(self._bfs(0)[0]) != n:
            raise GraphValidationError("graph is disconnected")

    # basic structure -----------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def m(self) -> np.ndarray:
        """Weighted degree ``m(x) = sum_{y~x} w_xy``."""
        return self._m

    @property
    def is_truncation(self) -> bool:
        return self.truncation_radius is not None

    def index(self, x: VertexRef) -> int:
        """Internal index of ``x`` (an id string or an index)."""
        if isinstance(x, str):
            try:
                return self._index[x]
            except KeyError:
                raise KeyError(f"unknown vertex id {x!r}") from None
        i = int(x)
        if not 0 <= i < self.n:
            raise KeyError(f"vertex index {i} out of range")
        return i

    def neighbors(self, x: VertexRef) -> np.ndarray:
        return self._nbrs[self.index(x)]

    def neighbor_weights(self, x: VertexRef) -> np.ndarray:
        return self._nbr_w[self.index(x)]

    def weight(self, x: VertexRef, y: VertexRef) -> float:
        i, j = self.index(x), self.index(y)
        hit = np.flatnonzero(self._nbrs[i] == j)
        return float(self._nbr_w[i][hit[0]]) if hit.size else 0.0

    def weight_matrix(self) -> sp.csr_matrix:
        n = self.n
        if len(self.edges) == 0:
            return sp.csr_matrix((n, n))
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        vals = np.concatenate([self.weights, self.weights])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def laplacian_matrix(self) -> sp.csr_matrix:
        """Matrix of ``Delta u(x) = mu(x)^{-1} sum_y w_xy (u(y) - u(x))``."""
        W = self.weight_matrix()
        A = W - sp.diags(self._m)
        return sp.csr_matrix(sp.diags(1.0 / self.mu) @ A)

    def symmetric_laplacian(self) -> np.ndarray:
        """Dense ``mu^{-1/2} (W - diag m) mu^{-1/2}``, similar to the Laplacian."""
        W = self.weight_matrix().toarray()
        s = 1.0 / np.sqrt(self.mu)
        return s[:, None] * (W - np.diag(self._m)) * s[None, :]

    # metric ---------------------------------------------------------------

    def _bfs(self, src: int, limit: int | None = None):
        dist = {src: 0}
        order = [src]
        queue = deque([src])
        while queue:
            v = queue.popleft()
            d = dist[v]
            if limit is not None and d >= limit:
                continue
            for w in self._nbrs[v]:
                w = int(w)
                if w not in dist:
                    dist[w] = d + 1
                    order.append(w)
                    queue.append(w)
        return order, dist

    def distances_from(self, x: VertexRef) -> np.ndarray:
        """Hop distances from ``x`` to every vertex."""
        order, dist = self._bfs(self.index(x))
        out = np.empty(self.n, dtype=np.int64)
        out[order] = [dist[v] for v in order]
        return out

    def distance(self, x: VertexRef, y: VertexRef) -> int:
        return int(self.distances_from(x)[self.index(y)])

    def depth(self, x: VertexRef) -> int:
        """Distance from the truncation center."""
        if self.center is None:
            raise TruncationError("graph has no designated center")
        return self.distance(self.center, x)

    def sphere(self) -> np.ndarray:
        """Vertices at the truncation radius (the cut made by truncation)."""
        if not self.is_truncation:
            return np.empty(0, dtype=np.int64)
        d = self.distances_from(self.center)
        return np.flatnonzero(d == self.truncation_radius)

    def relabel_info(self) -> dict:
        return {"n_vertices": self.n, "n_edges": int(len(self.edges)), "name": self.name}


@dataclass(frozen=True)
class GraphConstants:
    """Exhaustive-scan constants; ``omega_min``/``d_omega`` are None without edges."""

    d_mu: float
    d_omega: float | None
    omega_min: float | None
    mu_max: float
    mu_min: float


def graph_constants(g: WeightedGraph) -> GraphConstants:
    d_mu = float(np.max(g.m / g.mu))
    mu_max = float(g.mu.max())
    if len(g.weights):
        w_min = float(g.weights.min())
        return GraphConstants(d_mu, mu_max / w_min, w_min, mu_max, float(g.mu.min()))
    return GraphConstants(d_mu, None, None, mu_max, float(g.mu.min()))


@dataclass(frozen=True)
class DomainSubset:
    """Finite ``Omega`` split into interior and boundary (index arrays, sorted)."""

    interior: np.ndarray
    boundary: np.ndarray

    @property
    def all(self) -> np.ndarray:
        return np.union1d(self.interior, self.boundary)

    @classmethod
    def from_interior(cls, g: WeightedGraph, interior: Iterable[VertexRef]) -> "DomainSubset":
        """``Omega`` as the interior plus every neighbor outside it."""
        inner = np.unique([g.index(v) for v in interior]).astype(np.int64)
        if inner.size == 0:
            raise ValueError("domain interior is empty")
        _check_connected(g, inner)
        inner_set = set(inner.tolist())
        bnd = sorted({int(y) for x in inner for y in g.neighbors(x) if int(y) not in inner_set})
        return cls(inner, np.asarray(bnd, dtype=np.int64))

    @classmethod
    def from_vertices(cls, g: WeightedGraph, omega: Iterable[VertexRef]) -> "DomainSubset":
        """Split ``Omega``: boundary points are those with a neighbor outside ``Omega``."""
        om = np.unique([g.index(v) for v in omega]).astype(np.int64)
        _check_connected(g, om)
        om_set = set(om.tolist())
        bnd = np.array(
            [x for x in om if any(int(y) not in om_set for y in g.neighbors(x))], dtype=np.int64
        )
        inner = np.setdiff1d(om, bnd)
        if inner.size == 0:
            raise ValueError("domain interior is empty")
        return cls(inner, bnd)

    def boundary_consistent(self, g: WeightedGraph) -> bool:
        """Whether the stored boundary matches the neighbor-outside-Omega rule."""
        om = set(self.all.tolist())
        rule = {x for x in om if any(int(y) not in om for y in g.neighbors(x))}
        return rule == set(self.boundary.tolist())


def _check_connected(g: WeightedGraph, verts: np.ndarray) -> None:
    vs = set(int(v) for v in verts)
    if not vs:
        return
    start = next(iter(vs))
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in g.neighbors(v):
            w = int(w)
            if w in vs and w not in seen:
                seen.add(w)
                queue.append(w)
    if seen != vs:
        raise ValueError("domain is not connected in the host graph")


# balls and volume -----------------------------------------------------------


def ball(g: WeightedGraph, x: VertexRef, r: int) -> np.ndarray:
    """Closed hop ball ``B_x^r`` as a sorted index array."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    order, _ = g._bfs(g.index(x), limit=int(r))
    return np.sort(np.asarray(order, dtype=np.int64))


def volume(g: WeightedGraph, s: Iterable[VertexRef]) -> float:
    idx = [g.index(v) for v in s]
    return float(g.mu[idx].sum()) if idx else 0.0


def available_radius(g: WeightedGraph, x: VertexRef) -> int | None:
    """Largest r with ``B_x^r`` wholly inside the truncation (None if not a truncation)."""
    if not g.is_truncation:
        return None
    return g.truncation_radius - g.depth(x)


@dataclass(frozen=True)
class GrowthReport:
    m_hat: float
    c0_hat: float
    r_squared: float
    polynomial_flag: bool
    radii: np.ndarray
    volumes: np.ndarray
    r0: int

    def table(self) -> list[dict]:
        return [{"r": int(r), "volume": float(v)} for r, v in zip(self.radii, self.volumes)]


def volume_growth_fit(
    g: WeightedGraph, x: VertexRef, r_max: int, r0: int = 2, r2_threshold: float = 0.99
) -> GrowthReport:
    """Least-squares fit of ``log V(x, r) = log c0 + m log r`` over ``r0 <= r <= r_max``.

    ``polynomial_flag`` is True when R^2 of the log-log fit reaches
    ``r2_threshold``.  A pass only makes the growth condition plausible at
    this center; it is never a verification on the infinite graph.
    """
    if r_max < 4:
        raise ValueError("r_max must be at least 4")
    avail = available_radius(g, x)
    if avail is not None and r_max > avail:
        raise TruncationError(f"r_max={r_max} exceeds available radius {avail} at this center")
    d = g.distances_from(x)
    if avail is None and r_max > d.max():
        raise TruncationError(f"r_max={r_max} exceeds graph eccentricity {d.max()}")
    radii = np.arange(r0, r_max + 1)
    vols = np.array([g.mu[d <= r].sum() for r in radii])
    lx, ly = np.log(radii), np.log(vols)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ np.array([slope, icpt])
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return GrowthReport(
        float(slope), float(math.exp(icpt)), r2, bool(r2 >= r2_threshold), radii, vols, r0
    )


# generators -------------------------------------------------------------------


def lattice_ball(dim: int, radius: int) -> WeightedGraph:
    """``Z^dim`` truncated to the hop ball of ``radius`` around the origin.

    ``w == 1`` and ``mu == dim`` so the graph Laplacian is the normalized
    lattice Laplacian ``(1/N) sum_{|y-x|=1} (u(y) - u(x))``.
    """
    if dim < 1 or radius < 0:
        raise ValueError("need dim >= 1 and radius >= 0")
    pts = [p for p in product(range(-radius, radius + 1), repeat=dim) if sum(map(abs, p)) <= radius]
    pts.sort(key=lambda p: (sum(map(abs, p)), p))
    index = {p: i for i, p in enumerate(pts)}
    edges = []
    for p, i in index.items():
        for k in range(dim):
            q = p[:k] + (p[k] + 1,) + p[k + 1 :]
            j = index.get(q)
            if j is not None:
                edges.append((i, j))
    ids = [",".join(map(str, p)) for p in pts]
    return WeightedGraph(
        ids,
        np.full(len(pts), float(dim)),
        np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        np.ones(len(edges)),
        truncation_radius=radius,
        center=0,
        coords=np.asarray(pts, dtype=np.int64),
        name=f"Z^{dim} ball R={radius}",
    )


def tree_ball(q: int, radius: int) -> WeightedGraph:
    """Homogeneous tree ``T_q`` (degree q+1) truncated at ``radius``; ``w == 1``, ``mu == q+1``."""
    if q < 1 or radius < 0:
        raise ValueError("need q >= 1 and radius >= 0")
    ids = ["r"]
    depth = [0]
    edges = []
    frontier = [0]
    for d in range(1, radius + 1):
        nxt = []
        for parent in frontier:
            kids = q + 1 if d == 1 else q
            for c in range(kids):
                ids.append(f"{ids[parent]}.{c}")
                depth.append(d)
                edges.append((parent, len(ids) - 1))
                nxt.append(len(ids) - 1)
        frontier = nxt
    return WeightedGraph(
        ids,
        np.full(len(ids), float(q + 1)),
        np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        np.ones(len(edges)),
        truncation_radius=radius,
        center=0,
        coords=np.asarray(depth, dtype=np.int64)[:, None],
        name=f"T_{q} ball R={radius}",
    )


def path_graph(n: int, mu: float = 1.0, w: float = 1.0) -> WeightedGraph:
    edges = [(i, i + 1) for i in range(n - 1)]
    return WeightedGraph(
        [str(i) for i in range(n)], np.full(n, mu),
        np.asarray(edges, dtype=np.int64).reshape(-1, 2), np.full(len(edges), w), name=f"P_{n}",
    )


def cycle_graph(n: int, mu: float = 1.0, w: float = 1.0) -> WeightedGraph:
    if n < 3:
        raise ValueError("cycle needs at least 3 vertices")
    edges = [(i, (i + 1) % n) for i in range(n)]
    return WeightedGraph(
        [str(i) for i in range(n)], np.full(n, mu), np.asarray(edges), np.full(n, w), name=f"C_{n}"
    )


def complete_graph(n: int, mu: float = 1.0, w: float = 1.0) -> WeightedGraph:
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return WeightedGraph(
        [str(i) for i in range(n)], np.full(n, mu),
        np.asarray(edges, dtype=np.int64).reshape(-1, 2), np.full(len(edges), w), name=f"K_{n}",
    )


def random_connected_graph(
    n: int,
    seed: int | np.random.Generator | None = None,
    extra_edge_prob: float = 0.15,
    weight_range: tuple[float, float] = (0.5, 2.0),
    mu_range: tuple[float, float] = (0.5, 2.0),
) -> WeightedGraph:
    """Random spanning tree plus Bernoulli extra edges, with uniform weights and measure."""
    rng = np.random.default_rng(seed)
    edges = set()
    perm = rng.permutation(n)
    for k in range(1, n):
        a, b = int(perm[k]), int(perm[rng.integers(0, k)])
        edges.add((min(a, b), max(a, b)))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < extra_edge_prob:
                edges.add((i, j))
    edges = sorted(edges)
    return WeightedGraph(
        [str(i) for i in range(n)],
        rng.uniform(*mu_range, size=n),
        np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        rng.uniform(*weight_range, size=len(edges)),
        name=f"random n={n}",
    )


def from_json(data: Mapping | str | Path) -> WeightedGraph:
    """Load ``{"vertices": [{"id", "mu"}], "edges": [{"u", "v", "w"}]}``."""
    if not isinstance(data, Mapping):
        data = json.loads(Path(data).read_text())
    try:
        verts = data["vertices"]
        ids = [str(v["id"]) for v in verts]
        mu = [float(v["mu"]) for v in verts]
        lookup = {v: i for i, v in enumerate(ids)}
        edges, weights = [], []
        for e in data.get("edges", []):
            u, v = str(e["u"]), str(e["v"])
            for end in (u, v):
                if end not in lookup:
                    raise GraphValidationError(f"edge references unknown vertex {end!r}")
            edges.append((lookup[u], lookup[v]))
            weights.append(float(e["w"]))
    except (KeyError, TypeError) as exc:
        raise GraphValidationError(f"malformed graph file: {exc}") from exc
    return WeightedGraph(ids, mu, np.asarray(edges, dtype=np.int64).reshape(-1, 2), weights)


def to_json(g: WeightedGraph) -> dict:
    return {
        "vertices": [{"id": v, "mu": float(m)} for v, m in zip(g.ids, g.mu)],
        "edges": [
            {"u": g.ids[a], "v": g.ids[b], "w": float(w)} for (a, b), w in zip(g.edges, g.weights)
        ],
    }


@dataclass(frozen=True)
class GraphFamily:
    """An infinite graph family that can be truncated to any radius."""

    kind: str  # "lattice" | "tree"
    param: int

    def truncate(self, radius: int) -> WeightedGraph:
        if self.kind == "lattice":
            return lattice_ball(self.param, radius)
        if self.kind == "tree":
            return tree_ball(self.param, radius)
        raise ValueError(f"unknown family {self.kind!r}")


def build_graph(desc: str | Mapping) -> WeightedGraph | GraphFamily:
    """Build a graph from a descriptor.

    String forms: ``lattice:N:R``, ``tree:q:R``, ``path:n``, ``cycle:n``,
    ``complete:n``, ``random:n[:seed]``, ``single[:mu]``, ``file:PATH``.
    ``lattice:N`` and ``tree:q`` without a radius return a :class:`GraphFamily`.
    A mapping is read as the JSON graph format.
    """
    if isinstance(desc, Mapping):
        return from_json(desc)
    kind, _, rest = desc.partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "lattice":
            fam = GraphFamily("lattice", int(args[0]))
            return fam.truncate(int(args[1])) if len(args) > 1 else fam
        if kind == "tree":
            fam = GraphFamily("tree", int(args[0]))
            return fam.truncate(int(args[1])) if len(args) > 1 else fam
        if kind == "path":
            return path_graph(int(args[0]))
        if kind == "cycle":
            return cycle_graph(int(args[0]))
        if kind == "complete":
            return complete_graph(int(args[0]))
        if kind == "random":
            return random_connected_graph(int(args[0]), int(args[1]) if len(args) > 1 else 0)
        if kind == "single":
            mu = float(args[0]) if args else 1.0
            return WeightedGraph(["0"], [mu], np.empty((0, 2), dtype=np.int64), [])
        if kind == "file":
            return from_json(rest)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, GraphValidationError):
            raise
        raise ValueError(f"bad graph descriptor {desc!r}: {exc}") from exc
    raise ValueError(f"unknown graph descriptor {desc!r}")


def induced_subgraph(g: WeightedGraph, verts: Sequence[int]) -> tuple[WeightedGraph, np.ndarray]:
    """Induced subgraph on ``verts`` (must be connected) and the index map back to ``g``."""
    verts = np.asarray(sorted(set(int(v) for v in verts)), dtype=np.int64)
    pos = {int(v): i for i, v in enumerate(verts)}
    mask = np.isin(g.edges[:, 0], verts) & np.isin(g.edges[:, 1], verts)
    e = np.array([[pos[int(a)], pos[int(b)]] for a, b in g.edges[mask]], dtype=np.int64)
    sub = WeightedGraph(
        [g.ids[v] for v in verts], g.mu[verts], e.reshape(-1, 2), g.weights[mask], name="induced"
    )
    return sub, verts
