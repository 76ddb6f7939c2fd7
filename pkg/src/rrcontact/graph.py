"""Random regular graphs and the structural queries run against them.

Graphs are stored in compressed sparse row form: ``indptr``/``indices`` with
every neighbor list sorted. Directed edge ``e`` is position ``e`` of
``indices``; its source is ``src[e]`` and ``rev[e]`` is the position of the
opposite direction. The simulation kernels work on these arrays directly.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

DEFAULT_ATTEMPT_BUDGET = 100_000
DEFAULT_SUBSET_BUDGET = 2_000_000


class GraphError(ValueError):
    """Invalid graph parameters or an unsupported query."""


class BudgetExhausted(RuntimeError):
    """A rejection sampler or enumeration ran past its configured budget."""


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    d: int
    indptr: np.ndarray
    indices: np.ndarray
    connected: bool
    generator_attempts: int = 0
    src: np.ndarray = field(init=False, repr=False)
    rev: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        indptr.flags.writeable = False
        indices.flags.writeable = False
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        deg = np.diff(indptr)
        src = np.repeat(np.arange(self.n, dtype=np.int64), deg)
        # rev[e] locates (v, u) for e = (u, v); both directions are sorted
        # by (source, target), so a lexsort on (source, target) of the
        # flipped pairs gives the permutation.
        order = np.lexsort((src, indices))
        rev = np.empty_like(order)
        rev[order] = np.arange(len(order))
        src.flags.writeable = False
        rev.flags.writeable = False
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "rev", rev)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]], d: int | None = None,
                   generator_attempts: int = 0) -> "Graph":
        """Build a simple undirected graph from an edge list."""
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if len(e) and (e.min() < 0 or e.max() >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise GraphError("self-loop in edge list")
        both = np.concatenate([e, e[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        if len(both) > 1 and np.any(np.all(both[1:] == both[:-1], axis=1)):
            raise GraphError("repeated edge in edge list")
        deg = np.bincount(both[:, 0], minlength=n)
        indptr = np.concatenate([[0], np.cumsum(deg)])
        if d is None:
            d = int(deg.max()) if n else 0
        connected = _is_connected(n, both)
        return cls(n=n, d=d, indptr=indptr, indices=both[:, 1], connected=connected,
                   generator_attempts=generator_attempts)

    @property
    def m(self) -> int:
        return len(self.indices) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def is_regular(self) -> bool:
        return bool(np.all(self.degrees == self.d))

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def edges(self) -> np.ndarray:
        """Undirected edges as an (m, 2) array with u < v, lexicographically sorted."""
        mask = self.src < self.indices
        return np.column_stack([self.src[mask], self.indices[mask]])

    def adjacency_lists(self) -> list[list[int]]:
        return [self.neighbors(v).tolist() for v in range(self.n)]

    def to_sparse(self) -> csr_matrix:
        data = np.ones(len(self.indices), dtype=np.int8)
        return csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def check(self, regular: bool = True) -> None:
        """Raise GraphError if any simple-graph invariant fails."""
        e = np.column_stack([self.src, self.indices])
        if np.any(e[:, 0] == e[:, 1]):
            raise GraphError("self-loop")
        for v in range(self.n):
            nb = self.neighbors(v)
            if np.any(np.diff(nb) <= 0):
                raise GraphError(f"neighbor list of {v} not strictly increasing")
        if not np.array_equal(self.src[self.rev], self.indices) or \
                not np.array_equal(self.indices[self.rev], self.src):
            raise GraphError("adjacency not symmetric")
        if regular:
            if not self.is_regular:
                raise GraphError("graph is not regular")
            if (self.n * self.d) % 2:
                raise GraphError("n*d odd")

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and self.d == other.d
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __hash__(self):
        return hash((self.n, self.d, self.indices.tobytes()))


def _is_connected(n: int, directed_edges: np.ndarray) -> bool:
    if n <= 1:
        return True
    a = csr_matrix((np.ones(len(directed_edges)), (directed_edges[:, 0], directed_edges[:, 1])),
                   shape=(n, n))
    ncomp, _ = connected_components(a, directed=False)
    return ncomp == 1


def generate_random_regular(n: int, d: int, seed: int, *, budget: int = DEFAULT_ATTEMPT_BUDGET,
                            require_connected: bool = True) -> Graph:
    """Draw a uniform simple (connected) d-regular graph on n labeled vertices.

    Uses the pairing model: a uniform perfect matching of the n*d half-edges,
    rejected whenever it produces a loop or a repeated edge. Conditioned on
    acceptance the result is uniform over simple d-regular graphs. Disconnected
    outcomes are rejected too when ``require_connected`` is set.
    """
    if d < 3:
        raise GraphError(f"degree must be at least 3, got d={d}")
    if n <= d:
        raise GraphError(f"need n > d, got n={n}, d={d}")
    if (n * d) % 2:
        raise GraphError(f"parity: n*d = {n * d} is odd")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n, dtype=np.int64), d)
    for attempt in range(1, budget + 1):
        pairs = rng.permutation(stubs).reshape(-1, 2)
        pairs.sort(axis=1)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        key = pairs[:, 0] * n + pairs[:, 1]
        key.sort()
        if np.any(key[1:] == key[:-1]):
            continue
        g = Graph.from_edges(n, pairs, d=d, generator_attempts=attempt)
        if require_connected and not g.connected:
            continue
        return g
    raise BudgetExhausted(f"no simple connected {d}-regular graph on {n} vertices "
                          f"after {budget} pairings")


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, itertools.combinations(range(n), 2))


def prism_graph() -> Graph:
    """Triangular prism: triangles 0-1-2 and 3-4-5 joined by rungs i -- i+3."""
    return Graph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5),
                                (0, 3), (1, 4), (2, 5)])


def complete_bipartite_33() -> Graph:
    return Graph.from_edges(6, [(i, j) for i in range(3) for j in range(3, 6)])


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def regular_tree(d: int, depth: int) -> tuple[Graph, np.ndarray]:
    """Ball of radius ``depth`` around the root of the infinite d-regular tree.

    Vertices are numbered breadth first from the root (vertex 0). Returns the
    graph and the per-vertex depth.
    """
    edges = []
    depths = [0]
    frontier = [0]
    nxt = 1
    for level in range(1, depth + 1):
        new = []
        for v in frontier:
            kids = d if v == 0 else d - 1
            for _ in range(kids):
                edges.append((v, nxt))
                depths.append(level)
                new.append(nxt)
                nxt += 1
        frontier = new
    return Graph.from_edges(nxt, edges, d=d), np.asarray(depths, dtype=np.int64)


def count_triangles(g: Graph) -> int:
    a = g.to_sparse().astype(np.int64)
    return int((a @ a).multiply(a).sum()) // 6


# -- balls and distances ----------------------------------------------------

def bfs_distances(g: Graph, source: int, radius: int | None = None) -> np.ndarray:
    """Graph distance from ``source`` to every vertex, -1 if unreached (or beyond radius)."""
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    q = deque([source])
    indptr, indices = g.indptr, g.indices
    while q:
        u = q.popleft()
        du = dist[u]
        if radius is not None and du >= radius:
            continue
        for w in indices[indptr[u]:indptr[u + 1]]:
            if dist[w] < 0:
                dist[w] = du + 1
                q.append(w)
    return dist


def neighborhood_ball(g: Graph, v: int, r: int) -> tuple[np.ndarray, bool]:
    """Vertices within distance r of v, and whether the induced subgraph is a tree."""
    if not 0 <= v < g.n:
        raise GraphError(f"vertex {v} out of range")
    if r < 0:
        raise GraphError("radius must be nonnegative")
    dist = bfs_distances(g, v, radius=r)
    ball = np.flatnonzero(dist >= 0)
    inside = dist >= 0
    mask = inside[g.src] & inside[g.indices]
    induced_edges = int(mask.sum()) // 2
    return ball, induced_edges == len(ball) - 1


def tree_like_census(g: Graph, r: int) -> int:
    return sum(neighborhood_ball(g, v, r)[1] for v in range(g.n))


def diameter(g: Graph) -> int:
    if not g.connected:
        raise GraphError("diameter of a disconnected graph is infinite")
    best = 0
    for v in range(g.n):
        best = max(best, int(bfs_distances(g, v).max()))
    return best


# -- edge expansion ------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionReport:
    k: int
    value: float
    witness: tuple[int, ...]
    mode: str
    boundary: int = 0


def boundary_size(g: Graph, subset: Iterable[int]) -> int:
    """|E(S, S^c)|."""
    inside = np.zeros(g.n, dtype=bool)
    inside[list(subset)] = True
    return int(np.count_nonzero(inside[g.src] & ~inside[g.indices]))


def edge_expansion(g: Graph, k: int, mode: str = "exact", samples: int = 100, seed: int = 0,
                   *, budget: int = DEFAULT_SUBSET_BUDGET) -> ExpansionReport:
    """min over nonempty S with |S| <= k of |E(S,S^c)| / |S|.

    ``exact`` enumerates every subset and refuses when that exceeds ``budget``.
    ``sampled`` grows ``samples`` random connected sets of each size and returns
    the smallest ratio seen, which bounds the true value from above.
    """
    if k < 1:
        raise GraphError("k must be at least 1")
    k = min(k, g.n)
    if mode == "exact":
        return _expansion_exact(g, k, budget)
    if mode == "sampled":
        return _expansion_sampled(g, k, samples, seed)
    raise GraphError(f"unknown expansion mode {mode!r}")


def _expansion_exact(g: Graph, k: int, budget: int) -> ExpansionReport:
    total = sum(math.comb(g.n, s) for s in range(1, k + 1))
    if total > budget:
        raise BudgetExhausted(f"exact expansion needs {total} subsets, budget is {budget}")
    adj = [set(g.neighbors(v).tolist()) for v in range(g.n)]
    deg = g.degrees.tolist()
    best_num, best_den, witness = None, 1, ()
    for s in range(1, k + 1):
        for sub in itertools.combinations(range(g.n), s):
            members = set(sub)
            internal = sum(len(adj[v] & members) for v in sub)
            bnd = sum(deg[v] for v in sub) - internal
            if best_num is None or bnd * best_den < best_num * s:
                best_num, best_den, witness = bnd, s, sub
    return ExpansionReport(k=k, value=best_num / best_den, witness=tuple(witness), mode="exact",
                           boundary=best_num)


def _expansion_sampled(g: Graph, k: int, samples: int, seed: int) -> ExpansionReport:
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(samples):
        # One random connected growth visits every size 1..k along the way.
        start = int(rng.integers(g.n))
        members = [start]
        inside = np.zeros(g.n, dtype=bool)
        inside[start] = True
        frontier = set(g.neighbors(start).tolist())
        bnd = int(g.degrees[start])
        for s in range(1, k + 1):
            if best is None or bnd * best[1] < best[0] * s:
                best = (bnd, s, tuple(sorted(members)))
            if s == k or not frontier:
                break
            w = sorted(frontier)[int(rng.integers(len(frontier)))]
            frontier.discard(w)
            nb = g.neighbors(w)
            inner = int(np.count_nonzero(inside[nb]))
            bnd += len(nb) - 2 * inner
            inside[w] = True
            members.append(w)
            frontier.update(int(x) for x in nb if not inside[x])
    return ExpansionReport(k=k, value=best[0] / best[1], witness=best[2], mode="sampled",
                           boundary=best[0])


# -- serialization ---------------------------------------------------------------

def to_edge_list(g: Graph) -> str:
    lines = [f"{g.n} {g.d}"]
    lines.extend(f"{u} {v}" for u, v in g.edges().tolist())
    return "\n".join(lines) + "\n"


def from_edge_list(text: str) -> Graph:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise GraphError("edge list must start with a header line 'n d'")
    n, d = int(rows[0][0]), int(rows[0][1])
    edges = []
    for row in rows[1:]:
        if len(row) != 2:
            raise GraphError(f"malformed edge line: {' '.join(row)!r}")
        edges.append((int(row[0]), int(row[1])))
    return Graph.from_edges(n, edges, d=d)


def write_graph(g: Graph, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(to_edge_list(g))
    return path


def read_graph(path: str | Path) -> Graph:
    return from_edge_list(Path(path).read_text())


def content_hash(data: bytes) -> str:
    """git-style blob hash (sha1 over ``blob <len>\\0`` + data)."""
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def graph_hash(g: Graph) -> str:
    return content_hash(to_edge_list(g).encode())
