"""Combinatorial constructions on top of a graph.

Black/white colouring of a vertex set by free branches, the grey closure of
white vertices, the severed tree, and systems of vertex-disjoint short paths.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .graph import Graph, GraphError, neighborhood_ball

BLACK, WHITE, INADMISSIBLE = "black", "white", "inadmissible"


def n_m(d: int, M: int) -> int:
    """d + d(d-1) + ... + d(d-1)^(M-1): vertices at distance 1..M in a d-regular tree."""
    return sum(d * (d - 1) ** i for i in range(M))


@dataclass(frozen=True)
class ColoringReport:
    M: int
    colors: dict[int, str]
    free_branch: dict[int, int]  # black vertex -> neighbour rooting the chosen free branch
    b: int
    w: int
    N_M: int

    @property
    def admissible(self) -> int:
        return self.b + self.w

    @property
    def black_fraction(self) -> float:
        return self.b / self.admissible if self.admissible else float("nan")

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["vertex", "color", "free_branch"])
            for v in sorted(self.colors):
                out.writerow([v, self.colors[v], self.free_branch.get(v, "")])
        return path


def _tree_branches(g: Graph, v: int, M: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """BFS within radius M of v. Returns (distance, parent, branch root) arrays.

    ``branch[x]`` is the neighbour of v through which x is reached; -1 outside
    the ball and at v itself. Only meaningful when the ball is a tree.
    """
    dist = np.full(g.n, -1, dtype=np.int64)
    parent = np.full(g.n, -1, dtype=np.int64)
    branch = np.full(g.n, -1, dtype=np.int64)
    dist[v] = 0
    q = deque([v])
    while q:
        u = q.popleft()
        if dist[u] >= M:
            continue
        for x in g.neighbors(u):
            if dist[x] < 0:
                dist[x] = dist[u] + 1
                parent[x] = u
                branch[x] = x if u == v else branch[u]
                q.append(x)
    return dist, parent, branch


def classify_black_white(g: Graph, U: Iterable[int], M: int) -> ColoringReport:
    """Colour each vertex of U black (has a free branch of depth M) or white.

    Vertices whose M-ball is not a tree are labelled inadmissible and left out
    of the counts. When several branches are free, the one rooted at the
    lowest neighbour id is recorded.
    """
    if M < 1:
        raise GraphError("depth M must be at least 1")
    members = sorted({int(u) for u in U})
    in_u = np.zeros(g.n, dtype=bool)
    in_u[members] = True
    colors, free = {}, {}
    b = w = 0
    for v in members:
        _, is_tree = neighborhood_ball(g, v, M)
        if not is_tree:
            colors[v] = INADMISSIBLE
            continue
        dist, _, branch = _tree_branches(g, v, M)
        others = np.flatnonzero(in_u & (dist > 0))
        occupied = set(branch[others].tolist())
        free_roots = [int(x) for x in g.neighbors(v) if int(x) not in occupied]
        if free_roots:
            colors[v] = BLACK
            free[v] = min(free_roots)
            b += 1
        else:
            colors[v] = WHITE
            w += 1
    return ColoringReport(M=M, colors=colors, free_branch=free, b=b, w=w, N_M=n_m(g.d, M))


@dataclass(frozen=True)
class GreyClosure:
    closure: tuple[int, ...]
    grey: tuple[int, ...]
    coloring: ColoringReport

    @property
    def g(self) -> int:
        return len(self.grey)


def grey_closure(g: Graph, U: Iterable[int], M: int) -> GreyClosure:
    """U plus every vertex on the geodesic from a white v to each U-vertex in its M-ball."""
    members = sorted({int(u) for u in U})
    rep = classify_black_white(g, members, M)
    bad = [v for v, c in rep.colors.items() if c == INADMISSIBLE]
    if bad:
        raise GraphError(f"grey closure needs tree-like {M}-balls; vertex {bad[0]} has a cycle")
    in_u = np.zeros(g.n, dtype=bool)
    in_u[members] = True
    closure = set(members)
    for v in members:
        if rep.colors[v] != WHITE:
            continue
        dist, parent, _ = _tree_branches(g, v, M)
        for x in np.flatnonzero(in_u & (dist > 0)):
            y = parent[x]
            while y != v:
                closure.add(int(y))
                y = parent[y]
    grey = sorted(closure.difference(members))
    return GreyClosure(closure=tuple(sorted(closure)), grey=tuple(grey), coloring=rep)


@dataclass(frozen=True)
class DeltaTree:
    d: int
    M: int
    root: int
    graph: Graph
    depth: np.ndarray


def delta_size(d: int, M: int) -> int:
    return 1 + sum((d - 1) ** k for k in range(M))


def build_delta(d: int, M: int) -> DeltaTree:
    """The severed tree: root of degree 1, interior vertices of degree d, depth-M leaves.

    Vertices are numbered breadth first from the root (vertex 0).
    """
    if d < 3 or M < 1:
        raise GraphError(f"need d >= 3 and M >= 1, got d={d}, M={M}")
    edges = [(0, 1)]
    depth = [0, 1]
    frontier = [1]
    nxt = 2
    for level in range(2, M + 1):
        new = []
        for v in frontier:
            for _ in range(d - 1):
                edges.append((v, nxt))
                depth.append(level)
                new.append(nxt)
                nxt += 1
        frontier = new
    g = Graph.from_edges(nxt, edges, d=d)
    return DeltaTree(d=d, M=M, root=0, graph=g, depth=np.asarray(depth, dtype=np.int64))


def delta_copy(g: Graph, v: int, branch_root: int, M: int) -> tuple[int, ...]:
    """Vertices of the copy of the severed tree hung from v along one branch.

    That is v together with every vertex of the branch at distance <= M from v.
    """
    dist, _, branch = _tree_branches(g, v, M)
    members = np.flatnonzero((branch == branch_root) & (dist >= 1) & (dist <= M))
    return tuple(sorted([v] + members.tolist()))


@dataclass(frozen=True)
class PathSet:
    paths: tuple[tuple[int, ...], ...]
    max_length: int

    @property
    def count(self) -> int:
        return len(self.paths)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["path", "length", "start", "end", "vertices"])
            for i, p in enumerate(self.paths):
                out.writerow([i, len(p) - 1, p[0], p[-1], " ".join(map(str, p))])
        return path


def disjoint_short_paths(g: Graph, U: Iterable[int], W: Iterable[int], L_max: int) -> PathSet:
    """Greedy system of vertex-disjoint U-W paths of length at most L_max.

    Repeatedly takes a shortest U-W path in the graph with all previously used
    vertices deleted, until the shortest remaining one is longer than L_max.
    """
    u_set = sorted({int(x) for x in U})
    w_set = sorted({int(x) for x in W})
    if not u_set or not w_set:
        raise GraphError("U and W must be nonempty")
    used = np.zeros(g.n, dtype=bool)
    in_w = np.zeros(g.n, dtype=bool)
    in_w[w_set] = True
    paths = []
    for x in u_set:
        if in_w[x]:
            paths.append((x,))
            used[x] = True
    while True:
        p = _shortest_residual_path(g, u_set, in_w, used, L_max)
        if p is None:
            break
        used[list(p)] = True
        paths.append(p)
    return PathSet(paths=tuple(paths), max_length=L_max)


def _shortest_residual_path(g, sources, in_w, used, L_max):
    dist = np.full(g.n, -1, dtype=np.int64)
    parent = np.full(g.n, -1, dtype=np.int64)
    q = deque()
    for s in sources:
        if not used[s]:
            dist[s] = 0
            q.append(s)
    while q:
        u = q.popleft()
        if in_w[u]:
            path = [u]
            while parent[path[-1]] >= 0:
                path.append(int(parent[path[-1]]))
            return tuple(reversed(path))
        if dist[u] >= L_max:
            continue
        for x in g.neighbors(u):
            if dist[x] < 0 and not used[x]:
                dist[x] = dist[u] + 1
                parent[x] = u
                q.append(x)
    return None


def check_path_set(g: Graph, U: Iterable[int], W: Iterable[int], ps: PathSet) -> list[str]:
    """Independent audit of a path system; returns a list of problems (empty if valid)."""
    u_set, w_set = set(U), set(W)
    problems = []
    seen = set()
    for i, p in enumerate(ps.paths):
        if len(p) - 1 > ps.max_length:
            problems.append(f"path {i} longer than {ps.max_length}")
        if not ((p[0] in u_set and p[-1] in w_set) or (p[-1] in u_set and p[0] in w_set)):
            problems.append(f"path {i} does not join U to W")
        for a, b in zip(p, p[1:]):
            if b not in set(g.neighbors(a).tolist()):
                problems.append(f"path {i} uses non-edge {a}-{b}")
        for x in p:
            if x in seen:
                problems.append(f"vertex {x} shared by two paths")
            seen.add(x)
        if len(set(p)) != len(p):
            problems.append(f"path {i} revisits a vertex")
    return problems


def random_admissible_set(g: Graph, size: int, M: int, rng: np.random.Generator,
                          tree_like: np.ndarray | None = None) -> list[int]:
    """Uniform random subset of the vertices whose M-ball is a tree."""
    if tree_like is None:
        tree_like = tree_like_mask(g, M)
    pool = np.flatnonzero(tree_like)
    if size > len(pool):
        raise GraphError(f"only {len(pool)} admissible vertices, asked for {size}")
    return sorted(rng.choice(pool, size=size, replace=False).tolist())


def tree_like_mask(g: Graph, r: int) -> np.ndarray:
    """Per-vertex flag: the r-ball is a tree."""
    return np.array([neighborhood_ball(g, v, r)[1] for v in range(g.n)], dtype=bool)
