import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rrcontact.graph import (Graph, GraphError, complete_graph, generate_random_regular,
                             neighborhood_ball, prism_graph, regular_tree)
from rrcontact.structure import (BLACK, INADMISSIBLE, WHITE, build_delta, check_path_set,
                                 classify_black_white, delta_copy, delta_size,
                                 disjoint_short_paths, grey_closure, n_m, random_admissible_set,
                                 tree_like_mask)


@pytest.fixture(scope="module")
def tree():
    g, _ = regular_tree(3, 6)
    return g


def test_n_m_closed_form():
    assert n_m(3, 1) == 3
    assert n_m(3, 2) == 3 + 6
    assert n_m(4, 3) == 4 + 12 + 36


def test_singleton_is_black(tree):
    rep = classify_black_white(tree, [0], 3)
    assert rep.colors[0] == BLACK and rep.b == 1 and rep.w == 0
    assert rep.free_branch[0] == 1  # lowest neighbour id


def test_adjacent_pair_is_black_black(tree):
    rep = classify_black_white(tree, [0, 1], 1)
    assert rep.colors == {0: BLACK, 1: BLACK}
    assert rep.free_branch == {0: 2, 1: 4}


def test_all_neighbours_in_u_makes_white(tree):
    rep = classify_black_white(tree, [0, 1, 2, 3], 1)
    assert rep.colors[0] == WHITE
    assert all(rep.colors[v] == BLACK for v in (1, 2, 3))
    assert (rep.b, rep.w) == (3, 1)


def test_non_tree_balls_are_inadmissible():
    rep = classify_black_white(complete_graph(4), [0, 1], 1)
    assert set(rep.colors.values()) == {INADMISSIBLE}
    assert rep.b == rep.w == 0 and np.isnan(rep.black_fraction)


def test_depth_must_be_positive(tree):
    with pytest.raises(GraphError):
        classify_black_white(tree, [0], 0)


def test_coloring_csv(tmp_path, tree):
    rep = classify_black_white(tree, [0, 1, 2, 3], 1)
    text = rep.to_csv(tmp_path / "c.csv").read_text().splitlines()
    assert text[0] == "vertex,color,free_branch"
    assert text[1] == "0,white,"
    assert text[2] == "1,black,4"


def _relabel(g: Graph, perm: np.ndarray) -> Graph:
    return Graph.from_edges(g.n, [(perm[u], perm[v]) for u, v in g.edges()], d=g.d)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), M=st.integers(1, 2))
def test_coloring_is_permutation_equivariant(seed, M):
    rng = np.random.default_rng(seed)
    g = generate_random_regular(60, 3, seed)
    U = sorted(rng.choice(g.n, 12, replace=False).tolist())
    perm = rng.permutation(g.n)
    h = _relabel(g, perm)
    a = classify_black_white(g, U, M)
    b = classify_black_white(h, [int(perm[u]) for u in U], M)
    assert {int(perm[v]): c for v, c in a.colors.items()} == b.colors
    assert (a.b, a.w) == (b.b, b.w)


def test_grey_closure_of_all_black_set(tree):
    gc = grey_closure(tree, [0, 1], 2)
    assert gc.closure == (0, 1) and gc.g == 0


def test_grey_closure_singleton(tree):
    for M in (1, 3, 5):
        gc = grey_closure(tree, [7], M)
        assert gc.closure == (7,) and gc.g == 0


def test_grey_closure_collects_geodesic_interiors(tree):
    # root white with M=2: U-members at depth 2 in each branch pull in the depth-1 vertices
    depth2 = [4, 6, 8]  # first child of each of 1, 2, 3
    gc = grey_closure(tree, [0] + depth2, 2)
    assert gc.coloring.colors[0] == WHITE
    assert gc.grey == (1, 2, 3)
    assert gc.g <= gc.coloring.N_M * gc.coloring.w


def test_grey_closure_refuses_cycles():
    with pytest.raises(GraphError):
        grey_closure(prism_graph(), [0], 1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), M=st.integers(1, 2), size=st.integers(1, 40))
def test_grey_bound_and_monotonicity(seed, M, size):
    g = generate_random_regular(400, 3, seed % 50)
    mask = tree_like_mask(g, M)
    rng = np.random.default_rng(seed)
    U = random_admissible_set(g, size, M, rng, mask)
    gc = grey_closure(g, U, M)
    assert gc.g <= gc.coloring.N_M * gc.coloring.w
    assert set(U) <= set(gc.closure)
    extra = random_admissible_set(g, min(5, int(mask.sum())), M, rng, mask)
    bigger = grey_closure(g, sorted(set(U) | set(extra)), M)
    assert len(bigger.closure) >= len(gc.closure)


@pytest.mark.parametrize("d", [3, 4, 5])
@pytest.mark.parametrize("M", range(1, 7))
def test_delta_tree_invariants(d, M):
    t = build_delta(d, M)
    g = t.graph
    assert g.n == delta_size(d, M) == 1 + sum((d - 1) ** k for k in range(M))
    assert g.m == g.n - 1 and g.connected
    deg = g.degrees
    assert deg[t.root] == 1
    assert np.all(deg[t.depth == M] == 1)
    inner = (t.depth > 0) & (t.depth < M)
    assert np.all(deg[inner] == d)
    assert np.all(np.diff(t.depth) >= 0)  # breadth-first numbering


def test_delta_small_examples():
    t = build_delta(3, 1)
    assert t.graph.n == 2 and t.graph.m == 1
    t = build_delta(3, 2)
    assert t.graph.n == 4 and t.graph.degrees.tolist() == [1, 3, 1, 1]
    assert build_delta(4, 2).graph.n == 5


def test_delta_rejects_bad_parameters():
    with pytest.raises(GraphError):
        build_delta(2, 3)
    with pytest.raises(GraphError):
        build_delta(3, 0)


def test_delta_copy_in_tree_matches_severed_tree_size(tree):
    c = delta_copy(tree, 0, 1, 3)
    assert len(c) == delta_size(3, 3)
    sub = Graph.from_edges(tree.n, [(u, v) for u, v in tree.edges() if u in c and v in c])
    assert sub.m == len(c) - 1


def test_paths_for_u_equal_w():
    g = generate_random_regular(30, 3, 1)
    ps = disjoint_short_paths(g, [1, 5, 9], [1, 5, 9], 3)
    assert ps.count == 3 and all(len(p) == 1 for p in ps.paths)


def test_single_edge_path_in_k4():
    ps = disjoint_short_paths(complete_graph(4), [0], [2], 1)
    assert ps.paths == ((0, 2),)


def test_prism_faces_joined_by_rungs():
    g = prism_graph()
    ps = disjoint_short_paths(g, [0, 1, 2], [3, 4, 5], 1)
    assert sorted(ps.paths) == [(0, 3), (1, 4), (2, 5)]
    assert check_path_set(g, [0, 1, 2], [3, 4, 5], ps) == []


def test_paths_respect_length_cap():
    g = Graph.from_edges(5, [(i, i + 1) for i in range(4)])
    assert disjoint_short_paths(g, [0], [4], 3).count == 0
    assert disjoint_short_paths(g, [0], [4], 4).paths == ((0, 1, 2, 3, 4),)


def test_path_checker_catches_problems():
    g = prism_graph()
    from rrcontact.structure import PathSet
    bad = PathSet(paths=((0, 4), (1, 4)), max_length=1)
    problems = check_path_set(g, [0, 1], [4], bad)
    assert any("non-edge" in p for p in problems)
    assert any("shared" in p for p in problems)


def test_paths_need_nonempty_sets():
    with pytest.raises(GraphError):
        disjoint_short_paths(prism_graph(), [], [1], 2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), L=st.integers(0, 6))
def test_path_systems_pass_independent_audit(seed, L):
    rng = np.random.default_rng(seed)
    g = generate_random_regular(200, 3, seed % 20)
    U = rng.choice(g.n, 15, replace=False).tolist()
    W = rng.choice(g.n, 15, replace=False).tolist()
    ps = disjoint_short_paths(g, U, W, L)
    assert check_path_set(g, U, W, ps) == []


def test_path_csv(tmp_path):
    ps = disjoint_short_paths(prism_graph(), [0, 1, 2], [3, 4, 5], 1)
    rows = ps.to_csv(tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "path,length,start,end,vertices"
    assert rows[1] == "0,1,0,3,0 3"


def test_random_admissible_set_only_draws_tree_like_vertices():
    g = generate_random_regular(300, 3, 4)
    rng = np.random.default_rng(0)
    U = random_admissible_set(g, 50, 2, rng)
    assert len(set(U)) == 50
    assert all(neighborhood_ball(g, u, 2)[1] for u in U)
    with pytest.raises(GraphError):
        random_admissible_set(complete_graph(4), 1, 1, rng)
