import math

import numpy as np
import pytest

from rrcontact.graph import Graph, complete_graph, generate_random_regular, path_graph, prism_graph
from rrcontact.oracle import (OracleError, exact_hit_probability, exact_mean_extinction,
                              exact_transient, generator_matrix, mean_extinction_vector)

K4 = complete_graph(4)
EDGE = Graph.from_edges(2, [(0, 1)])
LONE = Graph.from_edges(1, [])


def harmonic(n):
    return sum(1 / k for k in range(1, n + 1))


def test_generator_rows_sum_to_zero():
    q = generator_matrix(prism_graph(), 1.3)
    assert q.shape == (64, 64)
    assert np.allclose(np.asarray(q.sum(axis=1)).ravel(), 0)
    assert q[0].nnz == 0  # empty set absorbs


def test_single_vertex():
    for lam in (0.0, 3.0):
        assert exact_mean_extinction(LONE, lam, [0]).expected_extinction == pytest.approx(1.0)


@pytest.mark.parametrize("lam", [0.0, 1.0, 2.5, 7.0])
def test_two_vertex_closed_forms(lam):
    assert exact_mean_extinction(EDGE, lam, [0]).expected_extinction == pytest.approx(1 + lam / 2)
    assert exact_mean_extinction(EDGE, lam, [0, 1]).expected_extinction == \
        pytest.approx(1.5 + lam / 2)


@pytest.mark.parametrize("g", [K4, prism_graph(), path_graph(5), generate_random_regular(12, 3, 1)],
                         ids=["K4", "prism", "path5", "rr12"])
def test_lambda_zero_gives_harmonic_number(g):
    assert abs(exact_mean_extinction(g, 0.0).expected_extinction - harmonic(g.n)) < 1e-9


@pytest.mark.parametrize("n", range(1, 13))
def test_lambda_zero_harmonic_for_all_small_n(n):
    g = Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])
    assert abs(exact_mean_extinction(g, 0.0).expected_extinction - harmonic(n)) < 1e-9


@pytest.mark.parametrize("g", [K4, prism_graph(), generate_random_regular(8, 3, 2)])
@pytest.mark.parametrize("lam", [0.5, 2.5])
def test_sparse_and_dense_solves_agree(g, lam):
    ms, res = mean_extinction_vector(g, lam, method="sparse")
    md, _ = mean_extinction_vector(g, lam, method="dense")
    assert res < 1e-10
    assert np.allclose(ms, md, rtol=1e-10, atol=0)


def test_k4_reference_value():
    # computed once with both solvers; agreed to 1e-12
    assert exact_mean_extinction(K4, 2.5).expected_extinction == pytest.approx(47.1875, rel=1e-12)


def test_state_cap():
    with pytest.raises(OracleError):
        exact_mean_extinction(generate_random_regular(16, 3, 0), 1.0)
    with pytest.raises(OracleError):
        exact_mean_extinction(K4, 1.0, cap=3)


def test_unknown_method():
    with pytest.raises(OracleError):
        mean_extinction_vector(K4, 1.0, method="cg")


def test_transient_at_time_zero():
    r = exact_transient(prism_graph(), 2.0, [1, 3], 0.0)
    assert r.survival_probability == 1.0
    assert r.marginals.tolist() == [0, 1, 0, 1, 0, 0]
    assert exact_transient(K4, 2.0, [], 0.0).survival_probability == 0.0


def test_isolated_vertex_decays():
    for t in (0.1, 1.0, 4.0):
        r = exact_transient(LONE, 5.0, [0], t)
        assert r.marginals[0] == pytest.approx(math.exp(-t), abs=1e-10)


def test_k4_single_seed_at_t1():
    r = exact_transient(K4, 2.5, [0], 1.0)
    assert r.method == "uniformization" and r.terms > 0
    assert 0 <= r.survival_probability <= 1
    assert np.all((r.marginals >= 0) & (r.marginals <= 1))
    # automorphisms fixing vertex 0 permute 1, 2, 3
    assert np.ptp(r.marginals[1:]) < 1e-9
    assert r.marginals[0] > r.marginals[1]


def test_doubling_terms_changes_nothing():
    r = exact_transient(prism_graph(), 2.5, [0], 1.5)
    r2 = exact_transient(prism_graph(), 2.5, [0], 1.5, terms=2 * r.terms)
    assert abs(r.survival_probability - r2.survival_probability) < r.tolerance
    assert np.max(np.abs(r.marginals - r2.marginals)) < r.tolerance


def test_term_budget():
    with pytest.raises(OracleError):
        exact_transient(K4, 2.5, [0], 1000.0, budget=100)


@pytest.mark.parametrize("g", [EDGE, path_graph(4), K4, prism_graph()], ids=str)
def test_survival_monotone_in_t_and_lambda(g):
    ts = [0.2, 0.5, 1.0, 2.0, 4.0]
    lams = [0.0, 0.5, 1.0, 2.0, 3.0]
    table = np.array([[exact_transient(g, lam, [0], t).survival_probability for t in ts]
                      for lam in lams])
    assert np.all(np.diff(table, axis=1) <= 1e-12)
    assert np.all(np.diff(table, axis=0) >= -1e-12)


def test_hit_probability_duality_is_exact():
    # P{xi^A_t meets B} = P{xi^B_t meets A} holds for the exact law too
    g = generate_random_regular(8, 3, 5)
    for A, B in [([0], [5]), ([1, 2], [7]), ([0, 3], [4, 6])]:
        assert exact_hit_probability(g, 1.7, A, B, 0.8) == \
            pytest.approx(exact_hit_probability(g, 1.7, B, A, 0.8), abs=1e-9)


def test_mean_extinction_increases_with_lambda():
    vals = [exact_mean_extinction(prism_graph(), lam).expected_extinction
            for lam in (0.0, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(vals) > 0)
