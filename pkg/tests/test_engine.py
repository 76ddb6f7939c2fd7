import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rrcontact.engine import (Configuration, SimulationError, dual_simulate, extinction_samples,
                              extinction_time, final_states, generate_field, replica_rng,
                              run_field, severed_growth, simulate, simulate_coupled, step_rates)
from rrcontact.graph import Graph, complete_graph, generate_random_regular, prism_graph
from rrcontact.oracle import exact_hit_probability, exact_transient

K4 = complete_graph(4)
EDGE = Graph.from_edges(2, [(0, 1)])


def within(est, se, target, k=3.0):
    return abs(est - target) <= k * se


def test_step_rates():
    assert step_rates(K4, Configuration.full(4), 1.7) == (4.0, 0.0, 4.0)
    assert step_rates(K4, [0], 2.5) == (1.0, 7.5, 8.5)
    assert step_rates(prism_graph(), [], 3.0) == (0.0, 0.0, 0.0)


def test_configuration_set_ops():
    a, b = Configuration.of([3, 1, 1]), Configuration.of([2, 3])
    assert a.infected == (1, 3) and a.count == 2
    assert (a | b).infected == (1, 2, 3)
    assert (a & b).infected == (3,)
    assert 3 in a and 2 not in a
    assert Configuration.from_mask(a.mask(5)) == a
    with pytest.raises(SimulationError):
        Configuration.of([7]).mask(4)


@pytest.mark.parametrize("mode", ["active", "full"])
def test_zero_horizon_is_identity(mode):
    g = generate_random_regular(20, 3, 0)
    tr = simulate(g, 2.0, [1, 4, 9], 0.0, mode=mode, seed=3)
    assert tr.final.infected == (1, 4, 9)
    assert tr.events == 0 and tr.extinction_time is None


@pytest.mark.parametrize("lam,t", [(-1.0, 1.0), (float("nan"), 1.0), (1.0, float("inf")),
                                   (1.0, -0.5)])
def test_bad_arguments(lam, t):
    with pytest.raises(SimulationError):
        simulate(K4, lam, [0], t)


def test_unknown_mode():
    with pytest.raises(SimulationError):
        simulate(K4, 1.0, [0], 1.0, mode="fast")


@pytest.mark.parametrize("mode", ["active", "full"])
def test_same_seed_same_trajectory(mode):
    g = generate_random_regular(40, 3, 1)
    cps = np.linspace(0, 5, 11)
    a = simulate(g, 1.5, Configuration.full(40), 5.0, mode=mode, seed=8, checkpoints=cps, replica=4)
    b = simulate(g, 1.5, Configuration.full(40), 5.0, mode=mode, seed=8, checkpoints=cps, replica=4)
    assert a.final == b.final and a.events == b.events
    assert np.array_equal(a.counts, b.counts)
    c = simulate(g, 1.5, Configuration.full(40), 5.0, mode=mode, seed=8, checkpoints=cps, replica=5)
    assert not np.array_equal(a.counts, c.counts)


def test_replica_streams_do_not_depend_on_order():
    x = [replica_rng(5, r).random() for r in range(4)]
    y = [replica_rng(5, r).random() for r in reversed(range(4))][::-1]
    assert x == y
    assert replica_rng(5, 0, 1).random() != replica_rng(5, 0).random()


@pytest.mark.parametrize("mode", ["active", "full"])
def test_extinction_time_present_iff_final_empty(mode):
    for r in range(50):
        tr = simulate(K4, 0.8, [0], 3.0, mode=mode, seed=2, replica=r,
                      checkpoints=np.linspace(0, 3, 31))
        assert (tr.extinction_time is not None) == (tr.final.count == 0)
        assert np.all(tr.counts >= 0)
        if tr.extinction_time is not None:
            # absorbing: every checkpoint after extinction sees the empty set
            after = tr.checkpoints > tr.extinction_time
            assert np.all(tr.counts[after] == 0)


def test_lambda_zero_full_occupancy_mean_is_h4():
    taus, cens = extinction_samples(K4, 0.0, Configuration.full(4), 100.0, 20000, seed=1)
    assert not cens.any()
    assert within(taus.mean(), taus.std(ddof=1) / math.sqrt(len(taus)), 25 / 12)


def test_k4_survival_matches_uniformization():
    exact = exact_transient(K4, 2.5, [0], 1.0).survival_probability
    alive = final_states(K4, 2.5, [0], 1.0, 20000, seed=2).any(axis=1)
    p = alive.mean()
    assert within(p, math.sqrt(p * (1 - p) / len(alive)), exact)


def test_field_invariants():
    g = generate_random_regular(30, 3, 2)
    lam, T = 1.3, 40.0
    fld = generate_field(g, lam, T, replica_rng(0))
    assert np.all(np.diff(fld.times) >= 0)
    assert fld.times.min() >= 0 and fld.times.max() <= T
    marks, arrows = fld.marks, fld.arrows
    # Poisson totals: n*T marks and lam*2m*T arrows, checked at 4 SD
    assert abs(len(marks) - g.n * T) < 4 * math.sqrt(g.n * T)
    mu = lam * len(g.indices) * T
    assert abs(len(arrows) - mu) < 4 * math.sqrt(mu)
    adj = {(int(u), int(v)) for u, v in zip(g.src, g.indices)}
    assert all((int(u), int(v)) in adj for u, v, _ in arrows)
    # per-clock times strictly increasing
    for v in range(5):
        t = marks[marks[:, 0] == v, 1]
        assert np.all(np.diff(t) > 0)


def test_field_csv(tmp_path):
    fld = generate_field(EDGE, 1.0, 2.0, replica_rng(1))
    rows = fld.to_csv(tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "kind,time,vertex,target"
    assert len(rows) == len(fld) + 1
    kind, t, a, b = rows[1].split(",")
    assert kind in ("mark", "arrow") and len(t.split(".")[1]) == 12
    assert (b == "") == (kind == "mark")


def test_holding_time_from_field_is_exponential():
    # first effective event for a frozen configuration: a mark on an infected
    # vertex or an arrow out of it into a healthy one
    g = prism_graph()
    c = Configuration.of([0, 4])
    lam = 1.7
    _, _, total = step_rates(g, c, lam)
    mask = c.mask(g.n)
    firsts = []
    for r in range(2000):
        fld = generate_field(g, lam, 5.0, replica_rng(3, r))
        live = np.where(fld.kind == 0, mask[fld.a], mask[fld.a] & ~mask[np.maximum(fld.b, 0)])
        idx = np.flatnonzero(live)
        firsts.append(fld.times[idx[0]] if len(idx) else 5.0)
    firsts = np.asarray(firsts)
    assert np.mean(firsts >= 5.0) < 0.01
    assert stats.kstest(firsts[firsts < 5.0], "expon", args=(0, 1 / total)).pvalue > 0.01


def test_holding_time_active_engine():
    # P{no event by h} = exp(-total h)
    g = prism_graph()
    c = Configuration.of([0, 4])
    _, _, total = step_rates(g, c, 1.7)
    for h in (0.05, 0.2):
        none = np.array([simulate(g, 1.7, c, h, seed=4, replica=r).events == 0
                         for r in range(4000)])
        p = math.exp(-total * h)
        assert within(none.mean(), math.sqrt(p * (1 - p) / len(none)), p)


def test_coupled_containment_and_union():
    g = generate_random_regular(60, 3, 3)
    A, B = [0, 1, 2, 3], [10, 20, 30]
    inits = [A, B, sorted(set(A) | set(B)), Configuration.full(g.n)]
    cps = np.linspace(0, 6, 25)
    for r in range(40):
        res = simulate_coupled(g, 1.8, inits, 6.0, seed=5, checkpoints=cps, replica=r)
        assert res.violations == 0
        ta, tb, tab, tv = res.trajectories
        assert set(ta.final.infected) <= set(tv.final.infected)
        assert set(tab.final.infected) == set(ta.final.infected) | set(tb.final.infected)
        assert np.all(ta.counts <= tv.counts)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), lam=st.floats(0.1, 4.0))
def test_coupling_checker_never_fires(seed, lam):
    g = generate_random_regular(30, 3, seed % 7)
    rng = np.random.default_rng(seed)
    A = rng.choice(g.n, 5, replace=False).tolist()
    B = rng.choice(g.n, 5, replace=False).tolist()
    res = simulate_coupled(g, lam, [A, B, sorted(set(A) | set(B)), list(range(g.n))], 4.0,
                           seed=seed)
    assert res.violations == 0


def test_coupling_checker_detects_a_broken_order():
    # rows that already violate "row 0 subset of row 1"; an arrow 1 -> 2 touches
    # vertex 2 and the checker, which inspects the touched vertex, must fire
    from rrcontact import _kernels as K
    states = np.array([[True, True, False, False], [True, False, False, False]])
    sub = np.array([[0, 1]], dtype=np.int64)
    _, v = K.apply_field_checked(np.array([1], np.int8), np.array([1]), np.array([2]),
                                 np.array([0.5]), states, sub, np.zeros((0, 3), np.int64))
    assert v == 1


def test_lambda_zero_coupling_is_intersection():
    g = generate_random_regular(30, 3, 4)
    A = [2, 3, 5, 7, 11]
    for r in range(20):
        res = simulate_coupled(g, 0.0, [A, Configuration.full(g.n)], 1.5, seed=6, replica=r)
        ta, tv = res.trajectories
        assert ta.final == Configuration.of(A) & tv.final


def test_coupled_needs_two():
    with pytest.raises(SimulationError):
        simulate_coupled(K4, 1.0, [[0]], 1.0)


def test_dual_zero_window_returns_b():
    fld = generate_field(K4, 2.0, 3.0, replica_rng(2))
    assert dual_simulate(fld, [1, 2], 0.0).infected == (1, 2)


def test_dual_window_bounds():
    fld = generate_field(K4, 2.0, 3.0, replica_rng(2))
    with pytest.raises(SimulationError):
        dual_simulate(fld, [1], 3.5)


def test_dual_lambda_zero_survival():
    t = 0.7
    alive = np.array([dual_simulate(generate_field(K4, 0.0, 2.0, replica_rng(7, r)), [1], t).count
                      for r in range(10000)]) > 0
    p = math.exp(-t)
    assert within(alive.mean(), math.sqrt(p * (1 - p) / len(alive)), p)


def test_duality_on_k4():
    A, B, t = [0], [1, 2], 1.0
    exact = exact_hit_probability(K4, 2.5, A, B, t)
    m = 8000
    fwd = np.empty(m, bool)
    back = np.empty(m, bool)
    for r in range(m):
        fld = generate_field(K4, 2.5, t, replica_rng(9, r))
        fin = run_field(fld, [A])[0].final
        fwd[r] = bool(set(fin.infected) & set(B))
        back[r] = bool(set(dual_simulate(fld, B, t).infected) & set(A))
    se = math.sqrt(exact * (1 - exact) / m)
    assert within(fwd.mean(), se, exact) and within(back.mean(), se, exact)


def test_extinction_from_empty():
    s = extinction_time(K4, 2.0, [], 10.0)
    assert s.tau == 0.0 and not s.censored


@pytest.mark.parametrize("mode", ["active", "full"])
def test_tiny_cap_censors(mode):
    taus, cens = extinction_samples(K4, 2.5, Configuration.full(4), 0.001, 2000, seed=3,
                                    mode=mode)
    assert cens.mean() >= 0.996
    assert np.all(taus[cens] == 0.001)


def test_censoring_contract():
    for r in range(200):
        s = extinction_time(prism_graph(), 1.0, Configuration.full(6), 3.0, seed=1, replica=r)
        assert (s.tau == s.t_cap) if s.censored else (s.tau < s.t_cap)


def test_extinction_cap_must_be_positive():
    with pytest.raises(SimulationError):
        extinction_time(K4, 1.0, [0], 0.0)


def test_severed_at_time_zero():
    est = severed_growth(3, 4, 2.5, 0.0, 30.0, 10)
    assert est.mean_size == 1.0 and est.mean_truncated == 1.0


def test_severed_single_edge_matches_oracle():
    # Delta_1 for d = 3 is a single edge rooted at one end
    exact = exact_transient(EDGE, 2.5, [0], 1.0).marginals.sum()
    est = severed_growth(3, 1, 2.5, 1.0, 30.0, 20000, seed=4)
    assert within(est.mean_size, est.se_size, exact)
    assert 0 <= est.mean_truncated <= min(est.mean_size, est.L)


def test_severed_needs_two_replicas():
    with pytest.raises(SimulationError):
        severed_growth(3, 2, 1.0, 1.0, 5.0, 1)
