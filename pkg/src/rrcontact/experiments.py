"""Metastability experiments: growth and survival on trees, extinction-time
ensembles with an Exp(1) goodness-of-fit test, growth fits in n, spread
probabilities, coupling deficiency and the one-step bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from . import _kernels as K
from .engine import (Configuration, extinction_samples, final_states, generate_field,
                     replica_rng, severed_growth)
from .graph import Graph, regular_tree
from .structure import (BLACK, classify_black_white, delta_copy, tree_like_mask)


class ExperimentError(ValueError):
    pass


class AllCensored(RuntimeError):
    """Every extinction sample hit the time cap."""


def _se(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1) / math.sqrt(len(x)))


def binomial_se(p: float, m: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / m)


# -- growth and survival on the truncated tree -----------------------------------------

@dataclass(frozen=True)
class GrowthEstimate:
    c_hat: float
    c_se: float
    intercept: float
    window: tuple[float, float]
    times: np.ndarray
    mean_size: np.ndarray
    se_size: np.ndarray
    ratios: np.ndarray  # mean / exp(c_hat t) over the window
    ratio_se: np.ndarray
    depth: int
    replicas: int
    boundary_hit_fraction: float

    @property
    def ratio_spread(self) -> float:
        return float(self.ratios.max() / self.ratios.min())

    def sandwich(self, k: float = 3.0, spread: float = 2.0) -> bool:
        """Every ratio >= 1 up to k SE, and max/min ratio over the window <= ``spread``."""
        lower_ok = bool(np.all(self.ratios + k * self.ratio_se >= 1.0))
        return lower_ok and self.ratio_spread <= spread


def _tree_sizes(d, lam, depth, times, replicas, seed):
    tree, depths = regular_tree(d, depth)
    init = np.zeros(tree.n, dtype=np.bool_)
    init[0] = True
    leaves = depths == depth
    sizes = np.empty((replicas, len(times)))
    hits = 0
    t_end = float(times[-1])
    for r in range(replicas):
        _, _, _, counts, hit = K.active_run(tree.indptr, tree.indices, tree.rev, float(lam),
                                            init, t_end, times, leaves, replica_rng(seed, r))
        sizes[r] = counts
        hits += bool(hit)
    return sizes, hits / replicas


def estimate_growth_rate(d: int, lam: float, depth: int, horizon: float, replicas: int,
                         seed: int = 0, points: int = 21,
                         window: tuple[float, float] | None = None) -> GrowthEstimate:
    """Fit log E|zeta_t| = a + c t for the single-seed process on a depth-truncated tree.

    The window defaults to the second half of [0, horizon].
    """
    if horizon <= 0:
        raise ExperimentError("degenerate window: horizon must be positive")
    if replicas < 2:
        raise ExperimentError("need at least 2 replicas")
    times = np.linspace(0.0, horizon, points)
    sizes, hit = _tree_sizes(d, lam, depth, times, replicas, seed)
    mean = sizes.mean(axis=0)
    se = sizes.std(axis=0, ddof=1) / math.sqrt(replicas)
    t0, t1 = window if window is not None else (horizon / 2, horizon)
    sel = (times >= t0 - 1e-12) & (times <= t1 + 1e-12)
    if sel.sum() < 5:
        raise ExperimentError("degenerate window: fewer than 5 time points")
    if np.any(mean[sel] <= 0):
        raise ExperimentError("degenerate window: every replica extinct inside the window")
    fit = stats.linregress(times[sel], np.log(mean[sel]))
    ratios = mean[sel] / np.exp(fit.slope * times[sel])
    ratio_se = se[sel] / np.exp(fit.slope * times[sel])
    return GrowthEstimate(c_hat=float(fit.slope), c_se=float(fit.stderr),
                          intercept=float(fit.intercept), window=(float(t0), float(t1)),
                          times=times, mean_size=mean, se_size=se, ratios=ratios,
                          ratio_se=ratio_se, depth=depth, replicas=replicas,
                          boundary_hit_fraction=hit)


@dataclass(frozen=True)
class SurvivalEstimate:
    p_hat: float
    se: float
    depth: int
    horizon: float
    replicas: int
    boundary_hit_fraction: float
    sensitivity: tuple[tuple[int, float, float, float], ...] = ()  # (depth, horizon, p, se)


def _survival(d, lam, depth, horizon, replicas, seed):
    sizes, hit = _tree_sizes(d, lam, depth, np.array([float(horizon)]), replicas, seed)
    p = float(np.mean(sizes[:, 0] > 0))
    return p, binomial_se(p, replicas), hit


def estimate_survival(d: int, lam: float, depth: int, horizon: float, replicas: int,
                      seed: int = 0, sensitivity: bool = False) -> SurvivalEstimate:
    """Fraction of single-seed runs on the truncated tree still alive at ``horizon``.

    With ``sensitivity`` the estimate is repeated with doubled depth, doubled
    horizon, and both doubled.
    """
    if replicas < 2:
        raise ExperimentError("standard error undefined for fewer than 2 replicas")
    p, se, hit = _survival(d, lam, depth, horizon, replicas, seed)
    table = []
    if sensitivity:
        for dd, hh in ((depth, horizon), (2 * depth, horizon), (depth, 2 * horizon),
                       (2 * depth, 2 * horizon)):
            if (dd, hh) == (depth, horizon):
                table.append((dd, float(hh), p, se))
            else:
                q, qse, _ = _survival(d, lam, dd, hh, replicas, seed + 1)
                table.append((dd, float(hh), q, qse))
    return SurvivalEstimate(p_hat=p, se=se, depth=depth, horizon=float(horizon),
                            replicas=replicas, boundary_hit_fraction=hit,
                            sensitivity=tuple(table))


# -- good vertices --------------------------------------------------------------------

@dataclass(frozen=True)
class GoodVertexScan:
    target_time: float
    vertices: np.ndarray
    survival: np.ndarray
    se: np.ndarray
    p_ref: float
    good: np.ndarray
    band: tuple[float, float]
    in_band_fraction: np.ndarray  # per vertex, among surviving replicas
    sensitivity: dict = field(default_factory=dict)

    @property
    def good_fraction(self) -> float:
        return float(self.good.mean())


def good_vertex_scan(g: Graph, lam: float, epsilon: float, c_hat: float, replicas: int,
                     seed: int = 0, vertices: Sequence[int] | None = None,
                     p_ref: float | None = None, delta: float = 0.25,
                     c_se: float | None = None) -> GoodVertexScan:
    """Single-seed survival and size at time (1 + eps) log n / c_hat, per vertex.

    A vertex counts as good when ``p_ref`` is positive and its survival
    estimate is within 3 SE of it (default: the average over scanned vertices). Sizes of
    surviving runs are compared with the band [(1-delta) n p_ref, (1+delta) n p_ref].
    """
    if c_hat <= 0:
        raise ExperimentError("c_hat must be positive")
    if replicas < 2:
        raise ExperimentError("need at least 2 replicas")
    t = (1 + epsilon) * math.log(g.n) / c_hat
    vs = np.arange(g.n) if vertices is None else np.asarray(vertices, dtype=np.int64)
    surv = np.empty(len(vs))
    sizes = []
    for i, u in enumerate(vs):
        fin = final_states(g, lam, [int(u)], t, replicas, seed, tag=int(u))
        s = fin.sum(axis=1)
        surv[i] = np.mean(s > 0)
        sizes.append(s)
    se = np.sqrt(np.maximum(surv * (1 - surv), 0.0) / replicas)
    p = float(surv.mean()) if p_ref is None else float(p_ref)
    tol = 3 * np.maximum(se, binomial_se(p, replicas))
    # p_ref = 0 (e.g. lambda = 0) means there is nothing to be good relative to
    good = (np.abs(surv - p) <= tol) & (p > 0)
    lo, hi = (1 - delta) * g.n * p, (1 + delta) * g.n * p
    frac = np.array([np.mean((s[s > 0] >= lo) & (s[s > 0] <= hi)) if np.any(s > 0) else np.nan
                     for s in sizes])
    sens = {}
    if c_se is not None and c_se > 0:
        for label, c in (("c_minus_2se", c_hat - 2 * c_se), ("c_plus_2se", c_hat + 2 * c_se)):
            if c <= 0:
                continue
            tt = (1 + epsilon) * math.log(g.n) / c
            alive = [np.mean(final_states(g, lam, [int(u)], tt, replicas, seed + 1,
                                          tag=int(u)).any(axis=1)) for u in vs]
            sens[label] = {"target_time": tt, "mean_survival": float(np.mean(alive))}
    return GoodVertexScan(target_time=t, vertices=vs, survival=surv, se=se, p_ref=p, good=good,
                          band=(lo, hi), in_band_fraction=frac, sensitivity=sens)


# -- extinction-time statistics --------------------------------------------------------------

def ks_exponential(x: np.ndarray) -> float:
    """sup |F_emp - (1 - e^{-y})| for the sample divided by its own mean."""
    x = np.asarray(x, dtype=float)
    return float(_ks_exp_rows(x[None, :])[0])


def _ks_exp_rows(x: np.ndarray) -> np.ndarray:
    m = x.shape[1]
    y = np.sort(x / x.mean(axis=1, keepdims=True), axis=1)
    F = -np.expm1(-y)
    i = np.arange(1, m + 1)
    return np.maximum((i / m - F).max(axis=1), (F - (i - 1) / m).max(axis=1))


def ks_exponential_pvalue(x: np.ndarray, bootstrap: int = 1000, seed: int = 0,
                          chunk: int = 200) -> tuple[float, float]:
    """KS statistic against Exp(1) after mean normalization, with a parametric bootstrap p.

    Resamples unit exponentials of the same size, normalizes each by its own
    mean, and reports (1 + #{D_b >= D}) / (B + 1).
    """
    x = np.asarray(x, dtype=float)
    d = ks_exponential(x)
    rng = np.random.default_rng(seed)
    exceed = 0
    done = 0
    while done < bootstrap:
        b = min(chunk, bootstrap - done)
        exceed += int(np.sum(_ks_exp_rows(rng.standard_exponential((b, len(x)))) >= d))
        done += b
    return d, (1 + exceed) / (bootstrap + 1)


def ks_two_sample_pvalue(x: np.ndarray, y: np.ndarray, bootstrap: int = 1000,
                         seed: int = 0) -> tuple[float, float]:
    """Two-sample KS with a pooled-bootstrap p-value."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    d = stats.ks_2samp(x, y).statistic
    pooled = np.concatenate([x, y])
    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(bootstrap):
        xs = rng.choice(pooled, size=len(x), replace=True)
        ys = rng.choice(pooled, size=len(y), replace=True)
        exceed += stats.ks_2samp(xs, ys).statistic >= d
    return float(d), (1 + exceed) / (bootstrap + 1)


@dataclass(frozen=True)
class EnsembleReport:
    n: int
    lam: float
    taus: np.ndarray
    censored: np.ndarray
    t_cap: float
    mean: float
    se: float
    ks: float | None
    p_value: float | None

    @property
    def uncensored(self) -> np.ndarray:
        return self.taus[~self.censored]

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean())


def extinction_ensemble(g: Graph, lam: float, replicas: int, t_cap: float, seed: int = 0,
                        bootstrap: int = 1000, mode: str = "active") -> EnsembleReport:
    """Extinction times from full occupancy, with the Exp(1) test on uncensored samples.

    Censored samples are kept in the record but excluded from the mean and the
    KS statistic. The test is only reported with at least 100 uncensored samples.
    """
    taus, cens = extinction_samples(g, lam, Configuration.full(g.n), t_cap, replicas, seed,
                                    mode=mode)
    if cens.all():
        raise AllCensored(f"all {replicas} runs censored at t_cap={t_cap} (n={g.n}, lambda={lam})")
    x = taus[~cens]
    ks = p = None
    if len(x) >= 100:
        ks, p = ks_exponential_pvalue(x, bootstrap, seed)
    se = _se(x) if len(x) >= 2 else float("nan")
    return EnsembleReport(n=g.n, lam=lam, taus=taus, censored=cens, t_cap=t_cap,
                          mean=float(x.mean()), se=se, ks=ks, p_value=p)


@dataclass(frozen=True)
class BetaFit:
    beta_hat: float
    intercept: float
    ns: np.ndarray
    log_means: np.ndarray
    residuals: np.ndarray


def beta_fit(records: Mapping[int, float] | Iterable[tuple[int, float]]) -> BetaFit:
    """Least-squares slope of log(mean tau) against n."""
    pairs = sorted(dict(records).items()) if not isinstance(records, Mapping) \
        else sorted(records.items())
    if len(pairs) < 3:
        raise ExperimentError(f"beta fit needs at least 3 distinct n, got {len(pairs)}")
    ns = np.array([p[0] for p in pairs], dtype=float)
    logs = np.log(np.array([p[1] for p in pairs], dtype=float))
    A = np.column_stack([ns, np.ones_like(ns)])
    (slope, icpt), *_ = np.linalg.lstsq(A, logs, rcond=None)
    return BetaFit(beta_hat=float(slope), intercept=float(icpt), ns=ns, log_means=logs,
                   residuals=logs - (slope * ns + icpt))


def consecutive_gaps(means: Sequence[float], ses: Sequence[float]) -> list[float]:
    """(m[i+1] - m[i]) / sqrt(se[i]^2 + se[i+1]^2) for consecutive entries."""
    return [(means[i + 1] - means[i]) / math.hypot(ses[i], ses[i + 1])
            for i in range(len(means) - 1)]


# -- spread on the finite graph ---------------------------------------------------------------

def gamma_closed_form(d: int, lam: float) -> float:
    """Exponent of the n^-gamma lower bound on point-to-point spread."""
    ld = math.log(d - 1)
    return 2 / ld + 2 * math.log(math.exp(lam) / math.expm1(lam)) / ld


@dataclass(frozen=True)
class SpreadResult:
    pairs: tuple[tuple[int, int], ...]
    horizon: float
    estimates: np.ndarray
    se: np.ndarray
    gamma: float
    lower_bound: float
    replicas: int

    @property
    def above_bound(self) -> np.ndarray:
        return self.estimates >= self.lower_bound


def spread_probability(g: Graph, lam: float, pairs: Sequence[tuple[int, int]],
                       horizon: float | None = None, replicas: int = 1000,
                       seed: int = 0) -> SpreadResult:
    """Monte Carlo P{v in xi^u_horizon} for each (u, v).

    ``horizon`` defaults to 2 log_{d-1} n. One batch of runs per distinct u
    serves every pair with that source.
    """
    if horizon is None:
        horizon = 2 * math.log(g.n) / math.log(g.d - 1)
    if horizon <= 0:
        raise ExperimentError("horizon must be positive")
    pairs = tuple((int(u), int(v)) for u, v in pairs)
    est = np.empty(len(pairs))
    cache = {}
    for i, (u, v) in enumerate(pairs):
        if u not in cache:
            cache[u] = final_states(g, lam, [u], horizon, replicas, seed, tag=u).mean(axis=0)
        est[i] = cache[u][v]
    se = np.sqrt(np.maximum(est * (1 - est), 0.0) / replicas)
    gam = gamma_closed_form(g.d, lam) if lam > 0 else float("inf")
    return SpreadResult(pairs=pairs, horizon=float(horizon), estimates=est, se=se, gamma=gam,
                        lower_bound=float(g.n ** -gam), replicas=replicas)


@dataclass(frozen=True)
class DeficiencyResult:
    a: float
    family: tuple[tuple[int, ...], ...]
    estimates: np.ndarray
    se: np.ndarray
    replicas: int
    pooled_mean: float = float("nan")  # family average; replicas are the iid units
    pooled_se: float = float("nan")

    @property
    def maximum(self) -> float:
        return float(self.estimates.max())

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.estimates))

    @property
    def max_se(self) -> float:
        return float(self.se[self.argmax])


def coupling_deficiency(g: Graph, lam: float, a: float, inits: Sequence[Iterable[int]] | None = None,
                        replicas: int = 1000, seed: int = 0) -> DeficiencyResult:
    """P{xi^U_a nonempty and xi^U_a != xi^V_a} under the shared-field coupling.

    The default family is every singleton {u}.
    """
    if a <= 0:
        raise ExperimentError("a must be positive")
    family = tuple(tuple(sorted(set(int(x) for x in U))) for U in
                   (inits if inits is not None else [[u] for u in range(g.n)]))
    if not family:
        raise ExperimentError("family of initial sets is empty")
    k = len(family)
    base = np.zeros((k + 1, g.n), dtype=np.bool_)
    for i, U in enumerate(family):
        base[i, list(U)] = True
    base[k, :] = True
    no_sub = np.zeros((0, 2), np.int64)
    no_add = np.zeros((0, 3), np.int64)
    hits = np.zeros(k)
    per_rep = np.empty(replicas)
    for r in range(replicas):
        fld = generate_field(g, lam, a, replica_rng(seed, r))
        states = base.copy()
        K.apply_field_checked(fld.kind, fld.a, fld.b, fld.times, states, no_sub, no_add)
        alive = states[:k].any(axis=1)
        differs = (states[:k] != states[k]).any(axis=1)
        hits += alive & differs
        per_rep[r] = np.mean(alive & differs)
    est = hits / replicas
    se = np.sqrt(np.maximum(est * (1 - est), 0.0) / replicas)
    pooled_se = _se(per_rep) if replicas >= 2 else float("nan")
    return DeficiencyResult(a=float(a), family=family, estimates=est, se=se, replicas=replicas,
                            pooled_mean=float(per_rep.mean()), pooled_se=pooled_se)


def deficiency_closed_form_lambda0(n: int, a: float) -> float:
    """Singleton deficiency with no infections: u still alive and some other vertex alive."""
    q = math.exp(-a)
    return q * (1 - (1 - q) ** (n - 1))


# -- the bootstrap step --------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapStepResult:
    probability: float
    se: float
    set_size: int
    final_counts: np.ndarray
    admissible: np.ndarray
    black: np.ndarray
    delta_copies: np.ndarray
    replicas: int


def bootstrap_step(g: Graph, lam: float, epsilon: float, M: int, T: float, L: float,
                   replicas: int, seed: int = 0) -> BootstrapStepResult:
    """Estimate P{|xi^U_T| >= |U|} over random U with |U| = floor(eps n).

    Each replica also reports how the set classifies: vertices with tree-like
    2M-balls, how many of them are black at depth 2M, and how many pairwise
    disjoint copies of the depth-M severed tree hang off the black vertices.
    ``L`` is echoed for reference; it enters only through the severed estimate.
    """
    size = int(math.floor(epsilon * g.n))
    if size < 1:
        raise ExperimentError("floor(epsilon * n) must be at least 1")
    if replicas < 2:
        raise ExperimentError("need at least 2 replicas")
    tree2m = tree_like_mask(g, 2 * M)
    finals = np.empty(replicas, dtype=np.int64)
    adm = np.empty(replicas, dtype=np.int64)
    blk = np.empty(replicas, dtype=np.int64)
    cop = np.empty(replicas, dtype=np.int64)
    cps = np.array([float(T)])
    watch = np.zeros(g.n, dtype=np.bool_)
    for r in range(replicas):
        rng = replica_rng(seed, r, 1)
        U = sorted(rng.choice(g.n, size=size, replace=False).tolist())
        init = np.zeros(g.n, dtype=np.bool_)
        init[U] = True
        _, _, _, counts, _ = K.active_run(g.indptr, g.indices, g.rev, float(lam), init, float(T),
                                          cps, watch, replica_rng(seed, r, 2))
        finals[r] = counts[0]
        admissible = [u for u in U if tree2m[u]]
        rep = classify_black_white(g, admissible, 2 * M)
        used: set[int] = set()
        copies = 0
        for v in admissible:
            if rep.colors[v] != BLACK:
                continue
            c = set(delta_copy(g, v, rep.free_branch[v], M))
            if not c & used:
                used |= c
                copies += 1
        adm[r], blk[r], cop[r] = len(admissible), rep.b, copies
    ok = finals >= size
    p = float(ok.mean())
    return BootstrapStepResult(probability=p, se=binomial_se(p, replicas), set_size=size,
                               final_counts=finals, admissible=adm, black=blk, delta_copies=cop,
                               replicas=replicas)


def severed_scan(d: int, lam: float, T_grid: Sequence[float], M_grid: Sequence[int],
                 L: float, replicas: int, seed: int = 0) -> list:
    """severed_growth over a (T, M) grid, in grid order."""
    return [severed_growth(d, M, lam, T, L, replicas, seed) for M in M_grid for T in T_grid]
