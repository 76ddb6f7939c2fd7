"""Exact answers for the contact process on small graphs.

States are n-bit integers (bit v set = vertex v infected). The generator has
at most n off-diagonal entries per row, so it is built as a sparse matrix;
at the default cap of n = 14 that is under 250k nonzeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.stats import poisson

from .engine import Configuration, _as_config
from .graph import Graph

DEFAULT_STATE_CAP = 14
DEFAULT_TOLERANCE = 1e-10
DEFAULT_TERM_BUDGET = 2_000_000


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExactResult:
    method: str
    expected_extinction: float | None = None
    t: float | None = None
    survival_probability: float | None = None
    marginals: np.ndarray | None = None
    terms: int = 0
    tolerance: float = 0.0
    residual: float = 0.0


def _bits(c: Configuration) -> int:
    s = 0
    for v in c:
        s |= 1 << v
    return s


def generator_matrix(g: Graph, lam: float, cap: int = DEFAULT_STATE_CAP) -> sparse.csr_matrix:
    """Sparse generator Q over all 2^n states (rows sum to zero)."""
    n = g.n
    if n > cap:
        raise OracleError(f"state space 2^{n} exceeds the cap 2^{cap}")
    if lam < 0:
        raise OracleError("lambda must be nonnegative")
    S = 1 << n
    states = np.arange(S, dtype=np.int64)
    occ = ((states[:, None] >> np.arange(n)) & 1).astype(np.int64)  # (S, n)
    adj = g.to_sparse().toarray().astype(np.int64)
    infected_nbrs = occ @ adj  # (S, n): infected neighbours of each vertex
    rows, cols, vals = [], [], []
    for v in range(n):
        bit = 1 << v
        on = occ[:, v] == 1
        # recovery of v
        rows.append(states[on])
        cols.append(states[on] ^ bit)
        vals.append(np.ones(int(on.sum())))
        # infection of v
        if lam > 0:
            sel = (~on) & (infected_nbrs[:, v] > 0)
            rows.append(states[sel])
            cols.append(states[sel] | bit)
            vals.append(lam * infected_nbrs[sel, v].astype(float))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    q = sparse.csr_matrix((vals, (rows, cols)), shape=(S, S))
    out = np.asarray(q.sum(axis=1)).ravel()
    return (q - sparse.diags(out)).tocsr()


def mean_extinction_vector(g: Graph, lam: float, cap: int = DEFAULT_STATE_CAP,
                           method: str = "sparse") -> tuple[np.ndarray, float]:
    """Expected absorption time from every state, and the relative residual.

    Solves -Q_TT m = 1 on the nonempty states. ``sparse`` uses a sparse LU
    solve followed by iterative refinement; ``dense`` uses plain Gaussian
    elimination and is only meant as a cross-check on small n.
    """
    q = generator_matrix(g, lam, cap)
    A = -q[1:, 1:]
    ones = np.ones(A.shape[0])
    if method == "dense":
        m = np.linalg.solve(A.toarray(), ones)
    elif method == "sparse":
        A = A.tocsc()
        m = spsolve(A, ones)
        for _ in range(5):
            r = ones - A @ m
            if np.linalg.norm(r) <= DEFAULT_TOLERANCE * np.linalg.norm(ones):
                break
            m = m + spsolve(A, r)
    else:
        raise OracleError(f"unknown solve method {method!r}")
    if not np.all(np.isfinite(m)):
        raise OracleError("singular first-passage system")
    res = float(np.linalg.norm(ones - A @ m) / np.linalg.norm(ones))
    return np.concatenate([[0.0], m]), res


def exact_mean_extinction(g: Graph, lam: float, init=None, cap: int = DEFAULT_STATE_CAP,
                          method: str = "sparse") -> ExactResult:
    """E[tau] from ``init`` (default: every vertex infected)."""
    init = Configuration.full(g.n) if init is None else _as_config(init)
    m, res = mean_extinction_vector(g, lam, cap, method)
    return ExactResult(method="linear-solve", expected_extinction=float(m[_bits(init)]),
                       residual=res, tolerance=DEFAULT_TOLERANCE)


def _poisson_terms(rate_t: float, tol: float, budget: int) -> int:
    """Smallest K with P(Poisson(rate_t) > K) <= tol."""
    if rate_t == 0:
        return 0
    k = int(poisson.isf(tol, rate_t)) + 1
    while poisson.sf(k, rate_t) > tol:
        k += 1
    if k > budget:
        raise OracleError(f"uniformization needs {k} terms, budget is {budget}")
    return k


def transient_distribution(g: Graph, lam: float, init, t: float, tol: float = DEFAULT_TOLERANCE,
                           cap: int = DEFAULT_STATE_CAP, budget: int = DEFAULT_TERM_BUDGET,
                           terms: int | None = None) -> tuple[np.ndarray, int]:
    """Law of the configuration at time t by uniformization, and the term count used."""
    if t < 0:
        raise OracleError("t must be nonnegative")
    q = generator_matrix(g, lam, cap)
    p0 = np.zeros(q.shape[0])
    p0[_bits(_as_config(init))] = 1.0
    rate = float(-q.diagonal().min())
    if rate == 0 or t == 0:
        return p0, 0
    P = (sparse.identity(q.shape[0], format="csr") + q / rate).T.tocsr()
    lt = rate * t
    K = terms if terms is not None else _poisson_terms(lt, tol, budget)
    # Poisson weights in log space; lt can be large enough for exp(-lt) to underflow.
    ks = np.arange(K + 1)
    logw = -lt + ks * math.log(lt) - np.array([math.lgamma(k + 1) for k in ks])
    w = np.exp(logw)
    p = p0.copy()
    out = w[0] * p
    for k in range(1, K + 1):
        p = P @ p
        out += w[k] * p
    return out, K


def exact_transient(g: Graph, lam: float, init, t: float, tol: float = DEFAULT_TOLERANCE,
                    cap: int = DEFAULT_STATE_CAP, budget: int = DEFAULT_TERM_BUDGET,
                    terms: int | None = None) -> ExactResult:
    """Survival probability and per-vertex infection probabilities at time t."""
    dist, K = transient_distribution(g, lam, init, t, tol, cap, budget, terms)
    states = np.arange(len(dist))
    occ = (states[:, None] >> np.arange(g.n)) & 1
    marg = np.clip(dist @ occ, 0.0, 1.0)
    surv = float(np.clip(1.0 - dist[0], 0.0, 1.0))
    return ExactResult(method="uniformization", t=float(t), survival_probability=surv,
                       marginals=marg, terms=K, tolerance=tol)


def exact_hit_probability(g: Graph, lam: float, A, B, t: float,
                          tol: float = DEFAULT_TOLERANCE) -> float:
    """P{xi^A_t meets B}."""
    dist, _ = transient_distribution(g, lam, A, t, tol)
    bmask = _bits(_as_config(B))
    states = np.arange(len(dist))
    return float(np.clip(dist[(states & bmask) != 0].sum(), 0.0, 1.0))
