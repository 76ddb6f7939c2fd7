"""Contact process simulation.

Two engine modes realize the same law:

* ``active``: Gillespie over live clocks only (recoveries of infected
  vertices, arrows along infected->healthy edges). Used for long runs.
* ``full``: the graphical representation. Every recovery mark (rate 1 per
  vertex) and every infection arrow (rate lambda per directed edge) on a
  window is materialized, then applied in time order. Any number of initial
  configurations can be driven by one field, which gives the monotone
  coupling, and the same field can be read backwards for the dual process.

Randomness is drawn from one PCG64 stream per (seed, replica), so replica
results never depend on the order in which replicas are run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .graph import Graph

MODES = ("active", "full")


class SimulationError(ValueError):
    pass


def replica_rng(seed: int, replica: int = 0, *tags: int) -> np.random.Generator:
    """Independent stream for one replica; ``tags`` separate experiment stages."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(*tags, replica))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Configuration:
    """A set of infected vertices, kept as a sorted tuple."""

    infected: tuple[int, ...] = ()

    @classmethod
    def of(cls, vertices: Iterable[int]) -> "Configuration":
        return cls(tuple(sorted({int(v) for v in vertices})))

    @classmethod
    def full(cls, n: int) -> "Configuration":
        return cls(tuple(range(n)))

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "Configuration":
        return cls(tuple(np.flatnonzero(mask).tolist()))

    @property
    def count(self) -> int:
        return len(self.infected)

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=np.bool_)
        if self.infected:
            if self.infected[-1] >= n or self.infected[0] < 0:
                raise SimulationError("configuration has vertices outside the graph")
            m[list(self.infected)] = True
        return m

    def __len__(self):
        return len(self.infected)

    def __iter__(self):
        return iter(self.infected)

    def __contains__(self, v):
        return v in set(self.infected)

    def __or__(self, other: "Configuration") -> "Configuration":
        return Configuration.of(self.infected + other.infected)

    def __and__(self, other: "Configuration") -> "Configuration":
        return Configuration.of(set(self.infected) & set(other.infected))


def _as_config(c) -> Configuration:
    return c if isinstance(c, Configuration) else Configuration.of(c)


@dataclass(frozen=True)
class EventField:
    """Graphical representation on [0, t_max] as one time-sorted stream.

    ``kind`` is 0 for a recovery mark at vertex ``a`` and 1 for an infection
    arrow ``a -> b``. Ties (probability zero) are broken by clock id:
    vertex v for marks, n + directed edge index for arrows.
    """

    t_max: float
    n: int
    kind: np.ndarray
    a: np.ndarray
    b: np.ndarray
    times: np.ndarray

    @property
    def marks(self) -> np.ndarray:
        sel = self.kind == 0
        return np.column_stack([self.a[sel], self.times[sel]])

    @property
    def arrows(self) -> np.ndarray:
        sel = self.kind == 1
        return np.column_stack([self.a[sel], self.b[sel], self.times[sel]])

    def __len__(self):
        return len(self.times)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            fh.write("kind,time,vertex,target\n")
            for k, t, a, b in zip(self.kind.tolist(), self.times.tolist(), self.a.tolist(),
                                  self.b.tolist()):
                if k == 0:
                    fh.write(f"mark,{t:.12f},{a},\n")
                else:
                    fh.write(f"arrow,{t:.12f},{a},{b}\n")
        return path


def generate_field(g: Graph, lam: float, t_max: float, rng: np.random.Generator) -> EventField:
    """Sample every Poisson clock of the graphical representation on [0, t_max]."""
    n = g.n
    ne = len(g.indices)
    counts_marks = rng.poisson(t_max, size=n)
    counts_arrows = rng.poisson(lam * t_max, size=ne) if lam > 0 else np.zeros(ne, dtype=np.int64)
    clock = np.concatenate([np.repeat(np.arange(n, dtype=np.int64), counts_marks),
                            n + np.repeat(np.arange(ne, dtype=np.int64), counts_arrows)])
    times = rng.uniform(0.0, t_max, size=len(clock))
    order = np.lexsort((clock, times))
    clock = clock[order]
    times = times[order]
    is_arrow = clock >= n
    edge = np.where(is_arrow, clock - n, 0)
    a = np.where(is_arrow, g.src[edge], clock)
    b = np.where(is_arrow, g.indices[edge], -1)
    return EventField(t_max=float(t_max), n=n, kind=is_arrow.astype(np.int8), a=a, b=b,
                      times=times)


@dataclass
class TrajectorySummary:
    final: Configuration
    extinction_time: float | None
    checkpoints: np.ndarray
    counts: np.ndarray
    events: int
    field: EventField | None = None


@dataclass(frozen=True)
class ExtinctionSample:
    tau: float
    censored: bool
    t_cap: float


def step_rates(g: Graph, c, lam: float) -> tuple[float, float, float]:
    """(recovery rate, infection rate, total) out of configuration ``c``."""
    mask = _as_config(c).mask(g.n)
    si = int(K.count_si_edges(g.indptr, g.indices, mask))
    rec = float(mask.sum())
    inf = lam * si
    return rec, inf, rec + inf


def _check_args(lam: float, t: float, name: str = "t_max"):
    if not (lam >= 0 and math.isfinite(lam)):
        raise SimulationError(f"lambda must be a finite nonnegative rate, got {lam}")
    if not math.isfinite(t):
        raise SimulationError(f"{name} must be finite, got {t}")
    if t < 0:
        raise SimulationError(f"{name} must be nonnegative, got {t}")


def simulate(g: Graph, lam: float, init, t_max: float, mode: str = "active", seed: int = 0,
             checkpoints: Sequence[float] | None = None, replica: int = 0) -> TrajectorySummary:
    """One trajectory on [0, t_max]; ``full`` mode also returns the field used."""
    _check_args(lam, t_max)
    init = _as_config(init)
    cps = np.asarray(checkpoints if checkpoints is not None else [], dtype=np.float64)
    rng = replica_rng(seed, replica)
    if mode == "active":
        return _simulate_active(g, lam, init, t_max, cps, rng)
    if mode == "full":
        fld = generate_field(g, lam, t_max, rng)
        res = run_field(fld, [init], cps)[0]
        res.field = fld
        return res
    raise SimulationError(f"unknown mode {mode!r}; expected one of {MODES}")


def _simulate_active(g, lam, init, t_max, cps, rng, watch=None) -> TrajectorySummary:
    if watch is None:
        watch = np.zeros(g.n, dtype=np.bool_)
    infected, tau, events, counts, _ = K.active_run(g.indptr, g.indices, g.rev, float(lam),
                                                    init.mask(g.n), float(t_max), cps, watch, rng)
    return TrajectorySummary(final=Configuration.from_mask(infected),
                             extinction_time=None if tau < 0 else float(tau),
                             checkpoints=cps, counts=counts, events=int(events))


def run_field(fld: EventField, inits: Sequence, checkpoints: Sequence[float] = (),
              check: bool = False) -> list[TrajectorySummary]:
    """Drive every initial configuration with the same field."""
    summaries, _ = _run_field(fld, inits, checkpoints, check)
    return summaries


def _coupling_checks(inits: list[Configuration]):
    sets = [set(c.infected) for c in inits]
    k = len(sets)
    sub = [(i, j) for i in range(k) for j in range(k) if i != j and sets[i] <= sets[j]]
    add = [(i, j, l) for i in range(k) for j in range(i + 1, k) for l in range(k)
           if l not in (i, j) and sets[l] == sets[i] | sets[j]]
    return (np.asarray(sub, dtype=np.int64).reshape(-1, 2),
            np.asarray(add, dtype=np.int64).reshape(-1, 3))


def _run_field(fld, inits, checkpoints, check):
    inits = [_as_config(c) for c in inits]
    states = np.stack([c.mask(fld.n) for c in inits])
    cps = np.asarray(checkpoints, dtype=np.float64)
    sub, add = _coupling_checks(inits) if check else (np.zeros((0, 2), np.int64),
                                                     np.zeros((0, 3), np.int64))
    ext = np.full(len(inits), -1.0)
    for c in range(len(inits)):
        if not states[c].any():
            ext[c] = 0.0
    counts = np.zeros((len(inits), len(cps)), dtype=np.int64)
    violations = 0
    start = 0
    bounds = list(np.searchsorted(fld.times, cps, side="right")) + [len(fld.times)]
    for i, stop in enumerate(bounds):
        sl = slice(start, max(start, stop))
        e, v = K.apply_field_checked(fld.kind[sl], fld.a[sl], fld.b[sl], fld.times[sl], states,
                                     sub, add)
        violations += int(v)
        hit = (ext < 0) & (e >= 0)
        ext[hit] = e[hit]
        start = max(start, stop)
        if i < len(cps):
            counts[:, i] = states.sum(axis=1)
    summaries = [TrajectorySummary(final=Configuration.from_mask(states[c]),
                                   extinction_time=None if ext[c] < 0 else float(ext[c]),
                                   checkpoints=cps, counts=counts[c], events=len(fld.times))
                 for c in range(len(inits))]
    return summaries, violations


@dataclass
class CoupledResult:
    trajectories: list[TrajectorySummary]
    violations: int
    field: EventField


def simulate_coupled(g: Graph, lam: float, inits: Sequence, t_max: float, seed: int = 0,
                     checkpoints: Sequence[float] = (), replica: int = 0,
                     check: bool = True) -> CoupledResult:
    """Run several initial configurations on one shared field.

    With ``check`` set, every event is followed by a test of each ordering
    implied by the initial sets: A subset of B must stay a subset, and a
    copy started from A union B must equal the union of the A and B copies.
    """
    if len(inits) < 2:
        raise SimulationError("simulate_coupled needs at least two initial configurations")
    _check_args(lam, t_max)
    fld = generate_field(g, lam, t_max, replica_rng(seed, replica))
    trajs, violations = _run_field(fld, inits, checkpoints, check)
    return CoupledResult(trajectories=trajs, violations=violations, field=fld)


def dual_simulate(fld: EventField, B, t_back: float) -> Configuration:
    """Dual process from B at the window end, run back over [t_max - t_back, t_max].

    Arrows are followed in reverse and recovery marks kill.
    """
    if t_back > fld.t_max or t_back < 0:
        raise SimulationError(f"t_back={t_back} outside the field window [0, {fld.t_max}]")
    dual = _as_config(B).mask(fld.n)
    K.dual_apply(fld.kind, fld.a, fld.b, fld.times, dual, fld.t_max - t_back)
    return Configuration.from_mask(dual)


# -- extinction times ---------------------------------------------------------------

def _field_chunk_len(g: Graph, lam: float, events: float) -> float:
    rate = g.n + lam * len(g.indices)
    return events / max(rate, 1.0)


def _extinction_full(g, lam, init, t_cap, rng):
    state = init.mask(g.n)
    count = int(state.sum())
    if count == 0:
        return 0.0
    # Chunks start around 1k events and double up to ~1M; Poisson clocks are
    # memoryless, so concatenating independent windows is exact.
    chunk = _field_chunk_len(g, lam, 1_000.0)
    cap = _field_chunk_len(g, lam, 1_000_000.0)
    t0 = 0.0
    while t0 < t_cap:
        length = min(chunk, t_cap - t0)
        fld = generate_field(g, lam, length, rng)
        tau, count = K.field_extinction(fld.kind, fld.a, fld.b, fld.times, state, count, t0)
        if tau >= 0:
            return float(tau)
        t0 += length
        chunk = min(2 * chunk, cap)
    return -1.0


def extinction_time(g: Graph, lam: float, init, t_cap: float, seed: int = 0,
                    mode: str = "active", replica: int = 0) -> ExtinctionSample:
    """Time to absorption in the empty set, censored at ``t_cap``."""
    _check_args(lam, t_cap, "t_cap")
    if t_cap <= 0:
        raise SimulationError("t_cap must be positive")
    init = _as_config(init)
    rng = replica_rng(seed, replica)
    if mode == "active":
        tau, _ = K.extinction_run(g.indptr, g.indices, g.rev, float(lam), init.mask(g.n),
                                  float(t_cap), rng)
    elif mode == "full":
        tau = _extinction_full(g, lam, init, t_cap, rng)
    else:
        raise SimulationError(f"unknown mode {mode!r}")
    if tau < 0:
        return ExtinctionSample(tau=float(t_cap), censored=True, t_cap=float(t_cap))
    return ExtinctionSample(tau=float(tau), censored=False, t_cap=float(t_cap))


def extinction_samples(g: Graph, lam: float, init, t_cap: float, replicas: int, seed: int = 0,
                       mode: str = "active") -> tuple[np.ndarray, np.ndarray]:
    """``replicas`` extinction samples; returns (tau, censored) arrays in replica order."""
    taus = np.empty(replicas)
    cens = np.empty(replicas, dtype=bool)
    for r in range(replicas):
        s = extinction_time(g, lam, init, t_cap, seed=seed, mode=mode, replica=r)
        taus[r], cens[r] = s.tau, s.censored
    return taus, cens


def final_states(g: Graph, lam: float, init, t: float, replicas: int, seed: int = 0,
                 tag: int = 0) -> np.ndarray:
    """Infected masks at time t for independent active-clock replicas, shape (replicas, n)."""
    _check_args(lam, t, "t")
    mask = _as_config(init).mask(g.n)
    cps = np.zeros(0)
    watch = np.zeros(g.n, dtype=np.bool_)
    out = np.empty((replicas, g.n), dtype=bool)
    for r in range(replicas):
        infected, *_ = K.active_run(g.indptr, g.indices, g.rev, float(lam), mask, float(t), cps,
                                    watch, replica_rng(seed, r, tag))
        out[r] = infected
    return out


# -- severed process on the depth-M tree -------------------------------------------------

@dataclass(frozen=True)
class SeveredEstimate:
    T: float
    M: int
    L: float
    mean_size: float
    mean_truncated: float
    se_size: float
    se_truncated: float
    replicas: int


def severed_growth(d: int, M: int, lam: float, T: float, L: float, replicas: int,
                   seed: int = 0) -> SeveredEstimate:
    """Estimate E|eta_T| and E min(|eta_T|, L) on the depth-M severed tree from its root."""
    from .structure import build_delta

    if replicas < 2:
        raise SimulationError("severed_growth needs at least 2 replicas")
    _check_args(lam, T, "T")
    tree = build_delta(d, M)
    g = tree.graph
    mask = np.zeros(g.n, dtype=np.bool_)
    mask[tree.root] = True
    cps = np.array([T], dtype=np.float64)
    watch = np.zeros(g.n, dtype=np.bool_)
    sizes = np.empty(replicas)
    for r in range(replicas):
        _, _, _, counts, _ = K.active_run(g.indptr, g.indices, g.rev, float(lam), mask,
                                          float(T), cps, watch, replica_rng(seed, r))
        sizes[r] = counts[0]
    trunc = np.minimum(sizes, L)
    return SeveredEstimate(T=float(T), M=int(M), L=float(L), mean_size=float(sizes.mean()),
                           mean_truncated=float(trunc.mean()),
                           se_size=float(sizes.std(ddof=1) / math.sqrt(replicas)),
                           se_truncated=float(trunc.std(ddof=1) / math.sqrt(replicas)),
                           replicas=replicas)
