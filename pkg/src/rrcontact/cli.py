"""Command line entry point: ``rrcontact run|verify|graph``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure
(budget exhausted, all runs censored, hash mismatch).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .config import ConfigError, ExperimentConfig, load_config
from .engine import Configuration, SimulationError, extinction_samples, simulate
from .experiments import (AllCensored, ExperimentError, beta_fit, coupling_deficiency,
                          estimate_growth_rate, estimate_survival, extinction_ensemble,
                          severed_scan)
from .graph import (BudgetExhausted, GraphError, complete_graph, content_hash, diameter,
                    edge_expansion, generate_random_regular, graph_hash, prism_graph,
                    read_graph, to_edge_list, tree_like_census)
from .oracle import OracleError, exact_mean_extinction, exact_transient
from .structure import disjoint_short_paths, grey_closure, random_admissible_set, \
    tree_like_mask

MANIFEST = "manifest.json"


def fmt(x) -> str:
    """CSV number format: 12 significant digits, locale independent."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.12g}"


def _clean(obj):
    """JSON-ready copy with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.12g}")
    return obj


class Run:
    """Collects the files a pipeline writes so the manifest can list them."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.dir = cfg.output_dir()
        self.dir.mkdir(parents=True, exist_ok=True)
        self.outputs: list[Path] = []
        self.graph_hash: str | None = None

    def csv(self, name: str, header, rows) -> Path:
        path = self.dir / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(x) if not isinstance(x, str) else x for x in row])
        self.outputs.append(path)
        return path

    def json(self, name: str, payload: dict) -> Path:
        path = self.dir / name
        body = {"config": self.cfg.to_mapping(), "seed": self.cfg.seed,
                "graph_hash": self.graph_hash, **payload}
        path.write_text(json.dumps(_clean(body), indent=2, sort_keys=True) + "\n")
        self.outputs.append(path)
        return path

    def figure(self, fn, name: str, *args, **kwargs) -> Path:
        path = fn(*args, path=self.dir / name, **kwargs)
        self.outputs.append(path)
        return path

    def graph(self):
        cfg = self.cfg
        if cfg.graph:
            try:
                g = read_graph(cfg.graph)
            except (OSError, GraphError, ValueError) as exc:
                raise ConfigError("graph", str(exc)) from None
        else:
            try:
                g = generate_random_regular(cfg.n, cfg.d, cfg.seed)
            except GraphError as exc:
                raise ConfigError("n", str(exc)) from None
        path = self.dir / "graph.txt"
        path.write_text(to_edge_list(g))
        self.outputs.append(path)
        self.graph_hash = graph_hash(g)
        return g

    def manifest(self, started: float) -> Path:
        entries = [{"path": p.name, "hash": content_hash(p.read_bytes())} for p in self.outputs]
        body = {"config": self.cfg.to_mapping(), "seed": self.cfg.seed, "version": __version__,
                "graph_hash": self.graph_hash, "outputs": entries,
                "wall_clock_seconds": round(time.monotonic() - started, 3),
                "finished": datetime.now(timezone.utc).isoformat(timespec="seconds")}
        path = self.dir / MANIFEST
        path.write_text(json.dumps(body, indent=2) + "\n")
        return path


# -- pipelines -----------------------------------------------------------------------

def pipe_generate(run: Run):
    g = run.graph()
    t1 = tree_like_mask(g, 1)
    t2 = tree_like_mask(g, 2)
    run.csv("vertices.csv", ["vertex", "degree", "tree_like_r1", "tree_like_r2"],
            [(v, int(g.degrees[v]), t1[v], t2[v]) for v in range(g.n)])
    run.json("summary.json", {"n": g.n, "d": g.d, "attempts": g.generator_attempts,
                              "connected": g.connected, "diameter": diameter(g),
                              "tree_like_r1": int(t1.sum()), "tree_like_r2": int(t2.sum())})


def pipe_simulate(run: Run):
    cfg = run.cfg
    g = run.graph()
    times = np.linspace(0.0, cfg.horizon, 101)
    rows, counts, ext = [], [], []
    for r in range(cfg.replicas):
        tr = simulate(g, cfg.lam, Configuration.full(g.n), cfg.horizon, mode=cfg.mode,
                      seed=cfg.seed, checkpoints=times, replica=r)
        counts.append(tr.counts)
        ext.append(tr.extinction_time)
        rows.extend((r, t, c) for t, c in zip(times, tr.counts))
    run.csv("trajectories.csv", ["replica", "time", "infected"], rows)
    counts = np.asarray(counts)
    run.json("summary.json", {"replicas": cfg.replicas, "horizon": cfg.horizon,
                              "mean_final_fraction": float(counts[:, -1].mean() / g.n),
                              "extinct_by_horizon": int(sum(e is not None for e in ext))})
    run.figure(plotting.trajectories, "trajectories.png", times, counts, g.n)


def pipe_extinction(run: Run):
    cfg = run.cfg
    g = run.graph()
    rep = extinction_ensemble(g, cfg.lam, cfg.replicas, cfg.t_cap, cfg.seed, cfg.bootstrap,
                              mode=cfg.mode)
    run.csv("tau.csv", ["replica", "tau", "censored"],
            [(r, t, c) for r, (t, c) in enumerate(zip(rep.taus, rep.censored))])
    run.json("summary.json", {"n": g.n, "lambda": cfg.lam, "mean_tau": rep.mean, "se": rep.se,
                              "uncensored": int((~rep.censored).sum()),
                              "censored_fraction": rep.censored_fraction,
                              "ks": rep.ks, "p_value": rep.p_value})
    run.figure(plotting.tau_ecdf, "tau_ecdf.png", rep.uncensored, label=f"n={g.n}")


def _grid_graph(cfg, i, n):
    seed = int(np.random.SeedSequence(cfg.seed, spawn_key=(i,)).generate_state(1)[0])
    return generate_random_regular(n, cfg.d, seed)


def pipe_metastability(run: Run):
    from .experiments import gamma_closed_form

    cfg = run.cfg
    rows, records, per_n = [], {}, []
    for i, n in enumerate(cfg.n_grid):
        g = _grid_graph(cfg, i, n)
        taus, cens = extinction_samples(g, cfg.lam, Configuration.full(n), cfg.t_cap,
                                        cfg.replicas, seed=cfg.seed + i, mode=cfg.mode)
        rows.extend((n, r, t, c) for r, (t, c) in enumerate(zip(taus, cens)))
        x = taus[~cens]
        entry = {"n": n, "graph_hash": graph_hash(g), "uncensored": int(len(x)),
                 "censored_fraction": float(cens.mean())}
        if len(x):
            entry["mean_tau"] = float(x.mean())
            entry["se"] = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else None
            records[n] = float(x.mean())
        if len(x) >= 100:
            from .experiments import ks_exponential_pvalue
            entry["ks"], entry["p_value"] = ks_exponential_pvalue(x, cfg.bootstrap, cfg.seed)
        per_n.append(entry)
    run.csv("tau.csv", ["n", "replica", "tau", "censored"], rows)
    fit = beta_fit(records) if len(records) >= 3 else None
    payload = {"lambda": cfg.lam, "d": cfg.d, "per_n": per_n,
               "gamma": gamma_closed_form(cfg.d, cfg.lam),
               "a_grid": list(cfg.a_grid),
               "beta_hat": fit.beta_hat if fit else None,
               "intercept": fit.intercept if fit else None}
    run.json("summary.json", payload)
    done = [e for e in per_n if "mean_tau" in e]
    if done:
        run.figure(plotting.mean_tau_vs_n, "mean_tau.png", [e["n"] for e in done],
                   [e["mean_tau"] for e in done], [e["se"] or 0.0 for e in done], fit=fit)
    if not records:
        raise AllCensored(f"every run censored at t_cap={cfg.t_cap} for all n in {cfg.n_grid}")
    missing = [e["n"] for e in per_n if "mean_tau" not in e]
    if missing:
        raise AllCensored(f"all runs censored at t_cap={cfg.t_cap} for n in {missing}")


def pipe_structure(run: Run):
    cfg = run.cfg
    g = run.graph()
    size = max(1, int(math.floor(cfg.epsilon * g.n)))
    mask = tree_like_mask(g, cfg.M)
    rng = np.random.default_rng(cfg.seed)
    rows, fractions = [], []
    first = None
    for trial in range(cfg.replicas):
        U = random_admissible_set(g, size, cfg.M, rng, mask)
        gc = grey_closure(g, U, cfg.M)
        rep = gc.coloring
        ok = gc.g <= rep.N_M * rep.w
        rows.append((trial, size, rep.b, rep.w, gc.g, rep.N_M, ok))
        fractions.append(rep.black_fraction)
        if first is None:
            first = (U, rep)
    run.csv("coloring_trials.csv", ["trial", "size", "black", "white", "grey", "N_M", "grey_bound_ok"],
            rows)
    U, rep = first
    rep.to_csv(run.dir / "coloring.csv")
    run.outputs.append(run.dir / "coloring.csv")
    W = sorted(rng.choice(np.setdiff1d(np.arange(g.n), U), size=min(size, g.n - len(U)),
                          replace=False).tolist())
    ps = disjoint_short_paths(g, U, W, 2 * cfg.M)
    ps.to_csv(run.dir / "paths.csv")
    run.outputs.append(run.dir / "paths.csv")
    exp = edge_expansion(g, size, mode="sampled", samples=cfg.replicas, seed=cfg.seed)
    fr = np.asarray(fractions)
    run.json("summary.json", {
        "set_size": size, "M": cfg.M, "trials": cfg.replicas,
        "black_quarter_fraction": float(np.mean(fr >= 0.25)),
        "grey_bound_all": bool(all(r[-1] for r in rows)),
        "tree_like": int(mask.sum()), "paths": ps.count,
        "expansion_sampled": exp.value, "expansion_k": exp.k,
        "tree_like_census_r1": tree_like_census(g, 1)})
    run.figure(plotting.black_fraction_hist, "black_fraction.png", fractions)


def pipe_oracle_check(run: Run):
    cfg = run.cfg
    graphs = [("K4", complete_graph(4)), ("prism", prism_graph())]
    if cfg.n <= 14:
        graphs.append((f"rr{cfg.n}", run.graph()))
    rows = []
    for name, g in graphs:
        exact = exact_mean_extinction(g, cfg.lam).expected_extinction
        # censoring would bias the mean low; e^-40 makes it negligible
        t_cap = max(cfg.t_cap, 40.0 * exact)
        taus, cens = extinction_samples(g, cfg.lam, Configuration.full(g.n), t_cap,
                                        cfg.replicas, cfg.seed, mode=cfg.mode)
        x = taus[~cens]
        se = x.std(ddof=1) / math.sqrt(len(x))
        rows.append((name, "mean_tau", exact, x.mean(), se, (x.mean() - exact) / se))
        tr = exact_transient(g, cfg.lam, [0], 1.0)
        alive = np.array([simulate(g, cfg.lam, [0], 1.0, seed=cfg.seed + 1, replica=r)
                          .extinction_time is None for r in range(cfg.replicas)])
        p = alive.mean()
        pse = max(math.sqrt(p * (1 - p) / len(alive)), 1e-12)
        rows.append((name, "survival_t1", tr.survival_probability, p, pse,
                     (p - tr.survival_probability) / pse))
    run.csv("oracle_check.csv", ["graph", "quantity", "exact", "estimate", "se", "z"], rows)
    run.json("summary.json", {"max_abs_z": max(abs(r[-1]) for r in rows),
                              "within_3se": all(abs(r[-1]) <= 3 for r in rows)})


def pipe_growth(run: Run):
    cfg = run.cfg
    est = estimate_growth_rate(cfg.d, cfg.lam, cfg.depth, cfg.horizon, cfg.replicas, cfg.seed)
    run.csv("growth.csv", ["time", "mean_size", "se"],
            zip(est.times, est.mean_size, est.se_size))
    surv = estimate_survival(cfg.d, cfg.lam, min(cfg.depth, 8), cfg.horizon, cfg.replicas,
                             cfg.seed)
    T_grid = [float(t) for t in range(1, int(math.ceil(cfg.T)) + 1)]
    scan = severed_scan(cfg.d, cfg.lam, T_grid, list(range(1, cfg.M + 1)), cfg.L,
                        cfg.replicas, cfg.seed)
    run.csv("severed.csv", ["T", "M", "L", "mean_size", "se_size", "mean_truncated",
                            "se_truncated"],
            [(s.T, s.M, s.L, s.mean_size, s.se_size, s.mean_truncated, s.se_truncated)
             for s in scan])
    best = max(scan, key=lambda s: s.mean_size)
    run.json("summary.json", {
        "c_hat": est.c_hat, "c_se": est.c_se, "window": list(est.window),
        "ratio_min": float(est.ratios.min()), "ratio_max": float(est.ratios.max()),
        "sandwich": est.sandwich(), "boundary_hit_fraction": est.boundary_hit_fraction,
        "p_hat": surv.p_hat, "p_se": surv.se, "survival_depth": surv.depth,
        "severed_best": {"T": best.T, "M": best.M, "mean_size": best.mean_size,
                         "mean_truncated": best.mean_truncated}})
    run.figure(plotting.growth_curve, "growth.png", est)


def pipe_deficiency(run: Run):
    cfg = run.cfg
    g = run.graph()
    rows, maxima, ses, summary = [], [], [], []
    for i, a in enumerate(cfg.a_grid):
        res = coupling_deficiency(g, cfg.lam, a, replicas=cfg.replicas, seed=cfg.seed + i)
        rows.extend((a, U[0] if len(U) == 1 else " ".join(map(str, U)), e, s)
                    for U, e, s in zip(res.family, res.estimates, res.se))
        maxima.append(res.maximum)
        ses.append(res.max_se)
        summary.append({"a": a, "max": res.maximum, "max_se": res.max_se,
                        "pooled_mean": res.pooled_mean, "pooled_se": res.pooled_se})
    run.csv("deficiency.csv", ["a", "set", "estimate", "se"], rows)
    run.json("summary.json", {"lambda": cfg.lam, "curve": summary})
    run.figure(plotting.deficiency_curve, "deficiency.png", list(cfg.a_grid), maxima, ses)


PIPES = {"generate": pipe_generate, "simulate": pipe_simulate, "extinction": pipe_extinction,
         "metastability": pipe_metastability, "structure": pipe_structure,
         "oracle-check": pipe_oracle_check, "growth": pipe_growth,
         "deficiency": pipe_deficiency}


# -- commands ----------------------------------------------------------------------------

def cmd_run(args) -> int:
    started = time.monotonic()
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg = ExperimentConfig.from_mapping({**cfg.to_mapping(), "out_dir": args.out})
        run = Run(cfg)
        PIPES[cfg.pipeline](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (BudgetExhausted, AllCensored, OracleError, ExperimentError, GraphError,
            SimulationError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    path = run.manifest(started)
    print(path)
    return 0


def verify_dir(run_dir: str | Path) -> list[str]:
    """Problems found re-hashing a run directory against its manifest."""
    run_dir = Path(run_dir)
    man = run_dir / MANIFEST
    if not man.exists():
        return [f"no {MANIFEST} in {run_dir}"]
    body = json.loads(man.read_text())
    problems = []
    for entry in body["outputs"]:
        p = run_dir / entry["path"]
        if not p.exists():
            problems.append(f"missing: {entry['path']}")
        elif content_hash(p.read_bytes()) != entry["hash"]:
            problems.append(f"hash mismatch: {entry['path']}")
    return problems


def cmd_verify(args) -> int:
    if not (Path(args.dir) / MANIFEST).is_file():
        print(f"no {MANIFEST} in {args.dir}", file=sys.stderr)
        return 1
    problems = verify_dir(args.dir)
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        return 2
    print("ok")
    return 0


def cmd_graph(args) -> int:
    try:
        if args.graph_cmd == "gen":
            g = generate_random_regular(args.n, args.d, args.seed)
            text = to_edge_list(g)
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
            return 0
        g = read_graph(args.file)
    except GraphError as exc:
        print(f"graph error: {exc}", file=sys.stderr)
        return 1
    except BudgetExhausted as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read {args.file}: {exc.strerror}", file=sys.stderr)
        return 1
    info = {"n": g.n, "d": g.d, "edges": g.m, "regular": g.is_regular,
            "connected": g.connected, "hash": graph_hash(g)}
    if g.connected:
        info["diameter"] = diameter(g)
    print(json.dumps(info, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rrcontact",
                                description="Contact process on random regular graphs.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a pipeline from a key = value config file")
    r.add_argument("config")
    r.add_argument("--out", help="override out_dir")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("verify", help="re-hash a run directory against its manifest")
    v.add_argument("dir")
    v.set_defaults(func=cmd_verify)
    gp = sub.add_parser("graph", help="generate or inspect edge-list graph files")
    gsub = gp.add_subparsers(dest="graph_cmd", required=True)
    gen = gsub.add_parser("gen")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--d", type=int, default=3)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out")
    info = gsub.add_parser("info")
    info.add_argument("file")
    gp.set_defaults(func=cmd_graph)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
