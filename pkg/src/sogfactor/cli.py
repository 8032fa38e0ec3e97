"""Command line entry point.

Exit codes: 0 success, 2 budget exhausted with resumable state, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import diagnostics as diag
from .emulator import DesignParams, build_circuit, default_design, derive_seeds, run, write_trajectory_csv
from .models import compile_direct
from .numtheory import build_factor_base, generate_benchmark_biprime
from .pipeline import (
    CongruenceConfig,
    NotCompositeError,
    direct_bit_split,
    factor_congruence,
    factor_direct,
)
from .relations import RelationStore
from .scaling import (
    ScalingRecord,
    design_provenance,
    fit_degrees,
    load_records,
    median_table,
    save_records,
    select_degree,
    write_scaling_csv,
)
from .tuner import (
    ParamSpace,
    TemperingConfig,
    continuation_warm_start,
    default_space,
    postprocess_convergence,
    run_parallel_tempering,
)

log = logging.getLogger("sogfactor")

EXIT_OK, EXIT_ERROR, EXIT_EXHAUSTED = 0, 1, 2


class UsageError(Exception):
    pass


def _read_json(path) -> object:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"missing input file: {p}")
    return json.loads(p.read_text(encoding="utf-8"))


def load_design(path) -> DesignParams:
    """A design JSON, or the first entry of a ranked list written by ``tune``."""
    doc = _read_json(path)
    if isinstance(doc, list):
        if not doc:
            raise UsageError(f"{path}: empty design list")
        doc = doc[0].get("design", doc[0])
    return DesignParams.from_dict(doc)


def load_designs(path) -> List[DesignParams]:
    doc = _read_json(path)
    if isinstance(doc, dict):
        return [DesignParams.from_dict(doc)]
    return [DesignParams.from_dict(d.get("design", d)) for d in doc]


def _dump(path, payload) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    diag.write_json(path, payload)


def _target(args) -> tuple:
    if args.n is not None:
        return int(args.n), None
    if args.bits is None:
        raise UsageError("give n or --bits")
    bp = generate_benchmark_biprime(args.bits, seed=args.seed)
    return bp.n, bp


def _direct_model(bits: int, instance_seed: int):
    bp = generate_benchmark_biprime(bits, seed=instance_seed)
    model, layout = compile_direct(bp.n, *direct_bit_split(bp.n))
    return bp, model, layout


# -- factor -------------------------------------------------------------------
def cmd_factor(args) -> int:
    n, bp = _target(args)
    design = load_design(args.design) if args.design else None
    if args.model == "direct":
        rep = factor_direct(n, design, seed=args.seed, wall_budget=args.wall_budget or 120.0)
    else:
        cfg = dict(_read_json(args.config)) if args.config else {}
        if args.wall_budget:
            cfg["wall_budget"] = args.wall_budget
        if args.b:
            cfg["h"] = args.b.bit_length() - 1
            if 1 << cfg["h"] != args.b:
                raise UsageError("--b must be a power of two")
        if args.variant:
            cfg["variant"] = args.variant
        if args.full_collection:
            cfg["full_collection"] = True
        config = CongruenceConfig.from_dict(cfg)
        store = None
        if args.store and args.resume and Path(args.store).exists():
            store = RelationStore.load(args.store)
            log.info("resuming with %d relations from %s", len(store.full), args.store)
        rep = factor_congruence(n, config, design, seed=args.seed, store=store, store_path=args.store)
    report = rep.to_dict()
    if bp is not None:
        report["generator"] = {"bits": bp.bits_n, "seed": args.seed}
    if args.report:
        _dump(args.report, report)
    if rep.success:
        p, q = rep.factors
        print(f"{n} = {p} * {q}")
        print(f"method={rep.method} seed={rep.seed} runs={rep.runs} retries={rep.retries} "
              f"relations={rep.relations} wall={rep.wall_time:.2f}s simulated={rep.simulated_time:.1f}us")
        return EXIT_OK
    print(f"budget exhausted after {rep.runs} runs ({rep.wall_time:.1f}s); "
          + (f"relation store saved to {args.store}" if args.store else "rerun with --store to keep progress"))
    return EXIT_EXHAUSTED


# -- tune ---------------------------------------------------------------------
def cmd_tune(args) -> int:
    bp, model, _ = _direct_model(args.bits, args.instance_seed)
    space = ParamSpace.load(args.space) if args.space else default_space(model)
    cfg = TemperingConfig.from_dict(_read_json(args.config)) if args.config else TemperingConfig()
    base = load_design(args.base) if args.base else default_design()
    initial = None
    if args.continuation:
        initial = continuation_warm_start(load_designs(args.continuation), space,
                                          cfg.chains_per_routine, seed=args.seed)
    t0 = time.perf_counter()
    res = run_parallel_tempering(model, space, cfg, seed=args.seed, base=base, initial=initial,
                                 checkpoint=args.checkpoint, resume=args.resume,
                                 n_candidates=args.candidates)
    ranked = postprocess_convergence(res.candidates, model, args.n_ics, args.ic_budget, seed=args.seed)
    out = [{"rank": i + 1, "probability": c.probability, "mean_tts_us": c.mean_tts,
            "estimate": c.estimate, "unit_point": c.params, "design": c.design.to_dict()}
           for i, c in enumerate(ranked)]
    _dump(args.out, out)
    print(f"tuned {args.bits}-bit model n={bp.n}: {res.iteration} iterations, accept {res.accept_rate:.2f}, "
          f"swap {res.swap_rate:.2f}, {time.perf_counter() - t0:.1f}s")
    for row in out[:5]:
        print(f"  #{row['rank']} p={row['probability']:.2f} mean_tts={row['mean_tts_us']:.2f}us")
    return EXIT_OK


# -- scaling ------------------------------------------------------------------
def _parse_tuned(items: Sequence[str]) -> dict:
    tuned = {}
    for it in items or ():
        bits, _, path = it.partition("=")
        if not path:
            raise UsageError(f"--tuned expects BITS=PATH, got {it!r}")
        tuned[int(bits)] = load_design(path)
    return tuned


def cmd_scaling(args) -> int:
    tuned = _parse_tuned(args.tuned)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records: List[ScalingRecord] = []
    seeds = derive_seeds(args.seed, len(args.bits) * args.instances)
    i = 0
    for bits in args.bits:
        label, source = design_provenance(bits, tuned)
        design = tuned[source] if source is not None else None
        for j in range(args.instances):
            bp = generate_benchmark_biprime(bits, seed=args.seed * 1000 + j)
            if args.model == "direct":
                rep = factor_direct(bp.n, design, seed=seeds[i], wall_budget=args.wall_budget)
                target = None
            else:
                config = CongruenceConfig(wall_budget=args.wall_budget)
                rep = factor_congruence(bp.n, config, design, seed=seeds[i])
                target = build_factor_base(config.b).size
            i += 1
            records.append(ScalingRecord(bits, rep.wall_time, max(rep.simulated_time, 1e-9), args.model,
                                         rep.success, target, label, seeds[i - 1]))
            print(f"{bits} bits #{j}: {'ok' if rep.success else 'censored'} wall={rep.wall_time:.2f}s "
                  f"sim={rep.simulated_time:.1f}us ({label})")
    notes = []
    table = median_table(records)
    usable = [r for r in table if r["censored"] < r["instances"]]
    for r in table:
        if r["censored"]:
            notes.append(f"{r['bits']} bits: {r['censored']} of {r['instances']} runs censored (not converged)")
    fits = {}
    x = [r["bits"] for r in usable]
    y = [r["median_wall_s"] for r in usable]
    degrees = [d for d in args.degrees if d + 1 <= len(x)]
    if degrees:
        fits = fit_degrees(x, y, degrees)
        if len(degrees) > 1:
            notes.append(f"residual knee selects degree {select_degree(x, y, degrees)}")
    for d, f in fits.items():
        print(f"degree {d}: residual rms {f.residual_rms:.3g}")
    save_records(out / "records.json", records, fits, notes)
    write_scaling_csv(out / "scaling.csv", records)
    for note in notes:
        print(note)
    return EXIT_OK


# -- ensemble -----------------------------------------------------------------
def cmd_ensemble(args) -> int:
    bp, model, layout = _direct_model(args.bits, args.instance_seed)
    design = load_design(args.design) if args.design else None
    probes = [v.index for v in layout.p + layout.q][: args.probes]
    circuit = build_circuit(model, design, probes=probes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, s in enumerate(derive_seeds(args.seed, args.runs)):
        o = run(circuit, s, args.budget, max_records=args.records if k == 0 else 64)
        if k == 0:
            write_trajectory_csv(o, out / "trajectory.csv", [model.variables[j].name for j in probes])
        rows.append({"seed": s, "converged": o.converged, "tts": o.tts, "min_unsat": o.min_unsat,
                     "simulated_time": o.simulated_time})
    _dump(out / "ensemble.json", {"n": bp.n, "bits": args.bits, "budget_us": args.budget, "runs": rows})
    frac = sum(r["converged"] for r in rows) / len(rows)
    print(f"{args.runs} runs on n={bp.n}: converged fraction {frac:.2f}; wrote {out}")
    return EXIT_OK


# -- emit-plots ---------------------------------------------------------------
class _Run:
    def __init__(self, d):
        self.converged = bool(d["converged"])
        self.tts = d.get("tts")
        self.min_unsat = int(d.get("min_unsat", 0))


def cmd_emit_plots(args) -> int:
    if not (args.scaling or args.tts or args.trajectory):
        raise UsageError("give at least one of --scaling, --tts, --trajectory")
    for src in (args.scaling, args.tts, args.trajectory):
        if src and not Path(src).exists():
            raise UsageError(f"missing input file: {src}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.scaling:
        written.append(write_scaling_csv(out / "scaling.csv", load_records(args.scaling)))
    if args.tts:
        doc = _read_json(args.tts)
        runs = [_Run(d) for d in (doc["runs"] if isinstance(doc, dict) else doc)]
        dist = diag.tts_distribution(runs)
        fit = diag.fit_gamma(dist.samples) if len(dist.samples) >= 2 and np.ptp(dist.samples) > 0 else None
        written.append(diag.write_histogram_csv(out / "tts_hist.csv", dist.samples, args.bins, fit))
        verdict = diag.dissipativeness_verdict(runs, args.ks_threshold, args.min_runs)
        summary = diag.unsat_summary(runs)
        written.append(diag.write_json(out / "tts_fit.json", {
            "convergence_fraction": dist.convergence_fraction, "n_runs": dist.n_runs,
            "gamma": None if fit is None else {"shape": fit.shape, "scale": fit.scale,
                                               "ks": fit.ks_statistic, "wide_tolerance": fit.wide_tolerance},
            "verdict": verdict.label, "reason": verdict.reason,
        }))
        with (out / "unsat_hist.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["min_unsat", "runs"])
            for m, c in enumerate(summary.histogram):
                w.writerow([m, int(c)])
        written.append(out / "unsat_hist.csv")
    if args.trajectory:
        p = Path(args.trajectory)
        with p.open(encoding="utf-8") as fh:
            header = next(csv.reader(fh))
        data = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
        probe_cols = header[1:-1]
        trains = [diag.threshold_crossings(data[:, 1 + i], args.threshold, args.lag) for i in range(len(probe_cols))]
        pairs = [tuple(int(v) for v in s.split(",")) for s in args.pairs] if args.pairs else \
            [(i, j) for i in range(len(trains)) for j in range(i, len(trains))]
        for i, j in pairs:
            if not (0 <= i < len(trains) and 0 <= j < len(trains)):
                raise UsageError(f"pair {i},{j} outside the {len(trains)} probe columns")
            res = diag.correlation(trains[i], trains[j], pair=(i, j))
            written.append(diag.write_correlation_csv(out / f"corr_{probe_cols[i]}_{probe_cols[j]}.csv", res))
    for w in written:
        print(w)
    return EXIT_OK


# -- parser -------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sogfactor", description="Biprime factoring with an emulated self-organizing gate network.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("factor", help="factor n (or a generated biprime)")
    f.add_argument("n", nargs="?", type=int)
    f.add_argument("--bits", type=int, help="generate a benchmark biprime of this size")
    f.add_argument("--seed", type=int, default=0, help="master seed (generator and solver)")
    f.add_argument("--model", choices=("direct", "congruence"), default="direct")
    f.add_argument("--design", help="design JSON (or ranked list from tune)")
    f.add_argument("--config", help="congruence loop JSON config")
    f.add_argument("--b", type=int, help="smoothness bound, a power of two")
    f.add_argument("--variant", choices=("basic", "grouped-product", "multi-equation"))
    f.add_argument("--full-collection", action="store_true", help="collect pi(b)+1 relations before extracting")
    f.add_argument("--store", help="relation store file (written after every subproblem)")
    f.add_argument("--resume", action="store_true", help="continue from --store")
    f.add_argument("--wall-budget", type=float)
    f.add_argument("--report", help="write the JSON report here")
    f.set_defaults(func=cmd_factor)

    t = sub.add_parser("tune", help="parallel-tempering search over design parameters")
    t.add_argument("--bits", type=int, default=16)
    t.add_argument("--instance-seed", type=int, default=0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--space", help="parameter space JSON")
    t.add_argument("--config", help="tempering config JSON")
    t.add_argument("--base", help="design supplying the untuned parameters")
    t.add_argument("--checkpoint")
    t.add_argument("--resume", action="store_true")
    t.add_argument("--continuation", help="ranked designs from a smaller size to warm-start from")
    t.add_argument("--candidates", type=int, default=5)
    t.add_argument("--n-ics", type=int, default=30, help="initial conditions per candidate in post-processing")
    t.add_argument("--ic-budget", type=float, default=100.0, help="simulated µs per post-processing run")
    t.add_argument("--out", default="ranked_designs.json")
    t.set_defaults(func=cmd_tune)

    s = sub.add_parser("scaling", help="time instances per size and fit log-log polynomials")
    s.add_argument("--bits", type=int, nargs="+", required=True)
    s.add_argument("--instances", type=int, default=3)
    s.add_argument("--model", choices=("direct", "congruence"), default="direct")
    s.add_argument("--tuned", nargs="*", metavar="BITS=PATH", help="designs tuned at given sizes")
    s.add_argument("--degrees", type=int, nargs="+", default=[1, 2])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--wall-budget", type=float, default=120.0)
    s.add_argument("--out", default="scaling_out")
    s.set_defaults(func=cmd_scaling)

    e = sub.add_parser("ensemble", help="run many initial conditions on a direct model, keep TTS and a trajectory")
    e.add_argument("--bits", type=int, default=12)
    e.add_argument("--instance-seed", type=int, default=0)
    e.add_argument("--runs", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--budget", type=float, default=100.0, help="simulated µs per run")
    e.add_argument("--design")
    e.add_argument("--probes", type=int, default=6, help="factor bits recorded in the trajectory")
    e.add_argument("--records", type=int, default=20000, help="trajectory samples for the first run")
    e.add_argument("--out", default="ensemble_out")
    e.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("emit-plots", help="turn records and diagnostics into CSV/JSON plot data")
    p.add_argument("--scaling", help="records.json from the scaling command")
    p.add_argument("--tts", help="ensemble.json from the ensemble command")
    p.add_argument("--trajectory", help="trajectory CSV (time_us, probes..., unsat)")
    p.add_argument("--pairs", nargs="*", metavar="I,J", help="probe column pairs to correlate")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--lag", type=int, default=1)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--ks-threshold", type=float, default=0.05)
    p.add_argument("--min-runs", type=int, default=30)
    p.add_argument("--out", default="plots")
    p.set_defaults(func=cmd_emit_plots)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, NotCompositeError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
