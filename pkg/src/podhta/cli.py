"""Command-line driver: ``podhta <command> [options]``.

Settings come from the built-in defaults, then an optional JSON file given
with ``--config``, then command-line flags (highest priority). JSON schema::

    {
      "lattice": {"n": 2, "load_total": -29.76, "steps": 100, ...},
      "grid":    {"N": 8, "ranges": [[0.95, 1.05], [0.95, 1.05], [0.95, 1.05], [100, 200]]},
      "hta":     {"tol": 1e-6, "sub_size": 8, "max_rank": 4, "seed": 2718},
      "rom":     {"method": "pod", "modes": 3},
      "mc":      {"samples": 1000, "seed": 2718},
      "paths":   {"db": "snapshots.sndb"}
    }

Without ``--seed`` every random choice uses ``DEFAULT_SEED``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time

import numpy as np

from podhta.errors import PodHtaError
from podhta.fullmodel import LatticeConfig, ParameterPoint, solve_full
from podhta.htucker import EntryOracle, build_hta, fileformat
from podhta.htucker.build import DEFAULT_MAX_RANK, DEFAULT_SUB_SIZE, DEFAULT_TOL
from podhta.numerics import numerical_rank
from podhta.rom import RANK_RTOL, SnapshotDatabase, reduced_model
from podhta.snapio import decode_database, encode_database, encode_run, read_bytes, write_bytes
from podhta.uq import (
    DEFAULT_RANGES, ConstantModel, FullModel, HtaModel, ParameterGrid, ReducedGridModel, enrich_snapshots,
    error_stats, evaluate_indices, grid_point, mc_estimate, sample_indices,
)

DEFAULT_SEED = 2718

DEFAULTS = {
    "lattice": dataclasses.asdict(LatticeConfig()),
    "grid": {"N": 8, "ranges": [list(r) for r in DEFAULT_RANGES]},
    "hta": {"tol": DEFAULT_TOL, "sub_size": DEFAULT_SUB_SIZE, "max_rank": DEFAULT_MAX_RANK, "seed": DEFAULT_SEED},
    "rom": {"method": "pod", "modes": 3},
    "mc": {"samples": 1000, "seed": DEFAULT_SEED},
    "paths": {"db": None},
}

# flag name -> (section, key)
OVERRIDES = {
    "n": ("lattice", "n"), "load": ("lattice", "load_total"), "steps": ("lattice", "steps"),
    "grid": ("grid", "N"), "tol": ("hta", "tol"), "sub_size": ("hta", "sub_size"),
    "max_rank": ("hta", "max_rank"), "method": ("rom", "method"), "modes": ("rom", "modes"),
    "samples": ("mc", "samples"), "db": ("paths", "db"),
}


class CliError(Exception):
    pass


def resolve_config(args) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if getattr(args, "config", None):
        with open(args.config) as fh:
            user = json.load(fh)
        for section, values in user.items():
            if section not in cfg or not isinstance(values, dict):
                raise CliError(f"unknown config section {section!r}")
            unknown = set(values) - set(cfg[section])
            if unknown:
                raise CliError(f"unknown keys in section {section!r}: {sorted(unknown)}")
            cfg[section].update(values)
    for flag, (section, key) in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[section][key] = value
    if getattr(args, "seed", None) is not None:
        cfg["hta"]["seed"] = cfg["mc"]["seed"] = args.seed
    return cfg


def lattice_of(cfg) -> LatticeConfig:
    return LatticeConfig(**cfg["lattice"])


def grid_of(cfg) -> ParameterGrid:
    return ParameterGrid(int(cfg["grid"]["N"]), tuple(tuple(r) for r in cfg["grid"]["ranges"]))


def parse_floats(text, count, what):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise CliError(f"{what}: expected {count} comma-separated numbers, got {text!r}") from exc
    if len(values) != count:
        raise CliError(f"{what}: expected {count} comma-separated numbers, got {text!r}")
    return values


def parse_index(text, grid):
    values = parse_floats(text, grid.d, "--index")
    if any(v != int(v) for v in values):
        raise CliError("--index components must be integers")
    return tuple(int(v) for v in values)


def load_database(path):
    if not path or not os.path.exists(path):
        raise CliError(f"snapshot database not found: {path}")
    db, _configs = decode_database(read_bytes(path))
    return db


def resolve_model(spec, cfg):
    """``full | pod | apod | hta:<path> | const:<value>`` as a grid-index model."""
    grid, lattice = grid_of(cfg), lattice_of(cfg)
    if spec == "full":
        return FullModel(grid, lattice)
    if spec in ("pod", "apod"):
        db = load_database(cfg["paths"]["db"])
        return ReducedGridModel(reduced_model(spec, db, int(cfg["rom"]["modes"]), lattice), grid)
    if spec.startswith("hta:"):
        path = spec[4:]
        if not os.path.exists(path):
            raise CliError(f"HT file not found: {path}")
        h = fileformat.load(path)
        if h.grid_sizes != grid.grid_sizes:
            raise CliError(f"HT file grid {h.grid_sizes} does not match --grid {grid.N}")
        return HtaModel(h)
    if spec.startswith("const:"):
        return ConstantModel(float(spec[6:]))
    raise CliError(f"unknown model {spec!r} (use full, pod, apod, hta:<file> or const:<value>)")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def sampling_fixed(args):
    """Directions held at a constant index: ``--fix-e`` for geometry-only, ``--fix-l`` for E-only sampling."""
    fixed = {}
    if args.fix_e is not None:
        fixed[3] = args.fix_e
    if args.fix_l is not None:
        values = parse_floats(args.fix_l, 3, "--fix-l")
        if any(v != int(v) for v in values):
            raise CliError("--fix-l components must be integers")
        fixed.update({mu: int(v) for mu, v in enumerate(values)})
    return fixed or None


# commands


def cmd_simulate(args, cfg):
    params = ParameterPoint(*parse_floats(args.params, 4, "--params"))
    lattice = lattice_of(cfg)
    res = solve_full(params, lattice)
    print(f"params l = ({params.l1}, {params.l2}, {params.l3}), E = {params.E}")
    print(f"QoI = {res.qoi!r} %")
    print(f"Newton iterations = {res.newton_iterations_total}")
    for event in res.events:
        print(f"event: {event}")
    if not res.converged:
        print("error: simulation did not converge", file=sys.stderr)
        return 1
    write_bytes(args.out, encode_run(res, lattice))
    print(f"wrote {len(res.snapshots)} snapshots to {args.out}")
    return 0


def cmd_build_rom(args, cfg):
    lattice = lattice_of(cfg)
    runs = []
    for text in args.params or ["1,1,1,150"]:
        params = ParameterPoint(*parse_floats(text, 4, "--params"))
        res = solve_full(params, lattice)
        if not res.converged:
            raise CliError(f"precalculation at {text} did not converge")
        runs.append((res, lattice))
        print(f"precalculation {text}: QoI = {res.qoi!r} %, {len(res.snapshots)} snapshots")
    out = args.out or cfg["paths"]["db"] or "snapshots.sndb"
    write_bytes(out, encode_database(runs))
    db = SnapshotDatabase.from_results([r for r, _ in runs])
    rank = numerical_rank(db._svd.singular_values, RANK_RTOL)
    modes = int(cfg["rom"]["modes"])
    # validates m against the data now rather than at first use
    reduced_model(cfg["rom"]["method"], db, modes, lattice)
    print(f"database: s = {db.s}, l = {len(db)}, numerical rank {rank}; {cfg['rom']['method']} with m = {modes} ok")
    print(f"wrote {out}")
    return 0


def cmd_build_hta(args, cfg):
    grid = grid_of(cfg)
    model = resolve_model(args.source, cfg)
    oracle = EntryOracle(model, grid.grid_sizes)
    h = cfg["hta"]
    t0 = time.perf_counter()
    hta = build_hta(oracle, None, grid.grid_sizes, float(h["tol"]), int(h["sub_size"]), int(h["max_rank"]),
                    seed=int(h["seed"]), threads=args.threads)
    wall = time.perf_counter() - t0
    fileformat.save(hta, args.out)
    total = grid.N ** grid.d
    used = hta.info["used_entries"]
    print(f"ranks = {[hta.rank(t) for t in hta.tree.postorder()]}")
    print(f"used entries = {used} of {total} ({100.0 * used / total:.3f} %)")
    print(f"wall time = {wall:.3f} s")
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args, cfg):
    grid = grid_of(cfg)
    model = resolve_model(args.model, cfg)
    index = parse_index(args.index, grid)
    p = grid_point(grid, index)
    print(f"index {index} -> params ({p.l1!r}, {p.l2!r}, {p.l3!r}, {p.E!r})")
    print(f"value = {float(model(index))!r}")
    return 0


def cmd_mc(args, cfg):
    grid = grid_of(cfg)
    model = resolve_model(args.model, cfg)
    n, seed = int(cfg["mc"]["samples"]), int(cfg["mc"]["seed"])
    t0 = time.perf_counter()
    est = mc_estimate(model, grid, n, seed=seed, threads=args.threads, fixed=sampling_fixed(args))
    wall = time.perf_counter() - t0
    if args.out:
        write_csv(args.out, ["sample_count", "mean", "variance"],
                  [(int(c), m, v) for c, m, v in est.trace])
    print(f"mean = {est.mean!r}")
    print(f"variance = {est.variance!r}")
    print(f"samples = {est.n}, seed = {seed}, evaluation time = {wall:.4f} s")
    return 0


def cmd_enrich(args, cfg):
    grid, lattice = grid_of(cfg), lattice_of(cfg)
    if not os.path.exists(args.hta):
        raise CliError(f"HT file of the full model not found: {args.hta}")
    hta_full = fileformat.load(args.hta)
    h = cfg["hta"]
    result = enrich_snapshots(
        hta_full, grid, cfg["rom"]["method"], int(cfg["rom"]["modes"]), args.K, lattice,
        float(h["tol"]), int(h["sub_size"]), int(h["max_rank"]), seed=int(h["seed"]), threads=args.threads,
        log=print,
    )
    write_csv(args.out, ["k", "max_residual", "p1", "p2", "p3", "pE"],
              [(e.k, e.max_residual, *e.p_star) for e in result.trace])
    if args.db_out:
        write_bytes(args.db_out, encode_database([(r, lattice) for r in result.runs]))
        print(f"wrote {args.db_out}")
    for e in result.trace:
        print(f"k = {e.k}: max|r| = {e.max_residual!r} at {e.p_star}")
    print(f"wrote {args.out}")
    return 0


def cmd_compare(args, cfg):
    grid = grid_of(cfg)
    n, seed = int(cfg["mc"]["samples"]), int(cfg["mc"]["seed"])
    indices = sample_indices(grid, n, np.random.default_rng(seed), sampling_fixed(args))
    cache = {}

    def values(spec):
        if spec not in cache:
            cache[spec] = evaluate_indices(resolve_model(spec, cfg), indices, args.threads)
        return cache[spec]

    rows = []
    for pair in args.pair:
        parts = pair.split(",")
        if len(parts) != 2:
            raise CliError(f"--pair expects REF,OTHER, got {pair!r}")
        st = error_stats(zip(values(parts[0]), values(parts[1])))
        rows.append((parts[0], parts[1], st.mean, st.std, st.max, st.min, st.n))
    if args.out:
        write_csv(args.out, ["reference", "other", "mean", "std", "max", "min", "n"], rows)
    print(f"{'reference':>24} {'other':>24} {'mean':>12} {'std':>12} {'max':>12} {'min':>12}")
    for ref, other, mean, std, mx, mn, _n in rows:
        print(f"{ref:>24} {other:>24} {mean:12.4e} {std:12.4e} {mx:12.4e} {mn:12.4e}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate, "build-rom": cmd_build_rom, "build-hta": cmd_build_hta, "eval": cmd_eval,
    "mc": cmd_mc, "enrich": cmd_enrich, "compare": cmd_compare,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, default=1, help="concurrent model evaluations")
    common.add_argument("--n", type=int, help="lattice cells per direction")
    common.add_argument("--load", type=float, help="total top-face load")
    common.add_argument("--steps", type=int, help="load steps")
    common.add_argument("--grid", type=int, help="grid points per parameter direction")
    common.add_argument("--db", help="snapshot database file")
    common.add_argument("--method", choices=["pod", "apod"], help="reduced model kind")
    common.add_argument("--modes", type=int, help="reduced basis size m")

    parser = argparse.ArgumentParser(prog="podhta", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run the full model once")
    p.add_argument("--params", default="1,1,1,150", help="l1,l2,l3,E")
    p.add_argument("--out", default="run.snap", help="snapshot file")

    p = sub.add_parser("build-rom", parents=[common], help="precalculate a snapshot database")
    p.add_argument("--params", action="append", help="l1,l2,l3,E of one precalculation (repeatable)")
    p.add_argument("--out", help="database file (default: --db or snapshots.sndb)")

    hta_flags = argparse.ArgumentParser(add_help=False)
    hta_flags.add_argument("--tol", type=float)
    hta_flags.add_argument("--sub-size", dest="sub_size", type=int)
    hta_flags.add_argument("--max-rank", dest="max_rank", type=int)

    p = sub.add_parser("build-hta", parents=[common, hta_flags], help="HTA of a model over the grid")
    p.add_argument("--source", default="full", choices=["full", "pod", "apod"])
    p.add_argument("--out", default="model.ht", help="HT file")

    p = sub.add_parser("eval", parents=[common], help="evaluate a model at one grid index")
    p.add_argument("--model", required=True)
    p.add_argument("--index", required=True, help="k1,k2,k3,kE (0-based)")

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument("--samples", type=int)
    sampling.add_argument("--fix-e", dest="fix_e", type=int,
                          help="hold the E index fixed (geometry-only sampling)")
    sampling.add_argument("--fix-l", dest="fix_l", help="k1,k2,k3: hold the geometry indices fixed (E-sweep)")

    p = sub.add_parser("mc", parents=[common, sampling], help="Monte Carlo mean and variance")
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="CSV trace (sample_count, mean, variance)")

    p = sub.add_parser("enrich", parents=[common, hta_flags], help="HTA-driven snapshot enrichment")
    p.add_argument("--hta", required=True, help="HT file of the full model")
    p.add_argument("-K", type=int, default=5, help="iterations")
    p.add_argument("--out", default="residuals.csv")
    p.add_argument("--db-out", dest="db_out", help="write the enriched snapshot database")

    p = sub.add_parser("compare", parents=[common, sampling], help="relative error statistics")
    p.add_argument("--pair", action="append", required=True, help="REF,OTHER model specs (repeatable)")
    p.add_argument("--out", help="CSV table")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (CliError, PodHtaError, ValueError, OSError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
