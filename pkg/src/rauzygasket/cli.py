"""Command-line front door.

Machine-readable output only on stdout (JSON unless --format csv where
supported); logs on stderr.  Exit codes: 0 success (a hole is a result,
not a failure), 1 invariant violation, 2 bad input, 3 budget
insufficiency, 4 I/O error.  Stochastic commands take --seed (default:
RAUZY_SEED env var, else 0, always echoed) and --workers; results are
bit-identical for any worker count.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .induction import (
    CYC,
    SWAP,
    AcceleratedStep,
    Hole,
    HoleAfter,
    HoleAt,
    InductionError,
    Survived,
    Tie,
    TieAfter,
    accelerated_step,
    classify_thin,
    format_scalar,
    make_system,
    parse_fraction,
    rauzy_step,
)
from .graph import build_graph, verify_complete_implies_positive
from .markov import (
    ChartPoint,
    HoleCell,
    accelerated_step_batch,
    cell_of,
    chaos_game,
    jacobian,
    rasterize,
    sample_sorted_simplex,
    write_pgm,
    write_points_binary,
    write_points_csv,
)
from .measures import (
    NAMED_LOOPS,
    kerckhoff_exact_probability,
    mc_balance,
    mc_kerckhoff,
    roof,
    roof_tail,
)
from .dimension import (
    BracketTooWide,
    depth_totals,
    dimension_report,
    enumerate_cylinders,
    survivor_mass,
)

log = logging.getLogger("rauzygasket")

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_BAD_INPUT = 2
EXIT_BUDGET = 3
EXIT_IO = 4


def _provenance(args, seed=None) -> dict:
    flags = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func",) and v is not None
    }
    out = {"version": __version__, "flags": {k: str(v) for k, v in flags.items()}}
    if seed is not None:
        out["seed"] = seed
    return out


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")


def _seed_of(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("RAUZY_SEED")
    return int(env) if env else 0


# --- step / classify -------------------------------------------------------

def cmd_step(args) -> int:
    system = make_system(*(parse_fraction(x) for x in args.lengths))
    records = []
    current = system
    for i in range(1, args.iters + 1):
        out = accelerated_step(current) if args.accelerated else rauzy_step(current)
        if isinstance(out, (Hole, HoleAfter)):
            rec = {"iteration": i, "outcome": "hole"}
            if isinstance(out, HoleAfter):
                rec["substeps"] = out.substeps
            records.append(rec)
            break
        if isinstance(out, (Tie, TieAfter)):
            records.append({"iteration": i, "outcome": "tie"})
            break
        rec = {
            "iteration": i,
            "outcome": "continue",
            "winner": out.winner,
            "n": out.n if isinstance(out, AcceleratedStep) else 1,
            "matrix": [list(r) for r in out.matrix],
            "lengths": [format_scalar(x) for x in out.system.lengths],
            "order": list(out.system.order),
        }
        records.append(rec)
        current = out.system
    _emit({"provenance": _provenance(args), "trace": records})
    return EXIT_OK


def cmd_classify(args) -> int:
    system = make_system(*(parse_fraction(x) for x in args.lengths))
    out = classify_thin(system, args.iters)
    if isinstance(out, Survived):
        result = {"outcome": "survived", "depth": out.depth}
    elif isinstance(out, HoleAt):
        result = {"outcome": "hole", "iteration": out.iteration}
    else:
        result = {"outcome": "tie", "iteration": out.iteration}
    _emit({"provenance": _provenance(args), "classification": result})
    return EXIT_OK


# --- graph -------------------------------------------------------------------

def cmd_graph(args) -> int:
    graph = build_graph()
    if args.format == "dot":
        sys.stdout.write(graph.to_dot() + "\n")
    else:
        payload = graph.to_json()
        payload["provenance"] = _provenance(args)
        _emit(payload)
    return EXIT_OK


# --- cylinders ----------------------------------------------------------------

def cmd_cylinders(args) -> int:
    floor = parse_fraction(args.floor) if args.floor else Fraction(0)
    first = {"provenance": _provenance(args)}
    sys.stdout.write(json.dumps(first) + "\n")
    for cyl in enumerate_cylinders(args.depth, measure_floor=floor, n_cap=args.ncap):
        sys.stdout.write(json.dumps(cyl.to_json()) + "\n")
    return EXIT_OK


# --- dimension ------------------------------------------------------------------

def cmd_dimension(args) -> int:
    seed = _seed_of(args)
    floor = parse_fraction(args.floor) if args.floor else Fraction(1, 10**12)
    report = dimension_report(
        delta_depth=args.depth,
        alpha_depth=args.acc_depth,
        n_cap=args.ncap,
        measure_floor=floor,
        points=args.points,
        seed=seed,
        workers=args.workers,
    )
    lo, hi = survivor_mass(1)
    payload = report.to_json()
    payload["survivor_depth1"] = [format_scalar(lo), format_scalar(hi)]
    payload["provenance"] = _provenance(args, seed=seed)
    _emit(payload)
    return EXIT_OK


# --- tail ------------------------------------------------------------------------

def cmd_tail(args) -> int:
    seed = _seed_of(args)
    loop = NAMED_LOOPS[args.loop]()
    t_grid = [float(x) for x in args.t_grid.split(",")] if args.t_grid else None
    curve = roof_tail(
        loop,
        samples=args.samples,
        t_grid=t_grid,
        seed=seed,
        cap=args.cap,
        workers=args.workers,
        loop_name=args.loop,
    )
    if args.format == "csv":
        prov = f"# version={__version__} seed={seed} loop={args.loop} samples={args.samples}"
        sys.stdout.write(prov + "\n" + curve.to_csv() + "\n")
    else:
        payload = curve.to_json()
        payload["provenance"] = _provenance(args, seed=seed)
        _emit(payload)
    return EXIT_OK


# --- render -----------------------------------------------------------------------

def cmd_render(args) -> int:
    seed = _seed_of(args)
    try:
        width, height = (int(x) for x in args.size.lower().split("x"))
    except ValueError:
        log.error("size must look like 1024x1024")
        return EXIT_BAD_INPUT
    if width < 64 or height < 64:
        log.error("size must be at least 64x64")
        return EXIT_BAD_INPUT
    points = chaos_game(args.points, seed=seed, workers=args.workers)
    image = rasterize(points, width, height)
    prov = {"version": __version__, "seed": seed, "points": args.points}
    try:
        with open(args.out, "wb") as fh:
            write_pgm(image, fh, provenance=prov)
    except OSError as exc:
        log.error("cannot write %s: %s", args.out, exc)
        return EXIT_IO
    _emit({"provenance": _provenance(args, seed=seed), "out": args.out,
           "occupied_pixels": int(np.count_nonzero(image))})
    return EXIT_OK


def cmd_points(args) -> int:
    seed = _seed_of(args)
    points = chaos_game(args.points, seed=seed, workers=args.workers)
    prov = {"version": __version__, "seed": seed, "points": args.points}
    try:
        if args.format == "csv":
            with open(args.out, "w") as fh:
                write_points_csv(points, fh, provenance=prov)
        else:
            with open(args.out, "wb") as fh:
                write_points_binary(points, fh)
    except OSError as exc:
        log.error("cannot write %s: %s", args.out, exc)
        return EXIT_IO
    _emit({"provenance": _provenance(args, seed=seed), "out": args.out})
    return EXIT_OK


# --- distortion --------------------------------------------------------------------

def _pull_back(n: int, kind: str, ya: np.ndarray, yb: np.ndarray):
    """Vectorized inverse branch: chart preimages of image points under
    the (n, kind) cell."""
    yc = 1.0 - ya - yb
    if kind == SWAP:
        v0 = n * ya + yb + n * yc
        v1, v2 = ya, yc
    else:
        v0 = n * ya + n * yb + yc
        v1, v2 = ya, yb
    t = v0 + v1 + v2
    return v0 / t, v1 / t


def distortion_experiment(samples: int, seed: int, n_max: int = 100):
    """Worst observed margin of the distortion bound over same-cell pairs,
    stratified over every counter n <= n_max and both endings."""
    rng = np.random.default_rng((seed, 7))
    per = max(1, samples // (2 * n_max))
    worst_ratio = 0.0
    worst_cell = None
    pairs = 0
    for n in range(1, n_max + 1):
        for kind in (SWAP, CYC):
            ya, yb = sample_sorted_simplex(rng, 2 * per)
            pa, pb = _pull_back(n, kind, ya, yb)
            a2, b2, n_chk, kind_chk, d, alive = accelerated_step_batch(pa, pb)
            ok = alive & (n_chk == n) & (kind_chk == (0 if kind == SWAP else 1))
            j = 1.0 / d**3
            j1, j2 = j[0::2], j[1::2]
            x1, y1v = a2[0::2], b2[0::2]
            x2, y2v = a2[1::2], b2[1::2]
            good = ok[0::2] & ok[1::2]
            dist = np.hypot(x1 - x2, y1v - y2v)
            lhs = np.abs(j1 / j2 - 1.0)
            nz = good & (dist > 0)
            if nz.any():
                ratios = lhs[nz] / dist[nz]
                peak = float(ratios.max())
                if peak > worst_ratio:
                    worst_ratio = peak
                    worst_cell = {"n": n, "kind": kind}
            pairs += int(np.count_nonzero(good))
    return {
        "pairs": pairs,
        "worst_distortion_ratio": worst_ratio,
        "distortion_constant": 36.0,
        "worst_cell": worst_cell,
    }


def cmd_distortion(args) -> int:
    seed = _seed_of(args)
    result = distortion_experiment(args.samples, seed)
    ok = result["worst_distortion_ratio"] <= 36.0
    result["pass"] = ok
    result["provenance"] = _provenance(args, seed=seed)
    _emit(result)
    return EXIT_OK if ok else EXIT_VIOLATION


# --- verify -------------------------------------------------------------------------

def _suite_lemma2(args, seed):
    report = verify_complete_implies_positive(12)
    return {
        "name": "lemma2",
        "paths_covered": report["paths_covered"],
        "violations": len(report["violations"]),
        "pass": report["ok"],
    }


def expansion_experiment(samples: int, seed: int, n_max: int = 100):
    """Jacobian bounds (4/3)^3 < |DT| < (n+1)^3 on random non-hole points."""
    rng = np.random.default_rng((seed, 11))
    checked = 0
    failures = 0
    worst = math.inf
    lower = (4.0 / 3.0) ** 3
    while checked < samples:
        a, b = sample_sorted_simplex(rng, 2 * samples)
        _, _, n, _, d, alive = accelerated_step_batch(a, b)
        keep = alive & (n <= n_max)
        n = n[keep][: samples - checked]
        d = d[keep][: samples - checked]
        j = 1.0 / d**3
        hi = (n + 1.0) ** 3
        failures += int(np.count_nonzero((j <= lower) | (j >= hi)))
        worst = min(worst, float((j - lower).min()), float((hi - j).min()))
        checked += j.size
    return {"checked": checked, "failures": failures, "worst_margin": worst}


def _suite_lemma3(args, seed):
    samples = args.samples or 10**5
    exp = expansion_experiment(samples, seed)
    dist = distortion_experiment(samples, seed)
    return {
        "name": "lemma3",
        "expansion_checked": exp["checked"],
        "expansion_failures": exp["failures"],
        "worst_expansion_margin": exp["worst_margin"],
        "distortion_pairs": dist["pairs"],
        "worst_distortion_ratio": dist["worst_distortion_ratio"],
        "pass": exp["failures"] == 0 and dist["worst_distortion_ratio"] <= 36.0,
    }


def _suite_kerckhoff(args, seed):
    samples = args.samples or 10**6
    checks = []
    ok = True
    for t in (2.0, 5.0, 10.0, 100.0):
        freq = mc_kerckhoff(t, samples=samples, seed=seed, workers=args.workers)
        bound = 1.0 / t
        sigma = math.sqrt(bound * (1 - bound) / samples)
        passed = freq <= bound + 3 * sigma
        ok = ok and passed
        checks.append({
            "T": t,
            "frequency": freq,
            "bound": bound,
            "exact": float(kerckhoff_exact_probability(t)),
            "margin": bound + 3 * sigma - freq,
            "pass": passed,
        })
    return {"name": "kerckhoff", "samples": samples, "checks": checks, "pass": ok}


def _suite_roof_jacobian(args, seed):
    rng = np.random.default_rng((seed, 13))
    count = args.samples or 10**4
    a, b = sample_sorted_simplex(rng, 4 * count)
    keep = a > 0.5
    a, b = a[keep][:count], b[keep][:count]
    worst = 0.0
    checked = 0
    for x, y in zip(a, b):
        p = ChartPoint(float(x), float(y))
        cell = cell_of(p)
        if isinstance(cell, HoleCell):
            continue
        r = roof(p, [(cell.n, cell.kind)])
        j = jacobian(p)
        rel = abs(math.exp(3.0 * r) - j) / j
        worst = max(worst, rel)
        checked += 1
    return {
        "name": "roof-jacobian",
        "checked": checked,
        "worst_relative_error": worst,
        "pass": worst < 1e-9,
    }


def _suite_balance(args, seed):
    samples = args.samples or 10**5
    grid = [1.5, 2.0, 5.0, 10.0, 50.0, 100.0, 1000.0, 10000.0]
    rows = mc_balance(grid, samples=samples, seed=seed, workers=args.workers)
    witnesses = [r for r in rows if r["probability"] > 1.0 / r["C"]]
    return {
        "name": "balance",
        "samples": samples,
        "checks": rows,
        "witness_C": witnesses[0]["C"] if witnesses else None,
        "pass": bool(witnesses),
    }


def _suite_partition(args, seed):
    checks = []
    ok = True
    for depth in (1, 2):
        totals = depth_totals(depth, n_cap=32)
        exact = totals["total"] == 1
        ok = ok and exact
        checks.append({
            "depth": depth,
            "sum": format_scalar(totals["total"]),
            "pass": exact,
        })
    lo, hi = survivor_mass(1)
    contains = lo <= Fraction(3, 4) <= hi
    ok = ok and contains
    checks.append({
        "survivor_depth1": [format_scalar(lo), format_scalar(hi)],
        "contains_3_4": contains,
        "pass": contains,
    })
    return {"name": "partition", "checks": checks, "pass": ok}


_SUITES = {
    "lemma2": _suite_lemma2,
    "lemma3": _suite_lemma3,
    "kerckhoff": _suite_kerckhoff,
    "roof-jacobian": _suite_roof_jacobian,
    "partition": _suite_partition,
    "balance": _suite_balance,
}


def cmd_verify(args) -> int:
    seed = _seed_of(args)
    report = _SUITES[args.suite](args, seed)
    if args.format == "csv" and "checks" in report:
        keys = sorted({k for row in report["checks"] for k in row if k != "pass"})
        sys.stdout.write(f"# version={__version__} seed={seed} suite={args.suite}\n")
        sys.stdout.write(",".join(keys) + "\n")
        for row in report["checks"]:
            sys.stdout.write(",".join(str(row.get(k, "")) for k in keys) + "\n")
        return EXIT_OK if report["pass"] else EXIT_VIOLATION
    report["provenance"] = _provenance(args, seed=seed)
    _emit(report)
    return EXIT_OK if report["pass"] else EXIT_VIOLATION


# --- parser --------------------------------------------------------------------------

def _add_common(p, seed=True, workers=True):
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (default: RAUZY_SEED env var or 0)")
    if workers:
        p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rauzy-gasket",
        description="Exact Rauzy induction, its Markov map, and dimension bounds",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("step", help="run induction steps on exact lengths")
    p.add_argument("lengths", nargs=3, help='three rationals "p/q" summing to 1')
    p.add_argument("--iters", type=int, default=1)
    p.add_argument("--accelerated", action="store_true")
    p.set_defaults(func=cmd_step)

    p = sub.add_parser("classify", help="probe thin type up to a depth")
    p.add_argument("lengths", nargs=3)
    p.add_argument("--iters", type=int, default=50)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("graph", help="dump the induction graph")
    p.add_argument("--format", choices=("dot", "json"), default="json")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("cylinders", help="exact cylinder enumeration (JSON lines)")
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--ncap", type=int, default=64)
    p.add_argument("--floor", default=None, help='measure floor as "p/q"')
    p.set_defaults(func=cmd_cylinders)

    p = sub.add_parser("dimension", help="full dimension pipeline report")
    p.add_argument("--depth", type=int, default=10,
                   help="elementary depth for the decay rate")
    p.add_argument("--acc-depth", type=int, default=2,
                   help="accelerated depth for the fast-decay exponent")
    p.add_argument("--ncap", type=int, default=128)
    p.add_argument("--floor", default=None)
    p.add_argument("--points", type=int, default=10**6)
    _add_common(p)
    p.set_defaults(func=cmd_dimension)

    p = sub.add_parser("tail", help="first-return roof tail")
    p.add_argument("--loop", choices=sorted(NAMED_LOOPS), default="ccc")
    p.add_argument("--samples", type=int, default=10**5)
    p.add_argument("--cap", type=int, default=10**4)
    p.add_argument("--t-grid", default=None, help="comma-separated thresholds")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_common(p)
    p.set_defaults(func=cmd_tail)

    p = sub.add_parser("render", help="rasterize the gasket to a PGM file")
    p.add_argument("--points", type=int, default=10**6)
    p.add_argument("--size", default="1024x1024")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("points", help="emit a chaos-game point cloud")
    p.add_argument("--points", type=int, default=10**5)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_points)

    p = sub.add_parser("distortion", help="distortion-bound experiment")
    p.add_argument("--samples", type=int, default=10**5)
    _add_common(p)
    p.set_defaults(func=cmd_distortion)

    p = sub.add_parser("verify", help="named invariant suites")
    p.add_argument("--suite", choices=sorted(_SUITES), required=True)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except InductionError as exc:
        log.error("%s", exc)
        return EXIT_BAD_INPUT
    except BracketTooWide as exc:
        log.error("%s", exc)
        return EXIT_BUDGET
    except (ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_BAD_INPUT
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
