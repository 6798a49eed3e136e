"""Command-line interface: ``kkperturb gen | run | report | factor | dist``.

Exit codes: 0 all asserted bounds pass, 1 a bound is violated, 2 configuration
error, 3 numerical failure (singular input, spectral gap, ...).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import InvalidConfig, KKError, NumericalFailure
from .experiments import (
    aggregate_rows,
    batch_exit_code,
    dump_reports,
    parse_reports,
    rows_to_csv,
    run_batch,
    summarise,
)
from .factorization import FactorizationConfig, RowElement, search_length2
from .metrics import amplified_distance, kk_distance, row_distance
from .perturbation import CHECK_TOL, sample_rows
from .scenarios import (
    PRESETS,
    build_instance,
    dump_scenarios,
    expand_generation_config,
    load_yaml,
    parse_scenarios,
    preset_scenario,
)

log = logging.getLogger("kkperturb")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _write(text: str, output):
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


def _read(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfig(f"cannot read {path}: {exc.strerror}") from None


def _load_scenarios(path):
    return parse_scenarios(_read(path))


def cmd_gen(args) -> int:
    if args.config:
        doc, _ = load_yaml(_read(args.config))
        scenarios = expand_generation_config(doc)
    elif args.preset:
        seeds = args.seeds if args.seeds else [args.seed if args.seed is not None else 0]
        scenarios = [preset_scenario(args.preset, eps, s) for eps in args.epsilon for s in seeds]
    else:
        raise InvalidConfig("gen needs a config file or --preset")
    _write(dump_scenarios(scenarios), args.output)
    return EXIT_OK


def cmd_run(args) -> int:
    scenarios = _load_scenarios(args.scenario)
    reports = run_batch(scenarios, args.tolerance, args.n_max, args.seed, args.jobs)
    _write(dump_reports(reports), args.output)
    for r in reports:
        state = "error: " + r["error"] if r["status"] == "error" else (
            "pass" if all(c["pass"] for c in r["checks"] if c["asserted"]) else "FAIL")
        log.info("%s: %s (%.1fs)", r["scenario_id"], state, r["wall_time"])
    return batch_exit_code(reports)


def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        reports += parse_reports(_read(path), str(path))
    rows = aggregate_rows(reports)
    _write(rows_to_csv(rows), args.output)
    stream = sys.stderr if args.output in (None, "-") else sys.stdout
    for line in summarise(rows):
        print(line, file=stream)
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_VIOLATION


def cmd_factor(args) -> int:
    out = []
    for scn in _load_scenarios(args.scenario):
        inst = build_instance(scn)
        alg = inst.A if args.algebra == "A" else inst.B
        rng = np.random.default_rng([scn.seed if args.seed is None else args.seed, 23])
        entries = []
        for m in range(1, args.n_max + 1):
            for x in sample_rows(alg, m, args.rows, rng):
                row = RowElement(np.array(np.split(x, m, axis=1)), alg)
                res = search_length2(row, FactorizationConfig(tolerance=args.tolerance))
                entries.append({"width": m, "success": res.success, "ratio": float(res.ratio),
                                "residual": float(res.residual)})
        ratios = [e["ratio"] for e in entries if e["success"]]
        out.append({"scenario_id": scn.id, "algebra": args.algebra, "rows": entries,
                    "max_ratio": max(ratios) if ratios else None})
    _write(yaml.safe_dump({"factorizations": out}, sort_keys=False), args.output)
    return EXIT_OK


def cmd_dist(args) -> int:
    out = []
    for scn in _load_scenarios(args.scenario):
        inst = build_instance(scn)
        overrides = {"amplification_cutoff": args.n_max}
        if args.seed is not None:
            overrides["seed"] = args.seed
        cfg = scn.metric_config(**overrides)
        kk = kk_distance(inst.A, inst.B, cfg)
        row = row_distance(inst.A, inst.B, cfg, args.n_max)
        amp = [amplified_distance(inst.A, inst.B, n, cfg) for n in range(1, args.n_max + 1)]
        out.append({
            "scenario_id": scn.id,
            "kk": [float(kk.lower), float(kk.upper)],
            "row": [float(row.lower), float(row.upper)],
            "row_per_n": [[int(n), float(lo), float(up)] for n, lo, up in row.details["per_n"]],
            "amplified": [[n + 1, float(b.lower), float(b.upper)] for n, b in enumerate(amp)],
        })
    _write(yaml.safe_dump({"distances": out}, sort_keys=False), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel")
    common.add_argument("--tolerance", type=float, default=CHECK_TOL, help="tolerance for identity checks")
    common.add_argument("--n-max", type=int, default=4, help="row amplification cutoff")
    common.add_argument("--output", "-o", default=None, help="output file (default: stdout)")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="kkperturb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write a scenario file")
    p.add_argument("config", nargs="?", help="generation config (YAML with a 'generate' list)")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--epsilon", type=float, nargs="+", default=[1e-5], help="||u0 - 1|| values")
    p.add_argument("--seeds", type=int, nargs="+", help="several seeds, one scenario each")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", parents=[common], help="run the checks of a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", parents=[common], help="aggregate report files into CSV")
    p.add_argument("reports", nargs="*")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("factor", parents=[common], help="length-2 factorisation search on sampled rows")
    p.add_argument("scenario")
    p.add_argument("--algebra", choices=("A", "B"), default="A")
    p.add_argument("--rows", type=int, default=3, help="rows sampled per width")
    p.set_defaults(func=cmd_factor)

    p = sub.add_parser("dist", parents=[common], help="metric brackets between A and B")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_dist)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.jobs < 1 or args.n_max < 1 or args.tolerance <= 0:
        print("error: --jobs and --n-max must be positive, --tolerance > 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except KKError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
