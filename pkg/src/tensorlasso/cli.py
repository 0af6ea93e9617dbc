"""Command line entry point: ``tensorlasso verify|search|estimate|render``.

Every option may also come from a config file given with ``--config``: one
``key = value`` per line, keys spelled like the long options without the
leading dashes (``samples = 3000``, ``seeds = 0,1,2``, ``heavy = true``).
``#`` starts a comment.  Command line options override the file.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dictionary import CandidateDictionary, load_or_build_design, sample_inputs
from .experiments import (
    PRESETS,
    ExperimentConfig,
    HeavyConfigError,
    SearchConfig,
    estimate_resources,
    parse_scheme,
    preset,
    render_formula,
    run_experiment,
    run_verification_suite,
)
from .rationalize import verify_exact
from .targets import REFERENCE_NAMES, TargetSpec, build_target, reference_decomposition
from .tensor_core import load_decomposition

# option name -> (type, help)
_OPTIONS = {
    "preset": (str, f"named experiment: {', '.join(sorted(PRESETS))}"),
    "target": (str, "det:N, mm:N,M,P or file:PATH"),
    "scheme": (str, "atoms per mode: entries, pairs, strassen, or a comma list"),
    "samples": (int, "number of random samples N"),
    "seed": (int, "single sampling seed"),
    "seeds": (str, "comma separated seeds, tried in order"),
    "lambda-count": (int, "points on the lambda path"),
    "min-ratio": (float, "smallest lambda as a fraction of lambda_max"),
    "max-den": (int, "largest denominator when snapping coefficients"),
    "tol": (float, "solver KKT tolerance"),
    "restarts": (int, "random-weight restarts per seed"),
    "rounds": (int, "reweighting rounds per restart"),
    "target-terms": (int, "stop once a verified formula has at most this many terms"),
    "threads": (int, "threads for design assembly"),
    "cache-dir": (str, "directory for the design matrix cache"),
    "out": (str, "write the report JSON here (plus .cp.json and .txt next to it)"),
    "heavy": (bool, "allow configurations above the memory budget"),
    "config": (str, "key = value config file"),
}

_COMMON = ("preset", "target", "scheme", "samples", "config")


def _add_options(p: argparse.ArgumentParser, names) -> None:
    for name in names:
        typ, help_ = _OPTIONS[name]
        if typ is bool:
            p.add_argument(f"--{name}", action="store_const", const=True, default=None, help=help_)
        else:
            p.add_argument(f"--{name}", type=typ, default=None, help=help_)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tensorlasso", description="Sparse-regression search for CP decompositions.")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="certify reference or stored decompositions exactly")
    _add_options(v, ("preset", "target", "config", "out"))
    v.add_argument("--reference", choices=REFERENCE_NAMES, help="stored reference decomposition")
    v.add_argument("--decomposition", help="decomposition JSON file to certify")

    s = sub.add_parser("search", help="search for a sparse decomposition")
    _add_options(s, list(_OPTIONS))
    s.add_argument("--dump-design", metavar="PREFIX", help="write PREFIX_D.csv and PREFIX_Y.csv for the first seed")

    e = sub.add_parser("estimate", help="design matrix size for a configuration")
    _add_options(e, _COMMON)

    r = sub.add_parser("render", help="print a decomposition as a formula")
    r.add_argument("--reference", choices=REFERENCE_NAMES)
    r.add_argument("--decomposition", help="decomposition JSON file")
    return parser


def read_config_file(path) -> dict:
    text = Path(path).read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    cp.read_string("[tensorlasso]\n" + text)
    out = {}
    for key, value in cp["tensorlasso"].items():
        name = key.strip().replace("_", "-")
        if name not in _OPTIONS or name == "config":
            raise ValueError(f"unknown config key {key!r}")
        typ = _OPTIONS[name][0]
        if typ is bool:
            out[name] = value.strip().lower() in ("1", "true", "yes", "on")
        else:
            out[name] = typ(value.strip())
    return out


def _merged(args) -> dict:
    opts = read_config_file(args.config) if getattr(args, "config", None) else {}
    for name in _OPTIONS:
        val = getattr(args, name.replace("-", "_"), None)
        if val is not None:
            opts[name] = val
    return opts


def config_from_options(opts: dict) -> ExperimentConfig:
    if "preset" in opts:
        cfg = preset(opts["preset"])
    elif "target" in opts:
        spec = TargetSpec.parse(opts["target"])
        modes = build_target(spec).shape.order
        scheme = parse_scheme(opts.get("scheme", "pairs"), modes)
        cfg = ExperimentConfig("custom", spec, scheme, 0)
        k = CandidateDictionary.build(build_target(spec).shape.dims, list(scheme)).total_candidates
        cfg = replace(cfg, samples=4 * k)
    else:
        raise ValueError("give --preset or --target")
    if "target" in opts and "preset" in opts:
        cfg = replace(cfg, target=TargetSpec.parse(opts["target"]))
    if "scheme" in opts and "preset" in opts:
        cfg = replace(cfg, schemes=parse_scheme(opts["scheme"], len(cfg.schemes)))
    if "samples" in opts:
        cfg = replace(cfg, samples=opts["samples"])
    if "seeds" in opts:
        cfg = replace(cfg, seeds=tuple(int(s) for s in str(opts["seeds"]).split(",") if s.strip()))
    elif "seed" in opts:
        cfg = replace(cfg, seeds=(opts["seed"],))
    solver = cfg.solver
    if "lambda-count" in opts:
        solver = replace(solver, n_lambdas=opts["lambda-count"])
    if "min-ratio" in opts:
        solver = replace(solver, min_ratio=opts["min-ratio"])
    if "tol" in opts:
        solver = replace(solver, tol=opts["tol"])
    search = cfg.search
    for key, field_ in (("restarts", "restarts"), ("rounds", "rounds"), ("target-terms", "target_terms")):
        if key in opts:
            search = replace(search, **{field_: opts[key]})
    rat = cfg.rationalize
    if "max-den" in opts:
        rat = replace(rat, max_denominator=opts["max-den"])
    return replace(
        cfg, solver=solver, search=search, rationalize=rat,
        threads=opts.get("threads", cfg.threads),
        cache_dir=opts.get("cache-dir", cfg.cache_dir),
        heavy=bool(opts.get("heavy", cfg.heavy)),
    )


def _write_outputs(out: str, report_json: dict, decomposition: dict | None, formula: str) -> None:
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report_json, indent=2, sort_keys=True) + "\n")
    stem = path.with_suffix("")
    if decomposition is not None:
        stem.with_suffix(".cp.json").write_text(json.dumps(decomposition, indent=2) + "\n")
    stem.with_suffix(".txt").write_text(formula + "\n")


def _cmd_verify(args) -> int:
    opts = _merged(args)
    if args.decomposition or args.reference:
        decomp = load_decomposition(args.decomposition) if args.decomposition else reference_decomposition(args.reference)
        if "target" not in opts:
            print("verify: --target is required with --decomposition/--reference", file=sys.stderr)
            return 2
        reports = [verify_exact(decomp, build_target(TargetSpec.parse(opts["target"])), opts["target"])]
    elif "preset" in opts:
        cfg = preset(opts["preset"])
        if not cfg.is_verification:
            print(f"verify: preset {cfg.name} is a search; use 'search'", file=sys.stderr)
            return 2
        reports = run_experiment(cfg).certifications
    else:
        reports = run_verification_suite()
    for r in reports:
        print(f"{'PASS' if r.verified else 'FAIL'} {r.target}: {r.term_count} terms"
              + ("" if r.verified else f", first mismatch at {r.witness}"))
    if "out" in opts:
        Path(opts["out"]).write_text(json.dumps([r.to_json() for r in reports], indent=2, sort_keys=True) + "\n")
    return 0 if all(r.verified for r in reports) else 1


def _cmd_search(args) -> int:
    cfg = config_from_options(_merged(args))
    if cfg.is_verification:
        print(f"search: preset {cfg.name} is a verification; use 'verify'", file=sys.stderr)
        return 2
    if args.dump_design:
        target = build_target(cfg.target)
        d = CandidateDictionary.build(target.shape.dims, list(cfg.schemes))
        samples = sample_inputs(target.shape, cfg.samples, cfg.distribution, cfg.seeds[0], cfg.bounds)
        D, Y = load_or_build_design(target, d, samples, cfg.cache_dir, cfg.threads)
        np.savetxt(f"{args.dump_design}_D.csv", D, delimiter=",")
        np.savetxt(f"{args.dump_design}_Y.csv", Y, delimiter=",")
    try:
        report = run_experiment(cfg)
    except HeavyConfigError as exc:
        print(f"search: {exc}", file=sys.stderr)
        return 3
    status = "verified" if report.verified else "not verified"
    print(f"{cfg.name} {report.target}: k={report.candidate_count} N={report.sample_count} "
          f"{status}, {report.term_count} terms, seed {report.seed_verified}, {report.timing:.1f}s")
    if report.formula_text:
        print(report.formula_text)
    out = _merged(args).get("out")
    if out:
        _write_outputs(out, report.to_json(), report.decomposition, report.formula_text)
    return 0 if report.verified else 1


def _cmd_estimate(args) -> int:
    est = estimate_resources(config_from_options(_merged(args)))
    print(json.dumps(est.to_json(), indent=2, sort_keys=True))
    if est.warning:
        print(f"warning: {est.warning}", file=sys.stderr)
    return 0


def _cmd_render(args) -> int:
    if args.decomposition:
        decomp = load_decomposition(args.decomposition)
    elif args.reference:
        decomp = reference_decomposition(args.reference)
    else:
        print("render: give --decomposition or --reference", file=sys.stderr)
        return 2
    print(render_formula(decomp))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"verify": _cmd_verify, "search": _cmd_search, "estimate": _cmd_estimate, "render": _cmd_render}
    try:
        return handler[args.command](args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"tensorlasso {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
