"""Command line entry point: ``hotspots {classify,run,verify,profile}``.

Exit codes
----------
0 success; 1 a tolerance check failed (``run``) or a criterion failed
(``verify``); 2 configuration error; 3 potential validation failure;
4 ambiguous classification (the report is still written); 5 evolution
failure; 6 analysis failure.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

from . import scenario as scn
from .errors import (AmbiguousClass, ConditionVError, ConfigError, DomainEscape, HotSpotsError,
                     InsufficientSpan, LinearSolveFailure, NoRoot, OutOfDomain, PotentialError,
                     ProfileVanishes, StiffnessFailure, UnsupportedRegime)

EXIT_OK = 0
EXIT_CHECKS = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_AMBIGUOUS = 4
EXIT_EVOLUTION = 5
EXIT_ANALYSIS = 6

VALIDATION_ERRORS = (ConditionVError, PotentialError, ProfileVanishes, StiffnessFailure)
EVOLUTION_ERRORS = (DomainEscape, LinearSolveFailure)
ANALYSIS_ERRORS = (InsufficientSpan, NoRoot, UnsupportedRegime, OutOfDomain)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hotspots", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="scenario YAML file or the name of a bundled scenario")
        sp.add_argument("--out", help="output directory (overrides outputs.directory)")
        sp.add_argument("--grid-cells", type=int, help="radial cells per mode")
        sp.add_argument("--t-end", type=float, help="final time")
        sp.add_argument("--seed", type=int, help="seed recorded in the reports")
        sp.add_argument("--quiet", action="store_true", help="suppress the console summary")

    common(sub.add_parser("classify", help="validate, classify and predict; write classification.json"))
    common(sub.add_parser("run", help="full pipeline with trajectory and comparison outputs"))
    common(sub.add_parser("profile", help="write the harmonic profile tables"))
    v = sub.add_parser("verify", help="run the acceptance suite")
    common(v, config_required=False)
    v.add_argument("--tests", help="path to test_acceptance.py (default: the checkout's tests/)")
    sub.add_parser("list", help="list the bundled scenarios")
    return p


def _load(args) -> scn.Scenario:
    sc = scn.load_scenario(args.config)
    sc = sc.with_overrides(grid_cells=args.grid_cells, t_end=args.t_end, out=args.out)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    return sc


def _say(args, text):
    if not args.quiet:
        print(text)


def _classify(args) -> int:
    sc = _load(args)
    prep = scn.prepare(sc)
    path = scn.write_classification(prep, sc.outputs["directory"])
    cls = prep.classification
    _say(args, f"class {cls.tag}, A = {cls.a_exponent:.6g}, c* = {cls.c_star:.6g}")
    if prep.ambiguous:
        print(f"ambiguous classification: evidence {cls.evidence}; report at {path}", file=sys.stderr)
        return EXIT_AMBIGUOUS
    if prep.prediction is not None:
        _say(args, f"case {prep.prediction.case_tag}: {prep.prediction.radius_law.descriptor}")
    _say(args, f"report: {path}")
    return EXIT_OK


def _profile(args) -> int:
    sc = _load(args)
    prep = scn.prepare(sc)
    paths = scn.write_profiles(prep, sc.outputs["directory"])
    scn.write_classification(prep, sc.outputs["directory"])
    for p in paths:
        _say(args, str(p))
    return EXIT_AMBIGUOUS if prep.ambiguous else EXIT_OK


def _run(args) -> int:
    sc = _load(args)
    prep = scn.prepare(sc)
    if prep.ambiguous:
        path = scn.write_classification(prep, sc.outputs["directory"])
        print(f"ambiguous classification; report at {path}", file=sys.stderr)
        return EXIT_AMBIGUOUS
    try:
        run = scn.evolve(prep)
    except EVOLUTION_ERRORS as exc:
        print(f"evolution error: {exc}", file=sys.stderr)
        return EXIT_EVOLUTION
    try:
        res = scn.analyze(prep, run)
    except ANALYSIS_ERRORS as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    scn.write_outputs(res)
    _say(args, scn.format_summary(res))
    return EXIT_OK if res.passed else EXIT_CHECKS


def _default_tests() -> Path:
    return Path(__file__).resolve().parents[2] / "tests" / "test_acceptance.py"


def _verify(args) -> int:
    tests = Path(args.tests) if args.tests else _default_tests()
    if not tests.is_file():
        print(f"acceptance suite not found at {tests}; pass --tests", file=sys.stderr)
        return EXIT_CONFIG
    env = dict(os.environ)
    if args.grid_cells is not None:
        env["HOTSPOTS_VERIFY_GRID_CELLS"] = str(args.grid_cells)
    if args.t_end is not None:
        env["HOTSPOTS_VERIFY_T_END"] = str(args.t_end)
    cmd = [sys.executable, "-m", "pytest", str(tests), "-s" if not args.quiet else "-q"]
    proc = subprocess.run(cmd, env=env, check=False)
    return EXIT_OK if proc.returncode == 0 else EXIT_CHECKS


def _list(args) -> int:
    for name in scn.bundled_scenarios():
        print(name)
    return EXIT_OK


COMMANDS = {"classify": _classify, "run": _run, "verify": _verify, "profile": _profile, "list": _list}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        where = f" (key {exc.key})" if exc.key else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VALIDATION_ERRORS as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AmbiguousClass as exc:
        print(f"ambiguous classification: {exc}", file=sys.stderr)
        return EXIT_AMBIGUOUS
    except ANALYSIS_ERRORS as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except HotSpotsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
