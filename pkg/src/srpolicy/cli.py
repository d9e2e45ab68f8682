"""``srpolicy`` command line. Each subcommand has its own handler below.

Exit codes: 0 success, 1 policy/verification/test failure, 2 environment or usage failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence, TextIO

from . import __version__
from .ast_core import Policy
from .diagnostics import Diagnostic, has_errors
from .emitters import EmitRefused, emit_all, load_emitter_config, parse_targets, scan_bundle, write_bundle
from .parser import parse_file
from .runtime import (
    EvaluationContext,
    EvaluatorConfigError,
    EvaluatorRange,
    MissingEvaluator,
    decide,
    load_registry,
    run_tests,
)
from .verifier import VerificationReport, verify

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_ENV = 2
OUT_ENV = "SRPOLICY_OUT"
DEFAULT_OUT = "out"


class _Env(Exception):
    """Environment or usage failure (exit 2)."""


def _load(path: str) -> tuple[Policy, list[Diagnostic]]:
    try:
        return parse_file(path)
    except FileNotFoundError:
        raise _Env(f"no such file: {path}") from None
    except IsADirectoryError:
        raise _Env(f"is a directory: {path}") from None
    except PermissionError:
        raise _Env(f"permission denied: {path}") from None


def _check(path: str) -> tuple[Policy, list[Diagnostic], Optional[VerificationReport]]:
    policy, diags = _load(path)
    if has_errors(diags):
        return policy, diags, None
    report = verify(policy)
    return policy, diags + report.diagnostics, report


def _print_diags(diags: Sequence[Diagnostic], out: TextIO) -> None:
    for d in diags:
        print(d.render(), file=out)


def _registry(path: Optional[str]):
    try:
        return load_registry(path)
    except FileNotFoundError:
        raise _Env(f"no such evaluator config: {path}") from None
    except EvaluatorConfigError as exc:
        raise _Env(str(exc)) from None


def cmd_check(args: argparse.Namespace, out: TextIO) -> int:
    policy, diags, report = _check(args.path)
    failed = has_errors(diags) or (args.deny_warnings and any(not d.is_error and d.severity.value == "warning" for d in diags))
    if args.format == "json":
        doc = {
            "path": args.path,
            "ok": not failed,
            "source_hash": policy.source_hash if report else None,
            "diagnostics": [d.to_dict() for d in diags],
            "verification": report.to_dict() if report else None,
        }
        print(json.dumps(doc, indent=2), file=out)
    else:
        _print_diags(diags, out)
        counts = {s: sum(1 for d in diags if d.severity.value == s) for s in ("error", "warning", "note")}
        status = "FAILED" if failed else "OK"
        print(f"{status}: {counts['error']} error(s), {counts['warning']} warning(s), {counts['note']} note(s)", file=out)
        if report is not None:
            print(f"source_hash: {policy.source_hash}", file=out)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_build(args: argparse.Namespace, out: TextIO) -> int:
    policy, diags, report = _check(args.path)
    try:
        targets = parse_targets(args.targets)
    except ValueError as exc:
        raise _Env(str(exc)) from None
    config = None
    if args.config:
        try:
            config = load_emitter_config(args.config)
        except FileNotFoundError:
            raise _Env(f"no such emitter config: {args.config}") from None
        except ValueError as exc:
            raise _Env(str(exc)) from None
    if report is None:
        _print_diags(diags, sys.stderr)
        print("build refused: parse errors", file=sys.stderr)
        return EXIT_FAIL
    try:
        bundle = emit_all(policy, targets, config, report=report)
    except EmitRefused as exc:
        _print_diags(exc.diagnostics, sys.stderr)
        print("build refused: verification failed", file=sys.stderr)
        return EXIT_FAIL
    out_dir = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        paths = write_bundle(bundle, out_dir)
    except OSError as exc:
        raise _Env(f"cannot write to {out_dir}: {exc}") from None
    if args.format == "json":
        doc = {
            "source_hash": bundle.source_hash,
            "structural_hashes": bundle.structural_hashes,
            "files": [str(p) for p in paths],
            "diagnostics": [d.to_dict() for d in bundle.diagnostics],
        }
        print(json.dumps(doc, indent=2), file=out)
    else:
        _print_diags(bundle.diagnostics, sys.stderr)
        for p in paths:
            print(p, file=out)
        print(f"source_hash: {bundle.source_hash} ({len(paths)} files)", file=out)
    return EXIT_OK


def cmd_test(args: argparse.Namespace, out: TextIO) -> int:
    policy, diags, report = _check(args.path)
    if report is None or report.errors:
        _print_diags(diags, sys.stderr)
        return EXIT_FAIL
    registry = _registry(args.evaluators)
    try:
        result = run_tests(policy, registry)
    except MissingEvaluator as exc:
        raise _Env(str(exc)) from None
    except EvaluatorRange as exc:
        raise _Env(str(exc)) from None
    if args.format == "json":
        print(json.dumps(result.to_dict(), indent=2), file=out)
    else:
        for r in result.results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: expected {r.expected}, got {r.actual}", file=out)
            if not r.passed:
                for t in r.traces:
                    print("  " + json.dumps(t.to_dict()), file=out)
        print(f"{sum(r.passed for r in result.results)}/{len(result.results)} tests passed", file=out)
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_hash(args: argparse.Namespace, out: TextIO) -> int:
    policy, diags = _load(args.path)
    if has_errors(diags):
        _print_diags(diags, sys.stderr)
        return EXIT_FAIL
    print(policy.source_hash, file=out)
    if args.verify_bundle is None:
        return EXIT_OK
    root = Path(args.verify_bundle)
    if not root.is_dir():
        raise _Env(f"no such bundle directory: {root}")
    scan = scan_bundle(root, policy.source_hash)
    if not scan.consistent and not scan.drifted:
        print(f"no files found under {root}", file=out)
        return EXIT_FAIL
    if scan.ok:
        print(f"consistent: {len(scan.consistent)} files carry {policy.source_hash}", file=out)
        return EXIT_OK
    print(f"drift detected in {len(scan.drifted)} file(s):", file=out)
    for rel, others in scan.drifted.items():
        found = ", ".join(others) if others else "hash missing"
        print(f"  {rel}: {found}", file=out)
    return EXIT_FAIL


def cmd_explain(args: argparse.Namespace, out: TextIO) -> int:
    policy, diags, report = _check(args.path)
    if report is None or report.errors:
        _print_diags(diags, sys.stderr)
        return EXIT_FAIL
    registry = _registry(args.evaluators)
    roles = tuple(r.strip() for r in (args.roles or "").split(",") if r.strip())
    try:
        result = decide(policy, args.input, EvaluationContext(user_roles=roles), registry)
    except (MissingEvaluator, EvaluatorRange) as exc:
        raise _Env(str(exc)) from None
    doc = {"decision": result.backend, "trace": [t.to_dict() for t in result.traces]}
    print(json.dumps(doc, indent=2), file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srpolicy", description="Compiler and verifier for .sr routing policies.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse and verify a policy")
    p.add_argument("path")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--deny-warnings", action="store_true", help="treat warnings as failures")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("build", help="emit artifacts for the selected targets")
    p.add_argument("path")
    p.add_argument("--targets", default="all", help="'all' or a comma list of targets")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--config", help="emitter config YAML (protocol gate overrides)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("test", help="run TEST blocks against mock evaluators")
    p.add_argument("path")
    p.add_argument("--evaluators", help="evaluator config YAML (default: shipped mocks)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("hash", help="print the source hash, optionally checking a built bundle")
    p.add_argument("path")
    p.add_argument("--verify-bundle", metavar="DIR")
    p.set_defaults(func=cmd_hash)

    p = sub.add_parser("explain", help="route one input through every tree and print the trace")
    p.add_argument("path")
    p.add_argument("--input", required=True)
    p.add_argument("--roles", default="", help="comma-separated user roles")
    p.add_argument("--evaluators", help="evaluator config YAML (default: shipped mocks)")
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv: Optional[Sequence[str]] = None, out: Optional[TextIO] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ENV if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args, out or sys.stdout)
    except _Env as exc:
        print(f"srpolicy: {exc}", file=sys.stderr)
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
