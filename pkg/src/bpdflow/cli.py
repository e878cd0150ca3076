"""Command-line front end: ``validate``, ``run``, ``explore`` and ``patterns``.

Machine-readable output goes to standard output; verdicts and other
commentary go to standard error.

Exit codes:

    validate  0 no error diagnostics, 1 otherwise
    run       0 completed or terminated, 2 faulted/failed/step budget
              exceeded, 3 deadlock or quiescent
    explore   0 sound, 3 deadlock/improper/unreachable found, 2 state
              budget exceeded
    any       1 unreadable or rejected input, 64 usage error
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from typing import NoReturn, TextIO

from bpdflow import fixtures
from bpdflow.analyzer import DEFAULT_MAX_STATES, AnalyzerError, check_soundness, explore
from bpdflow.document import parse_definition
from bpdflow.engine import DEFAULT_MAX_STEPS, EngineError, run
from bpdflow.events import ScriptError, parse_script
from bpdflow.expressions import ParseError
from bpdflow.model import ModelError, ProcessDefinition
from bpdflow.validation import has_errors, validate

EX_OK = 0
EX_INPUT = 1
EX_FAULT = 2
EX_STUCK = 3
EX_USAGE = 64

RUN_EXIT = {
    "completed": EX_OK,
    "terminated": EX_OK,
    "faulted": EX_FAULT,
    "failed": EX_FAULT,
    "budget exceeded": EX_FAULT,
    "deadlock": EX_STUCK,
    "quiescent": EX_STUCK,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


class _InputError(Exception):
    pass


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bpdflow", description="Execute and analyze business process diagrams.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("validate", help="print diagnostics, one per line")
    p.add_argument("file")

    p = sub.add_parser("run", help="execute a definition under an event script")
    p.add_argument("file")
    p.add_argument("--events", metavar="SCRIPT", help="JSON-lines event script")
    p.add_argument("--data", metavar="JSON", help="initial case data as a JSON object")
    p.add_argument("--max-steps", type=_positive, default=DEFAULT_MAX_STEPS, metavar="N")
    p.add_argument("--trace", metavar="OUT", help="write the trace here instead of standard output")

    p = sub.add_parser("explore", help="explore the state space and check soundness")
    p.add_argument("file")
    p.add_argument("--max-states", type=_positive, default=DEFAULT_MAX_STATES, metavar="N")
    p.add_argument("--report", metavar="OUT", help="write the report here instead of standard output")

    p = sub.add_parser("patterns", help="list or emit the built-in fixtures")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--emit", metavar="NAME", help="print a fixture definition")
    group.add_argument("--emit-script", metavar="NAME", help="print a fixture's canonical event script")
    return parser


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str | None, text: str, stdout: TextIO) -> None:
    if path is None:
        stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise _InputError(f"cannot write {path}: {exc.strerror}") from None


def _load(path: str) -> ProcessDefinition:
    text = _read(path)
    try:
        return parse_definition(text)
    except ParseError as exc:
        raise _InputError(f"{path}:{exc}") from None


def _cmd_validate(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    definition = _load(args.file)
    diagnostics = validate(definition)
    for d in diagnostics:
        out.write(f"{d}\n")
    return EX_INPUT if has_errors(diagnostics) else EX_OK


def _cmd_run(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    definition = _load(args.file)
    script = []
    if args.events is not None:
        try:
            script = parse_script(_read(args.events))
        except ScriptError as exc:
            raise _InputError(f"{args.events}: {exc}") from None
    data = None
    if args.data is not None:
        try:
            data = json.loads(args.data)
        except json.JSONDecodeError as exc:
            raise _InputError(f"--data: {exc.msg}") from None
        if not isinstance(data, dict):
            raise _InputError("--data: expected a JSON object")
    try:
        trace = run(definition, data, script, max_steps=args.max_steps)
    except EngineError as exc:
        raise _InputError(str(exc)) from None
    _write(args.trace, trace.to_jsonl(), out)
    reason = f": {trace.reason}" if trace.reason else ""
    err.write(f"{trace.verdict}{reason} after {len(trace)} transitions\n")
    return RUN_EXIT[trace.verdict]


def _cmd_explore(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    definition = _load(args.file)
    try:
        graph = explore(definition, max_states=args.max_states)
    except AnalyzerError as exc:
        raise _InputError(str(exc)) from None
    report = check_soundness(graph, definition)
    _write(args.report, report.to_json(), out)
    if report.bounded:
        err.write(f"state budget of {args.max_states} exceeded\n")
        return EX_FAULT
    verdict = "sound" if report.sound else "unsound"
    err.write(f"{verdict}: {len(graph.states)} states, {len(graph.edges)} edges\n")
    return EX_OK if report.sound else EX_STUCK


def _cmd_patterns(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    try:
        if args.emit is not None:
            out.write(fixtures.fixture_text(args.emit))
            return EX_OK
        if args.emit_script is not None:
            out.write(fixtures.script_text(args.emit_script))
            return EX_OK
    except KeyError as exc:
        raise UsageError(f"unknown fixture {exc.args[0]!r}; run 'bpdflow patterns' for the list") from None
    for name, summary in fixtures.FIXTURES.items():
        out.write(f"{name}\t{summary}\n")
    return EX_OK


COMMANDS = {
    "validate": _cmd_validate,
    "run": _cmd_run,
    "explore": _cmd_explore,
    "patterns": _cmd_patterns,
}


def main(argv: Sequence[str] | None = None, stdout: TextIO | None = None, stderr: TextIO | None = None) -> int:
    out = stdout if stdout is not None else sys.stdout
    err = stderr if stderr is not None else sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args, out, err)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EX_USAGE
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EX_OK
    except _InputError as exc:
        err.write(f"error: {exc}\n")
        return EX_INPUT
    except (ModelError, EngineError) as exc:
        err.write(f"error: {exc}\n")
        return EX_INPUT


def entry_point() -> None:
    sys.exit(main())
