"""Command-line front door: validate, generate, plan.

Exit codes are fixed for CI use: 0 success, 1 score validation errors,
2 parse errors, 3 backend failures (including mid-run truncation),
4 planner failures. Data goes to stdout only when the output path is
"-"; everything else (diagnostics, progress, stats) goes to stderr.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import shlex
import sys
from dataclasses import replace
from typing import Sequence

from . import engine, planner, tokenio
from .backend import Backend, WireBackend
from .errors import (
    BackendError,
    ParameterError,
    ParseError,
    PlanError,
    SegueError,
    UnsupportedOperationError,
)
from .mockbackend import MockBackend
from .score import Diagnostic, Score, has_errors, load_score, save_score, validate_score

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARSE = 2
EXIT_BACKEND = 3
EXIT_PLANNER = 4

API_KEY_ENV = "SEGUE_API_KEY"
LOG_LEVEL_ENV = "SEGUE_LOG_LEVEL"

log = logging.getLogger(__name__)


def _print_diagnostics(diagnostics: Sequence[Diagnostic]) -> None:
    for diag in diagnostics:
        print(str(diag), file=sys.stderr)


def _load_score_file(path: str, *, lenient: bool = False) -> Score:
    """Read and parse a score file; raises ParseError for any problem."""
    try:
        with open(path, "rb") as fp:
            data = fp.read()
    except OSError as exc:
        raise ParseError(f"cannot read score file: {exc}") from None
    warnings: list[Diagnostic] = []
    score = load_score(data, strict=not lenient, warnings=warnings)
    _print_diagnostics(warnings)
    return score


def _write_output(path: str, data: bytes | str) -> None:
    if path == "-":
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
            sys.stdout.buffer.flush()
        else:
            sys.stdout.write(data)
            sys.stdout.flush()
        return
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode) as fp:
        fp.write(data)


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        score = _load_score_file(args.score, lenient=args.lenient)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    diagnostics = validate_score(
        score, override_transition_limit=args.override_transition_limit
    )
    _print_diagnostics(diagnostics)
    if has_errors(diagnostics):
        return EXIT_VALIDATION
    print(
        f"ok: {len(score.segments)} segments, {score.total_duration_seconds:g} s total",
        file=sys.stderr,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def _open_backend(args: argparse.Namespace) -> Backend:
    if args.mock_inprocess:
        return MockBackend()
    if args.backend_cmd:
        return WireBackend.from_command(shlex.split(args.backend_cmd))
    host, _, port = args.backend_tcp.rpartition(":")
    if not host or not port.isdigit():
        raise ParameterError(f"--backend-tcp wants host:port, got {args.backend_tcp!r}")
    return WireBackend.from_tcp(host, int(port))


def cmd_generate(args: argparse.Namespace) -> int:
    try:
        score = _load_score_file(args.score, lenient=args.lenient)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.seed is not None:
        score = replace(score, sampling=replace(score.sampling, seed=args.seed))

    diagnostics = validate_score(
        score, override_transition_limit=args.override_transition_limit
    )
    _print_diagnostics(diagnostics)
    if has_errors(diagnostics):
        return EXIT_VALIDATION

    try:
        backend = _open_backend(args)
    except (BackendError, ParameterError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    try:
        info = backend.handshake()

        sink = None
        if not args.quiet:
            per_second = max(1, round(info.frame_rate))
            total_seconds = score.total_duration_seconds

            def sink(frame_index: int, total: int, params: object) -> None:
                if (frame_index + 1) % per_second == 0:
                    seconds = (frame_index + 1) / info.frame_rate
                    print(
                        f"generated {seconds:.0f}s / {total_seconds:g}s", file=sys.stderr
                    )

        result = engine.generate(
            score,
            backend,
            sink,
            priming_horizon_frames=args.priming_horizon,
            override_transition_limit=args.override_transition_limit,
        )

        if args.format == "jsonl":
            buffer = io.StringIO()
            tokenio.write_jsonl(
                buffer, result.frames, result.per_frame_params, result.stats.to_dict()
            )
            _write_output(args.out, buffer.getvalue())
        else:
            raw = io.BytesIO()
            tokenio.write_binary(
                raw,
                result.frames,
                vocab_size=info.vocab_size,
                channels=info.channels,
                frame_rate=info.frame_rate,
            )
            _write_output(args.out, raw.getvalue())

        if result.truncated:
            print(
                f"truncated: backend failed after {len(result.frames)} frames "
                f"({result.failure}); partial stream written",
                file=sys.stderr,
            )
            return EXIT_BACKEND

        if args.render:
            try:
                decode_info = backend.decode(result.frames, args.render)
            except (BackendError, UnsupportedOperationError) as exc:
                print(f"render failed: {exc}", file=sys.stderr)
                return EXIT_BACKEND
            print(
                f"rendered {decode_info.duration_seconds:g}s of audio to {decode_info.path}",
                file=sys.stderr,
            )

        stats = result.stats
        print(
            f"done: {stats.frame_count} frames ({stats.window_frames} in windows), "
            f"{stats.logits_calls} logits calls, seed {score.sampling.seed}",
            file=sys.stderr,
        )
        return EXIT_OK
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    finally:
        try:
            backend.close()
        except Exception:  # best effort; the stream is already written
            pass


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------


def cmd_plan(args: argparse.Namespace) -> int:
    request = planner.PlanRequest(
        description=args.description,
        total_duration_seconds=args.duration,
        endpoint=args.endpoint,
        model_name=args.model,
        api_key=os.environ.get(API_KEY_ENV, ""),
        max_segments=args.max_segments,
    )
    try:
        if args.dry_run:
            payload = planner.build_request(request)
            _write_output(args.out, json.dumps(payload, indent=2) + "\n")
            return EXIT_OK
        score = planner.plan(request)
    except (PlanError, ParameterError) as exc:
        print(f"planner error: {exc}", file=sys.stderr)
        return EXIT_PLANNER
    _write_output(args.out, save_score(score).decode("utf-8"))
    print(
        f"planned {len(score.segments)} segments totalling "
        f"{score.total_duration_seconds:g} s",
        file=sys.stderr,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segue",
        description="Generate long token sequences by blending between text-prompt conditionings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser("validate", help="check a score file, exit 0 iff clean")
    validate.add_argument("score", help="path to the score JSON file")
    validate.add_argument("--override-transition-limit", action="store_true")
    validate.add_argument("--lenient", action="store_true", help="warn on unknown fields instead of failing")
    validate.set_defaults(func=cmd_validate)

    generate = sub.add_parser("generate", help="run a score against a backend")
    generate.add_argument("score", help="path to the score JSON file")
    source = generate.add_mutually_exclusive_group(required=True)
    source.add_argument("--backend-cmd", help="backend subprocess command line")
    source.add_argument("--backend-tcp", help="backend TCP address as host:port")
    source.add_argument(
        "--mock-inprocess",
        action="store_true",
        help="use the built-in mock backend in-process (test hook)",
    )
    generate.add_argument("--seed", type=int, help="override the score's sampling seed")
    generate.add_argument("--out", default="-", help="token stream path, - for stdout")
    generate.add_argument("--format", choices=("jsonl", "bin"), default="jsonl")
    generate.add_argument("--render", metavar="WAV", help="also decode the frames to this audio file")
    generate.add_argument("--override-transition-limit", action="store_true")
    generate.add_argument("--lenient", action="store_true")
    generate.add_argument("--quiet", action="store_true", help="suppress progress lines")
    generate.add_argument(
        "--priming-horizon",
        type=int,
        default=engine.DEFAULT_PRIMING_HORIZON,
        metavar="FRAMES",
        help="history frames fed to a newly opened context",
    )
    generate.set_defaults(func=cmd_generate)

    plan = sub.add_parser("plan", help="draft a score from a description via an LLM endpoint")
    plan.add_argument("description", help="plain-language description of the piece")
    plan.add_argument("--duration", type=float, required=True, help="total length in seconds")
    plan.add_argument("--endpoint", required=True, help="chat-completions URL")
    plan.add_argument("--model", required=True, help="model name sent to the endpoint")
    plan.add_argument("--max-segments", type=int, default=12)
    plan.add_argument("--out", default="-", help="score file path, - for stdout")
    plan.add_argument(
        "--dry-run", action="store_true", help="print the LLM request without sending it"
    )
    plan.set_defaults(func=cmd_plan)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except SegueError as exc:
        # Anything not mapped to a specific exit code above is a usage bug.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE if isinstance(exc, ParseError) else EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
