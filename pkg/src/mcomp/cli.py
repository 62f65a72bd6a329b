"""``mcomp`` command line: compose, weave, query, validate.

Exit codes: 0 success, 1 diagnostics or unreadable input, 2 runtime
composition failure.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from mcomp.dsl import CompositionSpec, check_spec, parse_spec, print_spec
from mcomp.engine import execute, result_to_dict
from mcomp.errors import CompositionError, MCompError, SpecError, UnknownLinkError
from mcomp.model import Metamodel, dumps, model_to_dict, read_metamodel, read_model
from mcomp.trace import (
    SIDES,
    children,
    export_dot,
    links_for_element,
    parents,
    trace_execution,
    trace_from_dict,
    trace_from_model,
    trace_to_dict,
)
from mcomp.weaver import weave_traceability

OK, DIAGNOSTICS, RUNTIME = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    spec: Path
    left: Path
    right: Path
    metamodels: tuple[Path, ...]
    out: Path
    dot: bool = False
    match_trace: bool = False
    via_weaver: bool = False


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise _Fail(DIAGNOSTICS, f"{path}: {exc.strerror or exc}") from exc


def _load_spec(path: Path, metamodels: dict[str, Metamodel] | None = None) -> CompositionSpec:
    try:
        spec = parse_spec(_read_text(path))
    except SpecError as exc:
        raise _Fail(DIAGNOSTICS, "\n".join(f"{path}:{d}" for d in exc.diagnostics)) from exc
    if metamodels is not None:
        diagnostics = check_spec(spec, metamodels)
        if diagnostics:
            raise _Fail(DIAGNOSTICS, "\n".join(f"{path}:{d}" for d in diagnostics))
    return spec


def _load_metamodels(paths: Sequence[Path]) -> dict[str, Metamodel]:
    out: dict[str, Metamodel] = {}
    for path in paths:
        try:
            mm = read_metamodel(path)
        except OSError as exc:
            raise _Fail(DIAGNOSTICS, f"{path}: {exc.strerror or exc}") from exc
        except MCompError as exc:
            raise _Fail(DIAGNOSTICS, f"{path}: {exc}") from exc
        out[mm.name] = mm
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def cmd_compose(config: RunConfig) -> int:
    metamodels = _load_metamodels(config.metamodels)
    spec = _load_spec(config.spec, metamodels)
    models = []
    for path, decl in ((config.left, spec.left), (config.right, spec.right)):
        try:
            model = read_model(path, metamodels)
        except OSError as exc:
            raise _Fail(DIAGNOSTICS, f"{path}: {exc.strerror or exc}") from exc
        except MCompError as exc:
            raise _Fail(DIAGNOSTICS, f"{path}: {exc}") from exc
        if model.metamodel != decl.metamodel:
            raise _Fail(
                DIAGNOSTICS, f"{path}: model conforms to {model.metamodel!r} but {decl.alias} expects {decl.metamodel!r}"
            )
        models.append(model)
    left, right = models

    if config.via_weaver:
        try:
            woven, _ = weave_traceability(spec)
        except MCompError as exc:
            raise _Fail(DIAGNOSTICS, str(exc)) from exc
        spec = woven
    try:
        result = execute(spec, left, right, metamodels)
    except CompositionError as exc:
        raise _Fail(RUNTIME, f"composition failed: {exc}") from exc
    trace = trace_from_model(result.extra_targets[0]) if config.via_weaver else trace_execution(result)

    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "composed.json", dumps(model_to_dict(result.composed)))
    _write(out / "trace.json", dumps(trace_to_dict(trace)))
    _write(out / "execution-log.json", dumps(result_to_dict(result)))
    if config.dot:
        dot = export_dot(trace, {"left": left, "right": right, "target": result.composed})
        _write(out / "trace.dot", dot)
    if config.match_trace:
        pairs = [{"rule": c.rule, "left": c.left, "right": c.right} for c in result.match_trace]
        _write(out / "match-trace.json", dumps(pairs))
    print(
        f"composed {len(result.composed.elements)} elements, "
        f"{len(trace.links)} links, {len(trace.relationships)} relationships -> {out}"
    )
    return OK


def cmd_weave(spec_path: Path, out_path: Path) -> int:
    spec = _load_spec(spec_path)
    try:
        woven, report = weave_traceability(spec)
    except MCompError as exc:
        raise _Fail(DIAGNOSTICS, f"{spec_path}: {exc}") from exc
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write(out_path, print_spec(woven))
    _write(out_path.parent / "weave-report.json", dumps(report.to_dict()))
    return OK


def cmd_query(trace_path: Path, query: str, link_or_element: str, side: str | None = None) -> int:
    try:
        trace = trace_from_dict(_read_text(trace_path))
    except MCompError as exc:
        raise _Fail(DIAGNOSTICS, f"{trace_path}: {exc}") from exc
    try:
        if query == "children":
            ids = children(trace, link_or_element)
        elif query == "parents":
            ids = parents(trace, link_or_element)
        else:
            ids = links_for_element(trace, link_or_element, side or "")
    except UnknownLinkError as exc:
        raise _Fail(DIAGNOSTICS, str(exc)) from exc
    for i in ids:
        print(i)
    return OK


def cmd_validate(spec_path: Path, metamodel_paths: Sequence[Path]) -> int:
    spec = _load_spec(spec_path, _load_metamodels(metamodel_paths))
    print(f"{spec_path}: ok ({len(spec.rules)} rules)")
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcomp", description="Rule-based model composition with traceability.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compose", help="compose two models and write the composed model and its trace")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--left", type=Path, required=True)
    p.add_argument("--right", type=Path, required=True)
    p.add_argument("--mm", type=Path, nargs="+", required=True, help="metamodel files")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--dot", action="store_true", help="also write trace.dot")
    p.add_argument("--match-trace", action="store_true", help="also write match-trace.json")
    p.add_argument("--via-weaver", action="store_true", help="build the trace by running the woven spec")

    p = sub.add_parser("weave", help="write the traceability-instrumented version of a spec")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("query", help="navigate a trace.json file")
    p.add_argument("--trace", type=Path, required=True)
    q = p.add_subparsers(dest="query", required=True)
    q.add_parser("children").add_argument("id")
    q.add_parser("parents").add_argument("id")
    e = q.add_parser("element")
    e.add_argument("id")
    e.add_argument("side", choices=SIDES)

    p = sub.add_parser("validate", help="parse and type-check a spec")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--mm", type=Path, nargs="+", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compose":
            config = RunConfig(
                args.spec, args.left, args.right, tuple(args.mm), args.out, args.dot, args.match_trace, args.via_weaver
            )
            return cmd_compose(config)
        if args.command == "weave":
            return cmd_weave(args.spec, args.out)
        if args.command == "query":
            return cmd_query(args.trace, args.query, args.id, getattr(args, "side", None))
        return cmd_validate(args.spec, args.mm)
    except _Fail as exc:
        print(exc, file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
