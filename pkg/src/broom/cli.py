"""Command-line entry point.

Exit codes: 0 success, 1 validation diagnostics, 2 rehearsal or timeliness
failure, 3 runtime error during simulation, 4 I/O or argument error.
Machine output (traces, reports) goes to stdout or files; human-facing
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .engine import SimConfig, run
from .instance import ModelError, instantiate
from .parser import parse_file
from .printer import render
from .scenario import load_package, load_stimuli, rehearse_package
from .validate import validate

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_REHEARSAL = 2
EXIT_RUNTIME = 3
EXIT_USAGE = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load(path: str):
    """Parse + validate + instantiate, or exit with the right code."""
    try:
        unit = parse_file(path)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    if isinstance(unit, list):
        for d in unit:
            print(d.format(), file=sys.stderr)
        raise SystemExit(EXIT_DIAGNOSTICS)
    diags = validate(unit)
    if diags:
        for d in diags:
            print(d.format(), file=sys.stderr)
        raise SystemExit(EXIT_DIAGNOSTICS)
    try:
        tree = instantiate(unit)
    except ModelError as e:
        print(e.diag.format(), file=sys.stderr)
        raise SystemExit(EXIT_DIAGNOSTICS)
    return unit, tree


def _sim_config(args) -> SimConfig:
    return SimConfig(dt=args.dt, duration=args.duration,
                     snapshot_every=args.snapshot_every)


def cmd_validate(args) -> int:
    _load(args.model)
    return EXIT_OK


def cmd_sim(args) -> int:
    _unit, tree = _load(args.model)
    stimuli = load_stimuli(args.stimuli) if args.stimuli else []
    trace = run(tree, _sim_config(args), stimuli)
    text = trace.to_ndjson()
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    if trace.events and trace.events[-1].kind == "runtime_error":
        ev = trace.events[-1]
        print(f"runtime error at tick {ev.tick}: {ev.name} in {ev.src}",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_rehearse(args) -> int:
    _unit, tree = _load(args.model)
    try:
        package = load_package(args.package)
    except (OSError, KeyError, ValueError) as e:
        print(f"error: bad package file: {e}", file=sys.stderr)
        return EXIT_USAGE
    results = rehearse_package(tree, _sim_config(args), package)
    report = []
    ok = True
    for name, verdict, timeliness in results:
        entry = {
            "scenario": name,
            "conforms": verdict.ok,
            "matched": verdict.matched,
            "timely": timeliness.ok,
        }
        if verdict.divergence is not None:
            entry["divergence"] = {
                "arrow": verdict.divergence.arrow_index,
                "reason": verdict.divergence.reason,
                "trace_position": verdict.divergence.trace_position,
            }
        if timeliness.violations:
            entry["timeliness_violations"] = [
                {"path": v.path, "tick": v.trigger.tick,
                 "deadline_ticks": v.deadline_ticks,
                 "actual_ticks": v.actual_ticks}
                for v in timeliness.violations]
        report.append(entry)
        ok = ok and verdict.ok and timeliness.ok
        status = "ok" if verdict.ok and timeliness.ok else "FAIL"
        print(f"{status}  {name}", file=sys.stderr)
    text = json.dumps({"package": package.name, "ok": ok,
                       "results": report}, indent=2)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    else:
        print(text)
    return EXIT_OK if ok else EXIT_REHEARSAL


def cmd_codegen(args) -> int:
    from .codegen import CodegenConfig, flatten, emit
    _unit, tree = _load(args.model)
    stimuli = load_stimuli(args.stimuli) if args.stimuli else []
    prog = flatten(tree, _sim_config(args))
    try:
        files = emit(prog, CodegenConfig(args.out, args.trace_shim), stimuli)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    for f in files:
        print(f, file=sys.stderr)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve
    _unit, tree = _load(args.model)
    serve(tree, _sim_config(args), host=args.host, port=args.port,
          speed=args.speed)
    return EXIT_OK


def cmd_fmt(args) -> int:
    unit = parse_file(args.model)
    if isinstance(unit, list):
        for d in unit:
            print(d.format(), file=sys.stderr)
        return EXIT_DIAGNOSTICS
    text = render(unit)
    if args.write:
        with open(args.model, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _add_sim_flags(p, duration_required=True):
    p.add_argument("--duration", type=float, required=duration_required,
                   default=None if duration_required else 60.0,
                   help="simulated seconds")
    p.add_argument("--dt", type=float, default=0.010)
    p.add_argument("--snapshot-every", type=int, default=1)


def build_parser() -> _Parser:
    p = _Parser(prog="broom", description=__doc__)
    p.add_argument("--version", action="version",
                   version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="parse and validate a model")
    v.add_argument("model")
    v.set_defaults(fn=cmd_validate)

    s = sub.add_parser("sim", help="run a simulation, write the trace")
    s.add_argument("model")
    _add_sim_flags(s)
    s.add_argument("--stimuli", help="stimulus list (JSON)")
    s.add_argument("--trace", help="trace output file (default stdout)")
    s.set_defaults(fn=cmd_sim)

    r = sub.add_parser("rehearse", help="run scenarios, check conformance")
    r.add_argument("model")
    r.add_argument("--package", required=True)
    _add_sim_flags(r, duration_required=False)
    r.add_argument("--report", help="JSON report output file")
    r.set_defaults(fn=cmd_rehearse)

    c = sub.add_parser("codegen", help="emit portable C for a model")
    c.add_argument("model")
    c.add_argument("-o", "--out", required=True, help="output directory")
    _add_sim_flags(c, duration_required=False)
    c.add_argument("--trace-shim", action="store_true",
                   help="emit trace_shim.c with a trace-printing main()")
    c.add_argument("--stimuli", help="stimulus list baked into the shim")
    c.set_defaults(fn=cmd_codegen)

    w = sub.add_parser("serve", help="live experiment server (WebSocket)")
    w.add_argument("model")
    w.add_argument("--host", default="127.0.0.1")
    w.add_argument("--port", type=int, default=8787)
    w.add_argument("--speed", type=float, default=1.0)
    _add_sim_flags(w, duration_required=False)
    w.set_defaults(fn=cmd_serve)

    f = sub.add_parser("fmt", help="canonical formatting")
    f.add_argument("model")
    f.add_argument("--write", action="store_true", help="rewrite in place")
    f.set_defaults(fn=cmd_fmt)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.fn(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
