"""Deterministic trace model and its NDJSON wire format.

A trace file is newline-delimited JSON: the first line is the header
object, then one event per line with the fields
`tick,time,kind,src,dst,name,payload` in exactly that order.  Reals are
serialized with 17 significant digits (round-trip exact for doubles) and
always carry a decimal point or exponent so they stay distinguishable
from ints.  The generated C trace shim prints the same byte sequences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

TOOL_VERSION = "0.1.0"

Value = Union[bool, int, float, str]

KINDS = (
    "call", "call_return", "msg_send", "msg_recv", "transition",
    "sample", "timer_fire", "runtime_error",
)


def fmt_real(x: float) -> str:
    """17-significant-digit decimal form, always marked as a real."""
    s = "%.17g" % x
    if "." not in s and "e" not in s and "E" not in s \
            and "n" not in s and "f" not in s:
        s += ".0"
    return s


def fmt_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt_real(v)
    return '"' + v + '"'  # enum member / state name; identifiers need no escaping


@dataclass
class TraceEvent:
    tick: int
    time: float
    kind: str
    src: str
    dst: str
    name: str
    payload: list[Value] = field(default_factory=list)

    def to_line(self) -> str:
        payload = ",".join(fmt_value(v) for v in self.payload)
        return (f'{{"tick":{self.tick},"time":{fmt_real(self.time)},'
                f'"kind":"{self.kind}","src":"{self.src}",'
                f'"dst":"{self.dst}","name":"{self.name}",'
                f'"payload":[{payload}]}}')


@dataclass
class Trace:
    model: str
    dt: float
    duration: float
    version: str = TOOL_VERSION
    events: list[TraceEvent] = field(default_factory=list)

    def header_line(self) -> str:
        return (f'{{"model":"{self.model}","dt":{fmt_real(self.dt)},'
                f'"duration":{fmt_real(self.duration)},'
                f'"version":"{self.version}"}}')

    def to_ndjson(self) -> str:
        lines = [self.header_line()]
        lines += [e.to_line() for e in self.events]
        return "\n".join(lines) + "\n"

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_ndjson())


def read_ndjson(text: str) -> Trace:
    """Parse a trace file.  2.0 and 2 both serialize as reals vs ints by
    construction, so the JSON number type distinguishes them on the way in.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = json.loads(lines[0])
    trace = Trace(model=header["model"], dt=header["dt"],
                  duration=header["duration"],
                  version=header.get("version", ""))
    for ln in lines[1:]:
        obj = json.loads(ln)
        trace.events.append(TraceEvent(
            tick=obj["tick"], time=obj["time"], kind=obj["kind"],
            src=obj["src"], dst=obj["dst"], name=obj["name"],
            payload=obj["payload"]))
    return trace


def read_trace_file(path: str) -> Trace:
    with open(path, "r", encoding="utf-8") as f:
        return read_ndjson(f.read())
