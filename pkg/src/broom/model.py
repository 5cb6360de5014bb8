"""Core domain types for BROOM models.

A model unit is a closed world: actor classes, data classes and protocols,
plus the name of the root actor class.  All types here are plain dataclasses;
they are immutable by convention once validation has run.  Source spans are
excluded from equality so that structural comparison (e.g. the parse/render
round-trip law) ignores layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


# ---------------------------------------------------------------------------
# Source locations and diagnostics

@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int      # 1-based
    column: int    # 1-based
    length: int = 1


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    span: Optional[SourceSpan] = None

    def format(self) -> str:
        if self.span is None:
            return f"{self.code} <unknown>:0:0 {self.message}"
        s = self.span
        return f"{self.code} {s.file}:{s.line}:{s.column} {self.message}"


def sort_diagnostics(diags: list[Diagnostic]) -> list[Diagnostic]:
    """Stable order: location first, then code."""
    def key(d: Diagnostic):
        s = d.span or SourceSpan("", 0, 0)
        return (s.file, s.line, s.column, d.code, d.message)
    return sorted(diags, key=key)


# ---------------------------------------------------------------------------
# Types

BOOL = "bool"
INT = "int"
REAL = "real"
ENUM = "enum"
DATA = "data"  # nested data-class field; only legal inside data classes


@dataclass(frozen=True)
class Type:
    kind: str                      # bool | int | real | enum | data
    members: tuple[str, ...] = ()  # enum member names
    ref: str = ""                  # data class name when kind == "data"

    def __str__(self) -> str:
        if self.kind == ENUM:
            return "enum(" + ", ".join(self.members) + ")"
        if self.kind == DATA:
            return self.ref
        return self.kind


TYPE_BOOL = Type(BOOL)
TYPE_INT = Type(INT)
TYPE_REAL = Type(REAL)


# ---------------------------------------------------------------------------
# Expressions and statements

class Expr:
    """Base class for expression nodes."""


class Stmt:
    """Base class for statement nodes."""


@dataclass
class Lit(Expr):
    # value is bool, int or float; enum literals parse as Name
    value: Union[bool, int, float]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Name(Expr):
    """A reference: method parameter, own attribute, or enum member."""
    ident: str
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Unary(Expr):
    op: str                 # "-" | "not"
    operand: Expr
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Binary(Expr):
    op: str                 # + - * / == != < <= > >= and or
    left: Expr
    right: Expr
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class PortCall(Expr):
    """Synchronous method call through a required port, usable as a value."""
    port: str
    name: str
    args: list[Expr] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Assign(Stmt):
    target: str
    value: Expr
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Invoke(Stmt):
    """Call or send through a required port; the protocol decides which.

    If the signature is a protocol method the invocation is a synchronous
    call; if it is a message it is an asynchronous send.
    """
    port: str
    name: str
    args: list[Expr] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class SetTimer(Stmt):
    timer: str
    ticks: Expr
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class CancelTimer(Stmt):
    timer: str
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Return(Stmt):
    value: Optional[Expr] = None
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------------------
# Structural members

@dataclass
class Param:
    name: str
    type: Type
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Signature:
    name: str
    params: list[Param] = field(default_factory=list)
    ret: Optional[Type] = None
    kind: str = "method"     # "method" | "message"; messages have no return
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Protocol:
    name: str
    signatures: list[Signature] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def find(self, name: str) -> Optional[Signature]:
        for s in self.signatures:
            if s.name == name:
                return s
        return None

    @property
    def methods(self) -> list[Signature]:
        return [s for s in self.signatures if s.kind == "method"]

    @property
    def messages(self) -> list[Signature]:
        return [s for s in self.signatures if s.kind == "message"]


@dataclass
class Port:
    name: str
    direction: str           # "provides" | "requires"
    protocol: str
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Attribute:
    name: str
    type: Type
    init: Optional[Expr] = None
    tunable: bool = False
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Method:
    name: str
    params: list[Param] = field(default_factory=list)
    ret: Optional[Type] = None
    body: list[Stmt] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Part:
    name: str
    actor_class: str
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Endpoint:
    part: str                # part instance name, or "self"
    port: str
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def is_self(self) -> bool:
        return self.part == "self"


@dataclass
class Channel:
    end_a: Endpoint
    end_b: Endpoint
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class Transition:
    source: str
    target: str
    trigger: str             # message name, method name, or timer id
    guard: Optional[Expr] = None
    actions: list[Stmt] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class StateMachine:
    states: list[str]
    initial: str
    transitions: list[Transition] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class PeriodicTimer:
    """`every id N`: timer `id` fires on every tick divisible by N."""
    timer: str
    period: int
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class BlockRef:
    """A continuous component attached to an actor.

    kind/params:
      pt1(K, T)            first-order lag
      pi(Kp, Ki, lo, hi)   PI controller with output limits and anti-windup
      limiter(lo, hi)      stateless clamp
    `input` is evaluated each tick (it may read sibling blocks through
    required ports); the result of the update is written to attribute `out`.
    """
    kind: str
    params: tuple[float, ...]
    input: Expr = None
    out: str = ""
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class ActorClass:
    name: str
    superclasses: list[str] = field(default_factory=list)  # >1 is E_MULTI_INHERIT
    ports: list[Port] = field(default_factory=list)
    attributes: list[Attribute] = field(default_factory=list)
    methods: list[Method] = field(default_factory=list)
    parts: list[Part] = field(default_factory=list)
    channels: list[Channel] = field(default_factory=list)
    timers: list[PeriodicTimer] = field(default_factory=list)
    machine: Optional[StateMachine] = None
    block: Optional[BlockRef] = None
    deadline_ticks: Optional[int] = None
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def superclass(self) -> Optional[str]:
        return self.superclasses[0] if self.superclasses else None

    def find_port(self, name: str) -> Optional[Port]:
        for p in self.ports:
            if p.name == name:
                return p
        return None

    def find_method(self, name: str) -> Optional[Method]:
        for m in self.methods:
            if m.name == name:
                return m
        return None

    def find_attribute(self, name: str) -> Optional[Attribute]:
        for a in self.attributes:
            if a.name == name:
                return a
        return None

    def member_names(self) -> list[tuple[str, str]]:
        """(kind, name) for every named member, in declaration order."""
        out: list[tuple[str, str]] = []
        out += [("port", p.name) for p in self.ports]
        out += [("attr", a.name) for a in self.attributes]
        out += [("part", p.name) for p in self.parts]
        out += [("method", m.name) for m in self.methods]
        # timer ids are not addressable members; a timer deliberately shares
        # its name with the method or transition trigger that handles it
        return out


@dataclass
class DataField:
    name: str
    type: Type
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class DataClass:
    """Passive container: fields plus accessor methods, nothing active."""
    name: str
    fields: list[DataField] = field(default_factory=list)
    accessors: list[Method] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass
class ModelUnit:
    name: str
    actor_classes: list[ActorClass] = field(default_factory=list)
    data_classes: list[DataClass] = field(default_factory=list)
    protocols: list[Protocol] = field(default_factory=list)
    root: str = ""
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def find_actor(self, name: str) -> Optional[ActorClass]:
        for a in self.actor_classes:
            if a.name == name:
                return a
        return None

    def find_protocol(self, name: str) -> Optional[Protocol]:
        for p in self.protocols:
            if p.name == name:
                return p
        return None

    def find_data(self, name: str) -> Optional[DataClass]:
        for d in self.data_classes:
            if d.name == name:
                return d
        return None
