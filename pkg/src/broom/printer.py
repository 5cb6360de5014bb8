"""Canonical rendering of model units back to source text.

Layout is fixed: 2-space indent, LF line endings, members grouped by
category (ports, attributes, parts, channels, periodic timers, deadline,
methods, machine, block).  `parse(render(m))` is structurally equal to `m`
and `render` is idempotent on parsed output.
"""

from __future__ import annotations

from .model import (
    ActorClass, Assign, Attribute, Binary, BlockRef, CancelTimer, DataClass,
    Expr, Invoke, Lit, Method, ModelUnit, Name, PortCall, Protocol, Return,
    SetTimer, StateMachine, Stmt, Type, Unary, ENUM, DATA,
)

# precedence levels, loosest first
_PREC = {
    "or": 1, "and": 2,
    "==": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5, "*": 6, "/": 6,
}
_UNARY_PREC = {"not": 3, "-": 7}


def _num(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_expr(e: Expr, parent_prec: int = 0, guard: bool = False) -> str:
    if isinstance(e, Lit):
        if isinstance(e.value, bool):
            return "true" if e.value else "false"
        return _num(e.value)
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, PortCall):
        args = ", ".join(render_expr(a) for a in e.args)
        return f"{e.port}.{e.name}({args})"
    if isinstance(e, Unary):
        prec = _UNARY_PREC[e.op]
        inner = render_expr(e.operand, prec, guard)
        if e.op == "not":
            text = f"not {inner}"
        else:
            # "--" would tokenize as the channel separator
            if inner.startswith("-"):
                inner = f"({inner})"
            text = f"-{inner}"
        return f"({text})" if prec < parent_prec else text
    if isinstance(e, Binary):
        prec = _PREC[e.op]
        if guard and e.op == "/":
            # top-level division reads as the action separator in guards
            left = render_expr(e.left, prec)
            right = render_expr(e.right, prec + 1)
            return f"({left} / {right})"
        # comparisons do not chain in the grammar, so a comparison child
        # of a comparison needs parentheses on either side
        left_prec = prec + 1 if prec == 4 else prec
        left = render_expr(e.left, left_prec, guard)
        right = render_expr(e.right, prec + 1, guard)
        text = f"{left} {e.op} {right}"
        return f"({text})" if prec < parent_prec else text
    raise TypeError(f"unknown expression node {e!r}")


def render_stmt(s: Stmt) -> str:
    if isinstance(s, Assign):
        return f"{s.target} = {render_expr(s.value)}"
    if isinstance(s, Invoke):
        args = ", ".join(render_expr(a) for a in s.args)
        return f"{s.port}.{s.name}({args})"
    if isinstance(s, SetTimer):
        return f"timer {s.timer} {render_expr(s.ticks)}"
    if isinstance(s, CancelTimer):
        return f"cancel {s.timer}"
    if isinstance(s, Return):
        if s.value is None:
            return "return"
        return f"return {render_expr(s.value)}"
    raise TypeError(f"unknown statement node {s!r}")


def render_type(t: Type) -> str:
    if t.kind == ENUM:
        return "enum(" + ", ".join(t.members) + ")"
    if t.kind == DATA:
        return t.ref
    return t.kind


def _render_method(m: Method, ind: str, out: list[str]) -> None:
    params = ", ".join(f"{p.name}: {render_type(p.type)}" for p in m.params)
    ret = f": {render_type(m.ret)}" if m.ret is not None else ""
    if not m.body:
        out.append(f"{ind}method {m.name}({params}){ret} {{ }}")
        return
    out.append(f"{ind}method {m.name}({params}){ret} {{")
    for s in m.body:
        out.append(f"{ind}  {render_stmt(s)};")
    out.append(f"{ind}}}")


def _render_machine(sm: StateMachine, ind: str, out: list[str]) -> None:
    out.append(f"{ind}machine {{")
    out.append(f"{ind}  initial {sm.initial};")
    for t in sm.transitions:
        line = f"{ind}  {t.source} -> {t.target} on {t.trigger}"
        if t.guard is not None:
            line += f" if {render_expr(t.guard, guard=True)}"
        if t.actions:
            line += " / " + " ".join(render_stmt(a) for a in t.actions)
        out.append(line + ";")
    out.append(f"{ind}}}")


def _render_block(b: BlockRef, ind: str, out: list[str]) -> None:
    params = ", ".join(_num(p) for p in b.params)
    out.append(f"{ind}block {b.kind}({params}) "
               f"in {render_expr(b.input)} out {b.out};")


def _render_actor(ac: ActorClass, out: list[str]) -> None:
    head = f"  actor {ac.name}"
    if ac.superclasses:
        head += " : " + ", ".join(ac.superclasses)
    out.append(head + " {")
    ind = "    "
    for p in ac.ports:
        out.append(f"{ind}{p.direction} {p.name}: {p.protocol};")
    for a in ac.attributes:
        tun = "tunable " if a.tunable else ""
        line = f"{ind}attr {tun}{a.name}: {render_type(a.type)}"
        if a.init is not None:
            line += f" = {render_expr(a.init)}"
        out.append(line + ";")
    for p in ac.parts:
        out.append(f"{ind}part {p.name}: {p.actor_class};")
    for c in ac.channels:
        out.append(f"{ind}connect {c.end_a.part}.{c.end_a.port} "
                   f"-- {c.end_b.part}.{c.end_b.port};")
    for t in ac.timers:
        out.append(f"{ind}every {t.timer} {t.period};")
    if ac.deadline_ticks is not None:
        out.append(f"{ind}deadline {ac.deadline_ticks};")
    for m in ac.methods:
        _render_method(m, ind, out)
    if ac.machine is not None:
        _render_machine(ac.machine, ind, out)
    if ac.block is not None:
        _render_block(ac.block, ind, out)
    out.append("  }")


def _render_data(dc: DataClass, out: list[str]) -> None:
    out.append(f"  data {dc.name} {{")
    for f in dc.fields:
        out.append(f"    field {f.name}: {render_type(f.type)};")
    for m in dc.accessors:
        _render_method(m, "    ", out)
    out.append("  }")


def _render_protocol(proto: Protocol, out: list[str]) -> None:
    out.append(f"  protocol {proto.name} {{")
    for s in proto.signatures:
        params = ", ".join(f"{p.name}: {render_type(p.type)}"
                           for p in s.params)
        ret = f": {render_type(s.ret)}" if s.ret is not None else ""
        out.append(f"    {s.kind} {s.name}({params}){ret};")
    out.append("  }")


def render(unit: ModelUnit) -> str:
    """Render a model unit in canonical form (LF line endings)."""
    out: list[str] = [f"model {unit.name} {{"]
    for proto in unit.protocols:
        _render_protocol(proto, out)
    for dc in unit.data_classes:
        _render_data(dc, out)
    for ac in unit.actor_classes:
        _render_actor(ac, out)
    out.append(f"  root {unit.root}")
    out.append("}")
    return "\n".join(out) + "\n"
