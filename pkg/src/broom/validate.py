"""Well-formedness validation for model units.

All problems surface as diagnostics; nothing raises.  Diagnostic codes:

  E_MULTI_INHERIT   more than one superclass
  E_INHERIT_CYCLE   superclass chain loops
  E_OVERRIDE        subclass redeclares an inherited member
  E_DUPLICATE       name clash inside one declaration scope
  E_UNRESOLVED      reference to a missing class / protocol / state / member
  E_CHAN_DANGLING   channel endpoint does not resolve
  E_CHAN_DIRECTION  channel does not link one required and one provided port
  E_CHAN_FANOUT     more than one channel on a required endpoint
  E_PORT_INCOMPAT   required protocol is not a subset of the provided one
  E_CONTAIN_CYCLE   containment graph over parts is cyclic
  E_ALGEBRAIC_LOOP  stateless-block cycle in the continuous dataflow
  E_TYPE            static type error in expressions, blocks or attributes

The returned list is sorted by source location, then code; validation is a
pure function of the unit.
"""

from __future__ import annotations

from typing import Optional

from .model import (
    ActorClass, Assign, Attribute, Binary, CancelTimer, Channel, DataClass,
    Diagnostic, Endpoint, Expr, Invoke, Lit, Method, ModelUnit, Name, Port,
    PortCall, Protocol, Return, SetTimer, Signature, SourceSpan, Stmt,
    Transition, Type, Unary, sort_diagnostics,
    BOOL, INT, REAL, ENUM, DATA, TYPE_BOOL, TYPE_INT, TYPE_REAL,
)
from . import instance as inst_mod
from .instance import (
    ModelError, collect_timer_ids, flatten_inheritance, instantiate,
    superclass_chain,
)


def _is_numeric(t: Type) -> bool:
    return t.kind in (INT, REAL)


def _assignable(src: Type, dst: Type) -> bool:
    if src == dst:
        return True
    return src.kind == INT and dst.kind == REAL


def _sig_types(sig: Signature) -> tuple:
    return (sig.kind, tuple(p.type for p in sig.params), sig.ret)


class _Scope:
    """Typing context: one (merged) actor class plus bound parameters."""

    def __init__(self, unit: ModelUnit, cls: ActorClass,
                 diags: list[Diagnostic]):
        self.unit = unit
        self.cls = cls
        self.diags = diags
        self.params: dict[str, Type] = {}
        self.enum_members: dict[str, Optional[Type]] = {}
        for a in cls.attributes:
            if a.type.kind == ENUM:
                for m in a.type.members:
                    if m in self.enum_members \
                            and self.enum_members[m] != a.type:
                        self.enum_members[m] = None  # ambiguous
                    else:
                        self.enum_members[m] = a.type

    def err(self, code: str, msg: str, span) -> None:
        self.diags.append(Diagnostic(code, msg, span))

    # -- expressions --------------------------------------------------------

    def infer(self, e: Expr) -> Optional[Type]:
        if isinstance(e, Lit):
            if isinstance(e.value, bool):
                return TYPE_BOOL
            if isinstance(e.value, int):
                return TYPE_INT
            return TYPE_REAL
        if isinstance(e, Name):
            if e.ident in self.params:
                return self.params[e.ident]
            attr = self.cls.find_attribute(e.ident)
            if attr is not None:
                return attr.type
            if e.ident in self.enum_members:
                t = self.enum_members[e.ident]
                if t is None:
                    self.err("E_TYPE",
                             f"enum member '{e.ident}' is ambiguous here",
                             e.span)
                return t
            self.err("E_UNRESOLVED", f"unknown name '{e.ident}'", e.span)
            return None
        if isinstance(e, Unary):
            t = self.infer(e.operand)
            if t is None:
                return None
            if e.op == "-":
                if not _is_numeric(t):
                    self.err("E_TYPE", "operand of '-' must be numeric",
                             e.span)
                    return None
                return t
            if t.kind != BOOL:
                self.err("E_TYPE", "operand of 'not' must be bool", e.span)
                return None
            return TYPE_BOOL
        if isinstance(e, Binary):
            lt = self.infer(e.left)
            rt = self.infer(e.right)
            if lt is None or rt is None:
                return None
            op = e.op
            if op in ("+", "-", "*", "/"):
                if not (_is_numeric(lt) and _is_numeric(rt)):
                    self.err("E_TYPE",
                             f"operands of '{op}' must be numeric", e.span)
                    return None
                return TYPE_REAL if REAL in (lt.kind, rt.kind) else TYPE_INT
            if op in ("and", "or"):
                if lt.kind != BOOL or rt.kind != BOOL:
                    self.err("E_TYPE",
                             f"operands of '{op}' must be bool", e.span)
                return TYPE_BOOL
            if op in ("<", "<=", ">", ">="):
                if not (_is_numeric(lt) and _is_numeric(rt)):
                    self.err("E_TYPE",
                             f"operands of '{op}' must be numeric", e.span)
                return TYPE_BOOL
            # == / !=
            ok = (_is_numeric(lt) and _is_numeric(rt)) or lt == rt
            if not ok:
                self.err("E_TYPE",
                         f"cannot compare {lt} with {rt}", e.span)
            return TYPE_BOOL
        if isinstance(e, PortCall):
            sig = self._check_invocation(e.port, e.name, e.args, e.span)
            if sig is None:
                return None
            if sig.kind != "method":
                self.err("E_TYPE",
                         f"'{e.name}' is a message and has no value", e.span)
                return None
            if sig.ret is None:
                self.err("E_TYPE",
                         f"method '{e.name}' returns nothing", e.span)
                return None
            return sig.ret
        raise TypeError(f"unknown expression node {e!r}")

    def _check_invocation(self, port_name: str, sig_name: str,
                          args: list[Expr], span) -> Optional[Signature]:
        port = self.cls.find_port(port_name)
        if port is None:
            self.err("E_UNRESOLVED",
                     f"no port '{port_name}' on '{self.cls.name}'", span)
            return None
        if port.direction != "requires":
            self.err("E_TYPE",
                     f"port '{port_name}' is provided; "
                     "invocations go through required ports", span)
            return None
        proto = self.unit.find_protocol(port.protocol)
        if proto is None:
            return None  # reported at the port declaration
        sig = proto.find(sig_name)
        if sig is None:
            self.err("E_UNRESOLVED",
                     f"protocol '{proto.name}' has no signature "
                     f"'{sig_name}'", span)
            return None
        if len(args) != len(sig.params):
            self.err("E_TYPE",
                     f"'{sig_name}' expects {len(sig.params)} argument(s), "
                     f"got {len(args)}", span)
        for a, p in zip(args, sig.params):
            at = self.infer(a)
            if at is not None and not _assignable(at, p.type):
                self.err("E_TYPE",
                         f"argument '{p.name}' of '{sig_name}' expects "
                         f"{p.type}, got {at}", a.span or span)
        return sig

    # -- statements ---------------------------------------------------------

    def check_stmts(self, stmts: list[Stmt], ret: Optional[Type],
                    in_method: bool) -> None:
        for s in stmts:
            if isinstance(s, Assign):
                attr = self.cls.find_attribute(s.target)
                if attr is None:
                    self.err("E_UNRESOLVED",
                             f"no attribute '{s.target}' on "
                             f"'{self.cls.name}'", s.span)
                    self.infer(s.value)
                    continue
                vt = self.infer(s.value)
                if vt is not None and not _assignable(vt, attr.type):
                    self.err("E_TYPE",
                             f"cannot assign {vt} to '{s.target}' "
                             f"({attr.type})", s.span)
            elif isinstance(s, Invoke):
                self._check_invocation(s.port, s.name, s.args, s.span)
            elif isinstance(s, SetTimer):
                tt = self.infer(s.ticks)
                if tt is not None and tt.kind != INT:
                    self.err("E_TYPE", "timer delay must be int", s.span)
            elif isinstance(s, CancelTimer):
                pass
            elif isinstance(s, Return):
                if not in_method:
                    self.err("E_TYPE",
                             "'return' is only allowed in method bodies",
                             s.span)
                    continue
                if s.value is None:
                    if ret is not None:
                        self.err("E_TYPE", "missing return value", s.span)
                else:
                    vt = self.infer(s.value)
                    if ret is None:
                        self.err("E_TYPE",
                                 "method returns nothing", s.span)
                    elif vt is not None and not _assignable(vt, ret):
                        self.err("E_TYPE",
                                 f"return type is {ret}, got {vt}", s.span)
            else:
                raise TypeError(f"unknown statement node {s!r}")


# ---------------------------------------------------------------------------

def _member_span(cls: ActorClass, name: str):
    """Span of the last declaration of `name` in `cls`, if any."""
    found = cls.span
    for group in (cls.ports, cls.attributes, cls.methods, cls.parts):
        for item in group:
            if item.name == name and item.span is not None:
                found = item.span
    return found


def _merged_view(unit: ModelUnit, cls: ActorClass,
                 diags: list[Diagnostic]) -> ActorClass:
    """Tolerant copy-down merge for resolution; reports E_OVERRIDE."""
    if cls.superclass is None or unit.find_actor(cls.superclass) is None:
        return cls
    flat = ActorClass(name=cls.name)
    flat.span = cls.span
    declared: set[str] = set()
    for ancestor in superclass_chain(unit, cls):
        own = ancestor is cls
        for kind, name in ancestor.member_names():
            if name in declared and own:
                diags.append(Diagnostic(
                    "E_OVERRIDE",
                    f"'{cls.name}' redeclares inherited member '{name}'",
                    _member_span(cls, name)))
            declared.add(name)
        flat.ports += ancestor.ports
        flat.attributes += ancestor.attributes
        flat.methods += ancestor.methods
        flat.parts += ancestor.parts
        flat.channels += ancestor.channels
        flat.timers += ancestor.timers
        if ancestor.machine is not None and flat.machine is None:
            flat.machine = ancestor.machine
        if ancestor.block is not None and flat.block is None:
            flat.block = ancestor.block
        if ancestor.deadline_ticks is not None:
            flat.deadline_ticks = ancestor.deadline_ticks
    return flat


def _check_duplicates(unit: ModelUnit, diags: list[Diagnostic]) -> None:
    seen: dict[str, SourceSpan] = {}
    for group in (unit.actor_classes, unit.data_classes, unit.protocols):
        for item in group:
            if item.name in seen:
                diags.append(Diagnostic(
                    "E_DUPLICATE",
                    f"name '{item.name}' is declared more than once",
                    item.span))
            else:
                seen[item.name] = item.span
    for proto in unit.protocols:
        names: set[str] = set()
        for sig in proto.signatures:
            if sig.name in names:
                diags.append(Diagnostic(
                    "E_DUPLICATE",
                    f"protocol '{proto.name}' declares '{sig.name}' twice",
                    sig.span))
            names.add(sig.name)
    for cls in unit.actor_classes:
        names = set()
        for kind, name in cls.member_names():
            if name in names:
                diags.append(Diagnostic(
                    "E_DUPLICATE",
                    f"'{cls.name}' declares member '{name}' twice",
                    _member_span(cls, name)))
            names.add(name)


def _check_inheritance(unit: ModelUnit, diags: list[Diagnostic]) -> None:
    for cls in unit.actor_classes:
        if len(cls.superclasses) > 1:
            diags.append(Diagnostic(
                "E_MULTI_INHERIT",
                f"'{cls.name}' lists {len(cls.superclasses)} superclasses; "
                "only one is allowed", cls.span))
        for sup in cls.superclasses[:1]:
            if unit.find_actor(sup) is None:
                diags.append(Diagnostic(
                    "E_UNRESOLVED",
                    f"superclass '{sup}' of '{cls.name}' not found",
                    cls.span))
        # cycle along the single-superclass chain
        seen = {cls.name}
        cur = cls
        while cur.superclass is not None:
            nxt = unit.find_actor(cur.superclass)
            if nxt is None:
                break
            if nxt.name in seen:
                diags.append(Diagnostic(
                    "E_INHERIT_CYCLE",
                    f"inheritance cycle through '{cls.name}'", cls.span))
                break
            seen.add(nxt.name)
            cur = nxt


def _check_containment(unit: ModelUnit, diags: list[Diagnostic],
                       views: dict[str, ActorClass]) -> bool:
    ok = True
    color: dict[str, int] = {}  # 0 visiting, 1 done

    def visit(name: str, span) -> None:
        nonlocal ok
        if color.get(name) == 1:
            return
        if color.get(name) == 0:
            diags.append(Diagnostic(
                "E_CONTAIN_CYCLE",
                f"containment cycle through '{name}'", span))
            ok = False
            return
        color[name] = 0
        cls = views.get(name)
        if cls is not None:
            for part in cls.parts:
                if unit.find_actor(part.actor_class) is None:
                    diags.append(Diagnostic(
                        "E_UNRESOLVED",
                        f"part '{part.name}' names unknown class "
                        f"'{part.actor_class}'", part.span))
                else:
                    visit(part.actor_class, part.span)
        color[name] = 1

    for cls in unit.actor_classes:
        visit(cls.name, cls.span)
    return ok


def _endpoint_port(unit: ModelUnit, cls: ActorClass, ep: Endpoint,
                   views: dict[str, ActorClass]) -> Optional[Port]:
    if ep.is_self:
        return cls.find_port(ep.port)
    part = next((p for p in cls.parts if p.name == ep.part), None)
    if part is None:
        return None
    pcls = views.get(part.actor_class)
    if pcls is None:
        return None
    return pcls.find_port(ep.port)


def _check_channels(unit: ModelUnit, cls: ActorClass,
                    views: dict[str, ActorClass],
                    diags: list[Diagnostic]) -> None:
    req_endpoints: dict[tuple[str, str], int] = {}
    for ch in cls.channels:
        ports = []
        bad = False
        for ep in (ch.end_a, ch.end_b):
            port = _endpoint_port(unit, cls, ep, views)
            if port is None:
                diags.append(Diagnostic(
                    "E_CHAN_DANGLING",
                    f"channel endpoint '{ep.part}.{ep.port}' does not "
                    "resolve", ep.span or ch.span))
                bad = True
            ports.append(port)
        if bad:
            continue
        # effective direction: flipped when the endpoint is `self`
        def effective(ep: Endpoint, port: Port) -> str:
            d = port.direction
            if ep.is_self:
                return "provides" if d == "requires" else "requires"
            return d

        dirs = [effective(ep, p)
                for ep, p in zip((ch.end_a, ch.end_b), ports)]
        if sorted(dirs) != ["provides", "requires"]:
            diags.append(Diagnostic(
                "E_CHAN_DIRECTION",
                "channel must link one required and one provided port",
                ch.span))
            continue
        idx_req = dirs.index("requires")
        ep_req = (ch.end_a, ch.end_b)[idx_req]
        req_port, prov_port = ports[idx_req], ports[1 - idx_req]
        key = (ep_req.part, ep_req.port)
        req_endpoints[key] = req_endpoints.get(key, 0) + 1
        if req_endpoints[key] == 2:
            diags.append(Diagnostic(
                "E_CHAN_FANOUT",
                f"required endpoint '{ep_req.part}.{ep_req.port}' is "
                "connected by more than one channel", ch.span))
        req_proto = unit.find_protocol(req_port.protocol)
        prov_proto = unit.find_protocol(prov_port.protocol)
        if req_proto is None or prov_proto is None:
            continue  # reported at the port declarations
        for sig in req_proto.signatures:
            other = prov_proto.find(sig.name)
            if other is None or _sig_types(other) != _sig_types(sig):
                diags.append(Diagnostic(
                    "E_PORT_INCOMPAT",
                    f"signature '{sig.name}' of required protocol "
                    f"'{req_proto.name}' is missing or different in "
                    f"provided protocol '{prov_proto.name}'", ch.span))


def _check_block(cls: ActorClass, scope: _Scope,
                 diags: list[Diagnostic]) -> None:
    blk = cls.block
    arity = {"pt1": 2, "pi": 4, "limiter": 2}[blk.kind]
    if len(blk.params) != arity:
        diags.append(Diagnostic(
            "E_TYPE", f"block '{blk.kind}' takes {arity} parameters",
            blk.span))
        return
    if blk.kind == "pt1" and blk.params[1] <= 0:
        diags.append(Diagnostic(
            "E_TYPE", "pt1 time constant must be positive", blk.span))
    if blk.kind in ("pi", "limiter"):
        lo, hi = blk.params[-2], blk.params[-1]
        if not lo < hi:
            diags.append(Diagnostic(
                "E_TYPE", f"block limits must satisfy lo < hi", blk.span))
    out = cls.find_attribute(blk.out)
    if out is None:
        diags.append(Diagnostic(
            "E_UNRESOLVED",
            f"block output attribute '{blk.out}' not found", blk.span))
    elif out.type.kind != REAL:
        diags.append(Diagnostic(
            "E_TYPE", f"block output '{blk.out}' must be real", blk.span))
    t = scope.infer(blk.input)
    if t is not None and not _is_numeric(t):
        diags.append(Diagnostic(
            "E_TYPE", "block input must be numeric", blk.span))


def _trigger_params(unit: ModelUnit, cls: ActorClass,
                    trigger: str) -> Optional[list]:
    """Parameters bound by a trigger; None if the trigger is unknown."""
    for port in cls.ports:
        if port.direction != "provides":
            continue
        proto = unit.find_protocol(port.protocol)
        if proto is None:
            continue
        sig = proto.find(trigger)
        if sig is not None:
            return sig.params
    m = cls.find_method(trigger)
    if m is not None:
        return m.params
    if trigger in collect_timer_ids(cls):
        return []
    return None


def _check_machine(unit: ModelUnit, cls: ActorClass, scope: _Scope,
                   diags: list[Diagnostic]) -> None:
    sm = cls.machine
    states = set(sm.states)
    if sm.initial not in states:
        diags.append(Diagnostic(
            "E_UNRESOLVED", f"initial state '{sm.initial}' not in states",
            sm.span))
    for tr in sm.transitions:
        for s in (tr.source, tr.target):
            if s not in states:
                diags.append(Diagnostic(
                    "E_UNRESOLVED", f"state '{s}' not declared", tr.span))
        params = _trigger_params(unit, cls, tr.trigger)
        if params is None:
            diags.append(Diagnostic(
                "E_UNRESOLVED",
                f"trigger '{tr.trigger}' is not a provided message, "
                "method, or timer id", tr.span))
            params = []
        scope.params = {p.name: p.type for p in params}
        if tr.guard is not None:
            t = scope.infer(tr.guard)
            if t is not None and t.kind != BOOL:
                diags.append(Diagnostic(
                    "E_TYPE", "guard must be bool", tr.span))
        scope.check_stmts(tr.actions, None, in_method=False)
        scope.params = {}


def _check_attributes(cls: ActorClass, scope: _Scope,
                      diags: list[Diagnostic]) -> None:
    for a in cls.attributes:
        if a.type.kind == DATA:
            diags.append(Diagnostic(
                "E_TYPE",
                f"actor attribute '{a.name}' must have a primitive type",
                a.span))
            continue
        if a.init is None:
            continue
        e = a.init
        const = isinstance(e, Lit) \
            or (isinstance(e, Unary) and e.op == "-"
                and isinstance(e.operand, Lit)) \
            or (isinstance(e, Name) and a.type.kind == ENUM
                and e.ident in a.type.members)
        if not const:
            diags.append(Diagnostic(
                "E_TYPE",
                f"initializer of '{a.name}' must be a constant", a.span))
            continue
        if isinstance(e, Name):
            continue
        t = scope.infer(e)
        if t is not None and not _assignable(t, a.type):
            diags.append(Diagnostic(
                "E_TYPE",
                f"initializer of '{a.name}' has type {t}, "
                f"expected {a.type}", a.span))


def _check_provided_impl(unit: ModelUnit, cls: ActorClass,
                         diags: list[Diagnostic]) -> None:
    relayed = set()
    for ch in cls.channels:
        for ep in (ch.end_a, ch.end_b):
            if ep.is_self:
                relayed.add(ep.port)
    for port in cls.ports:
        if port.direction != "provides" or port.name in relayed:
            continue
        proto = unit.find_protocol(port.protocol)
        if proto is None:
            continue
        for sig in proto.methods:
            m = cls.find_method(sig.name)
            if m is None or tuple(p.type for p in m.params) != \
                    tuple(p.type for p in sig.params) or m.ret != sig.ret:
                diags.append(Diagnostic(
                    "E_UNRESOLVED",
                    f"'{cls.name}' provides '{proto.name}' on port "
                    f"'{port.name}' but does not implement method "
                    f"'{sig.name}'", port.span))


def _check_data_class(unit: ModelUnit, dc: DataClass,
                      diags: list[Diagnostic]) -> None:
    for f in dc.fields:
        if f.type.kind == DATA and unit.find_data(f.type.ref) is None:
            diags.append(Diagnostic(
                "E_UNRESOLVED",
                f"field '{f.name}' names unknown data class "
                f"'{f.type.ref}'", f.span))
    pseudo = ActorClass(name=dc.name)
    pseudo.attributes = [Attribute(f.name, f.type, span=f.span)
                         for f in dc.fields if f.type.kind != DATA]
    pseudo.methods = dc.accessors
    scope = _Scope(unit, pseudo, diags)
    for m in dc.accessors:
        scope.params = {p.name: p.type for p in m.params}
        scope.check_stmts(m.body, m.ret, in_method=True)
        scope.params = {}


def validate(unit: ModelUnit) -> list[Diagnostic]:
    """Check every well-formedness rule; empty result means the unit is valid."""
    diags: list[Diagnostic] = []
    _check_duplicates(unit, diags)
    _check_inheritance(unit, diags)

    views = {cls.name: _merged_view(unit, cls, diags)
             for cls in unit.actor_classes}
    containment_ok = _check_containment(unit, diags, views)

    for cls in unit.actor_classes:
        view = views[cls.name]
        for port in view.ports:
            if unit.find_protocol(port.protocol) is None:
                diags.append(Diagnostic(
                    "E_UNRESOLVED",
                    f"port '{port.name}' names unknown protocol "
                    f"'{port.protocol}'", port.span))
        scope = _Scope(unit, view, diags)
        _check_attributes(view, scope, diags)
        _check_channels(unit, view, views, diags)
        for m in view.methods:
            scope.params = {p.name: p.type for p in m.params}
            scope.check_stmts(m.body, m.ret, in_method=True)
            scope.params = {}
        if view.machine is not None and view.block is not None:
            diags.append(Diagnostic(
                "E_TYPE",
                f"'{cls.name}' has both a state machine and a block",
                cls.span))
        if view.machine is not None:
            _check_machine(unit, view, scope, diags)
        if view.block is not None:
            _check_block(view, scope, diags)
        _check_provided_impl(unit, view, diags)

    for dc in unit.data_classes:
        _check_data_class(unit, dc, diags)

    if unit.find_actor(unit.root) is None:
        diags.append(Diagnostic(
            "E_UNRESOLVED", f"root actor class '{unit.root}' not found",
            unit.span))

    # continuous-dataflow loop check needs an instance tree
    if not diags and containment_ok:
        try:
            tree = instantiate(flatten_inheritance(unit))
        except ModelError:
            pass  # E_UNBOUND et al. belong to instantiate, not validate
        else:
            for loop in inst_mod.algebraic_loops(tree):
                first = loop[0]
                diags.append(Diagnostic(
                    "E_ALGEBRAIC_LOOP",
                    "stateless block cycle through "
                    + ", ".join(loop),
                    tree.nodes[first].cls.block.span))

    return sort_diagnostics(diags)
