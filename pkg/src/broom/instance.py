"""Inheritance flattening and instantiation of a model into an instance tree.

Flattening is copy-down: a subclass becomes a standalone class holding the
union of inherited and own members, superclass members first.  Redefinition
of an inherited name is an error (structural inheritance only, no dynamic
binding).

Instantiation expands the containment tree from the root class, resolves
every channel chain (through relay ports on `self`) to a direct callee
binding, assigns preorder indices, and computes the evaluation order of the
continuous dataflow between block-bearing instances.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

from .model import (
    ActorClass, Attribute, Diagnostic, Expr, Invoke, Method, ModelUnit,
    PortCall, SetTimer, Signature, Stmt, Assign, Return, SourceSpan,
    BOOL, INT, REAL, ENUM,
)


class ModelError(Exception):
    """Raised for errors that have no diagnostics-list channel to flow through."""

    def __init__(self, diag: Diagnostic):
        super().__init__(diag.format())
        self.diag = diag


# ---------------------------------------------------------------------------
# Inheritance flattening

def superclass_chain(unit: ModelUnit, cls: ActorClass) -> list[ActorClass]:
    """Chain from the most remote ancestor down to `cls` itself."""
    chain = [cls]
    seen = {cls.name}
    cur = cls
    while cur.superclass is not None:
        sup = unit.find_actor(cur.superclass)
        if sup is None or sup.name in seen:
            break  # unresolved or cyclic; validation reports it
        chain.append(sup)
        seen.add(sup.name)
        cur = sup
    chain.reverse()
    return chain


def flatten_class(unit: ModelUnit, cls: ActorClass) -> ActorClass:
    """Copy-down expansion of one class; raises ModelError on E_OVERRIDE."""
    if cls.superclass is None:
        return cls
    flat = ActorClass(name=cls.name)
    flat.span = cls.span
    declared: dict[str, str] = {}
    for ancestor in superclass_chain(unit, cls):
        for kind, name in ancestor.member_names():
            if name in declared:
                raise ModelError(Diagnostic(
                    "E_OVERRIDE",
                    f"'{cls.name}' redeclares inherited member '{name}'",
                    ancestor.span if ancestor is not cls else cls.span))
            declared[name] = kind
        flat.ports += copy.deepcopy(ancestor.ports)
        flat.attributes += copy.deepcopy(ancestor.attributes)
        flat.methods += copy.deepcopy(ancestor.methods)
        flat.parts += copy.deepcopy(ancestor.parts)
        flat.channels += copy.deepcopy(ancestor.channels)
        flat.timers += copy.deepcopy(ancestor.timers)
        if ancestor.machine is not None:
            if flat.machine is not None:
                raise ModelError(Diagnostic(
                    "E_OVERRIDE",
                    f"'{cls.name}' inherits more than one state machine",
                    cls.span))
            flat.machine = copy.deepcopy(ancestor.machine)
        if ancestor.block is not None:
            if flat.block is not None:
                raise ModelError(Diagnostic(
                    "E_OVERRIDE",
                    f"'{cls.name}' inherits more than one block",
                    cls.span))
            flat.block = copy.deepcopy(ancestor.block)
        if ancestor.deadline_ticks is not None:
            flat.deadline_ticks = ancestor.deadline_ticks
    return flat


def flatten_inheritance(unit: ModelUnit) -> ModelUnit:
    """Return an equivalent unit in which no class has a superclass."""
    flat = ModelUnit(name=unit.name, root=unit.root)
    flat.span = unit.span
    flat.protocols = unit.protocols
    flat.data_classes = unit.data_classes
    flat.actor_classes = [flatten_class(unit, c) for c in unit.actor_classes]
    return flat


# ---------------------------------------------------------------------------
# Instance tree

@dataclass
class InstanceNode:
    path: str                  # e.g. "root/system/sensor"
    cls: ActorClass            # flattened class
    index: int                 # stable preorder index
    parent: Optional[str]      # parent path, None for the root


@dataclass
class InstanceTree:
    unit: ModelUnit                                  # flattened
    nodes: dict[str, InstanceNode] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)   # preorder paths
    # (caller path, required port, signature name) -> callee path
    bindings: dict[tuple[str, str, str], str] = field(default_factory=dict)
    # block-bearing instances in continuous evaluation order
    block_order: list[str] = field(default_factory=list)
    # dataflow edges between block instances (consumer -> producers)
    block_deps: dict[str, list[str]] = field(default_factory=dict)

    def node(self, path: str) -> InstanceNode:
        return self.nodes[path]


def default_value(attr: Attribute):
    t = attr.type
    if t.kind == BOOL:
        return False
    if t.kind == INT:
        return 0
    if t.kind == REAL:
        return 0.0
    if t.kind == ENUM:
        return t.members[0]
    raise ModelError(Diagnostic(
        "E_TYPE", f"attribute '{attr.name}' has a non-primitive type",
        attr.span))


def _expand(unit: ModelUnit, cls_name: str, path: str,
            parent: Optional[str], tree: InstanceTree,
            stack: tuple[str, ...]) -> None:
    cls = unit.find_actor(cls_name)
    if cls is None:
        raise ModelError(Diagnostic(
            "E_UNRESOLVED", f"actor class '{cls_name}' not found", None))
    if cls_name in stack:
        raise ModelError(Diagnostic(
            "E_CONTAIN_CYCLE",
            f"containment cycle through '{cls_name}'", cls.span))
    node = InstanceNode(path, cls, len(tree.order), parent)
    tree.nodes[path] = node
    tree.order.append(path)
    for part in cls.parts:
        _expand(unit, part.actor_class, f"{path}/{part.name}", path,
                tree, stack + (cls_name,))


def _relay_target(tree: InstanceTree, path: str, port: str) -> tuple[str, str]:
    """Follow inward relays from a provided port to the final provider."""
    while True:
        cls = tree.nodes[path].cls
        hop = None
        for ch in cls.channels:
            for this, other in ((ch.end_a, ch.end_b), (ch.end_b, ch.end_a)):
                if this.is_self and this.port == port and not other.is_self:
                    hop = other
                    break
            if hop is not None:
                break
        if hop is None:
            return path, port
        path = f"{path}/{hop.part}"
        port = hop.port


def resolve_required(tree: InstanceTree, path: str, port: str,
                     span: Optional[SourceSpan] = None) -> str:
    """Resolve a required port of an instance to its provider instance."""
    visited: set[tuple[str, str]] = set()
    while True:
        if (path, port) in visited:
            raise ModelError(Diagnostic(
                "E_UNBOUND", f"relay cycle at {path}:{port}", span))
        visited.add((path, port))
        node = tree.nodes[path]
        if node.parent is None:
            raise ModelError(Diagnostic(
                "E_UNBOUND",
                f"required port '{port}' of '{path}' has no channel", span))
        parent = tree.nodes[node.parent]
        part_name = path.rsplit("/", 1)[1]
        hop = None
        for ch in parent.cls.channels:
            for this, other in ((ch.end_a, ch.end_b), (ch.end_b, ch.end_a)):
                if not this.is_self and this.part == part_name \
                        and this.port == port:
                    hop = other
                    break
            if hop is not None:
                break
        if hop is None:
            raise ModelError(Diagnostic(
                "E_UNBOUND",
                f"required port '{port}' of '{path}' has no channel", span))
        if hop.is_self:
            # relayed out through the container's own required port
            path, port = parent.path, hop.port
            continue
        provider = f"{parent.path}/{hop.part}"
        final_path, _final_port = _relay_target(tree, provider, hop.port)
        return final_path


def collect_timer_ids(cls: ActorClass) -> list[str]:
    """Timer ids of a class: periodic decls first, then one-shot set ids."""
    ids = [t.timer for t in cls.timers]

    def scan(stmts: list[Stmt]) -> None:
        for s in stmts:
            if isinstance(s, SetTimer) and s.timer not in ids:
                ids.append(s.timer)

    for m in cls.methods:
        scan(m.body)
    if cls.machine is not None:
        for tr in cls.machine.transitions:
            scan(tr.actions)
    return ids


def _port_calls(e: Expr) -> list[PortCall]:
    out: list[PortCall] = []

    def walk(x) -> None:
        if x is None:
            return
        if isinstance(x, PortCall):
            out.append(x)
            for a in x.args:
                walk(a)
            return
        for attr in ("operand", "left", "right"):
            if hasattr(x, attr):
                walk(getattr(x, attr))

    walk(e)
    return out


def _stmt_port_calls(stmts: list[Stmt]) -> list[tuple[str, str, list[Expr]]]:
    """(port, name, args) for every invocation inside a statement list."""
    out: list[tuple[str, str, list[Expr]]] = []
    for s in stmts:
        if isinstance(s, Invoke):
            out.append((s.port, s.name, s.args))
            exprs = list(s.args)
        elif isinstance(s, Assign):
            exprs = [s.value]
        elif isinstance(s, SetTimer):
            exprs = [s.ticks]
        elif isinstance(s, Return) and s.value is not None:
            exprs = [s.value]
        else:
            exprs = []
        for e in exprs:
            out += [(c.port, c.name, c.args) for c in _port_calls(e)]
    return out


def _block_dependencies(tree: InstanceTree, path: str) -> list[str]:
    """Block instances read (directly or through call chains) by a block input."""
    deps: list[str] = []
    visited: set[tuple[str, str]] = set()

    def follow(inst: str, port: str, sig: str) -> None:
        callee = tree.bindings.get((inst, port, sig))
        if callee is None:
            return
        key = (callee, sig)
        if key in visited:
            return
        visited.add(key)
        callee_cls = tree.nodes[callee].cls
        if callee_cls.block is not None and callee not in deps \
                and callee != path:
            deps.append(callee)
        m = callee_cls.find_method(sig)
        if m is not None:
            for p, s, args in _stmt_port_calls(m.body):
                follow(callee, p, s)

    cls = tree.nodes[path].cls
    for call in _port_calls(cls.block.input):
        follow(path, call.port, call.name)
    return deps


def _continuous_order(tree: InstanceTree) -> None:
    blocks = [p for p in tree.order if tree.nodes[p].cls.block is not None]
    deps = {p: _block_dependencies(tree, p) for p in blocks}
    tree.block_deps = deps
    remaining = list(blocks)  # preorder
    done: set[str] = set()
    order: list[str] = []
    while remaining:
        pick = None
        for p in remaining:
            if all(d in done for d in deps[p]):
                pick = p
                break
        if pick is None:
            pick = remaining[0]  # cycle: state-bearing blocks use last outputs
        order.append(pick)
        done.add(pick)
        remaining.remove(pick)
    tree.block_order = order


def algebraic_loops(tree: InstanceTree) -> list[list[str]]:
    """Dataflow cycles that pass through a stateless (limiter) block."""
    deps = tree.block_deps
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: dict[str, bool] = {}
    stack: list[str] = []
    sccs: list[list[str]] = []
    counter = [0]

    def strongconnect(v: str) -> None:
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack[v] = True
        for w in deps.get(v, []):
            if w not in index:
                strongconnect(w)
                low[v] = min(low[v], low[w])
            elif on_stack.get(w):
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on_stack[w] = False
                comp.append(w)
                if w == v:
                    break
            sccs.append(comp)

    for v in deps:
        if v not in index:
            strongconnect(v)
    loops = []
    for comp in sccs:
        cyclic = len(comp) > 1 or comp[0] in deps.get(comp[0], [])
        if cyclic and any(tree.nodes[p].cls.block.kind == "limiter"
                          for p in comp):
            loops.append(sorted(comp))
    return loops


def instantiate(unit: ModelUnit) -> InstanceTree:
    """Build the runtime instance tree of a validated, flattened unit.

    Raises ModelError with code E_UNBOUND if any required-port signature
    cannot be resolved to a provider.
    """
    if any(c.superclasses for c in unit.actor_classes):
        unit = flatten_inheritance(unit)
    tree = InstanceTree(unit=unit)
    _expand(unit, unit.root, "root", None, tree, ())
    for path in tree.order:
        cls = tree.nodes[path].cls
        for port in cls.ports:
            if port.direction != "requires":
                continue
            proto = unit.find_protocol(port.protocol)
            if proto is None:
                raise ModelError(Diagnostic(
                    "E_UNRESOLVED", f"protocol '{port.protocol}' not found",
                    port.span))
            callee = resolve_required(tree, path, port.name, port.span)
            for sig in proto.signatures:
                tree.bindings[(path, port.name, sig.name)] = callee
    _continuous_order(tree)
    return tree
