"""Deterministic fixed-step hybrid executor.

Per tick, in this order:
  1. deliver stimuli due this tick (list order for ties)
  2. fire expired timers, enqueuing their timeout messages
  3. continuous pass: block-bearing instances in dataflow order
     (instances inside a cycle read the previous tick's outputs)
  4. discrete pass: drain message queues in preorder-index order until
     quiescent or drain_cap messages have been processed
  5. record samples: block outputs per snapshot policy, FSM states when
     they changed this tick

The whole run is a pure function of (tree, config, stimuli): identical
inputs yield a bit-identical trace.  Integer arithmetic wraps at 64 bits
and division truncates toward zero so interpreted and generated-C runs
agree exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .blocks import PiState, Pt1State, limiter, pi_step, pt1_step
from .instance import InstanceTree, _relay_target, collect_timer_ids, default_value
from .model import (
    Assign, Binary, CancelTimer, Expr, Invoke, Lit, Name, PortCall, Return,
    SetTimer, Stmt, Unary, BOOL, INT, REAL, ENUM,
)
from .trace import Trace, TraceEvent

CALL_DEPTH_CAP = 64
_I64_MIN = -(1 << 63)
_I64_MASK = (1 << 64) - 1


def _wrap64(v: int) -> int:
    return ((v - _I64_MIN) & _I64_MASK) + _I64_MIN


@dataclass
class SimConfig:
    dt: float = 0.010
    duration: float = 1.0
    snapshot_every: int = 1
    drain_cap: int = 10000

    @property
    def ticks(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass
class Stimulus:
    at_tick: int
    path: str            # instance path; relay ports resolve to the handler
    port: str            # a provided port of that instance
    name: str            # signature name in the port's protocol
    kind: str            # "message" | "method"
    args: list = field(default_factory=list)


@dataclass
class TimelinessViolation:
    path: str
    trigger: TraceEvent
    deadline_ticks: int
    actual_ticks: int


@dataclass
class TimelinessReport:
    violations: list[TimelinessViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


class EngineHalted(Exception):
    """The run hit a runtime error and refuses further ticks."""


class _RuntimeFault(Exception):
    def __init__(self, path: str, name: str):
        super().__init__(name)
        self.path = path
        self.name = name


class _ReturnSignal(Exception):
    def __init__(self, value):
        self.value = value


class World:
    """Mutable execution state; owned by exactly one driver at a time."""

    def __init__(self, tree: InstanceTree, config: SimConfig,
                 stimuli: Optional[list[Stimulus]] = None):
        self.tree = tree
        self.config = config
        self.tick = 0
        self.halted = False
        self.attrs: dict[str, dict[str, object]] = {}
        self.fsm_state: dict[str, str] = {}
        self.pi_integral: dict[str, float] = {}
        self.queues: dict[str, deque] = {}
        self.timers: dict[str, dict[str, int]] = {}
        self.timer_ids: dict[str, list[str]] = {}
        self._events: list[TraceEvent] = []
        self._changed_states: set[str] = set()
        self._depth = 0
        for path in tree.order:
            cls = tree.nodes[path].cls
            self.attrs[path] = {}
            for a in cls.attributes:
                self.attrs[path][a.name] = (
                    self._const(a) if a.init is not None
                    else default_value(a))
            if cls.machine is not None:
                self.fsm_state[path] = cls.machine.initial
            if cls.block is not None and cls.block.kind == "pi":
                self.pi_integral[path] = 0.0
            self.queues[path] = deque()
            self.timers[path] = {}
            self.timer_ids[path] = collect_timer_ids(cls)
        stimuli = list(stimuli or [])
        # resolve relay ports up front so events name the real handler
        self.stimuli = []
        for st in stimuli:
            path, port = _relay_target(tree, st.path, st.port)
            self.stimuli.append(Stimulus(
                st.at_tick, path, port, st.name, st.kind, list(st.args)))
        self.stimuli.sort(key=lambda s: s.at_tick)
        self._next_stim = 0
        self._injected: deque = deque()

    def inject(self, st: Stimulus) -> None:
        """Queue a live stimulus; it is delivered at the start of the next
        tick, before any scheduled stimuli, in arrival order."""
        path, port = _relay_target(self.tree, st.path, st.port)
        self._injected.append(Stimulus(
            self.tick + 1, path, port, st.name, st.kind, list(st.args)))

    @staticmethod
    def _const(a):
        e = a.init
        if isinstance(e, Lit):
            v = e.value
            if a.type.kind == REAL and isinstance(v, int) \
                    and not isinstance(v, bool):
                return float(v)
            return v
        if isinstance(e, Unary):
            v = e.operand.value
            return -float(v) if a.type.kind == REAL else -v
        return e.ident  # enum member

    # -- tracing ------------------------------------------------------------

    def _emit(self, kind: str, src: str, dst: str, name: str,
              payload: list) -> None:
        self._events.append(TraceEvent(
            self.tick, self.tick * self.config.dt, kind, src, dst,
            name, payload))

    # -- expression evaluation ---------------------------------------------

    def eval(self, path: str, e: Expr, env: dict):
        if isinstance(e, Lit):
            return e.value
        if isinstance(e, Name):
            if e.ident in env:
                return env[e.ident]
            store = self.attrs[path]
            if e.ident in store:
                return store[e.ident]
            return e.ident  # enum member literal
        if isinstance(e, Unary):
            v = self.eval(path, e.operand, env)
            if e.op == "-":
                return _wrap64(-v) if isinstance(v, int) \
                    and not isinstance(v, bool) else -v
            return not v
        if isinstance(e, Binary):
            lv = self.eval(path, e.left, env)
            rv = self.eval(path, e.right, env)
            return self._binop(path, e.op, lv, rv)
        if isinstance(e, PortCall):
            return self.call(path, e.port, e.name, e.args, env)
        raise TypeError(f"unknown expression node {e!r}")

    def _binop(self, path: str, op: str, lv, rv):
        if op == "and":
            return bool(lv) and bool(rv)
        if op == "or":
            return bool(lv) or bool(rv)
        if op == "==":
            return lv == rv
        if op == "!=":
            return lv != rv
        if op in ("<", "<=", ">", ">="):
            if op == "<":
                return lv < rv
            if op == "<=":
                return lv <= rv
            if op == ">":
                return lv > rv
            return lv >= rv
        both_int = (isinstance(lv, int) and not isinstance(lv, bool)
                    and isinstance(rv, int) and not isinstance(rv, bool))
        if op == "+":
            r = lv + rv
        elif op == "-":
            r = lv - rv
        elif op == "*":
            r = lv * rv
        else:  # division
            if both_int:
                if rv == 0:
                    raise _RuntimeFault(path, "div_by_zero")
                q = abs(lv) // abs(rv)
                r = q if (lv < 0) == (rv < 0) else -q
            else:
                if float(rv) == 0.0:
                    raise _RuntimeFault(path, "div_by_zero")
                return float(lv) / float(rv)
        if both_int:
            return _wrap64(r)
        return float(r)

    # -- calls, messages, transitions ---------------------------------------

    def _signature(self, path: str, port: str, name: str):
        cls = self.tree.nodes[path].cls
        p = cls.find_port(port)
        proto = self.tree.unit.find_protocol(p.protocol)
        return proto.find(name)

    def _coerce_args(self, path: str, sig, args: list) -> list:
        out = []
        for p, v in zip(sig.params, args):
            if p.type.kind == REAL and isinstance(v, int) \
                    and not isinstance(v, bool):
                v = float(v)
            if p.type.kind == ENUM and v not in p.type.members:
                raise _RuntimeFault(path, "enum_mismatch")
            out.append(v)
        return out

    def call(self, path: str, port: str, name: str,
             arg_exprs: list[Expr], env: dict):
        """Synchronous method call through a required port."""
        sig = self._signature(path, port, name)
        args = [self.eval(path, a, env) for a in arg_exprs]
        callee = self.tree.bindings[(path, port, name)]
        if sig.kind == "message":
            self._send(path, callee, name, self._coerce_args(path, sig, args))
            return None
        return self._invoke_method(path, callee, name,
                                   self._coerce_args(path, sig, args), sig)

    def _invoke_method(self, src: str, dst: str, name: str,
                       args: list, sig):
        if self._depth >= CALL_DEPTH_CAP:
            raise _RuntimeFault(dst, "call_depth")
        self._emit("call", src, dst, name, list(args))
        cls = self.tree.nodes[dst].cls
        m = cls.find_method(name)
        env = {p.name: v for p, v in zip(m.params, args)}
        ret = None
        self._depth += 1
        try:
            try:
                self.exec_stmts(dst, m.body, env)
            except _ReturnSignal as r:
                ret = r.value
            if ret is None and m.ret is not None:
                ret = {BOOL: False, INT: 0, REAL: 0.0}.get(
                    m.ret.kind, m.ret.members[0] if m.ret.kind == ENUM
                    else None)
            if m.ret is not None and m.ret.kind == REAL \
                    and isinstance(ret, int) and not isinstance(ret, bool):
                ret = float(ret)
            self._try_transition(dst, name, env)
        finally:
            self._depth -= 1
        self._emit("call_return", dst, src, name,
                   [] if m.ret is None else [ret])
        return ret

    def _send(self, src: str, dst: str, name: str, args: list) -> None:
        if len(self.queues[dst]) >= self.config.drain_cap:
            raise _RuntimeFault(dst, "livelock")
        self._emit("msg_send", src, dst, name, list(args))
        self.queues[dst].append((src, name, args))

    def _try_transition(self, path: str, trigger: str, env: dict) -> bool:
        cls = self.tree.nodes[path].cls
        sm = cls.machine
        if sm is None:
            return False
        current = self.fsm_state[path]
        for tr in sm.transitions:
            if tr.source != current or tr.trigger != trigger:
                continue
            if tr.guard is not None and not self.eval(path, tr.guard, env):
                continue
            self.fsm_state[path] = tr.target
            self._changed_states.add(path)
            self._emit("transition", path, path,
                       f"{tr.source}->{tr.target}", [trigger])
            self.exec_stmts(path, tr.actions, env)
            return True
        return False

    def exec_stmts(self, path: str, stmts: list[Stmt], env: dict) -> None:
        for s in stmts:
            if isinstance(s, Assign):
                cls = self.tree.nodes[path].cls
                attr = cls.find_attribute(s.target)
                v = self.eval(path, s.value, env)
                if attr.type.kind == REAL and isinstance(v, int) \
                        and not isinstance(v, bool):
                    v = float(v)
                self.attrs[path][s.target] = v
            elif isinstance(s, Invoke):
                self.call(path, s.port, s.name, s.args, env)
            elif isinstance(s, SetTimer):
                ticks = self.eval(path, s.ticks, env)
                self.timers[path][s.timer] = self.tick + max(1, int(ticks))
            elif isinstance(s, CancelTimer):
                self.timers[path].pop(s.timer, None)
            elif isinstance(s, Return):
                value = None if s.value is None \
                    else self.eval(path, s.value, env)
                raise _ReturnSignal(value)

    def _process_message(self, dst: str, src: str, name: str,
                         args: list) -> None:
        self._emit("msg_recv", src, dst, name, list(args))
        cls = self.tree.nodes[dst].cls
        params = None
        for port in cls.ports:
            if port.direction != "provides":
                continue
            proto = self.tree.unit.find_protocol(port.protocol)
            sig = proto.find(name) if proto else None
            if sig is not None:
                params = sig.params
                break
        if params is None:
            m = cls.find_method(name)
            params = m.params if m is not None else []
        env = {p.name: v for p, v in zip(params, args)}
        sm = cls.machine
        has_rule = sm is not None and any(
            t.trigger == name for t in sm.transitions)
        if has_rule:
            self._try_transition(dst, name, env)
            return
        m = cls.find_method(name)
        if m is not None:
            env = {p.name: v for p, v in zip(m.params, args)}
            try:
                self.exec_stmts(dst, m.body, env)
            except _ReturnSignal:
                pass

    # -- per-tick phases ----------------------------------------------------

    def _deliver_stimuli(self) -> None:
        while self._injected:
            st = self._injected.popleft()
            sig = self._stim_signature(st)
            args = self._coerce_args(st.path, sig, st.args)
            if st.kind == "method" and sig.kind == "method":
                self._invoke_method("env", st.path, st.name, args, sig)
            else:
                self._send("env", st.path, st.name, args)
        while self._next_stim < len(self.stimuli) and \
                self.stimuli[self._next_stim].at_tick <= self.tick:
            st = self.stimuli[self._next_stim]
            self._next_stim += 1
            sig = self._stim_signature(st)
            args = self._coerce_args(st.path, sig, st.args)
            if st.kind == "method" and sig.kind == "method":
                self._invoke_method("env", st.path, st.name, args, sig)
            else:
                self._send("env", st.path, st.name, args)

    def _stim_signature(self, st: Stimulus):
        cls = self.tree.nodes[st.path].cls
        port = cls.find_port(st.port)
        if port is None:
            raise _RuntimeFault(st.path, "bad_stimulus")
        proto = self.tree.unit.find_protocol(port.protocol)
        sig = proto.find(st.name) if proto else None
        if sig is None:
            raise _RuntimeFault(st.path, "bad_stimulus")
        return sig

    def _fire_timers(self) -> None:
        for path in self.tree.order:
            cls = self.tree.nodes[path].cls
            for pt in cls.timers:
                if self.tick % pt.period == 0:
                    self._fire(path, pt.timer)
            armed = self.timers[path]
            for tid in self.timer_ids[path]:
                if tid in armed and armed[tid] <= self.tick:
                    del armed[tid]
                    self._fire(path, tid)

    def _fire(self, path: str, tid: str) -> None:
        self._emit("timer_fire", path, path, tid, [])
        if len(self.queues[path]) >= self.config.drain_cap:
            raise _RuntimeFault(path, "livelock")
        self.queues[path].append((path, tid, []))

    def _continuous_pass(self) -> None:
        dt = self.config.dt
        for path in self.tree.block_order:
            blk = self.tree.nodes[path].cls.block
            u = self.eval(path, blk.input, {})
            u = float(u)
            if blk.kind == "pt1":
                s = Pt1State(y=self.attrs[path][blk.out],
                             K=blk.params[0], T=blk.params[1])
                self.attrs[path][blk.out] = pt1_step(s, u, dt).y
            elif blk.kind == "pi":
                s = PiState(i=self.pi_integral[path], Kp=blk.params[0],
                            Ki=blk.params[1], lo=blk.params[2],
                            hi=blk.params[3])
                ns, out = pi_step(s, u, dt)
                self.pi_integral[path] = ns.i
                self.attrs[path][blk.out] = out
            else:
                self.attrs[path][blk.out] = limiter(
                    u, blk.params[0], blk.params[1])

    def _discrete_pass(self) -> None:
        processed = 0
        while True:
            if not any(self.queues[p] for p in self.tree.order):
                break
            for path in self.tree.order:
                q = self.queues[path]
                while q:
                    if processed >= self.config.drain_cap:
                        raise _RuntimeFault(path, "livelock")
                    src, name, args = q.popleft()
                    processed += 1
                    self._process_message(path, src, name, args)

    def _record_samples(self) -> None:
        if self.tick % self.config.snapshot_every == 0:
            for path in self.tree.order:
                blk = self.tree.nodes[path].cls.block
                if blk is not None:
                    self._emit("sample", path, path, blk.out,
                               [self.attrs[path][blk.out]])
        for path in self.tree.order:
            if path in self._changed_states:
                self._emit("sample", path, path, "state",
                           [self.fsm_state[path]])

    def step(self) -> list[TraceEvent]:
        """Advance exactly one tick; returns that tick's events."""
        if self.halted:
            raise EngineHalted("engine halted by a runtime error")
        self.tick += 1
        self._events = []
        self._changed_states = set()
        try:
            self._deliver_stimuli()
            self._fire_timers()
            self._continuous_pass()
            self._discrete_pass()
            self._record_samples()
        except _RuntimeFault as f:
            self._emit("runtime_error", f.path, f.path, f.name, [])
            self.halted = True
        return self._events


def run(tree: InstanceTree, config: SimConfig,
        stimuli: Optional[list[Stimulus]] = None) -> Trace:
    """Simulate for the configured duration and return the full trace."""
    world = World(tree, config, stimuli)
    trace = Trace(model=tree.unit.name, dt=config.dt,
                  duration=config.duration)
    for _ in range(config.ticks):
        trace.events.extend(world.step())
        if world.halted:
            break
    return trace


def check_timeliness(trace: Trace, tree: InstanceTree) -> TimelinessReport:
    """Every trigger delivery to a deadline-bearing actor must be followed
    by an observable reaction of that actor within the deadline.

    A reaction is the actor's first transition, call-return, or outbound
    call/send after the triggering event.  Actors that react with internal
    state changes only are never observable in the trace and so count as
    unanswered.
    """
    report = TimelinessReport()
    deadlines = {p: tree.nodes[p].cls.deadline_ticks
                 for p in tree.order
                 if tree.nodes[p].cls.deadline_ticks is not None}
    if not deadlines:
        return report
    end_tick = int(round(trace.duration / trace.dt)) if trace.dt else (
        trace.events[-1].tick if trace.events else 0)
    if trace.events and trace.events[-1].kind == "runtime_error":
        end_tick = trace.events[-1].tick   # run stopped early

    responses: dict[str, list[tuple[int, int]]] = {p: [] for p in deadlines}
    for idx, ev in enumerate(trace.events):
        if ev.src not in responses:
            continue
        if ev.kind in ("transition", "call_return") or (
                ev.kind in ("call", "msg_send") and ev.dst != ev.src):
            responses[ev.src].append((idx, ev.tick))
    for idx, ev in enumerate(trace.events):
        if ev.kind not in ("msg_recv", "call") or ev.dst not in deadlines:
            continue
        d = deadlines[ev.dst]
        reaction = next((t for i, t in responses[ev.dst] if i > idx), None)
        if reaction is not None:
            actual = reaction - ev.tick
            if actual > d:
                report.violations.append(TimelinessViolation(
                    ev.dst, ev, d, actual))
        elif end_tick - ev.tick > d:
            report.violations.append(TimelinessViolation(
                ev.dst, ev, d, end_tick - ev.tick))
    return report
