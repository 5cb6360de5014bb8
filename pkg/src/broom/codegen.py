"""Static flattening of an instance tree and portable C code emission.

The generated program replays the simulator's per-tick phase order with the
same arithmetic, operation for operation: every expression is lowered to
three-address temporaries so the evaluation order is pinned, doubles are
emitted as hex-float literals, 64-bit integers wrap, and integer division
truncates toward zero.  With floating-point contraction disabled at compile
time (-ffp-contract=off) the NDJSON trace written by the generated program
is byte-identical to the interpreter's.

Output layout: model.h, model.c, optionally trace_shim.c, SCHEDULE.txt.
Public API of the generated code:

    void model_init(void);
    int  model_tick(void);              /* 0 once halted */
    void model_set_trace(FILE *f);
    void model_write_header(FILE *f);
    extern void (*model_stimuli_hook)(long long tick);
    void inject_<instance>_<port>_<signature>(int as_method, ...);
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

from .engine import CALL_DEPTH_CAP, SimConfig, Stimulus
from .instance import InstanceTree, ModelError, _relay_target, collect_timer_ids
from .model import (
    ActorClass, Assign, Binary, CancelTimer, Diagnostic, Expr, Invoke, Lit,
    Method, Name, PortCall, Return, SetTimer, Signature, Stmt, Type, Unary,
    BOOL, INT, REAL, ENUM,
)
from .trace import TOOL_VERSION

_CTYPE = {BOOL: "int", INT: "long long", REAL: "double", ENUM: "const char *"}
_KIND = {BOOL: "bool", INT: "int", REAL: "real", ENUM: "enum"}


@dataclass
class CodegenConfig:
    out_dir: str
    emit_trace: bool = True


@dataclass
class FlatProgram:
    """A validated tree plus everything the emitter needs, precomputed."""
    tree: InstanceTree
    sim: SimConfig
    inst_id: dict[str, int] = field(default_factory=dict)
    mangled: dict[str, str] = field(default_factory=dict)
    schedule: list[str] = field(default_factory=list)
    state_fields: list[tuple[str, str, str]] = field(default_factory=list)


def _c_double(x: float) -> str:
    """Exact double literal (hex-float, C99)."""
    if x == int(x) and abs(x) < 1e15:
        # keep common round values readable; the decimal form is exact
        return f"{x!r}"
    return float(x).hex()


def _mangle(path: str) -> str:
    return path.replace("/", "_")


class _Symbols:
    """Deterministic, collision-free C identifier allocation."""

    def __init__(self):
        self._used: set[str] = set()

    def fresh(self, seed: str) -> str:
        name = seed
        n = 2
        while name in self._used:
            name = f"{seed}__{n}"
            n += 1
        self._used.add(name)
        return name


class _Strings:
    """Interned C string constants; equal strings share one pointer, which
    makes enum/state comparison a pointer comparison, same as the
    interpreter's string equality."""

    def __init__(self):
        self.ids: dict[str, str] = {}
        self.decls: list[str] = []

    def intern(self, s: str) -> str:
        if s not in self.ids:
            ident = f"S_{len(self.ids)}"
            self.ids[s] = ident
            self.decls.append(f'static const char {ident}[] = "{s}";')
        return self.ids[s]


class _Fn:
    """One generated function body: line buffer plus a temp allocator."""

    def __init__(self, gen: "_Gen", path: str, env: dict[str, Type]):
        self.gen = gen
        self.path = path
        self.env = env
        self.lines: list[str] = []
        self._tmp = 0

    def tmp(self, ctype: str) -> str:
        self._tmp += 1
        name = f"t{self._tmp}"
        self.lines.append(f"  {ctype} {name};")
        return name

    def put(self, line: str) -> None:
        self.lines.append("  " + line)


class _Gen:
    def __init__(self, prog: FlatProgram):
        self.prog = prog
        self.tree = prog.tree
        self.sim = prog.sim
        self.strings = _Strings()
        self.syms = _Symbols()
        self.sig_ids: dict[str, int] = {}       # message/timer name -> id
        self.attr_var: dict[tuple[str, str], str] = {}
        self.state_var: dict[str, str] = {}
        self.pi_var: dict[str, str] = {}
        self.timer_armed: dict[tuple[str, str], str] = {}
        self.timer_due: dict[tuple[str, str], str] = {}
        self.protos: list[str] = []
        self.funcs: list[str] = []
        self.inject_protos: list[str] = []
        self.max_args = 1

    # -- naming -------------------------------------------------------------

    def sig_id(self, name: str) -> int:
        if name not in self.sig_ids:
            self.sig_ids[name] = len(self.sig_ids)
            self.strings.intern(name)
        return self.sig_ids[name]

    def _setup_names(self) -> None:
        tree = self.tree
        for path in tree.order:
            m = self.syms.fresh(_mangle(path))
            self.prog.mangled[path] = m
            self.prog.inst_id[path] = tree.nodes[path].index
            cls = tree.nodes[path].cls
            for a in cls.attributes:
                var = self.syms.fresh(f"v_{m}_{a.name}")
                self.attr_var[(path, a.name)] = var
                self.prog.state_fields.append(
                    (var, _CTYPE[a.type.kind], self._init_c(a)))
            if cls.machine is not None:
                var = self.syms.fresh(f"st_{m}")
                self.state_var[path] = var
                self.prog.state_fields.append(
                    (var, "const char *",
                     self.strings.intern(cls.machine.initial)))
            if cls.block is not None and cls.block.kind == "pi":
                var = self.syms.fresh(f"pi_{m}")
                self.pi_var[path] = var
                self.prog.state_fields.append((var, "double", "0.0"))
            for tid in collect_timer_ids(cls):
                self.sig_id(tid)
                self.timer_armed[(path, tid)] = self.syms.fresh(f"ta_{m}_{tid}")
                self.timer_due[(path, tid)] = self.syms.fresh(f"td_{m}_{tid}")
        for proto in tree.unit.protocols:
            for sig in proto.signatures:
                self.sig_id(sig.name)
                self.max_args = max(self.max_args, len(sig.params))
                for p in sig.params:
                    if p.type.kind == ENUM:
                        for mb in p.type.members:
                            self.strings.intern(mb)

    def _init_c(self, a) -> str:
        t = a.type
        e = a.init
        if e is None:
            if t.kind == BOOL:
                return "0"
            if t.kind == INT:
                return "0LL"
            if t.kind == REAL:
                return "0.0"
            return self.strings.intern(t.members[0])
        if isinstance(e, Lit):
            v = e.value
            if isinstance(v, bool):
                return "1" if v else "0"
            if t.kind == REAL:
                return _c_double(float(v))
            return f"{v}LL"
        if isinstance(e, Unary):
            v = e.operand.value
            if t.kind == REAL:
                return _c_double(-float(v))
            return f"{-v}LL"
        return self.strings.intern(e.ident)  # enum member

    # -- type inference (mirror of the validator's result types) -----------

    def expr_kind(self, path: str, env: dict[str, Type], e: Expr) -> str:
        if isinstance(e, Lit):
            if isinstance(e.value, bool):
                return "bool"
            return "int" if isinstance(e.value, int) else "real"
        if isinstance(e, Name):
            if e.ident in env:
                return _KIND[env[e.ident].kind]
            attr = self.tree.nodes[path].cls.find_attribute(e.ident)
            if attr is not None:
                return _KIND[attr.type.kind]
            return "enum"
        if isinstance(e, Unary):
            return "bool" if e.op == "not" else \
                self.expr_kind(path, env, e.operand)
        if isinstance(e, Binary):
            if e.op in ("and", "or", "==", "!=", "<", "<=", ">", ">="):
                return "bool"
            lk = self.expr_kind(path, env, e.left)
            rk = self.expr_kind(path, env, e.right)
            return "int" if lk == "int" and rk == "int" else "real"
        if isinstance(e, PortCall):
            sig = self._sig_of(path, e.port, e.name)
            return _KIND[sig.ret.kind] if sig.ret is not None else "void"
        raise ModelError(Diagnostic(
            "E_UNSUPPORTED", f"cannot generate code for {e!r}", None))

    def _sig_of(self, path: str, port: str, name: str) -> Signature:
        cls = self.tree.nodes[path].cls
        p = cls.find_port(port)
        proto = self.tree.unit.find_protocol(p.protocol)
        return proto.find(name)

    # -- expression lowering ------------------------------------------------

    def expr(self, fn: _Fn, e: Expr) -> tuple[str, str]:
        """Lower an expression to three-address code; returns (cvar, kind)."""
        if isinstance(e, Lit):
            v = e.value
            if isinstance(v, bool):
                return ("1" if v else "0", "bool")
            if isinstance(v, int):
                return (f"{v}LL", "int")
            return (_c_double(v), "real")
        if isinstance(e, Name):
            if e.ident in fn.env:
                return (f"p_{e.ident}", _KIND[fn.env[e.ident].kind])
            attr = self.tree.nodes[fn.path].cls.find_attribute(e.ident)
            if attr is not None:
                return (self.attr_var[(fn.path, e.ident)],
                        _KIND[attr.type.kind])
            return (self.strings.intern(e.ident), "enum")
        if isinstance(e, Unary):
            v, k = self.expr(fn, e.operand)
            if e.op == "not":
                t = fn.tmp("int")
                fn.put(f"{t} = !{v};")
                return (t, "bool")
            if k == "int":
                t = fn.tmp("long long")
                fn.put(f"{t} = (long long)(0ULL - (unsigned long long){v});")
                return (t, "int")
            t = fn.tmp("double")
            fn.put(f"{t} = -{v};")
            return (t, "real")
        if isinstance(e, Binary):
            return self._binary(fn, e)
        if isinstance(e, PortCall):
            return self._portcall(fn, e)
        raise ModelError(Diagnostic(
            "E_UNSUPPORTED", f"cannot generate code for {e!r}", None))

    def _binary(self, fn: _Fn, e: Binary) -> tuple[str, str]:
        lv, lk = self.expr(fn, e.left)
        rv, rk = self.expr(fn, e.right)
        op = e.op
        pid = self.prog.inst_id[fn.path]
        if op in ("and", "or"):
            # the interpreter evaluates both operands, so do we (already
            # lowered to temps above); && / || only combine the results
            t = fn.tmp("int")
            cop = "&&" if op == "and" else "||"
            fn.put(f"{t} = ({lv} {cop} {rv});")
            return (t, "bool")
        if op in ("==", "!=", "<", "<=", ">", ">="):
            t = fn.tmp("int")
            fn.put(f"{t} = ({lv} {op} {rv});")
            return (t, "bool")
        if lk == "int" and rk == "int":
            t = fn.tmp("long long")
            if op == "/":
                fn.put(f"if ({rv} == 0) "
                       f'fault({pid}, {self.strings.intern("div_by_zero")});')
                fn.put(f"{t} = ({rv} == -1) ? "
                       f"(long long)(0ULL - (unsigned long long){lv}) "
                       f": ({lv} / {rv});")
            else:
                fn.put(f"{t} = (long long)((unsigned long long){lv} "
                       f"{op} (unsigned long long){rv});")
            return (t, "int")
        a = lv if lk == "real" else f"(double){lv}"
        b = rv if rk == "real" else f"(double){rv}"
        t = fn.tmp("double")
        if op == "/":
            fn.put(f"if ({b} == 0.0) "
                   f'fault({pid}, {self.strings.intern("div_by_zero")});')
        fn.put(f"{t} = {a} {op} {b};")
        return (t, "real")

    def _coerce(self, val: str, have: str, want_type: Type) -> str:
        if want_type.kind == REAL and have == "int":
            return f"(double){val}"
        return val

    def _portcall(self, fn: _Fn, e: PortCall) -> tuple[str, str]:
        sig = self._sig_of(fn.path, e.port, e.name)
        callee = self.tree.bindings[(fn.path, e.port, e.name)]
        args = []
        for a, p in zip(e.args, sig.params):
            v, k = self.expr(fn, a)
            args.append(self._coerce(v, k, p.type))
        if sig.kind == "message":
            self._emit_send(fn, self.prog.inst_id[fn.path], callee, sig, args)
            return ("0", "void")
        cm = self.prog.mangled[callee]
        call = f"call_{cm}_{e.name}({self.prog.inst_id[fn.path]}" + \
            "".join(f", {a}" for a in args) + ")"
        if sig.ret is None:
            fn.put(call + ";")
            return ("0", "void")
        t = fn.tmp(_CTYPE[sig.ret.kind])
        fn.put(f"{t} = {call};")
        return (t, _KIND[sig.ret.kind])

    def _emit_send(self, fn: _Fn, src: int, callee: str, sig: Signature,
                   args: list[str]) -> None:
        dst = self.prog.inst_id[callee]
        n = len(args)
        fn.put("{")
        if n:
            fn.put(f"  bval a[{n}];")
            for i, (cv, p) in enumerate(zip(args, sig.params)):
                fn.put(f"  a[{i}] = {self._bv(cv, p.type)};")
            fn.put(f"  send({src}, {dst}, {self.sig_id(sig.name)}, {n}, a);")
        else:
            fn.put(f"  send({src}, {dst}, {self.sig_id(sig.name)}, 0, "
                   "(const bval *)0);")
        fn.put("}")

    @staticmethod
    def _bv_kind(t: Type) -> str:
        return {BOOL: "bv_b", INT: "bv_i", REAL: "bv_r", ENUM: "bv_s"}[t.kind]

    def _bv(self, cv: str, t: Type) -> str:
        return f"{self._bv_kind(t)}({cv})"

    # -- statement lowering -------------------------------------------------

    def stmts(self, fn: _Fn, body: list[Stmt], ret: Optional[Type]) -> None:
        for s in body:
            if isinstance(s, Assign):
                attr = self.tree.nodes[fn.path].cls.find_attribute(s.target)
                v, k = self.expr(fn, s.value)
                fn.put(f"{self.attr_var[(fn.path, s.target)]} = "
                       f"{self._coerce(v, k, attr.type)};")
            elif isinstance(s, Invoke):
                self.expr(fn, PortCall(s.port, s.name, s.args))
            elif isinstance(s, SetTimer):
                v, k = self.expr(fn, s.ticks)
                t = fn.tmp("long long")
                cast = f"(long long){v}" if k != "int" else v
                fn.put(f"{t} = {cast};")
                fn.put(f"if ({t} < 1) {t} = 1;")
                fn.put(f"{self.timer_armed[(fn.path, s.timer)]} = 1;")
                fn.put(f"{self.timer_due[(fn.path, s.timer)]} = g_tick + {t};")
            elif isinstance(s, CancelTimer):
                fn.put(f"{self.timer_armed[(fn.path, s.timer)]} = 0;")
            elif isinstance(s, Return):
                if s.value is None or ret is None:
                    fn.put("return" + self._default_ret(ret) + ";")
                else:
                    v, k = self.expr(fn, s.value)
                    fn.put(f"return {self._coerce(v, k, ret)};")

    def _default_ret(self, ret: Optional[Type]) -> str:
        if ret is None:
            return ""
        if ret.kind == BOOL:
            return " 0"
        if ret.kind == INT:
            return " 0LL"
        if ret.kind == REAL:
            return " 0.0"
        return " " + self.strings.intern(ret.members[0])

    # -- generated functions -------------------------------------------------

    def _param_list(self, params) -> str:
        return "".join(f", {_CTYPE[p.type.kind]} p_{p.name}" for p in params)

    def _machine_has_trigger(self, cls: ActorClass, name: str) -> bool:
        return cls.machine is not None and any(
            t.trigger == name for t in cls.machine.transitions)

    def _trigger_params(self, cls: ActorClass, name: str):
        """Parameter list a trigger's guard/actions may reference.

        Mirrors the interpreter: a method's own parameters when invoked
        synchronously, otherwise the providing protocol signature's."""
        m = cls.find_method(name)
        if m is not None:
            return m.params
        for port in cls.ports:
            if port.direction != "provides":
                continue
            proto = self.tree.unit.find_protocol(port.protocol)
            sig = proto.find(name) if proto else None
            if sig is not None:
                return sig.params
        return []

    def gen_methods(self, path: str) -> None:
        cls = self.tree.nodes[path].cls
        m_inst = self.prog.mangled[path]
        pid = self.prog.inst_id[path]
        for m in cls.methods:
            env = {p.name: p.type for p in m.params}
            rtype = "void" if m.ret is None else _CTYPE[m.ret.kind]
            plist = self._param_list(m.params)
            # body function: straight statement lowering, default fall-off
            fn = _Fn(self, path, env)
            self.stmts(fn, m.body, m.ret)
            fn.put("return" + self._default_ret(m.ret) + ";")
            sig_b = f"static {rtype} body_{m_inst}_{m.name}(" + \
                (plist[2:] if plist else "void") + ")"
            self.protos.append(sig_b + ";")
            self.funcs.append(sig_b + " {\n" + "\n".join(fn.lines) + "\n}")
            # call wrapper: trace events, depth cap, post-body transition
            fn = _Fn(self, path, env)
            name_s = self.strings.intern(m.name)
            fn.put(f"if (g_depth >= {CALL_DEPTH_CAP}) "
                   f'fault({pid}, {self.strings.intern("call_depth")});')
            n = len(m.params)
            if n:
                fn.put(f"bval a[{n}];")
                for i, p in enumerate(m.params):
                    fn.put(f"a[{i}] = {self._bv('p_' + p.name, p.type)};")
                fn.put(f'emit("call", src, {pid}, {name_s}, a, {n});')
            else:
                fn.put(f'emit("call", src, {pid}, {name_s}, '
                       "(const bval *)0, 0);")
            fn.put("g_depth++;")
            argv = ", ".join(f"p_{p.name}" for p in m.params)
            if m.ret is None:
                fn.put(f"body_{m_inst}_{m.name}({argv});")
            else:
                fn.put(f"{rtype} ret = body_{m_inst}_{m.name}({argv});")
            if self._machine_has_trigger(cls, m.name):
                fn.put(f"try_tr_{m_inst}_{m.name}({argv});")
            fn.put("g_depth--;")
            if m.ret is None:
                fn.put(f'emit("call_return", {pid}, src, {name_s}, '
                       "(const bval *)0, 0);")
            else:
                fn.put("{ bval r[1]; "
                       f"r[0] = {self._bv('ret', m.ret)}; "
                       f'emit("call_return", {pid}, src, {name_s}, r, 1); }}')
                fn.put("return ret;")
            sig_c = f"static {rtype} call_{m_inst}_{m.name}(int src{plist})"
            self.protos.append(sig_c + ";")
            self.funcs.append(sig_c + " {\n" + "\n".join(fn.lines) + "\n}")

    def gen_transition_table(self, cls: ActorClass) -> str:
        rows = []
        for tr in cls.machine.transitions:
            rows.append(
                "  { %s, %s, %s, %s }," % (
                    self.strings.intern(tr.source),
                    self.strings.intern(tr.target),
                    self.strings.intern(f"{tr.source}->{tr.target}"),
                    self.strings.intern(tr.trigger)))
        return (f"static const tt_entry TT_{cls.name}[] = {{\n"
                + "\n".join(rows) + "\n};")

    def gen_try_transitions(self, path: str) -> None:
        cls = self.tree.nodes[path].cls
        if cls.machine is None:
            return
        m_inst = self.prog.mangled[path]
        pid = self.prog.inst_id[path]
        st = self.state_var[path]
        triggers: list[str] = []
        for tr in cls.machine.transitions:
            if tr.trigger not in triggers:
                triggers.append(tr.trigger)
        for trig in triggers:
            params = self._trigger_params(cls, trig)
            env = {p.name: p.type for p in params}
            plist = self._param_list(params)
            fn = _Fn(self, path, env)
            for k, tr in enumerate(cls.machine.transitions):
                if tr.trigger != trig:
                    continue
                fn.put(f"if ({st} == {self.strings.intern(tr.source)}) {{")
                inner = _Fn(self, path, env)
                if tr.guard is not None:
                    g, _ = self.expr(inner, tr.guard)
                    inner.put(f"if ({g}) {{")
                    self._fire_transition(inner, path, cls, k, trig)
                    inner.put("}")
                else:
                    self._fire_transition(inner, path, cls, k, trig)
                fn.lines += ["  " + ln for ln in inner.lines]
                fn.put("}")
            fn.put("return 0;")
            sig = (f"static int try_tr_{m_inst}_{trig}("
                   + (plist[2:] if plist else "void") + ")")
            self.protos.append(sig + ";")
            self.funcs.append(sig + " {\n" + "\n".join(fn.lines) + "\n}")

    def _fire_transition(self, fn: _Fn, path: str, cls: ActorClass,
                         k: int, trig: str) -> None:
        pid = self.prog.inst_id[path]
        st = self.state_var[path]
        tr = cls.machine.transitions[k]
        fn.put(f"{st} = {self.strings.intern(tr.target)};")
        fn.put(f"chg[{pid}] = 1;")
        fn.put("{ bval a[1]; "
               f"a[0] = bv_s({self.strings.intern(trig)}); "
               f'emit("transition", {pid}, {pid}, '
               f"TT_{cls.name}[{k}].label, a, 1); }}")
        inner = _Fn(self, path, fn.env)
        inner._tmp = fn._tmp  # continue temp numbering; same C scope chain
        self.stmts(inner, tr.actions, None)
        fn._tmp = inner._tmp
        fn.lines += inner.lines
        fn.put("return 1;")

    def gen_process(self, path: str) -> None:
        """Queue-message dispatch for one instance (msg_recv is emitted by
        the drain loop, which sees the tagged payload generically)."""
        cls = self.tree.nodes[path].cls
        m_inst = self.prog.mangled[path]
        names: list[str] = []
        for port in cls.ports:
            if port.direction != "provides":
                continue
            proto = self.tree.unit.find_protocol(port.protocol)
            for sig in proto.signatures:
                if sig.name not in names:
                    names.append(sig.name)
        for tid in collect_timer_ids(cls):
            if tid not in names:
                names.append(tid)
        lines = []
        unpack = {BOOL: "(int)a[{i}].i", INT: "a[{i}].i",
                  REAL: "a[{i}].d", ENUM: "a[{i}].s"}
        for nm in names:
            params = self._trigger_params(cls, nm)
            argv = ", ".join(
                unpack[p.type.kind].format(i=i)
                for i, p in enumerate(params))
            if self._machine_has_trigger(cls, nm):
                call = f"try_tr_{m_inst}_{nm}({argv});"
            elif cls.find_method(nm) is not None:
                m = cls.find_method(nm)
                argv = ", ".join(
                    unpack[p.type.kind].format(i=i)
                    for i, p in enumerate(m.params))
                call = f"body_{m_inst}_{nm}({argv});"
            else:
                continue
            lines.append(f"  if (sig == {self.sig_id(nm)}) {{ {call} "
                         "return; }")
        sig_c = f"static void process_{m_inst}(int src, int sig, " \
                "const bval *a)"
        self.protos.append(sig_c + ";")
        self.funcs.append(
            sig_c + " {\n  (void)src; (void)sig; (void)a;\n"
            + "\n".join(lines) + "\n}")

    # -- per-tick phases -----------------------------------------------------

    def gen_fire_timers(self) -> list[str]:
        out = ["static void fire_timers(void) {"]
        for path in self.tree.order:
            cls = self.tree.nodes[path].cls
            pid = self.prog.inst_id[path]
            for pt in cls.timers:
                out.append(f"  if (g_tick % {pt.period} == 0) "
                           f"fire({pid}, {self.sig_id(pt.timer)});")
            for tid in collect_timer_ids(cls):
                armed = self.timer_armed[(path, tid)]
                due = self.timer_due[(path, tid)]
                out.append(f"  if ({armed} && {due} <= g_tick) "
                           f"{{ {armed} = 0; fire({pid}, "
                           f"{self.sig_id(tid)}); }}")
        out.append("}")
        return out

    def gen_continuous(self) -> list[str]:
        out = ["static void continuous(void) {"]
        for path in self.tree.block_order:
            blk = self.tree.nodes[path].cls.block
            fn = _Fn(self, path, {})
            v, k = self.expr(fn, blk.input)
            u = fn.tmp("double")
            fn.put(f"{u} = {v if k == 'real' else '(double)' + v};")
            y = self.attr_var[(path, blk.out)]
            if blk.kind == "pt1":
                K, T = blk.params
                d1 = fn.tmp("double")
                m1 = fn.tmp("double")
                s1 = fn.tmp("double")
                m2 = fn.tmp("double")
                fn.put(f"{d1} = BROOM_DT / {_c_double(T)};")
                fn.put(f"{m1} = {_c_double(K)} * {u};")
                fn.put(f"{s1} = {m1} - {y};")
                fn.put(f"{m2} = {d1} * {s1};")
                fn.put(f"{y} = {y} + {m2};")
            elif blk.kind == "pi":
                Kp, Ki, lo, hi = blk.params
                iv = self.pi_var[path]
                i_new = fn.tmp("double")
                u_tr = fn.tmp("double")
                drv = fn.tmp("double")
                u_raw = fn.tmp("double")
                fn.put(f"{i_new} = {iv} + {u} * BROOM_DT;")
                fn.put(f"{u_tr} = {_c_double(Kp)} * {u} + "
                       f"{_c_double(Ki)} * {i_new};")
                fn.put(f"{drv} = {_c_double(Ki)} * {u};")
                fn.put(f"if (({u_tr} > {_c_double(hi)} && {drv} > 0.0) || "
                       f"({u_tr} < {_c_double(lo)} && {drv} < 0.0)) "
                       f"{i_new} = {iv};")
                fn.put(f"{u_raw} = {_c_double(Kp)} * {u} + "
                       f"{_c_double(Ki)} * {i_new};")
                fn.put(f"{iv} = {i_new};")
                fn.put(f"if ({u_raw} < {_c_double(lo)}) {y} = {_c_double(lo)};")
                fn.put(f"else if ({u_raw} > {_c_double(hi)}) "
                       f"{y} = {_c_double(hi)};")
                fn.put(f"else {y} = {u_raw};")
            else:  # limiter
                lo, hi = blk.params
                fn.put(f"if ({u} < {_c_double(lo)}) {y} = {_c_double(lo)};")
                fn.put(f"else if ({u} > {_c_double(hi)}) "
                       f"{y} = {_c_double(hi)};")
                fn.put(f"else {y} = {u};")
            out.append(f"  {{ /* {path} : {blk.kind} */")
            out += ["  " + ln for ln in fn.lines]
            out.append("  }")
        out.append("}")
        return out

    def gen_samples(self) -> list[str]:
        out = ["static void samples(void) {",
               "  if (g_tick % BROOM_SNAPSHOT_EVERY == 0) {"]
        for path in self.tree.order:
            blk = self.tree.nodes[path].cls.block
            if blk is None:
                continue
            pid = self.prog.inst_id[path]
            y = self.attr_var[(path, blk.out)]
            out.append("    { bval a[1]; "
                       f"a[0] = bv_r({y}); "
                       f'emit("sample", {pid}, {pid}, '
                       f"{self.strings.intern(blk.out)}, a, 1); }}")
        out.append("  }")
        for path in self.tree.order:
            if path not in self.state_var:
                continue
            pid = self.prog.inst_id[path]
            out.append(f"  if (chg[{pid}]) {{ bval a[1]; "
                       f"a[0] = bv_s({self.state_var[path]}); "
                       f'emit("sample", {pid}, {pid}, '
                       f'{self.strings.intern("state")}, a, 1); }}')
        out.append("}")
        return out

    # -- stimulus injection ---------------------------------------------------

    def gen_injections(self) -> None:
        tree = self.tree
        for path in tree.order:
            cls = tree.nodes[path].cls
            m_inst = self.prog.mangled[path]
            pid = self.prog.inst_id[path]
            for port in cls.ports:
                if port.direction != "provides":
                    continue
                if _relay_target(tree, path, port.name) != (path, port.name):
                    continue  # relayed elsewhere; resolve before injecting
                proto = tree.unit.find_protocol(port.protocol)
                for sig in proto.signatures:
                    plist = self._param_list(sig.params)
                    cname = f"inject_{m_inst}_{port.name}_{sig.name}"
                    decl = f"void {cname}(int as_method{plist})"
                    self.inject_protos.append(decl + ";")
                    fn = _Fn(self, path, {p.name: p.type
                                          for p in sig.params})
                    for p in sig.params:
                        if p.type.kind == ENUM:
                            # map caller strings onto interned pointers so
                            # enum comparison stays a pointer comparison
                            fn.put(f"p_{p.name} = canon(p_{p.name});")
                    argv = [f"p_{p.name}" for p in sig.params]
                    if sig.kind == "method" \
                            and cls.find_method(sig.name) is not None:
                        fn.put(f"if (as_method) {{ "
                               f"call_{m_inst}_{sig.name}(-1"
                               + "".join(f", {a}" for a in argv)
                               + "); return; }")
                    else:
                        fn.put("(void)as_method;")
                    self._emit_send(fn, -1, path, sig, argv)
                    self.funcs.append(
                        decl + " {\n" + "\n".join(fn.lines) + "\n}")


# ---------------------------------------------------------------------------
# Flatten + emit

def flatten(tree: InstanceTree, sim: SimConfig) -> FlatProgram:
    """Precompute the static schedule for code emission."""
    prog = FlatProgram(tree=tree, sim=sim)
    sched = prog.schedule
    sched.append(f"model {tree.unit.name}: "
                 f"dt={sim.dt} duration={sim.duration} "
                 f"ticks={sim.ticks} drain_cap={sim.drain_cap}")
    sched.append("per tick:")
    sched.append("  1. stimuli hook (injected events, list order)")
    sched.append("  2. timer fire, instances in preorder:")
    for path in tree.order:
        cls = tree.nodes[path].cls
        for pt in cls.timers:
            sched.append(f"       {path}: every {pt.timer} {pt.period}")
        for tid in collect_timer_ids(cls):
            if tid not in [t.timer for t in cls.timers]:
                sched.append(f"       {path}: one-shot {tid}")
    sched.append("  3. continuous pass, dataflow order:")
    for path in tree.block_order:
        blk = tree.nodes[path].cls.block
        deps = tree.block_deps.get(path, [])
        dep_s = f" (reads {', '.join(deps)})" if deps else ""
        sched.append(f"       {path}: {blk.kind} -> {blk.out}{dep_s}")
    sched.append("  4. discrete pass: drain queues in preorder until "
                 "quiescent (cap %d):" % sim.drain_cap)
    for path in tree.order:
        sched.append(f"       {path}")
    sched.append("  5. samples: block outputs every %d ticks; "
                 "FSM states when changed" % sim.snapshot_every)
    return prog


_RUNTIME = r"""
typedef struct { int tag; long long i; double d; const char *s; } bval;
typedef struct { const char *src, *dst, *label, *trigger; } tt_entry;

static bval bv_b(int v)         { bval x; x.tag = 0; x.i = v; x.d = 0; x.s = 0; return x; }
static bval bv_i(long long v)   { bval x; x.tag = 1; x.i = v; x.d = 0; x.s = 0; return x; }
static bval bv_r(double v)      { bval x; x.tag = 2; x.i = 0; x.d = v; x.s = 0; return x; }
static bval bv_s(const char *v) { bval x; x.tag = 3; x.i = 0; x.d = 0; x.s = v; return x; }

static long long g_tick;
static int g_halted;
static int g_depth;
static FILE *g_trace;
static jmp_buf g_jmp;
static int g_fault_path;
static const char *g_fault_name;
void (*model_stimuli_hook)(long long tick);

static void fmt_real(char *buf, double x) {
    sprintf(buf, "%.17g", x);
    if (!strpbrk(buf, ".eEnf")) strcat(buf, ".0");
}

static void fault(int path, const char *name) {
    g_fault_path = path;
    g_fault_name = name;
    longjmp(g_jmp, 1);
}

static void emit(const char *kind, int src, int dst, const char *name,
                 const bval *a, int nargs) {
    char tb[40], vb[40];
    int i;
    if (!g_trace) return;
    fmt_real(tb, (double)g_tick * BROOM_DT);
    fprintf(g_trace,
            "{\"tick\":%lld,\"time\":%s,\"kind\":\"%s\",\"src\":\"%s\","
            "\"dst\":\"%s\",\"name\":\"%s\",\"payload\":[",
            g_tick, tb, kind, src < 0 ? "env" : PATH[src],
            dst < 0 ? "env" : PATH[dst], name);
    for (i = 0; i < nargs; i++) {
        if (i) fputc(',', g_trace);
        switch (a[i].tag) {
        case 0: fputs(a[i].i ? "true" : "false", g_trace); break;
        case 1: fprintf(g_trace, "%lld", a[i].i); break;
        case 2: fmt_real(vb, a[i].d); fputs(vb, g_trace); break;
        default: fprintf(g_trace, "\"%s\"", a[i].s); break;
        }
    }
    fputs("]}\n", g_trace);
}

typedef struct { int src; int sig; int n; bval a[BROOM_MAX_ARGS]; } msg_t;

static msg_t *q_buf[@N@];
static int q_head[@N@], q_len[@N@];
static int chg[@N@];

static void enq(int dst, int src, int sig, int nargs, const bval *a) {
    msg_t *m = &q_buf[dst][(q_head[dst] + q_len[dst]) % BROOM_DRAIN_CAP];
    int i;
    m->src = src; m->sig = sig; m->n = nargs;
    for (i = 0; i < nargs; i++) m->a[i] = a[i];
    q_len[dst]++;
}

static void send(int src, int dst, int sig, int nargs, const bval *a) {
    if (q_len[dst] >= BROOM_DRAIN_CAP) fault(dst, @LIVELOCK@);
    emit("msg_send", src, dst, SIG_NAME[sig], a, nargs);
    enq(dst, src, sig, nargs, a);
}

static void fire(int path, int sig) {
    emit("timer_fire", path, path, SIG_NAME[sig], (const bval *)0, 0);
    if (q_len[path] >= BROOM_DRAIN_CAP) fault(path, @LIVELOCK@);
    enq(path, path, sig, 0, (const bval *)0);
}

static const char *canon(const char *s) {
    int i;
    for (i = 0; STRS[i]; i++)
        if (strcmp(STRS[i], s) == 0) return STRS[i];
    return s;
}
"""

_DRAIN = r"""
static void drain(void) {
    long long processed = 0;
    int i, any;
    for (;;) {
        any = 0;
        for (i = 0; i < @N@; i++) if (q_len[i]) { any = 1; break; }
        if (!any) break;
        for (i = 0; i < @N@; i++) {
            while (q_len[i] > 0) {
                msg_t *m;
                if (processed >= BROOM_DRAIN_CAP) fault(i, @LIVELOCK@);
                m = &q_buf[i][q_head[i]];
                q_head[i] = (q_head[i] + 1) % BROOM_DRAIN_CAP;
                q_len[i]--;
                processed++;
                emit("msg_recv", m->src, i, SIG_NAME[m->sig], m->a, m->n);
                PROC[i](m->src, m->sig, m->a);
            }
        }
    }
}
"""

_MAIN = r"""
void model_init(void) {
    int i;
    g_tick = 0; g_halted = 0; g_depth = 0;
    for (i = 0; i < @N@; i++) {
        if (!q_buf[i]) q_buf[i] = (msg_t *)malloc(sizeof(msg_t) * BROOM_DRAIN_CAP);
        q_head[i] = 0; q_len[i] = 0; chg[i] = 0;
    }
@INIT@
}

int model_tick(void) {
    int i;
    if (g_halted) return 0;
    g_tick++;
    for (i = 0; i < @N@; i++) chg[i] = 0;
    if (setjmp(g_jmp)) {
        emit("runtime_error", g_fault_path, g_fault_path, g_fault_name,
             (const bval *)0, 0);
        g_halted = 1;
        return 0;
    }
    if (model_stimuli_hook) model_stimuli_hook(g_tick);
    fire_timers();
    continuous();
    drain();
    samples();
    return 1;
}

void model_set_trace(FILE *f) { g_trace = f; }

long long model_tick_count(void) { return g_tick; }
"""


def _render_model_c(gen: _Gen) -> str:
    tree = gen.tree
    n = len(tree.order)
    livelock = gen.strings.intern("livelock")
    # phase generators may intern further strings; run them before the
    # string table is rendered
    fire_timers = gen.gen_fire_timers()
    continuous = gen.gen_continuous()
    samples = gen.gen_samples()
    tt_parts: list[str] = []
    emitted_tt: set[str] = set()
    for path in tree.order:
        cls = tree.nodes[path].cls
        if cls.machine is not None and cls.name not in emitted_tt:
            emitted_tt.add(cls.name)
            tt_parts.append(gen.gen_transition_table(cls))

    parts: list[str] = []
    parts.append('#include "model.h"')
    parts.append("#include <stdio.h>\n#include <stdlib.h>\n"
                 "#include <string.h>\n#include <setjmp.h>")
    parts.append("")
    parts += gen.strings.decls
    idents = [gen.strings.ids[s] for s in gen.strings.ids]
    parts.append("static const char * const STRS[] = {\n"
                 + "".join(f"  {i},\n" for i in idents)
                 + "  0\n};")
    parts.append("")
    paths = ",\n".join(f'  "{p}"' for p in tree.order)
    parts.append(f"static const char * const PATH[{n}] = {{\n{paths}\n}};")
    sig_names = ",\n".join(
        f"  {gen.strings.ids[nm]}"
        for nm, _ in sorted(gen.sig_ids.items(), key=lambda kv: kv[1]))
    parts.append("static const char * const SIG_NAME[] = {\n"
                 + sig_names + "\n};")
    parts.append(_RUNTIME.replace("@N@", str(n))
                 .replace("@LIVELOCK@", livelock))
    parts.append("/* ---- model state ---- */")
    for name, ctype, _init in gen.prog.state_fields:
        parts.append(f"static {ctype} {name};")
    for armed in gen.timer_armed.values():
        parts.append(f"static int {armed};")
    for due in gen.timer_due.values():
        parts.append(f"static long long {due};")
    parts.append("")
    parts += tt_parts
    parts.append("")
    parts += gen.protos
    parts.append("")
    parts += gen.funcs
    parts.append("")
    rows = ",\n".join(f"  process_{gen.prog.mangled[p]}" for p in tree.order)
    parts.append(f"static void (* const PROC[{n}])"
                 f"(int, int, const bval *) = {{\n{rows}\n}};")
    parts += fire_timers
    parts += continuous
    parts.append(_DRAIN.replace("@N@", str(n))
                 .replace("@LIVELOCK@", livelock))
    parts += samples
    init_lines = []
    for name, _ctype, init in gen.prog.state_fields:
        init_lines.append(f"    {name} = {init};")
    for armed in gen.timer_armed.values():
        init_lines.append(f"    {armed} = 0;")
    for due in gen.timer_due.values():
        init_lines.append(f"    {due} = 0;")
    parts.append(_MAIN.replace("@N@", str(n))
                 .replace("@INIT@", "\n".join(init_lines)))
    parts.append(
        'void model_write_header(FILE *f) {\n'
        '    char db[40], du[40];\n'
        '    fmt_real(db, BROOM_DT);\n'
        '    fmt_real(du, BROOM_DURATION);\n'
        '    fprintf(f, "{\\"model\\":\\"' + tree.unit.name
        + '\\",\\"dt\\":%s,\\"duration\\":%s,'
        + '\\"version\\":\\"' + TOOL_VERSION + '\\"}\\n", db, du);\n'
        '}')
    return "\n".join(parts) + "\n"


def _render_model_h(gen: _Gen) -> str:
    sim = gen.sim
    lines = [
        "#ifndef BROOM_MODEL_H",
        "#define BROOM_MODEL_H",
        "",
        "#include <stdio.h>",
        "",
        f"/* dt = {sim.dt!r}, duration = {sim.duration!r} */",
        f"#define BROOM_DT {_c_double(sim.dt)}",
        f"#define BROOM_DURATION {_c_double(sim.duration)}",
        f"#define BROOM_TICKS {sim.ticks}LL",
        f"#define BROOM_SNAPSHOT_EVERY {sim.snapshot_every}",
        f"#define BROOM_DRAIN_CAP {sim.drain_cap}",
        f"#define BROOM_MAX_ARGS {gen.max_args}",
        "",
        "void model_init(void);",
        "int model_tick(void);                 /* 0 once halted */",
        "void model_set_trace(FILE *f);",
        "void model_write_header(FILE *f);",
        "long long model_tick_count(void);",
        "extern void (*model_stimuli_hook)(long long tick);",
        "",
    ]
    lines += gen.inject_protos
    lines += ["", "#endif /* BROOM_MODEL_H */", ""]
    return "\n".join(lines)


def _render_shim(gen: _Gen, stimuli: list[Stimulus]) -> str:
    """A main() that replays a fixed stimulus list and prints the trace."""
    tree = gen.tree
    ordered = sorted(stimuli, key=lambda s: s.at_tick)
    by_tick: dict[int, list[str]] = {}
    for st in ordered:
        path, port = _relay_target(tree, st.path, st.port)
        cls = tree.nodes[path].cls
        p = cls.find_port(port)
        proto = tree.unit.find_protocol(p.protocol)
        sig = proto.find(st.name)
        if sig is None:
            raise ModelError(Diagnostic(
                "E_UNSUPPORTED",
                f"stimulus names unknown signature '{st.name}'", None))
        args = []
        for prm, v in zip(sig.params, st.args):
            if prm.type.kind == REAL:
                args.append(_c_double(float(v)))
            elif prm.type.kind == INT:
                args.append(f"{int(v)}LL")
            elif prm.type.kind == BOOL:
                args.append("1" if v else "0")
            else:
                if v not in prm.type.members:
                    raise ModelError(Diagnostic(
                        "E_UNSUPPORTED",
                        f"stimulus enum value '{v}' not a member", None))
                args.append(f'"{v}"')  # inject_* canonicalizes the pointer
        as_method = "1" if (st.kind == "method" and sig.kind == "method") \
            else "0"
        call = (f"inject_{gen.prog.mangled[path]}_{port}_{st.name}"
                f"({as_method}" + "".join(f", {a}" for a in args) + ");")
        by_tick.setdefault(max(st.at_tick, 1), []).append(call)
    cases = []
    for tick in sorted(by_tick):
        body = "\n".join(f"        {c}" for c in by_tick[tick])
        cases.append(f"    if (tick == {tick}LL) {{\n{body}\n    }}")
    hook = "\n".join(cases) if cases else "    (void)tick;"
    return ('#include "model.h"\n'
            "\n"
            "static void hook(long long tick) {\n"
            + hook + "\n"
            "}\n"
            "\n"
            "int main(void) {\n"
            "    long long k;\n"
            "    model_init();\n"
            "    model_set_trace(stdout);\n"
            "    model_stimuli_hook = hook;\n"
            "    model_write_header(stdout);\n"
            "    for (k = 0; k < BROOM_TICKS; k++)\n"
            "        if (!model_tick()) break;\n"
            "    fflush(stdout);\n"
            "    return 0;\n"
            "}\n")


def emit(prog: FlatProgram, cfg: CodegenConfig,
         stimuli: Optional[list[Stimulus]] = None) -> list[str]:
    """Write the source tree; returns the list of files written."""
    gen = _Gen(prog)
    gen._setup_names()
    for path in prog.tree.order:
        gen.gen_try_transitions(path)
        gen.gen_methods(path)
        gen.gen_process(path)
    gen.gen_injections()
    os.makedirs(cfg.out_dir, exist_ok=True)
    written = []

    def write(name: str, text: str) -> None:
        p = os.path.join(cfg.out_dir, name)
        with open(p, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        written.append(p)

    shim = _render_shim(gen, stimuli or []) if cfg.emit_trace else None
    write("model.h", _render_model_h(gen))
    write("model.c", _render_model_c(gen))
    if shim is not None:
        write("trace_shim.c", shim)
    write("SCHEDULE.txt", "\n".join(prog.schedule) + "\n")
    return written
