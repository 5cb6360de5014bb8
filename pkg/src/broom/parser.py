"""Textual concrete syntax for model units: lexer and recursive-descent parser.

Grammar (informal; `//` comments, UTF-8, LF or CRLF):

    unit     := "model" ID "{" item* "root" ID "}"
    item     := actor | data | protocol
    actor    := "actor" ID [":" ID ("," ID)*] "{" clause* "}"
    clause   := port | attr | part | channel | every | deadline
              | method | machine | block
    port     := ("provides"|"requires") ID ":" ID ";"
    attr     := "attr" ["tunable"] ID ":" type ["=" expr] ";"
    part     := "part" ID ":" ID ";"
    channel  := "connect" endpoint "--" endpoint ";"
    endpoint := (ID | "self") "." ID
    every    := "every" ID INT ";"
    deadline := "deadline" INT ";"
    method   := "method" ID "(" [param ("," param)*] ")" [":" type]
                "{" stmt* "}"
    machine  := "machine" "{" "initial" ID ";" trans* "}"
    trans    := ID "->" ID "on" ID ["if" expr] ["/" stmt*] ";"
    block    := "block" kind "(" num ("," num)* ")" "in" expr "out" ID ";"
    data     := "data" ID "{" ("field" ID ":" type ";" | method)* "}"
    protocol := "protocol" ID "{" (("method"|"message") sig ";")* "}"

A superclass list with more than one entry parses fine and is rejected by
validation (E_MULTI_INHERIT) so the diagnostic carries a real location.

Inside a transition guard, `/` is not a division operator at the top level
(it introduces the action list); parenthesize divisions in guards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .model import (
    ActorClass, Assign, Attribute, Binary, BlockRef, CancelTimer, Channel,
    DataClass, DataField, Diagnostic, Endpoint, Expr, Invoke, Lit, Method,
    ModelUnit, Name, Param, Part, PeriodicTimer, Port, PortCall, Protocol,
    Return, SetTimer, Signature, SourceSpan, StateMachine, Stmt, Transition,
    Type, Unary, BOOL, INT, REAL, ENUM, DATA,
)

KEYWORDS = {
    "model", "actor", "data", "protocol", "root", "provides", "requires",
    "part", "connect", "machine", "initial", "on", "if", "attr", "method",
    "message", "field", "tunable", "deadline", "block", "every", "timer",
    "cancel", "return", "true", "false", "and", "or", "not", "self",
    "enum", "in", "out", "pt1", "pi", "limiter", "bool", "int", "real",
}

PUNCT = [
    "--", "->", "==", "!=", "<=", ">=",
    "{", "}", "(", ")", ":", ";", ",", ".", "=", "/", "+", "-", "*",
    "<", ">",
]


@dataclass(frozen=True)
class Token:
    kind: str       # "id" | "kw" | "int" | "real" | "punct" | "eof"
    text: str
    line: int
    column: int


class SyntaxFault(Exception):
    def __init__(self, diag: Diagnostic):
        super().__init__(diag.format())
        self.diag = diag


def tokenize(text: str, file: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\r":
            i += 1
            continue
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t":
            i += 1
            col += 1
            continue
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in KEYWORDS else "id"
            toks.append(Token(kind, word, line, col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            is_real = False
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                is_real = True
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    is_real = True
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            toks.append(Token("real" if is_real else "int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        matched = None
        for p in PUNCT:
            if text.startswith(p, i):
                matched = p
                break
        if matched is None:
            raise SyntaxFault(Diagnostic(
                "E_SYNTAX", f"unexpected character {c!r}",
                SourceSpan(file, line, col)))
        toks.append(Token("punct", matched, line, col))
        col += len(matched)
        i += len(matched)
    toks.append(Token("eof", "", line, col))
    return toks


class Parser:
    def __init__(self, toks: list[Token], file: str):
        self.toks = toks
        self.pos = 0
        self.file = file

    # -- token helpers ------------------------------------------------------

    @property
    def cur(self) -> Token:
        return self.toks[self.pos]

    def span(self, tok: Optional[Token] = None) -> SourceSpan:
        t = tok or self.cur
        return SourceSpan(self.file, t.line, t.column, max(1, len(t.text)))

    def fail(self, expected: str) -> SyntaxFault:
        t = self.cur
        got = t.text if t.kind != "eof" else "end of input"
        return SyntaxFault(Diagnostic(
            "E_SYNTAX", f"expected {expected}, got {got!r}", self.span()))

    def at_punct(self, p: str) -> bool:
        return self.cur.kind == "punct" and self.cur.text == p

    def at_kw(self, *kws: str) -> bool:
        return self.cur.kind == "kw" and self.cur.text in kws

    def take(self) -> Token:
        t = self.cur
        self.pos += 1
        return t

    def expect_punct(self, p: str) -> Token:
        if not self.at_punct(p):
            raise self.fail(f"'{p}'")
        return self.take()

    def expect_kw(self, kw: str) -> Token:
        if not self.at_kw(kw):
            raise self.fail(f"'{kw}'")
        return self.take()

    def expect_id(self, what: str = "identifier") -> Token:
        if self.cur.kind != "id":
            raise self.fail(what)
        return self.take()

    def skip_semis(self) -> None:
        while self.at_punct(";"):
            self.take()

    # -- unit ---------------------------------------------------------------

    def parse_unit(self) -> ModelUnit:
        start = self.expect_kw("model")
        name = self.expect_id("model name")
        self.expect_punct("{")
        unit = ModelUnit(name=name.text)
        unit.span = self.span(start)
        while not self.at_kw("root"):
            if self.at_kw("actor"):
                unit.actor_classes.append(self.parse_actor())
            elif self.at_kw("data"):
                unit.data_classes.append(self.parse_data())
            elif self.at_kw("protocol"):
                unit.protocols.append(self.parse_protocol())
            else:
                raise self.fail("'actor', 'data', 'protocol' or 'root'")
        self.expect_kw("root")
        unit.root = self.expect_id("root actor class name").text
        self.expect_punct("}")
        if self.cur.kind != "eof":
            raise self.fail("end of input")
        return unit

    # -- actors -------------------------------------------------------------

    def parse_actor(self) -> ActorClass:
        start = self.expect_kw("actor")
        name = self.expect_id("actor class name")
        ac = ActorClass(name=name.text)
        ac.span = self.span(name)
        if self.at_punct(":"):
            self.take()
            ac.superclasses.append(self.expect_id("superclass name").text)
            while self.at_punct(","):
                self.take()
                ac.superclasses.append(self.expect_id("superclass name").text)
        self.expect_punct("{")
        while not self.at_punct("}"):
            self.parse_actor_clause(ac)
        self.take()
        return ac

    def parse_actor_clause(self, ac: ActorClass) -> None:
        if self.at_kw("provides", "requires"):
            tok = self.take()
            pname = self.expect_id("port name")
            self.expect_punct(":")
            proto = self.expect_id("protocol name")
            port = Port(pname.text, tok.text, proto.text)
            port.span = self.span(pname)
            ac.ports.append(port)
            self.skip_semis()
        elif self.at_kw("attr"):
            ac.attributes.append(self.parse_attr())
        elif self.at_kw("part"):
            self.take()
            pname = self.expect_id("part name")
            self.expect_punct(":")
            cls = self.expect_id("actor class name")
            part = Part(pname.text, cls.text)
            part.span = self.span(pname)
            ac.parts.append(part)
            self.skip_semis()
        elif self.at_kw("connect"):
            tok = self.take()
            a = self.parse_endpoint()
            self.expect_punct("--")
            b = self.parse_endpoint()
            ch = Channel(a, b)
            ch.span = self.span(tok)
            ac.channels.append(ch)
            self.skip_semis()
        elif self.at_kw("every"):
            tok = self.take()
            tid = self.expect_id("timer id")
            if self.cur.kind != "int":
                raise self.fail("tick period")
            period = int(self.take().text)
            pt = PeriodicTimer(tid.text, period)
            pt.span = self.span(tok)
            ac.timers.append(pt)
            self.skip_semis()
        elif self.at_kw("deadline"):
            tok = self.take()
            if self.cur.kind != "int":
                raise self.fail("deadline in ticks")
            ac.deadline_ticks = int(self.take().text)
            if ac.deadline_ticks is not None and ac.span is None:
                ac.span = self.span(tok)
            self.skip_semis()
        elif self.at_kw("method"):
            ac.methods.append(self.parse_method())
        elif self.at_kw("machine"):
            ac.machine = self.parse_machine()
        elif self.at_kw("block"):
            ac.block = self.parse_block()
        else:
            raise self.fail("actor clause")

    def parse_endpoint(self) -> Endpoint:
        if self.at_kw("self"):
            tok = self.take()
        else:
            tok = self.expect_id("part name or 'self'")
        self.expect_punct(".")
        port = self.expect_id("port name")
        ep = Endpoint(tok.text, port.text)
        ep.span = self.span(tok)
        return ep

    def parse_attr(self) -> Attribute:
        self.expect_kw("attr")
        tunable = False
        if self.at_kw("tunable"):
            self.take()
            tunable = True
        name = self.expect_id("attribute name")
        self.expect_punct(":")
        ty = self.parse_type()
        init = None
        if self.at_punct("="):
            self.take()
            init = self.parse_expr()
        self.skip_semis()
        attr = Attribute(name.text, ty, init, tunable)
        attr.span = self.span(name)
        return attr

    def parse_type(self) -> Type:
        if self.at_kw("bool"):
            self.take()
            return Type(BOOL)
        if self.at_kw("int"):
            self.take()
            return Type(INT)
        if self.at_kw("real"):
            self.take()
            return Type(REAL)
        if self.at_kw("enum"):
            self.take()
            self.expect_punct("(")
            members = [self.expect_id("enum member").text]
            while self.at_punct(","):
                self.take()
                members.append(self.expect_id("enum member").text)
            self.expect_punct(")")
            return Type(ENUM, tuple(members))
        if self.cur.kind == "id":
            return Type(DATA, ref=self.take().text)
        raise self.fail("type")

    def parse_method(self) -> Method:
        self.expect_kw("method")
        name = self.expect_id("method name")
        m = Method(name.text)
        m.span = self.span(name)
        self.expect_punct("(")
        if not self.at_punct(")"):
            m.params.append(self.parse_param())
            while self.at_punct(","):
                self.take()
                m.params.append(self.parse_param())
        self.expect_punct(")")
        if self.at_punct(":"):
            self.take()
            m.ret = self.parse_type()
        self.expect_punct("{")
        while not self.at_punct("}"):
            m.body.append(self.parse_stmt())
            self.skip_semis()
        self.take()
        return m

    def parse_param(self) -> Param:
        name = self.expect_id("parameter name")
        self.expect_punct(":")
        ty = self.parse_type()
        p = Param(name.text, ty)
        p.span = self.span(name)
        return p

    def parse_machine(self) -> StateMachine:
        tok = self.expect_kw("machine")
        self.expect_punct("{")
        self.expect_kw("initial")
        initial = self.expect_id("initial state").text
        self.skip_semis()
        sm = StateMachine(states=[], initial=initial)
        sm.span = self.span(tok)
        seen: list[str] = []
        while not self.at_punct("}"):
            tr = self.parse_transition()
            sm.transitions.append(tr)
            for s in (tr.source, tr.target):
                if s not in seen:
                    seen.append(s)
        self.take()
        if initial not in seen:
            seen.insert(0, initial)
        sm.states = seen
        return sm

    def parse_transition(self) -> Transition:
        src = self.expect_id("state name")
        self.expect_punct("->")
        dst = self.expect_id("state name")
        self.expect_kw("on")
        trig = self.expect_id("trigger name")
        tr = Transition(src.text, dst.text, trig.text)
        tr.span = self.span(src)
        if self.at_kw("if"):
            self.take()
            tr.guard = self.parse_expr(no_slash=True)
        if self.at_punct("/"):
            self.take()
            while not self.at_punct(";"):
                tr.actions.append(self.parse_stmt())
        self.expect_punct(";")
        return tr

    def parse_block(self) -> BlockRef:
        tok = self.expect_kw("block")
        if not self.at_kw("pt1", "pi", "limiter"):
            raise self.fail("'pt1', 'pi' or 'limiter'")
        kind = self.take().text
        self.expect_punct("(")
        params = [self.parse_number()]
        while self.at_punct(","):
            self.take()
            params.append(self.parse_number())
        self.expect_punct(")")
        self.expect_kw("in")
        inp = self.parse_expr()
        self.expect_kw("out")
        out = self.expect_id("output attribute").text
        self.skip_semis()
        blk = BlockRef(kind, tuple(params), inp, out)
        blk.span = self.span(tok)
        return blk

    def parse_number(self) -> float:
        sign = 1.0
        if self.at_punct("-"):
            self.take()
            sign = -1.0
        if self.cur.kind not in ("int", "real"):
            raise self.fail("number")
        return sign * float(self.take().text)

    # -- data and protocols -------------------------------------------------

    def parse_data(self) -> DataClass:
        self.expect_kw("data")
        name = self.expect_id("data class name")
        dc = DataClass(name=name.text)
        dc.span = self.span(name)
        self.expect_punct("{")
        while not self.at_punct("}"):
            if self.at_kw("field"):
                self.take()
                fname = self.expect_id("field name")
                self.expect_punct(":")
                ty = self.parse_type()
                f = DataField(fname.text, ty)
                f.span = self.span(fname)
                dc.fields.append(f)
                self.skip_semis()
            elif self.at_kw("method"):
                dc.accessors.append(self.parse_method())
            else:
                raise self.fail("'field' or 'method'")
        self.take()
        return dc

    def parse_protocol(self) -> Protocol:
        self.expect_kw("protocol")
        name = self.expect_id("protocol name")
        proto = Protocol(name=name.text)
        proto.span = self.span(name)
        self.expect_punct("{")
        while not self.at_punct("}"):
            if not self.at_kw("method", "message"):
                raise self.fail("'method' or 'message'")
            kind = self.take().text
            sname = self.expect_id("signature name")
            sig = Signature(sname.text, kind=kind)
            sig.span = self.span(sname)
            self.expect_punct("(")
            if not self.at_punct(")"):
                sig.params.append(self.parse_param())
                while self.at_punct(","):
                    self.take()
                    sig.params.append(self.parse_param())
            self.expect_punct(")")
            if self.at_punct(":"):
                if kind == "message":
                    raise self.fail("';' (messages have no return type)")
                self.take()
                sig.ret = self.parse_type()
            self.skip_semis()
            proto.signatures.append(sig)
        self.take()
        return proto

    # -- statements ---------------------------------------------------------

    def parse_stmt(self) -> Stmt:
        if self.at_kw("timer"):
            tok = self.take()
            tid = self.expect_id("timer id")
            ticks = self.parse_expr()
            st: Stmt = SetTimer(tid.text, ticks)
            st.span = self.span(tok)
            return st
        if self.at_kw("cancel"):
            tok = self.take()
            tid = self.expect_id("timer id")
            st = CancelTimer(tid.text)
            st.span = self.span(tok)
            return st
        if self.at_kw("return"):
            tok = self.take()
            value = None
            if not (self.at_punct(";") or self.at_punct("}")):
                value = self.parse_expr()
            st = Return(value)
            st.span = self.span(tok)
            return st
        name = self.expect_id("statement")
        if self.at_punct("="):
            self.take()
            value = self.parse_expr()
            st = Assign(name.text, value)
            st.span = self.span(name)
            return st
        if self.at_punct("."):
            self.take()
            sig = self.expect_id("signature name")
            self.expect_punct("(")
            args: list[Expr] = []
            if not self.at_punct(")"):
                args.append(self.parse_expr())
                while self.at_punct(","):
                    self.take()
                    args.append(self.parse_expr())
            self.expect_punct(")")
            st = Invoke(name.text, sig.text, args)
            st.span = self.span(name)
            return st
        raise self.fail("'=' or '.'")

    # -- expressions --------------------------------------------------------

    def parse_expr(self, no_slash: bool = False) -> Expr:
        return self.parse_or(no_slash)

    def parse_or(self, ns: bool) -> Expr:
        left = self.parse_and(ns)
        while self.at_kw("or"):
            tok = self.take()
            right = self.parse_and(ns)
            left = Binary(op="or", left=left, right=right,
                          span=self.span(tok))
        return left

    def parse_and(self, ns: bool) -> Expr:
        left = self.parse_not(ns)
        while self.at_kw("and"):
            tok = self.take()
            right = self.parse_not(ns)
            left = Binary(op="and", left=left, right=right,
                          span=self.span(tok))
        return left

    def parse_not(self, ns: bool) -> Expr:
        if self.at_kw("not"):
            tok = self.take()
            return Unary(op="not", operand=self.parse_not(ns),
                         span=self.span(tok))
        return self.parse_cmp(ns)

    def parse_cmp(self, ns: bool) -> Expr:
        left = self.parse_add(ns)
        if self.cur.kind == "punct" and self.cur.text in (
                "==", "!=", "<", "<=", ">", ">="):
            tok = self.take()
            right = self.parse_add(ns)
            return Binary(op=tok.text, left=left, right=right,
                          span=self.span(tok))
        return left

    def parse_add(self, ns: bool) -> Expr:
        left = self.parse_mul(ns)
        while self.cur.kind == "punct" and self.cur.text in ("+", "-"):
            tok = self.take()
            right = self.parse_mul(ns)
            left = Binary(op=tok.text, left=left, right=right,
                          span=self.span(tok))
        return left

    def parse_mul(self, ns: bool) -> Expr:
        left = self.parse_unary(ns)
        while self.cur.kind == "punct" and (
                self.cur.text == "*" or (self.cur.text == "/" and not ns)):
            tok = self.take()
            right = self.parse_unary(ns)
            left = Binary(op=tok.text, left=left, right=right,
                          span=self.span(tok))
        return left

    def parse_unary(self, ns: bool) -> Expr:
        if self.at_punct("-"):
            tok = self.take()
            return Unary(op="-", operand=self.parse_unary(ns),
                         span=self.span(tok))
        return self.parse_atom(ns)

    def parse_atom(self, ns: bool) -> Expr:
        if self.at_punct("("):
            self.take()
            inner = self.parse_expr(no_slash=False)
            self.expect_punct(")")
            return inner
        if self.at_kw("true"):
            return Lit(value=True, span=self.span(self.take()))
        if self.at_kw("false"):
            return Lit(value=False, span=self.span(self.take()))
        if self.cur.kind == "int":
            tok = self.take()
            return Lit(value=int(tok.text), span=self.span(tok))
        if self.cur.kind == "real":
            tok = self.take()
            return Lit(value=float(tok.text), span=self.span(tok))
        if self.cur.kind == "id":
            tok = self.take()
            if self.at_punct("."):
                self.take()
                sig = self.expect_id("signature name")
                self.expect_punct("(")
                args: list[Expr] = []
                if not self.at_punct(")"):
                    args.append(self.parse_expr())
                    while self.at_punct(","):
                        self.take()
                        args.append(self.parse_expr())
                self.expect_punct(")")
                return PortCall(port=tok.text, name=sig.text, args=args,
                                span=self.span(tok))
            return Name(ident=tok.text, span=self.span(tok))
        raise self.fail("expression")


def parse(text: str, file: str = "<string>") -> Union[ModelUnit, list[Diagnostic]]:
    """Parse source text into a ModelUnit, or return syntax diagnostics.

    Never raises on arbitrary input; any internal failure is converted into
    an E_SYNTAX diagnostic.
    """
    try:
        toks = tokenize(text, file)
        return Parser(toks, file).parse_unit()
    except SyntaxFault as e:
        return [e.diag]
    except RecursionError:
        return [Diagnostic("E_SYNTAX", "nesting too deep",
                           SourceSpan(file, 1, 1))]


def parse_file(path: str) -> Union[ModelUnit, list[Diagnostic]]:
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        return parse(f.read(), file=path)
