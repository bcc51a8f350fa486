"""The input language for system documents.

A document declares charts, assumptions, Pfaffian systems with independence
conditions, smooth maps, rename hints, and coframings:

    chart M: x u t;
    assume u != 0;
    system I { th = d(x) - u*d(t); } indep d(t);
    map phi: M -> Mbar { xb = x; ub = u; tb = t; }
    rename z = u^2;
    coframing C { theta th1 = d(x) - u*d(t); omega1 w = d(u); ... }

Scalars use rationals, identifiers, + - * / ^ with integer exponents,
function application F(x), and formal derivative nodes D(F(x), x).  Forms
are scalar-coefficient combinations of coordinate differentials d(x).
Comments run from ``#`` to end of line.  ``chart x u t;`` without a name is
accepted; unnamed charts are numbered, and systems bind to the most recent
chart unless they say ``on NAME``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import sympy as sp
from sympy.printing.str import StrPrinter

from .errors import ParseError, UnknownCoordinate
from .expr import AssumptionSet, Assumption, Chart, Scalar, canon
from .forms import DifferentialForm, SmoothMap, d_coord
from .linearize import AdaptedCoframing
from .pfaffian import PfaffianSystem

# ---------------------------------------------------------------------------
# tokens

_PUNCT = ("->", "!=", "+", "-", "*", "/", "^", "(", ")", "{", "}", ";", ":", ",", "=")


@dataclass(frozen=True)
class Token:
    kind: str  # ident | int | punct | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(Token("ident", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        matched = None
        for p in _PUNCT:
            if text.startswith(p, i):
                matched = p
                break
        if matched is None:
            raise ParseError(f"unexpected character {ch!r}", line, col)
        toks.append(Token("punct", matched, line, col))
        col += len(matched)
        i += len(matched)
    toks.append(Token("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# documents


@dataclass
class SystemDocument:
    charts: dict[str, Chart] = field(default_factory=dict)
    assumptions: AssumptionSet = field(default_factory=AssumptionSet)
    systems: dict[str, PfaffianSystem] = field(default_factory=dict)
    maps: dict[str, SmoothMap] = field(default_factory=dict)
    renames: dict[str, tuple[str, Scalar]] = field(default_factory=dict)
    coframings: dict[str, AdaptedCoframing] = field(default_factory=dict)
    chart_order: list[str] = field(default_factory=list)

    def chart_of(self, name: str) -> Chart:
        if name not in self.charts:
            raise ParseError(f"unknown chart {name}", 0, 0)
        return self.charts[name]

    def system(self, name: str) -> PfaffianSystem:
        if name not in self.systems:
            raise ParseError(f"unknown system {name}", 0, 0)
        return self.systems[name]

    def map(self, name: str) -> SmoothMap:
        if name not in self.maps:
            raise ParseError(f"unknown map {name}", 0, 0)
        return self.maps[name]


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0
        self.doc = SystemDocument()
        self._anon = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.peek()
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            raise ParseError(f"found {t.text or t.kind!r}", t.line, t.col, [want])
        return self.next()

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def fail(self, msg: str, expected=()):
        t = self.peek()
        raise ParseError(msg, t.line, t.col, expected)

    # -- grammar -----------------------------------------------------------

    def parse(self) -> SystemDocument:
        while not self.at("eof"):
            t = self.peek()
            if t.kind != "ident":
                self.fail(
                    f"found {t.text!r}",
                    ["chart", "assume", "system", "map", "rename", "coframing"],
                )
            if t.text == "chart":
                self.chart_stmt()
            elif t.text == "assume":
                self.assume_stmt()
            elif t.text == "system":
                self.system_stmt()
            elif t.text == "map":
                self.map_stmt()
            elif t.text == "rename":
                self.rename_stmt()
            elif t.text == "coframing":
                self.coframing_stmt()
            else:
                self.fail(
                    f"unknown statement {t.text!r}",
                    ["chart", "assume", "system", "map", "rename", "coframing"],
                )
        return self.doc

    def _current_chart(self) -> Chart:
        if not self.doc.chart_order:
            self.fail("no chart declared yet")
        return self.doc.charts[self.doc.chart_order[-1]]

    def chart_stmt(self):
        self.expect("ident", "chart")
        first = self.expect("ident")
        if self.at("punct", ":"):
            self.next()
            name = first.text
            coords = []
            while self.at("ident"):
                coords.append(self.next().text)
        else:
            self._anon += 1
            name = f"chart{self._anon}"
            coords = [first.text]
            while self.at("ident"):
                coords.append(self.next().text)
        self.expect("punct", ";")
        if name in self.doc.charts:
            raise ParseError(f"duplicate chart {name}", first.line, first.col)
        if len(set(coords)) != len(coords):
            raise ParseError(f"duplicate coordinate in chart {name}", first.line, first.col)
        self.doc.charts[name] = Chart(name=name, coords=tuple(coords))
        self.doc.chart_order.append(name)

    def assume_stmt(self):
        kw = self.expect("ident", "assume")
        lhs = self.parse_expr(self._all_symbols())
        if self.at("punct", "!="):
            self.next()
            rhs = self.parse_expr(self._all_symbols())
            self.expect("punct", ";")
            self.doc.assumptions = self.doc.assumptions.with_nonzero(
                canon(lhs - rhs), f"assume@{kw.line}"
            )
        elif self.at("punct", "="):
            self.next()
            rhs = self.parse_expr(self._all_symbols())
            self.expect("punct", ";")
            self.doc.assumptions = self.doc.assumptions.with_zero(
                canon(lhs - rhs), f"assume@{kw.line}"
            )
        else:
            self.fail("assumption needs != or =", ["!=", "="])

    def _all_symbols(self) -> Optional[set[str]]:
        # assumptions may reference any declared chart's coordinates
        out: set[str] = set()
        for ch in self.doc.charts.values():
            out.update(ch.coords)
        return out or None

    def system_stmt(self):
        self.expect("ident", "system")
        name_tok = self.expect("ident")
        chart = None
        if self.at("ident", "on"):
            self.next()
            chart = self.doc.chart_of(self.expect("ident").text)
        if chart is None:
            chart = self._current_chart()
        self.expect("punct", "{")
        gens = []
        while not self.at("punct", "}"):
            self.expect("ident")  # generator label (kept for readability only)
            self.expect("punct", "=")
            gens.append(self.parse_form(chart))
            self.expect("punct", ";")
        self.expect("punct", "}")
        indep = None
        if self.at("ident", "indep"):
            self.next()
            indep = self.parse_form(chart)
        self.expect("punct", ";")
        if name_tok.text in self.doc.systems:
            raise ParseError(
                f"duplicate system {name_tok.text}", name_tok.line, name_tok.col
            )
        self.doc.systems[name_tok.text] = PfaffianSystem(
            chart, tuple(gens), indep, name=name_tok.text
        )

    def map_stmt(self):
        self.expect("ident", "map")
        name_tok = self.expect("ident")
        self.expect("punct", ":")
        src = self.doc.chart_of(self.expect("ident").text)
        self.expect("punct", "->")
        dst = self.doc.chart_of(self.expect("ident").text)
        self.expect("punct", "{")
        comps = {}
        while not self.at("punct", "}"):
            target_tok = self.expect("ident")
            if not dst.has(target_tok.text):
                raise ParseError(
                    f"{target_tok.text} is not a coordinate of chart {dst.name}",
                    target_tok.line,
                    target_tok.col,
                )
            self.expect("punct", "=")
            comps[target_tok.text] = self.parse_expr(set(src.coords))
            self.expect("punct", ";")
        self.expect("punct", "}")
        if self.at("punct", ";"):
            self.next()
        missing = [c for c in dst.coords if c not in comps]
        if missing:
            raise ParseError(
                f"map {name_tok.text} lacks components for {missing}",
                name_tok.line,
                name_tok.col,
            )
        if name_tok.text in self.doc.maps:
            raise ParseError(f"duplicate map {name_tok.text}", name_tok.line, name_tok.col)
        self.doc.maps[name_tok.text] = SmoothMap(
            src, dst, tuple(comps.items()), name=name_tok.text
        )

    def rename_stmt(self):
        self.expect("ident", "rename")
        name_tok = self.expect("ident")
        chart = None
        if self.at("ident", "on"):
            self.next()
            chart = self.doc.chart_of(self.expect("ident").text)
        if chart is None:
            chart = self._current_chart()
        self.expect("punct", "=")
        e = self.parse_expr(set(chart.coords))
        self.expect("punct", ";")
        self.doc.renames[name_tok.text] = (chart.name, canon(e))

    def coframing_stmt(self):
        self.expect("ident", "coframing")
        name_tok = self.expect("ident")
        chart = None
        if self.at("ident", "on"):
            self.next()
            chart = self.doc.chart_of(self.expect("ident").text)
        if chart is None:
            chart = self._current_chart()
        self.expect("punct", "{")
        thetas, etas = [], []
        omega1 = omega2 = sigma = None
        while not self.at("punct", "}"):
            role_tok = self.expect("ident")
            role = role_tok.text
            if role not in ("theta", "eta", "omega1", "omega2", "sigma"):
                raise ParseError(
                    f"unknown coframing role {role}",
                    role_tok.line,
                    role_tok.col,
                    ["theta", "eta", "omega1", "omega2", "sigma"],
                )
            self.expect("ident")  # form label
            self.expect("punct", "=")
            f = self.parse_form(chart)
            self.expect("punct", ";")
            if role == "theta":
                thetas.append(f)
            elif role == "eta":
                etas.append(f)
            elif role == "omega1":
                omega1 = f
            elif role == "omega2":
                omega2 = f
            else:
                sigma = f
        self.expect("punct", "}")
        if self.at("punct", ";"):
            self.next()
        if omega1 is None or omega2 is None or sigma is None:
            raise ParseError(
                f"coframing {name_tok.text} needs omega1, omega2 and sigma",
                name_tok.line,
                name_tok.col,
            )
        self.doc.coframings[name_tok.text] = AdaptedCoframing(
            chart=chart,
            thetas=tuple(thetas),
            etas=tuple(etas),
            omega1=omega1,
            omega2=omega2,
            sigma=sigma,
            name=name_tok.text,
        )

    # -- forms ---------------------------------------------------------------

    def parse_form(self, chart: Chart) -> DifferentialForm:
        out = DifferentialForm.zero(chart, 1)
        sign = 1
        if self.at("punct", "-"):
            self.next()
            sign = -1
        out = out + self.parse_term(chart).smul(sign)
        while self.at("punct", "+") or self.at("punct", "-"):
            op = self.next().text
            term = self.parse_term(chart)
            out = out + term.smul(1 if op == "+" else -1)
        return out

    def parse_term(self, chart: Chart) -> DifferentialForm:
        # either d(x) or expr * d(x)
        if self.at("ident", "d") and self.toks[self.pos + 1].text == "(":
            save = self.pos
            self.next()
            self.next()
            tok = self.expect("ident")
            if not chart.has(tok.text):
                raise ParseError(
                    f"{tok.text} is not a coordinate of chart {chart.name}",
                    tok.line,
                    tok.col,
                )
            self.expect("punct", ")")
            if self.at("punct", "*") or self.at("punct", "/") or self.at("punct", "^"):
                # d(x) ... used inside a scalar expression is not supported;
                # rewind and let the expression parser error out helpfully
                self.pos = save
                self.fail("coefficients must precede d(...)", ["d("])
            return d_coord(chart, tok.text)
        coeff = self.parse_expr(set(chart.coords))
        self.expect("punct", "*")
        dtok = self.expect("ident")
        if dtok.text != "d":
            raise ParseError("expected d(...) after coefficient", dtok.line, dtok.col, ["d("])
        self.expect("punct", "(")
        tok = self.expect("ident")
        if not chart.has(tok.text):
            raise ParseError(
                f"{tok.text} is not a coordinate of chart {chart.name}", tok.line, tok.col
            )
        self.expect("punct", ")")
        return d_coord(chart, tok.text).smul(coeff)

    # -- scalar expressions --------------------------------------------------

    def parse_expr(self, allowed: Optional[set[str]]) -> Scalar:
        e = self.parse_add(allowed)
        return canon(e)

    def parse_add(self, allowed) -> Scalar:
        sign = 1
        if self.at("punct", "-"):
            self.next()
            sign = -1
        e = self.parse_mul(allowed) * sign
        while self.at("punct", "+") or self.at("punct", "-"):
            op = self.next().text
            rhs = self.parse_mul(allowed)
            e = e + rhs if op == "+" else e - rhs
        return e

    def _next_is_differential(self) -> bool:
        return (
            self.toks[self.pos + 1].kind == "ident"
            and self.toks[self.pos + 1].text == "d"
            and self.toks[self.pos + 2].kind == "punct"
            and self.toks[self.pos + 2].text == "("
        )

    def parse_mul(self, allowed) -> Scalar:
        e = self.parse_pow(allowed)
        while self.at("punct", "*") or self.at("punct", "/"):
            if self.at("punct", "*") and self._next_is_differential():
                break  # the * d(...) tail belongs to the form parser
            op = self.next().text
            rhs = self.parse_pow(allowed)
            e = e * rhs if op == "*" else e / rhs
        return e

    def parse_pow(self, allowed) -> Scalar:
        base = self.parse_atom(allowed)
        if self.at("punct", "^"):
            self.next()
            neg = False
            if self.at("punct", "-"):
                self.next()
                neg = True
            tok = self.expect("int")
            k = int(tok.text)
            return base ** (-k if neg else k)
        return base

    def parse_atom(self, allowed) -> Scalar:
        t = self.peek()
        if t.kind == "int":
            self.next()
            return sp.Integer(int(t.text))
        if t.kind == "punct" and t.text == "(":
            self.next()
            e = self.parse_add(allowed)
            self.expect("punct", ")")
            return e
        if t.kind == "punct" and t.text == "-":
            self.next()
            return -self.parse_atom(allowed)
        if t.kind == "ident":
            self.next()
            if t.text == "D" and self.at("punct", "("):
                return self.parse_derivative(allowed, t)
            if t.text == "d" and self.at("punct", "("):
                raise ParseError(
                    "d(...) denotes a coordinate differential and cannot appear "
                    "inside a scalar expression",
                    t.line,
                    t.col,
                )
            if self.at("punct", "("):
                self.next()
                args = [self.parse_add(allowed)]
                while self.at("punct", ","):
                    self.next()
                    args.append(self.parse_add(allowed))
                self.expect("punct", ")")
                return sp.Function(t.text)(*args)
            if allowed is not None and t.text not in allowed:
                raise ParseError(
                    f"{t.text} is not a known coordinate here", t.line, t.col
                )
            return sp.Symbol(t.text)
        self.fail(f"found {t.text or t.kind!r}", ["expression"])

    def parse_derivative(self, allowed, head: Token) -> Scalar:
        self.expect("punct", "(")
        inner = self.parse_add(allowed)
        vars_ = []
        while self.at("punct", ","):
            self.next()
            tok = self.expect("ident")
            vars_.append(sp.Symbol(tok.text))
        self.expect("punct", ")")
        if not vars_:
            raise ParseError("D(...) needs differentiation variables", head.line, head.col)
        return sp.Derivative(inner, *vars_).doit()


def parse(text: str) -> SystemDocument:
    return Parser(text).parse()


def parse_expr(text: str, chart: Optional[Chart] = None) -> Scalar:
    """Parse a standalone scalar expression (used by CLI option values)."""
    p = Parser("")
    p.toks = tokenize(text)
    p.pos = 0
    out = p.parse_expr(set(chart.coords) if chart is not None else None)
    if not p.at("eof"):
        t = p.peek()
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    return out


def parse_form(text: str, chart: Chart) -> DifferentialForm:
    """Parse a standalone 1-form (used by CLI option values)."""
    p = Parser("")
    p.toks = tokenize(text)
    p.pos = 0
    out = p.parse_form(chart)
    if not p.at("eof"):
        t = p.peek()
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    return out


# ---------------------------------------------------------------------------
# printing


class _ExprPrinter(StrPrinter):
    def _print_Pow(self, expr):  # x**2 -> x^2
        s = super()._print_Pow(expr)
        return s.replace("**", "^")

    def _print_Derivative(self, expr):
        head = self._print(expr.expr)
        vars_ = []
        for v, k in expr.variable_count:
            vars_.extend([self._print(v)] * int(k))
        return f"D({head}, {', '.join(vars_)})"


_printer = _ExprPrinter()


def print_expr(e: Scalar) -> str:
    return _printer.doprint(sp.sympify(e)).replace("**", "^")


def print_form(f: DifferentialForm) -> str:
    if f.degree == 0:
        return print_expr(f.as_scalar())
    if not f.terms:
        return "0"
    parts = []
    for idx, c in f.terms:
        wedge_txt = "^".join(f"d({f.chart.coords[i]})" for i in idx)
        neg = c.could_extract_minus_sign()
        body = -c if neg else c
        if body == 1:
            txt = wedge_txt
        else:
            s = print_expr(body)
            if body.is_Add:
                s = f"({s})"
            txt = f"{s}*{wedge_txt}"
        parts.append(("-" if neg else "+", txt))
    sign0, txt0 = parts[0]
    out = ("-" if sign0 == "-" else "") + txt0
    for sign, txt in parts[1:]:
        out += f" {sign} {txt}"
    return out


def print_document(doc: SystemDocument) -> str:
    """Canonical printing; parse(print(doc)) reproduces the document."""
    lines = []
    for name in doc.chart_order:
        ch = doc.charts[name]
        lines.append(f"chart {name}: {' '.join(ch.coords)};")
    for a in doc.assumptions.nonzero:
        lines.append(f"assume {print_expr(a.expr)} != 0;")
    for a in doc.assumptions.zero:
        lines.append(f"assume {print_expr(a.expr)} = 0;")
    for name, S in doc.systems.items():
        lines.append(f"system {name} on {S.chart.name} {{")
        for i, g in enumerate(S.generators):
            lines.append(f"  g{i + 1} = {print_form(g)};")
        if S.indep is not None:
            lines.append(f"}} indep {print_form(S.indep)};")
        else:
            lines.append("};")
    for name, m in doc.maps.items():
        lines.append(f"map {name}: {m.source.name} -> {m.target.name} {{")
        for y, e in m.components:
            lines.append(f"  {y} = {print_expr(e)};")
        lines.append("}")
    for name, (chart, e) in doc.renames.items():
        lines.append(f"rename {name} on {chart} = {print_expr(e)};")
    for name, cof in doc.coframings.items():
        lines.append(f"coframing {name} on {cof.chart.name} {{")
        for i, f in enumerate(cof.thetas):
            lines.append(f"  theta th{i + 1} = {print_form(f)};")
        for i, f in enumerate(cof.etas):
            lines.append(f"  eta e{i + 1} = {print_form(f)};")
        lines.append(f"  omega1 w1 = {print_form(cof.omega1)};")
        lines.append(f"  omega2 w2 = {print_form(cof.omega2)};")
        lines.append(f"  sigma s = {print_form(cof.sigma)};")
        lines.append("}")
    return "\n".join(lines) + "\n"
