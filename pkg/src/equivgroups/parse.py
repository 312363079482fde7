"""Surface grammar for expressions and vector fields, plus the printer.

Grammar (binary operators left-associative, ``^`` tighter than unary minus,
exponents integer literals)::

    expr   := term (("+"|"-") term)*
    term   := unary (("*"|"/") unary)*
    unary  := "-" unary | factor
    factor := base ("^" integer)?
    base   := rational | atomref | "(" expr ")"
    atomref:= ident ("'"{1,3})? ("(" ident ("," ident)* ")")?
            | ident "#" integer
            | "D(" ident ("," integer)+ ")"

Implicit multiplication is rejected; ``2x`` must be written ``2*x``.
Vector fields are ``coord: expr (; coord: expr)*``.

Which kind of atom a bare identifier denotes is decided by a
:class:`Context` (symbol table).  The default context covers the symbols
used throughout this package; unknown bare identifiers become parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import expr as ex
from .expr import Atom, Expression


class ParseError(Exception):
    """Syntax or symbol-resolution error, with source position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# Symbol context
# ---------------------------------------------------------------------------


@dataclass
class Context:
    """Symbol table mapping identifiers to atom kinds.

    ``functions`` maps a function name to its argument atoms.  Unknown
    identifiers met during parsing become parameters when ``auto_params``
    is set, and unknown ``name#k`` references register ``name`` as a
    dependent symbol when ``auto_dependents`` is set.
    """

    independents: dict = field(default_factory=dict)
    dependents: set = field(default_factory=set)
    functions: dict = field(default_factory=dict)
    parameters: set = field(default_factory=set)
    default_independent: str = "x"
    auto_params: bool = True
    auto_dependents: bool = True

    def declare_independent(self, name: str) -> Atom:
        a = ex.indep_var(name)
        self.independents[name] = a
        return a

    def declare_dependent(self, name: str) -> None:
        self.dependents.add(name)

    def declare_function(self, name: str, args) -> None:
        self.functions[name] = tuple(args)

    def declare_parameter(self, name: str) -> None:
        self.parameters.add(name)

    def copy(self) -> "Context":
        return Context(
            dict(self.independents),
            set(self.dependents),
            dict(self.functions),
            set(self.parameters),
            self.default_independent,
            self.auto_params,
            self.auto_dependents,
        )


def default_context() -> Context:
    """Context covering the symbols used by the built-in families.

    x is independent; y and the coefficient symbols are dependent; f, g, h,
    J, P are one-variable functions of x; k1, k2 and lambda are parameters.
    """
    ctx = Context()
    x = ctx.declare_independent("x")
    for name in ("y", "a0", "a1", "a2", "a3", "a4", "r"):
        ctx.declare_dependent(name)
    for name in ("f", "g", "h", "J", "P"):
        ctx.declare_function(name, (x,))
    for name in ("k1", "k2", "lambda", "mu0"):
        ctx.declare_parameter(name)
    return ctx


def transform_context() -> Context:
    """Context for point-transform files: new variables z, w; f, g, h of z."""
    ctx = Context(default_independent="z")
    z = ctx.declare_independent("z")
    ctx.declare_independent("x")
    ctx.declare_dependent("w")
    for name in ("y", "a0", "a1", "a2", "a3", "a4", "r"):
        ctx.declare_dependent(name)
    for name in ("f", "g", "h", "J", "P", "p"):
        ctx.declare_function(name, (z,))
    for name in ("k1", "k2", "lambda", "t"):
        ctx.declare_parameter(name)
    return ctx


def context_for(e: Expression, base: Optional[Context] = None) -> Context:
    """A context that can re-parse the printout of ``e``.

    Starts from ``base`` (default: :func:`default_context`) and registers
    every atom occurring in ``e``.
    """
    ctx = (base or default_context()).copy()
    for a in e.atoms():
        if a.kind == ex.INDEP:
            ctx.independents.setdefault(a.name, a)
        elif a.kind == ex.JET:
            ctx.declare_dependent(a.name)
        elif a.kind == ex.FUNC:
            ctx.declare_function(a.name, a.args)
        else:
            ctx.declare_parameter(a.name)
    return ctx


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_PUNCT = "+-*/^()#,;:="


@dataclass
class _Token:
    kind: str  # ident | int | punct | primes | end
    text: str
    line: int
    column: int


def _tokenize(text: str):
    tokens = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        start_col = col
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(_Token("int", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("ident", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch == "'":
            j = i
            while j < n and text[j] == "'":
                j += 1
            if j - i > 3:
                raise ParseError("at most three primes allowed; use D(f,k)", line, start_col)
            tokens.append(_Token("primes", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch in _PUNCT:
            tokens.append(_Token("punct", ch, line, start_col))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", line, start_col)
    tokens.append(_Token("end", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, ctx: Context):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.ctx = ctx

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.column)

    def expect_punct(self, ch: str) -> _Token:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != ch:
            self.error(f"expected {ch!r}")
        return self.next()

    def at_punct(self, ch: str) -> bool:
        tok = self.peek()
        return tok.kind == "punct" and tok.text == ch

    # grammar rules ----------------------------------------------------

    def parse_expression(self) -> Expression:
        e = self.parse_term()
        while self.at_punct("+") or self.at_punct("-"):
            op = self.next().text
            rhs = self.parse_term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def parse_term(self) -> Expression:
        e = self.parse_unary()
        while self.at_punct("*") or self.at_punct("/"):
            op = self.next()
            rhs = self.parse_unary()
            if op.text == "*":
                e = e * rhs
            else:
                try:
                    e = e / rhs
                except ex.DegenerateDivisionError:
                    self.error("division by an expression that normalizes to zero", op)
        return e

    def parse_unary(self) -> Expression:
        if self.at_punct("-"):
            self.next()
            return -self.parse_unary()
        return self.parse_factor()

    def parse_factor(self) -> Expression:
        e = self.parse_base()
        if self.at_punct("^"):
            op = self.next()
            sign = 1
            if self.at_punct("-"):
                self.next()
                sign = -1
            tok = self.peek()
            if tok.kind != "int":
                self.error("exponent must be an integer literal")
            self.next()
            try:
                e = e ** (sign * int(tok.text))
            except ex.DegenerateDivisionError:
                self.error("zero raised to a negative power", op)
        return e

    def parse_base(self) -> Expression:
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return Expression.from_rational(Fraction(int(tok.text)))
        if self.at_punct("("):
            self.next()
            e = self.parse_expression()
            self.expect_punct(")")
            return e
        if tok.kind == "ident":
            return Expression.from_atom(self.parse_atomref())
        self.error("expected a number, identifier or parenthesized expression")

    def parse_atomref(self) -> Atom:
        tok = self.next()
        name = tok.text
        if name == "D" and self.at_punct("("):
            return self.parse_dform(tok)
        if self.at_punct("#"):
            self.next()
            otok = self.peek()
            if otok.kind != "int":
                self.error("expected a derivative order after '#'")
            self.next()
            return self.resolve_jet(name, int(otok.text), tok)
        order = 0
        if self.peek().kind == "primes":
            order = len(self.next().text)
        if self.at_punct("("):
            self.next()
            args = [self.parse_arg_ident()]
            while self.at_punct(","):
                self.next()
                args.append(self.parse_arg_ident())
            self.expect_punct(")")
            return self.resolve_function(name, tuple(args), order, tok)
        if order > 0:
            return self.resolve_function(name, None, order, tok)
        return self.resolve_bare(name, tok)

    def parse_arg_ident(self) -> Atom:
        tok = self.peek()
        if tok.kind != "ident":
            self.error("expected an identifier argument")
        self.next()
        return self.resolve_bare(tok.text, tok)

    def parse_dform(self, dtok: _Token) -> Atom:
        self.expect_punct("(")
        ftok = self.peek()
        if ftok.kind != "ident":
            self.error("expected a function name in D(...)")
        self.next()
        orders = []
        while self.at_punct(","):
            self.next()
            otok = self.peek()
            if otok.kind != "int":
                self.error("expected an integer derivative order in D(...)")
            self.next()
            orders.append(int(otok.text))
        self.expect_punct(")")
        if not orders:
            self.error("D(...) needs at least one derivative order", dtok)
        name = ftok.text
        args = self.ctx.functions.get(name)
        if args is None:
            if len(orders) == 1:
                args = (self._default_indep(ftok),)
                self.ctx.declare_function(name, args)
            else:
                self.error(f"unknown function '{name}' in multivariate D(...)", ftok)
        if len(orders) == 1 and len(args) == 1:
            return ex.func_atom(name, args, (orders[0],))
        if len(orders) != len(args):
            self.error(
                f"D({name},...) has {len(orders)} orders but '{name}' takes {len(args)} arguments",
                ftok,
            )
        return ex.func_atom(name, args, tuple(orders))

    # symbol resolution --------------------------------------------------

    def _default_indep(self, tok: _Token) -> Atom:
        name = self.ctx.default_independent
        a = self.ctx.independents.get(name)
        if a is None:
            a = self.ctx.declare_independent(name)
        return a

    def resolve_jet(self, name: str, order: int, tok: _Token) -> Atom:
        if name not in self.ctx.dependents:
            if not self.ctx.auto_dependents:
                self.error(f"'{name}' is not a declared dependent symbol", tok)
            self.ctx.declare_dependent(name)
        return ex.jet_var(name, order)

    def resolve_function(self, name, args, order: int, tok: _Token) -> Atom:
        known = self.ctx.functions.get(name)
        if args is None:
            if known is None:
                known = (self._default_indep(tok),)
                self.ctx.declare_function(name, known)
            args = known
        else:
            if known is not None and known != args:
                self.error(f"function '{name}' was declared with different arguments", tok)
            if known is None:
                self.ctx.declare_function(name, args)
        if len(args) == 1:
            return ex.func_atom(name, args, (order,))
        if order:
            self.error("prime notation applies to one-variable functions only", tok)
        return ex.func_atom(name, args)

    def resolve_bare(self, name: str, tok: _Token) -> Atom:
        ctx = self.ctx
        if name in ctx.independents:
            return ctx.independents[name]
        if name in ctx.dependents:
            return ex.jet_var(name, 0)
        if name in ctx.functions:
            return ex.func_atom(name, ctx.functions[name])
        if name in ctx.parameters:
            return ex.param(name)
        if not ctx.auto_params:
            self.error(f"unknown identifier '{name}'", tok)
        ctx.declare_parameter(name)
        return ex.param(name)

    def expect_end(self):
        tok = self.peek()
        if tok.kind != "end":
            self.error(f"unexpected trailing input {tok.text!r}")


def parse_expression(text: str, ctx: Optional[Context] = None) -> Expression:
    """Parse one expression; raises :class:`ParseError` with position info."""
    p = _Parser(text, ctx if ctx is not None else default_context())
    e = p.parse_expression()
    p.expect_end()
    return e


def parse_vector_field(text: str, ctx: Optional[Context] = None, max_order: int = 12):
    """Parse ``coord: expr; ...`` into a jet.VectorField.

    The first coordinate must resolve to an independent variable; the
    remaining coordinates become the dependent symbols of the field's jet
    system, in declared order.
    """
    from . import jet

    ctx = ctx if ctx is not None else default_context()
    p = _Parser(text, ctx)
    entries = []
    while True:
        tok = p.peek()
        if tok.kind != "ident":
            p.error("expected a coordinate name")
        p.next()
        p.expect_punct(":")
        e = p.parse_expression()
        entries.append((tok.text, e, tok))
        if p.at_punct(";"):
            p.next()
            continue
        break
    p.expect_end()

    seen = set()
    for name, _, tok in entries:
        if name in seen:
            raise ParseError(f"duplicate coordinate '{name}'", tok.line, tok.column)
        seen.add(name)
    first, *rest = entries
    indep_name = first[0]
    if indep_name not in ctx.independents:
        raise ParseError(
            f"first coordinate '{indep_name}' must be an independent variable",
            first[2].line,
            first[2].column,
        )
    if not rest:
        raise ParseError("vector field needs at least one dependent coordinate",
                         first[2].line, first[2].column)
    for name, _, _t in rest:
        ctx.declare_dependent(name)
    system = jet.JetSystem(
        ctx.independents[indep_name], tuple(name for name, _, _t in rest), max_order
    )
    return jet.VectorField(system, first[1], {name: e for name, e, _t in rest})


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------


def _fraction_text(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _poly_text(p) -> str:
    if p.is_zero():
        return "0"
    pieces = []
    for m, c in p.sorted_terms():
        factors = []
        if not m:
            factors.append(_fraction_text(abs(c)))
        else:
            if abs(c) != 1:
                factors.append(_fraction_text(abs(c)))
            for a, e in m:
                t = ex.atom_text(a)
                factors.append(t if e == 1 else f"{t}^{e}")
        body = "*".join(factors)
        if not pieces:
            pieces.append(body if c > 0 else f"-{body}")
        else:
            pieces.append(f"+ {body}" if c > 0 else f"- {body}")
    return " ".join(pieces)


def print_expression(e: Expression) -> str:
    """Canonical deterministic text; reparses to an equal expression."""
    if e.is_zero:
        return "0"
    if e.den.is_one():
        return _poly_text(e.num)
    return f"({_poly_text(e.num)})/({_poly_text(e.den)})"


def print_vector_field(vf) -> str:
    parts = [f"{vf.system.independent.name}: {print_expression(vf.xi)}"]
    for name in vf.system.dependents:
        parts.append(f"{name}: {print_expression(vf.component(name))}")
    return "; ".join(parts)
