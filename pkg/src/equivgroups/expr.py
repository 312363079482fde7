"""Exact rational symbolic kernel over interned atoms.

Expressions are elements of the fraction field of a multivariate
polynomial ring.  The ring variables ("atoms") come in four kinds:
independent variables, jet coordinates ``u#k`` of dependent symbols,
formal function symbols carrying a derivative multi-index over a fixed
argument list, and named parameters.  Coefficients are exact rationals
(`fractions.Fraction`); no floating point enters any symbolic path.

Derivative structure (total derivatives, chain rules, prolongation) is
deliberately absent here: atoms are formally independent symbols.  The
jet module layers derivations that know about jets and function
arguments on top of :func:`apply_derivation`.
"""

from __future__ import annotations

import math
import threading
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Union

Rational = Fraction

RationalLike = Union[int, Fraction]
Scalar = Union[int, Fraction, "Expression"]


class ExpressionError(Exception):
    """Base class for symbolic-kernel errors."""


class DegenerateDivisionError(ExpressionError):
    """Division by an expression whose normal form is zero."""


class NearSingularEvaluationError(ExpressionError):
    """Numeric evaluation hit a denominator within 1e-12 of zero."""


class MissingBindingError(ExpressionError):
    """Numeric evaluation found an atom with no binding."""


class InconsistentFunctionBindingError(ExpressionError):
    """A function atom was bound while sibling derivative atoms stay free."""


# ---------------------------------------------------------------------------
# Atoms
# ---------------------------------------------------------------------------

INDEP = "indep"
JET = "jet"
FUNC = "func"
PARAM = "param"

_KIND_RANK = {INDEP: 0, JET: 1, FUNC: 2, PARAM: 3}


class Atom:
    """Interned symbolic variable; equal atoms are the same object.

    ``kind`` is one of ``indep``, ``jet``, ``func``, ``param``.  Jet atoms
    carry the dependent symbol name and a derivative order; function atoms
    carry an argument tuple (of atoms) and a derivative multi-index of the
    same length.  ``key`` is the canonical sort key realizing the interned
    atom order: independents < jets by (symbol, order) < functions by
    (name, multi-index) < parameters.
    """

    __slots__ = ("kind", "name", "order", "args", "index", "key")

    _table: dict = {}
    _lock = threading.Lock()

    def __init__(self, kind, name, order, args, index, key):
        self.kind = kind
        self.name = name
        self.order = order
        self.args = args
        self.index = index
        self.key = key

    @staticmethod
    def _intern(kind, name, order, args, index) -> "Atom":
        ident = (kind, name, order, args, index)
        table = Atom._table
        atom = table.get(ident)
        if atom is None:
            with Atom._lock:
                atom = table.get(ident)
                if atom is None:
                    if kind == FUNC:
                        key = (
                            _KIND_RANK[kind],
                            name,
                            index,
                            tuple(a.name for a in args),
                        )
                    else:
                        key = (_KIND_RANK[kind], name, order)
                    atom = Atom(kind, name, order, args, index, key)
                    table[ident] = atom
        return atom

    # Interning makes identity equality correct; keep object hash/eq.

    def __repr__(self):
        return atom_text(self)

    def __lt__(self, other):
        return self.key < other.key

    @property
    def is_function(self):
        return self.kind == FUNC

    def differentiated(self, arg_position: int = 0) -> "Atom":
        """The function atom with the multi-index bumped at one argument."""
        if self.kind == JET:
            return jet_var(self.name, self.order + 1)
        if self.kind != FUNC:
            raise ValueError(f"cannot differentiate atom {self!r}")
        idx = list(self.index)
        idx[arg_position] += 1
        return func_atom(self.name, self.args, tuple(idx))


def indep_var(name: str) -> Atom:
    return Atom._intern(INDEP, name, 0, (), ())


def jet_var(name: str, order: int = 0) -> Atom:
    if order < 0:
        raise ValueError("jet derivative order must be >= 0")
    return Atom._intern(JET, name, order, (), ())


def func_atom(name: str, args: Iterable[Atom], index: Optional[Iterable[int]] = None) -> Atom:
    args = tuple(args)
    if not args:
        raise ValueError("function atom needs at least one argument")
    if index is None:
        index = (0,) * len(args)
    index = tuple(int(i) for i in index)
    if len(index) != len(args):
        raise ValueError("derivative multi-index length must equal argument count")
    if any(i < 0 for i in index):
        raise ValueError("derivative multi-index entries must be >= 0")
    for a in args:
        if not isinstance(a, Atom):
            raise ValueError("function arguments must be atoms")
    return Atom._intern(FUNC, name, sum(index), args, index)


def param(name: str) -> Atom:
    return Atom._intern(PARAM, name, 0, (), ())


def atom_text(a: Atom) -> str:
    """Canonical text for one atom, matching the surface grammar."""
    if a.kind in (INDEP, PARAM):
        return a.name
    if a.kind == JET:
        return a.name if a.order == 0 else f"{a.name}#{a.order}"
    # function atom
    if len(a.args) == 1:
        k = a.index[0]
        if k == 0:
            return a.name
        if k <= 3:
            return a.name + "'" * k
        return f"D({a.name},{k})"
    if all(i == 0 for i in a.index):
        return f"{a.name}({','.join(arg.name for arg in a.args)})"
    return f"D({a.name},{','.join(str(i) for i in a.index)})"


# ---------------------------------------------------------------------------
# Monomials: sorted tuples of (atom, positive exponent)
# ---------------------------------------------------------------------------

Mono = tuple

_ONE_MONO: Mono = ()


def _mono_mul(m1: Mono, m2: Mono) -> Mono:
    if not m1:
        return m2
    if not m2:
        return m1
    out = []
    i = j = 0
    n1, n2 = len(m1), len(m2)
    while i < n1 and j < n2:
        a1, e1 = m1[i]
        a2, e2 = m2[j]
        if a1 is a2:
            out.append((a1, e1 + e2))
            i += 1
            j += 1
        elif a1.key < a2.key:
            out.append(m1[i])
            i += 1
        else:
            out.append(m2[j])
            j += 1
    out.extend(m1[i:])
    out.extend(m2[j:])
    return tuple(out)


def _mono_key(m: Mono):
    return tuple((a.key, e) for a, e in m)


def _mono_divide(m: Mono, g: Mono) -> Mono:
    if not g:
        return m
    gd = dict(g)
    out = []
    for a, e in m:
        r = e - gd.get(a, 0)
        if r > 0:
            out.append((a, r))
        elif r < 0:
            raise ValueError("monomial division underflow")
    return tuple(out)


# ---------------------------------------------------------------------------
# Polynomials: dict mapping monomial -> nonzero Fraction
# ---------------------------------------------------------------------------


class Poly:
    """Multivariate polynomial with exact rational coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict):
        self.terms = terms

    @staticmethod
    def zero() -> "Poly":
        return Poly({})

    @staticmethod
    def const(c: RationalLike) -> "Poly":
        c = Fraction(c)
        return Poly({_ONE_MONO: c}) if c else Poly({})

    @staticmethod
    def atom(a: Atom) -> "Poly":
        return Poly({((a, 1),): Fraction(1)})

    def is_zero(self) -> bool:
        return not self.terms

    def is_one(self) -> bool:
        return self.terms == {_ONE_MONO: Fraction(1)}

    def constant_value(self) -> Optional[Fraction]:
        if not self.terms:
            return Fraction(0)
        if len(self.terms) == 1 and _ONE_MONO in self.terms:
            return self.terms[_ONE_MONO]
        return None

    def __eq__(self, other):
        return isinstance(other, Poly) and self.terms == other.terms

    __hash__ = None  # mutable container semantics

    def add(self, other: "Poly") -> "Poly":
        if not self.terms:
            return other
        if not other.terms:
            return self
        out = dict(self.terms)
        for m, c in other.terms.items():
            s = out.get(m)
            if s is None:
                out[m] = c
            else:
                s = s + c
                if s:
                    out[m] = s
                else:
                    del out[m]
        return Poly(out)

    def neg(self) -> "Poly":
        return Poly({m: -c for m, c in self.terms.items()})

    def sub(self, other: "Poly") -> "Poly":
        return self.add(other.neg())

    def mul(self, other: "Poly") -> "Poly":
        if not self.terms or not other.terms:
            return Poly({})
        if other.is_one():
            return self
        if self.is_one():
            return other
        out: dict = {}
        small, big = (self.terms, other.terms)
        if len(small) > len(big):
            small, big = big, small
        for m1, c1 in small.items():
            for m2, c2 in big.items():
                m = _mono_mul(m1, m2)
                c = c1 * c2
                s = out.get(m)
                if s is None:
                    out[m] = c
                else:
                    s = s + c
                    if s:
                        out[m] = s
                    else:
                        del out[m]
        return Poly(out)

    def scale(self, c: Fraction) -> "Poly":
        if c == 1:
            return self
        if not c:
            return Poly({})
        return Poly({m: k * c for m, k in self.terms.items()})

    def pow(self, n: int) -> "Poly":
        if n < 0:
            raise ValueError("Poly.pow expects n >= 0")
        result = Poly.const(1)
        base = self
        while n:
            if n & 1:
                result = result.mul(base)
            base_needed = n >> 1
            if base_needed:
                base = base.mul(base)
            n = base_needed
        return result

    def partial(self, a: Atom) -> "Poly":
        """Formal partial derivative; every other atom is constant."""
        out: dict = {}
        for m, c in self.terms.items():
            for pos, (atom, e) in enumerate(m):
                if atom is a:
                    if e == 1:
                        nm = m[:pos] + m[pos + 1:]
                    else:
                        nm = m[:pos] + ((atom, e - 1),) + m[pos + 1:]
                    nc = c * e
                    s = out.get(nm)
                    out[nm] = nc if s is None else s + nc
                    break
        return Poly({m: c for m, c in out.items() if c})

    def atoms(self):
        seen = set()
        for m in self.terms:
            for a, _ in m:
                seen.add(a)
        return seen

    def mono_gcd(self) -> Mono:
        """Per-atom minimum exponent over all terms (the content monomial)."""
        it = iter(self.terms)
        try:
            first = next(it)
        except StopIteration:
            return _ONE_MONO
        common = dict(first)
        for m in it:
            if not common:
                break
            md = dict(m)
            for a in list(common):
                e = md.get(a, 0)
                if e == 0:
                    del common[a]
                elif e < common[a]:
                    common[a] = e
        return tuple(sorted(common.items(), key=lambda ae: ae[0].key))

    def divide_mono(self, g: Mono) -> "Poly":
        if not g:
            return self
        return Poly({_mono_divide(m, g): c for m, c in self.terms.items()})

    def leading_coefficient(self) -> Fraction:
        m = max(self.terms, key=_mono_key)
        return self.terms[m]

    def proportional_ratio(self, other: "Poly") -> Optional[Fraction]:
        """Return c with self == c*other, or None."""
        if len(self.terms) != len(other.terms) or not other.terms:
            return None
        ratio = None
        for m, c in other.terms.items():
            s = self.terms.get(m)
            if s is None:
                return None
            r = s / c
            if ratio is None:
                ratio = r
            elif r != ratio:
                return None
        return ratio

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda mc: _mono_key(mc[0]), reverse=True)

    def eval_float(self, point: Mapping[Atom, float]) -> float:
        total = 0.0
        for m, c in self.terms.items():
            v = float(c)
            for a, e in m:
                try:
                    x = point[a]
                except KeyError:
                    raise MissingBindingError(f"no numeric binding for atom {a!r}") from None
                v *= x ** e
            total += v
        return total


_P_ZERO = Poly({})
_P_ONE = Poly({_ONE_MONO: Fraction(1)})


# ---------------------------------------------------------------------------
# Expressions: normalized polynomial fractions
# ---------------------------------------------------------------------------


def _normalize(num: Poly, den: Poly):
    if den.is_zero():
        raise DegenerateDivisionError("denominator normalizes to zero")
    if num.is_zero():
        return _P_ZERO, _P_ONE
    if not den.is_one():
        g = num.mono_gcd()
        if g:
            dg = dict(den.mono_gcd())
            joint = tuple(
                (a, min(e, dg[a])) for a, e in g if a in dg and min(e, dg[a]) > 0
            )
            if joint:
                num = num.divide_mono(joint)
                den = den.divide_mono(joint)
    c = den.leading_coefficient()
    if c != 1:
        inv = 1 / c
        num = num.scale(inv)
        den = den.scale(inv)
    if den.is_one():
        return num, _P_ONE
    ratio = num.proportional_ratio(den)
    if ratio is not None:
        return Poly.const(ratio), _P_ONE
    return num, den


class Expression:
    """Immutable normalized rational expression (polynomial fraction).

    Arithmetic keeps the invariant that ``den`` is never zero, the joint
    monomial content of numerator and denominator is cancelled, and the
    denominator's leading coefficient is one.  Equality is semantic: two
    expressions are equal iff their difference expands to the zero
    polynomial.  Zero testing never requires factorization.
    """

    __slots__ = ("num", "den")

    def __init__(self, num: Poly, den: Poly = _P_ONE):
        self.num, self.den = _normalize(num, den)

    # -- constructors -------------------------------------------------

    @staticmethod
    def from_rational(c: RationalLike) -> "Expression":
        e = Expression.__new__(Expression)
        e.num = Poly.const(c)
        e.den = _P_ONE
        return e

    @staticmethod
    def from_atom(a: Atom) -> "Expression":
        e = Expression.__new__(Expression)
        e.num = Poly.atom(a)
        e.den = _P_ONE
        return e

    @staticmethod
    def _raw(num: Poly, den: Poly) -> "Expression":
        e = Expression.__new__(Expression)
        e.num = num
        e.den = den
        return e

    # -- predicates ----------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return self.num.is_zero()

    @property
    def is_polynomial(self) -> bool:
        return self.den.is_one()

    def constant_value(self) -> Optional[Fraction]:
        if self.den.is_one():
            return self.num.constant_value()
        return None

    def atoms(self) -> frozenset:
        return frozenset(self.num.atoms() | self.den.atoms())

    # -- arithmetic ----------------------------------------------------

    @staticmethod
    def _coerce(v: Scalar) -> "Expression":
        if isinstance(v, Expression):
            return v
        if isinstance(v, (int, Fraction)):
            return Expression.from_rational(v)
        return NotImplemented

    def __add__(self, other: Scalar) -> "Expression":
        other = Expression._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        n1, d1, n2, d2 = self.num, self.den, other.num, other.den
        if d1 == d2:
            return Expression(n1.add(n2), d1)
        if d1.is_one():
            return Expression(n1.mul(d2).add(n2), d2)
        if d2.is_one():
            return Expression(n1.add(n2.mul(d1)), d1)
        ratio = d2.proportional_ratio(d1)
        if ratio is not None:
            # d2 == ratio*d1, so self + other == (ratio*n1 + n2) / d2
            return Expression(n1.scale(ratio).add(n2), d2)
        return Expression(n1.mul(d2).add(n2.mul(d1)), d1.mul(d2))

    __radd__ = __add__

    def __neg__(self) -> "Expression":
        return Expression._raw(self.num.neg(), self.den)

    def __sub__(self, other: Scalar) -> "Expression":
        other = Expression._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self.__add__(other.__neg__())

    def __rsub__(self, other: Scalar) -> "Expression":
        other = Expression._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other.__sub__(self)

    def __mul__(self, other: Scalar) -> "Expression":
        other = Expression._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return Expression(self.num.mul(other.num), self.den.mul(other.den))

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "Expression":
        other = Expression._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        if other.num.is_zero():
            raise DegenerateDivisionError("division by zero expression")
        return Expression(self.num.mul(other.den), self.den.mul(other.num))

    def __rtruediv__(self, other: Scalar) -> "Expression":
        other = Expression._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other.__truediv__(self)

    def __pow__(self, n: int) -> "Expression":
        if not isinstance(n, int):
            raise TypeError("expression exponents must be integers")
        if n == 0:
            return Expression.from_rational(1)
        if n < 0:
            if self.num.is_zero():
                raise DegenerateDivisionError("zero raised to a negative power")
            return Expression(self.den.pow(-n), self.num.pow(-n))
        return Expression(self.num.pow(n), self.den.pow(n))

    def __eq__(self, other) -> bool:
        other = Expression._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        if self.den == other.den:
            return self.num == other.num
        return self.num.mul(other.den) == other.num.mul(self.den)

    __hash__ = None  # semantic equality is not hash-compatible

    def __repr__(self) -> str:
        from . import parse  # local import: parse depends on expr

        return parse.print_expression(self)


ZERO = Expression.from_rational(0)
ONE = Expression.from_rational(1)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def differentiate(e: Expression, v: Atom) -> Expression:
    """Formal partial derivative of ``e`` with respect to atom ``v``.

    Distinct atoms are independent: the derivative of ``f'`` with respect
    to ``f`` is zero.  Chain rules live in the jet module.
    """
    if e.den.is_one():
        return Expression(e.num.partial(v))
    dn = e.num.partial(v)
    dd = e.den.partial(v)
    if dd.is_zero():
        return Expression(dn, e.den)
    return Expression(dn.mul(e.den).sub(e.num.mul(dd)), e.den.mul(e.den))


def _check_function_consistency(e: Expression, bindings: Mapping[Atom, Expression]) -> None:
    bound_names = {}
    for a in bindings:
        if a.kind == FUNC:
            bound_names.setdefault(a.name, set()).add(a)
    if not bound_names:
        return
    for a in e.atoms():
        if a.kind == FUNC and a.name in bound_names and a not in bindings:
            raise InconsistentFunctionBindingError(
                f"binding for function '{a.name}' does not cover derivative atom {a!r}; "
                "use jet.bind_function to generate consistent bindings"
            )


def substitute(e: Expression, bindings: Mapping[Atom, Scalar]) -> Expression:
    """Simultaneous substitution of atoms by expressions, then normalize.

    Refuses recursive bindings (an atom mapped to an expression containing
    itself) and partial function bindings that would leave sibling
    derivative atoms of a bound function symbol untouched.
    """
    coerced = {}
    for a, v in bindings.items():
        v = Expression._coerce(v)
        if v is NotImplemented:
            raise TypeError(f"cannot bind atom {a!r} to {bindings[a]!r}")
        if a in v.atoms():
            raise ExpressionError(f"recursive binding for atom {a!r}")
        coerced[a] = v
    if not coerced:
        return e
    _check_function_consistency(e, coerced)

    power_cache: dict = {}

    def atom_power(a: Atom, k: int) -> Expression:
        v = coerced.get(a)
        if v is None:
            if k == 1:
                return Expression.from_atom(a)
            return Expression._raw(Poly({((a, k),): Fraction(1)}), _P_ONE)
        got = power_cache.get((a, k))
        if got is None:
            got = v ** k
            power_cache[(a, k)] = got
        return got

    def poly_subs(p: Poly) -> Expression:
        touched = any(a in coerced for a in p.atoms())
        if not touched:
            return Expression._raw(p, _P_ONE)
        total = ZERO
        for m, c in p.terms.items():
            term = Expression.from_rational(c)
            for a, k in m:
                term = term * atom_power(a, k)
            total = total + term
        return total

    num_v = poly_subs(e.num)
    if e.den.is_one():
        return num_v
    den_v = poly_subs(e.den)
    if den_v.is_zero:
        raise DegenerateDivisionError("substitution produced a zero denominator")
    return num_v / den_v


def eval_numeric(e: Expression, point: Mapping[Atom, float]) -> float:
    """IEEE-double evaluation of the normalized form at a bound point."""
    den = e.den.eval_float(point)
    if abs(den) <= 1e-12:
        raise NearSingularEvaluationError(
            f"denominator evaluates to {den!r}, within 1e-12 of zero"
        )
    return e.num.eval_float(point) / den


def apply_derivation(
    e: Expression,
    image: Callable[[Atom], Optional[Expression]],
) -> Expression:
    """Extend an atom-level rule to a derivation of the fraction field.

    ``image(a)`` gives D(a) (None meaning zero).  D obeys linearity and the
    product/quotient rules.  When every image is polynomial the result is
    assembled at the polynomial level so a quotient D(n/d) costs a single
    denominator squaring rather than one per atom.
    """

    def poly_derive(p: Poly):
        poly_acc = _P_ZERO
        expr_acc = None
        for a in p.atoms():
            img = image(a)
            if img is None or img.is_zero:
                continue
            part = p.partial(a)
            if part.is_zero():
                continue
            if img.den.is_one():
                poly_acc = poly_acc.add(part.mul(img.num))
            else:
                term = Expression._raw(part, _P_ONE) * img
                expr_acc = term if expr_acc is None else expr_acc + term
        if expr_acc is None:
            return poly_acc
        return expr_acc + Expression._raw(poly_acc, _P_ONE)

    dn = poly_derive(e.num)
    if e.den.is_one():
        return Expression(dn, _P_ONE) if isinstance(dn, Poly) else dn
    dd = poly_derive(e.den)
    if isinstance(dn, Poly) and isinstance(dd, Poly):
        if dd.is_zero():
            return Expression(dn, e.den)
        return Expression(dn.mul(e.den).sub(e.num.mul(dd)), e.den.mul(e.den))
    dn_e = dn if isinstance(dn, Expression) else Expression._raw(dn, _P_ONE)
    dd_e = dd if isinstance(dd, Expression) else Expression._raw(dd, _P_ONE)
    den_e = Expression._raw(e.den, _P_ONE)
    num_e = Expression._raw(e.num, _P_ONE)
    return (dn_e * den_e - num_e * dd_e) / (den_e * den_e)
