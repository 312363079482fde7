"""Jet-space structure over one independent variable.

Provides the total derivative operator, prolongation of point vector
fields over several dependent symbols, chain-rule-aware partial
derivatives, and consistent binding of concrete functions into the
derivative atoms of a formal function symbol.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional

from . import expr as ex
from .expr import Atom, Expression


class JetError(ex.ExpressionError):
    pass


class OrderLimitError(JetError):
    """A total derivative ran past the tracked jet order."""


class InvalidBindingError(JetError):
    """bind_function received a concrete expression it cannot differentiate."""


@dataclass(frozen=True)
class JetSystem:
    """One independent variable with ordered dependent symbols.

    ``max_order`` caps the tracked derivative order of every dependent
    symbol; total derivatives raise :class:`OrderLimitError` past it.
    """

    independent: Atom
    dependents: tuple
    max_order: int = 12

    def __post_init__(self):
        if self.independent.kind != ex.INDEP:
            raise ValueError("jet system needs an independent-variable atom")
        if len(set(self.dependents)) != len(self.dependents):
            raise ValueError("dependent symbol names must be distinct")
        if self.max_order < 0:
            raise ValueError("max_order must be >= 0")

    def jet(self, name: str, order: int = 0) -> Atom:
        if name not in self.dependents:
            raise ValueError(f"'{name}' is not a dependent symbol of this system")
        return ex.jet_var(name, order)

    def coordinates(self, orders: Optional[Mapping[str, int]] = None):
        """Base point plus jets up to given orders (default: order 0)."""
        coords = [self.independent]
        for name in self.dependents:
            top = 0 if orders is None else orders.get(name, 0)
            coords.extend(ex.jet_var(name, k) for k in range(top + 1))
        return coords


def total_derivative(e: Expression, sys: JetSystem) -> Expression:
    """Total x-derivative: jets shift order, function atoms chain.

    ``D_x u#k = u#(k+1)`` for dependent symbols, ``D_x`` of a function atom
    chains through its arguments (so a one-variable f of x maps to f').
    """
    dep = set(sys.dependents)
    x = sys.independent

    def arg_image(a: Atom) -> Optional[Expression]:
        if a is x:
            return ex.ONE
        if a.kind == ex.JET and a.name in dep:
            if a.order + 1 > sys.max_order:
                raise OrderLimitError(
                    f"total derivative needs {a.name}#{a.order + 1} beyond max order "
                    f"{sys.max_order}"
                )
            return Expression.from_atom(ex.jet_var(a.name, a.order + 1))
        return None

    def image(a: Atom) -> Optional[Expression]:
        simple = arg_image(a)
        if simple is not None or a.kind != ex.FUNC:
            return simple
        total = None
        for i, arg in enumerate(a.args):
            w = arg_image(arg)
            if w is None:
                continue
            term = Expression.from_atom(a.differentiated(i)) * w
            total = term if total is None else total + term
        return total

    return ex.apply_derivation(e, image)


def partial_derivative(e: Expression, coord: Atom) -> Expression:
    """Partial derivative along one coordinate, chaining through function atoms.

    Unlike :func:`equivgroups.expr.differentiate`, a function atom whose
    argument list contains ``coord`` contributes its bumped-index atom; jet
    atoms other than ``coord`` itself are held constant.
    """

    def image(a: Atom) -> Optional[Expression]:
        if a is coord:
            return ex.ONE
        if a.kind == ex.FUNC:
            total = None
            for i, arg in enumerate(a.args):
                if arg is coord:
                    term = Expression.from_atom(a.differentiated(i))
                    total = term if total is None else total + term
            return total
        return None

    return ex.apply_derivation(e, image)


class VectorField:
    """Point vector field on a jet system, with cached prolongations.

    Coefficients: ``xi`` for the independent variable and one expression
    per dependent symbol.  Prolonged coefficients follow the recursion
    ``phi^(k+1) = D_x phi^(k) - u#(k+1) * D_x xi`` and are cached
    write-once; equality and printing use the base coefficients only.
    """

    __slots__ = ("system", "xi", "etas", "_prolonged", "_lock")

    def __init__(self, system: JetSystem, xi: Expression, etas: Mapping[str, Expression]):
        if set(etas) != set(system.dependents):
            raise ValueError("coefficient map must cover exactly the dependent symbols")
        self.system = system
        self.xi = xi
        self.etas = {name: etas[name] for name in system.dependents}
        self._prolonged: Dict[tuple, Expression] = {}
        self._lock = threading.Lock()

    def component(self, name: str, order: int = 0) -> Expression:
        """Coefficient of the ``name``-jet direction at the given order."""
        if order == 0:
            return self.etas[name]
        key = (name, order)
        got = self._prolonged.get(key)
        if got is not None:
            return got
        with self._lock:
            got = self._prolonged.get(key)
            if got is not None:
                return got
            prev = self.component(name, order - 1)
            dxi = total_derivative(self.xi, self.system)
            value = total_derivative(prev, self.system)
            if not dxi.is_zero:
                value = value - Expression.from_atom(self.system.jet(name, order)) * dxi
            self._prolonged[key] = value
            return value

    def components(self) -> Dict[str, Expression]:
        return dict(self.etas)

    def map_components(self, fn) -> "VectorField":
        return VectorField(self.system, fn(self.xi), {n: fn(e) for n, e in self.etas.items()})

    def __add__(self, other: "VectorField") -> "VectorField":
        self._require_same_system(other)
        return VectorField(
            self.system,
            self.xi + other.xi,
            {n: self.etas[n] + other.etas[n] for n in self.etas},
        )

    def __sub__(self, other: "VectorField") -> "VectorField":
        self._require_same_system(other)
        return VectorField(
            self.system,
            self.xi - other.xi,
            {n: self.etas[n] - other.etas[n] for n in self.etas},
        )

    def __rmul__(self, c) -> "VectorField":
        return self.map_components(lambda e: e * c)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VectorField):
            return NotImplemented
        return (
            self.system == other.system
            and self.xi == other.xi
            and all(self.etas[n] == other.etas[n] for n in self.etas)
        )

    __hash__ = None

    @property
    def is_zero(self) -> bool:
        return self.xi.is_zero and all(e.is_zero for e in self.etas.values())

    def _require_same_system(self, other: "VectorField") -> None:
        if self.system != other.system:
            raise ValueError("vector fields live on different jet systems")

    def __repr__(self):
        from . import parse

        return parse.print_vector_field(self)


def prolong(X: VectorField, orders: Mapping[str, int]) -> VectorField:
    """Fill the prolongation cache up to the requested per-symbol orders."""
    for name, top in orders.items():
        X.component(name, top)
    return X


def bind_function(
    name: str,
    concrete: Expression,
    max_order: int,
    var: Optional[Atom] = None,
) -> Dict[Atom, Expression]:
    """Bindings for a one-variable function atom and its derivative atoms.

    ``concrete`` may involve the independent variable and parameters but no
    jet or function atoms; each successive binding is the exact derivative
    of the previous one.
    """
    indeps = set()
    for a in concrete.atoms():
        if a.kind == ex.INDEP:
            indeps.add(a)
        elif a.kind == ex.PARAM:
            continue
        else:
            raise InvalidBindingError(
                f"concrete binding for '{name}' may not contain atom {a!r}"
            )
    if var is None:
        if len(indeps) > 1:
            raise InvalidBindingError("concrete binding involves several variables")
        var = indeps.pop() if indeps else ex.indep_var("x")
    elif not indeps <= {var}:
        raise InvalidBindingError("concrete binding involves a different variable")

    bindings = {}
    current = concrete
    for k in range(max_order + 1):
        bindings[ex.func_atom(name, (var,), (k,))] = current
        current = ex.differentiate(current, var)
    return bindings


def derivative_bindings(
    components: Mapping[Atom, Expression],
    needed: Iterable[Atom],
) -> Dict[Atom, Expression]:
    """Extend base bindings for function atoms to their derivative atoms.

    ``components`` maps zero-index function atoms to expressions; every
    atom in ``needed`` sharing a name with one of them is bound to the
    corresponding iterated chain-rule partial derivative.
    """
    base = {}
    for a, e in components.items():
        if a.kind != ex.FUNC or any(a.index):
            raise ValueError("components must be keyed by zero-index function atoms")
        base[a.name] = (a, e)
    memo: Dict[Atom, Expression] = {}

    def value(atom: Atom) -> Expression:
        got = memo.get(atom)
        if got is not None:
            return got
        root, e = base[atom.name]
        if atom.args != root.args:
            raise ValueError(f"atom {atom!r} does not match declared arguments")
        if any(atom.index):
            pos = next(i for i, k in enumerate(atom.index) if k > 0)
            idx = list(atom.index)
            idx[pos] -= 1
            lower = value(ex.func_atom(atom.name, atom.args, tuple(idx)))
            e = partial_derivative(lower, atom.args[pos])
        memo[atom] = e
        return e

    out = {}
    for a in needed:
        if a.kind == ex.FUNC and a.name in base:
            out[a] = value(a)
    return out
