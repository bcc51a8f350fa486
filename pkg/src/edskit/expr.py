"""Exact symbolic scalars over a chart.

Scalars are sympy expressions built from exact rationals, coordinate symbols,
formal function symbols applied to arguments, and formal partial-derivative
nodes.  sympy supplies the tree arithmetic and the rational canonical form;
this module pins the canonicalization contract, the three-valued zero test,
and the assumption bookkeeping that the rest of the engine relies on.

No transcendental knowledge is attached to function symbols: ``sin`` here is
an opaque symbol unless the user supplies equations (e.g. sin^2 + cos^2 = 1)
as assumptions.
"""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

import sympy as sp
from sympy.core.function import AppliedUndef

from .errors import (
    DegenerateExpression,
    InconsistentAssumptions,
    IndeterminateRank,
    UnknownCoordinate,
)

Scalar = sp.Expr

ZERO = sp.Integer(0)
ONE = sp.Integer(1)


class Ternary(enum.Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"

    def __bool__(self):  # pragma: no cover - guard against accidental truthiness
        raise TypeError("Ternary verdicts must be compared explicitly")


def all_yes(verdicts: Iterable[Ternary]) -> Ternary:
    """Conjunction: YES only if all YES; NO if any NO; else UNKNOWN."""
    out = Ternary.YES
    for v in verdicts:
        if v is Ternary.NO:
            return Ternary.NO
        if v is Ternary.UNKNOWN:
            out = Ternary.UNKNOWN
    return out


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class Chart:
    """An ordered local coordinate system.

    ``time`` designates the distinguished time coordinate when there is one;
    by convention a coordinate literally named ``t`` is picked up
    automatically.  Role tags beyond time are advisory display metadata.
    """

    name: str
    coords: tuple[str, ...]
    time: Optional[str] = None
    roles: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if len(set(self.coords)) != len(self.coords):
            raise UnknownCoordinate(f"duplicate coordinate names in chart {self.name}")
        if self.time is None and "t" in self.coords:
            object.__setattr__(self, "time", "t")
        if self.time is not None and self.time not in self.coords:
            raise UnknownCoordinate(
                f"time coordinate {self.time} not in chart {self.name}"
            )

    @property
    def dim(self) -> int:
        return len(self.coords)

    def index(self, name: str) -> int:
        try:
            return self.coords.index(name)
        except ValueError:
            raise UnknownCoordinate(f"{name} is not a coordinate of chart {self.name}")

    def has(self, name: str) -> bool:
        return name in self.coords

    def symbol(self, name: str) -> sp.Symbol:
        if name not in self.coords:
            raise UnknownCoordinate(f"{name} is not a coordinate of chart {self.name}")
        return sp.Symbol(name)

    def symbols(self) -> tuple[sp.Symbol, ...]:
        return tuple(sp.Symbol(c) for c in self.coords)

    def extend(self, new_coords: Sequence[str], name: Optional[str] = None) -> "Chart":
        for c in new_coords:
            if c in self.coords:
                raise UnknownCoordinate(f"{c} already a coordinate of {self.name}")
        return Chart(
            name=name or f"{self.name}x",
            coords=self.coords + tuple(new_coords),
            time=self.time,
            roles=self.roles,
        )

    def fresh_name(self, stem: str) -> str:
        """Deterministic fresh coordinate name derived from ``stem``."""
        k = 1
        while f"{stem}{k}" in self.coords:
            k += 1
        return f"{stem}{k}"

    def owns_expr(self, e: Scalar) -> bool:
        return all(str(s) in self.coords for s in e.free_symbols)


# ---------------------------------------------------------------------------
# canonical form


def _check_finite(e: Scalar) -> Scalar:
    if e.has(sp.zoo) or e.has(sp.nan) or e.has(sp.oo) or e.has(-sp.oo):
        raise DegenerateExpression(f"non-finite value in {e}")
    if e.has(sp.Float):
        raise DegenerateExpression("floating-point literals are not supported")
    return e


_CANON_CACHE: dict = {}


def canon(e: Scalar) -> Scalar:
    """Idempotent canonical representative.

    On the rational subclass (no formal function or derivative atoms) the
    result is the unique reduced numerator/denominator pair produced by
    ``sympy.cancel``: expanded, gcd-reduced, sign-normalized.
    """
    e = sp.sympify(e)
    if e.is_Symbol or e.is_Integer or e.is_Rational:
        return e
    hit = _CANON_CACHE.get(e)
    if hit is not None:
        return hit
    _check_finite(e)
    c = sp.cancel(sp.together(e))
    _check_finite(c)
    if len(_CANON_CACHE) > 400000:
        _CANON_CACHE.clear()
    _CANON_CACHE[e] = c
    _CANON_CACHE[c] = c
    return c


def num_den(e: Scalar) -> tuple[Scalar, Scalar]:
    return sp.fraction(canon(e))


def is_rational_subclass(e: Scalar) -> bool:
    """True when ``e`` contains no formal function or derivative atoms."""
    return not (e.has(AppliedUndef) or e.has(sp.Derivative) or e.has(sp.Subs))


def diff(e: Scalar, coord: str, chart: Optional[Chart] = None) -> Scalar:
    """Partial derivative with respect to a chart coordinate.

    Linear, satisfies product and chain rules; formal functions produce
    formal partial nodes with order-normalized derivative multisets.
    """
    if chart is not None and not chart.has(coord):
        raise UnknownCoordinate(f"{coord} is not a coordinate of chart {chart.name}")
    return sp.diff(sp.sympify(e), sp.Symbol(coord))


def substitute(
    e: Scalar,
    bindings: Mapping[str, Scalar],
    source: Optional[Chart] = None,
    target: Optional[Chart] = None,
) -> Scalar:
    """Simultaneous substitution of coordinates, then canon.

    ``bindings`` maps coordinate names of ``source`` to scalars over
    ``target``; unbound coordinates must exist on the target chart.
    """
    from .errors import ChartMismatch

    e = sp.sympify(e)
    if source is not None:
        for k in bindings:
            if not source.has(k):
                raise UnknownCoordinate(f"{k} is not a coordinate of {source.name}")
    sub = {sp.Symbol(k): sp.sympify(v) for k, v in bindings.items()}
    out = e.subs(sub, simultaneous=True)
    if target is not None and not target.owns_expr(out):
        stray = {str(s) for s in out.free_symbols} - set(target.coords)
        raise ChartMismatch(
            f"substitution result uses symbols {sorted(stray)} outside chart {target.name}"
        )
    return canon(out)


# ---------------------------------------------------------------------------
# assumptions


def _norm_key(e: Scalar) -> Scalar:
    """Content-free, sign-normalized numerator of canon(e); the key under
    which nonvanishing hypotheses are recorded and compared."""
    n, _ = num_den(e)
    n = sp.expand(n)
    try:
        _, n = n.as_content_primitive()
    except (AttributeError, sp.PolynomialError):
        pass
    if n.could_extract_minus_sign():
        n = -n
    return sp.expand(n)


@dataclass(frozen=True)
class Assumption:
    expr: Scalar
    label: str = ""

    def __str__(self):
        return str(self.expr)


def _atom_order(e: Scalar) -> list[sp.Expr]:
    """Deterministic generator order: derivative atoms first, then function
    applications, then plain symbols.  Used for reduction by equational
    assumptions."""
    subs_nodes = sorted(e.atoms(sp.Subs), key=sp.srepr)
    derivs = sorted(e.atoms(sp.Derivative), key=lambda d: (-d.derivative_count, sp.srepr(d)))
    funcs = sorted(e.atoms(AppliedUndef), key=sp.srepr)
    syms = sorted(e.free_symbols, key=str)
    return list(subs_nodes) + list(derivs) + list(funcs) + list(syms)


@dataclass(frozen=True)
class AssumptionSet:
    """Nonvanishing and equational hypotheses with provenance labels.

    Members are stored canonicalized.  Equational members act as rewrite
    rules (multivariate polynomial division, derivative atoms eliminated
    first); nonvanishing members authorize pivots.
    """

    nonzero: tuple[Assumption, ...] = ()
    zero: tuple[Assumption, ...] = ()

    def __post_init__(self):
        nz = tuple(Assumption(canon(a.expr), a.label) for a in self.nonzero)
        z = tuple(Assumption(canon(a.expr), a.label) for a in self.zero)
        object.__setattr__(self, "nonzero", nz)
        object.__setattr__(self, "zero", z)
        nz_keys = {sp.srepr(_norm_key(a.expr)) for a in nz}
        for a in z:
            if sp.srepr(_norm_key(a.expr)) in nz_keys:
                raise InconsistentAssumptions(
                    f"{a.expr} asserted both zero and nonzero"
                )

    @staticmethod
    def make(nonzero=(), zero=()) -> "AssumptionSet":
        return AssumptionSet(
            nonzero=tuple(
                a if isinstance(a, Assumption) else Assumption(sp.sympify(a))
                for a in nonzero
            ),
            zero=tuple(
                a if isinstance(a, Assumption) else Assumption(sp.sympify(a))
                for a in zero
            ),
        )

    def with_nonzero(self, e: Scalar, label: str = "") -> "AssumptionSet":
        return AssumptionSet(self.nonzero + (Assumption(e, label),), self.zero)

    def with_zero(self, e: Scalar, label: str = "") -> "AssumptionSet":
        return AssumptionSet(self.nonzero, self.zero + (Assumption(e, label),))

    def merge(self, other: "AssumptionSet") -> "AssumptionSet":
        return AssumptionSet(self.nonzero + other.nonzero, self.zero + other.zero)

    def assumes_nonzero(self, e: Scalar) -> bool:
        k = sp.srepr(_norm_key(e))
        return any(sp.srepr(_norm_key(a.expr)) == k for a in self.nonzero)

    def fingerprint(self) -> str:
        cached = getattr(self, "_fp", None)
        if cached is not None:
            return cached
        h = hashlib.sha256()
        for a in self.nonzero:
            h.update(b"n" + sp.srepr(a.expr).encode())
        for a in self.zero:
            h.update(b"z" + sp.srepr(a.expr).encode())
        fp = h.hexdigest()[:16]
        object.__setattr__(self, "_fp", fp)
        return fp

    def reduce(self, e: Scalar) -> Scalar:
        """Normal form of ``e`` modulo the equational assumptions.

        Reduction is polynomial division by the assumption polynomials in a
        lex order that eliminates derivative atoms first; it is sound (a zero
        result certifies membership in the generated ideal) but makes no
        completeness claim.
        """
        e = canon(e)
        if not self.zero:
            return e
        key = (e, self.fingerprint())
        hit = _REDUCE_CACHE.get(key)
        if hit is not None:
            return hit
        num, den = sp.fraction(e)
        rules = [sp.fraction(canon(a.expr))[0] for a in self.zero]
        num_r = _poly_reduce(num, rules)
        den_r = _poly_reduce(den, rules)
        if den_r == 0:
            raise DegenerateExpression(
                f"denominator {den} vanishes under the equational assumptions"
            )
        out = canon(num_r / den_r)
        if len(_REDUCE_CACHE) > 200000:
            _REDUCE_CACHE.clear()
        _REDUCE_CACHE[key] = out
        return out


def _poly_reduce(e: Scalar, rules: Sequence[Scalar]) -> Scalar:
    if e == 0 or not rules:
        return e
    gens = _atom_order(sp.Add(e, *rules))
    if not gens:
        return e
    try:
        _, rem = sp.reduced(e, list(rules), *gens, order="lex")
    except (sp.PolynomialError, sp.polys.polyerrors.ComputationFailed, ZeroDivisionError):
        return e
    return sp.expand(rem)


_REDUCE_CACHE: dict = {}

EMPTY_ASSUMPTIONS = AssumptionSet()


# ---------------------------------------------------------------------------
# three-valued zero test


def _stable_seed(e: Scalar, salt: int) -> int:
    h = hashlib.sha256((sp.srepr(e) + "#" + str(salt)).encode()).digest()
    return int.from_bytes(h[:8], "big")


def _leaf_substitution(e: Scalar, rng: random.Random) -> dict:
    values = {}
    for atom in _atom_order(e):
        values[atom] = sp.Rational(rng.randint(-12, 12), rng.randint(1, 7))
    return values


_IS_ZERO_CACHE: dict = {}


def is_zero(
    e: Scalar,
    assumptions: AssumptionSet = EMPTY_ASSUMPTIONS,
    trials: int = 8,
    seed: int = 0,
) -> Ternary:
    """Sound three-valued zero test.

    YES only when the canonical form (after reduction by equational
    assumptions) is literally zero.  On the rational subclass the answer is
    never UNKNOWN.  With formal function atoms, evaluation at ``trials``
    random rational points may certify NO; the sample seed is derived from
    the expression so runs are reproducible.
    """
    key = (sp.sympify(e), assumptions.fingerprint(), trials, seed)
    hit = _IS_ZERO_CACHE.get(key)
    if hit is not None:
        return hit
    out = _is_zero_impl(sp.sympify(e), assumptions, trials, seed)
    if len(_IS_ZERO_CACHE) > 200000:  # crude bound; entries are small
        _IS_ZERO_CACHE.clear()
    _IS_ZERO_CACHE[key] = out
    return out


def _is_zero_impl(e, assumptions, trials, seed) -> Ternary:
    r = assumptions.reduce(e)
    if r == 0:
        return Ternary.YES
    if is_rational_subclass(r):
        return Ternary.NO
    if assumptions.assumes_nonzero(r):
        return Ternary.NO
    rng = random.Random(_stable_seed(r, seed))
    nz_exprs = [assumptions.reduce(a.expr) for a in assumptions.nonzero]
    attempts = 0
    successes = 0
    while successes < trials and attempts < 8 * trials:
        attempts += 1
        point = _leaf_substitution(sp.Add(r, *nz_exprs) if nz_exprs else r, rng)
        try:
            val = r.xreplace(point)
            val = sp.nsimplify(val) if val.free_symbols else val
        except (ZeroDivisionError, ValueError):
            continue
        if val.has(sp.zoo) or val.has(sp.nan) or val.free_symbols:
            continue
        if any(
            nz.xreplace(point) == 0 for nz in nz_exprs
        ):  # stay on the assumed-nonvanishing locus
            continue
        successes += 1
        if val != 0:
            return Ternary.NO
    return Ternary.UNKNOWN


# ---------------------------------------------------------------------------
# ledger


@dataclass
class Ledger:
    """Mutable record of genericity choices made during a computation.

    Every non-constant pivot used by the linear algebra is recorded here as a
    nonvanishing hypothesis with a provenance label.  In strict mode an
    undecidable pivot aborts with IndeterminateRank instead of being assumed.
    """

    base: AssumptionSet = field(default_factory=lambda: EMPTY_ASSUMPTIONS)
    recorded: list[Assumption] = field(default_factory=list)
    strict: bool = False
    trials: int = 8
    seed: int = 0

    def __post_init__(self):
        self._asm_cache: tuple[int, AssumptionSet] = (0, self.base)

    def assumptions(self) -> AssumptionSet:
        n, cached = self._asm_cache
        if n == len(self.recorded):
            return cached
        out = cached
        for a in self.recorded[n:]:
            out = out.with_nonzero(a.expr, a.label)
        self._asm_cache = (len(self.recorded), out)
        return out

    def reduce(self, e: Scalar) -> Scalar:
        if not self.base.zero:
            return canon(e)
        return self.base.reduce(e)

    def is_zero(self, e: Scalar) -> Ternary:
        return is_zero(e, self.assumptions(), trials=self.trials, seed=self.seed)

    def require_nonzero(self, e: Scalar, label: str) -> None:
        """Record the genericity hypothesis ``e != 0`` (pivot bookkeeping).

        A rational function vanishes only where its numerator does, so only
        non-constant numerators are worth recording."""
        e = self.reduce(canon(e))
        num, _ = sp.fraction(e)
        if num.is_number:
            if num == 0:
                raise IndeterminateRank(e, label)
            return
        verdict = self.is_zero(num)
        if verdict is Ternary.YES:
            raise IndeterminateRank(e, f"{label}: pivot is identically zero")
        if verdict is Ternary.UNKNOWN and self.strict:
            raise IndeterminateRank(e, label)
        asm = self.assumptions()
        if asm.assumes_nonzero(num):
            return
        key = _norm_key(num)
        self.recorded.append(Assumption(key, label))

    def entries(self) -> list[str]:
        out = []
        for a in self.recorded:
            tag = f"  [{a.label}]" if a.label else ""
            out.append(f"{a.expr} != 0{tag}")
        return out

    def child(self) -> "Ledger":
        """A ledger sharing base assumptions but recording separately."""
        return Ledger(
            base=self.assumptions(),
            strict=self.strict,
            trials=self.trials,
            seed=self.seed,
        )
