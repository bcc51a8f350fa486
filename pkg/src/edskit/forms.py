"""Exterior algebra over a chart.

Forms are stored fully expanded: a degree-p form is a map from strictly
increasing coordinate-index tuples to scalar coefficients, canonicalized so
that structural equality is semantic equality on the rational subclass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import sympy as sp

from . import solve
from .errors import (
    ChartMismatch,
    DegreeError,
    RankDeficient,
    UnknownCoordinate,
)
from .expr import Chart, Ledger, Scalar, canon, diff, substitute

Index = tuple[int, ...]


def _merge_sorted(a: Index, b: Index) -> Optional[tuple[Index, int]]:
    """Merge two strictly increasing tuples; None if they share an index.

    Returns the merged tuple and the sign of the permutation that sorts the
    concatenation a+b.
    """
    if set(a) & set(b):
        return None
    merged = []
    sign = 1
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i] < b[j]:
            merged.append(a[i])
            i += 1
        else:
            merged.append(b[j])
            j += 1
            if (len(a) - i) % 2 == 1:
                sign = -sign
    merged.extend(a[i:])
    merged.extend(b[j:])
    return tuple(merged), sign


@dataclass(frozen=True)
class DifferentialForm:
    """Degree-p form with canonical sorted-multi-index term map."""

    chart: Chart
    degree: int
    terms: tuple[tuple[Index, Scalar], ...]

    def __post_init__(self):
        cleaned = []
        for idx, coeff in self.terms:
            if len(idx) != self.degree:
                raise DegreeError(f"index {idx} has wrong length for degree {self.degree}")
            if any(i < 0 or i >= self.chart.dim for i in idx):
                raise UnknownCoordinate(f"index {idx} outside chart {self.chart.name}")
            if tuple(sorted(set(idx))) != idx:
                raise DegreeError(f"index {idx} is not strictly increasing")
            c = canon(coeff)
            if c != 0:
                cleaned.append((idx, c))
        cleaned.sort(key=lambda t: t[0])
        object.__setattr__(self, "terms", tuple(cleaned))

    # -- constructors ------------------------------------------------------

    @staticmethod
    def from_dict(chart: Chart, degree: int, coeffs: Mapping[Index, Scalar]) -> "DifferentialForm":
        return DifferentialForm(chart, degree, tuple(coeffs.items()))

    @staticmethod
    def zero(chart: Chart, degree: int = 1) -> "DifferentialForm":
        return DifferentialForm(chart, degree, ())

    @staticmethod
    def scalar(chart: Chart, value: Scalar) -> "DifferentialForm":
        return DifferentialForm(chart, 0, (((), sp.sympify(value)),))

    # -- basic queries -----------------------------------------------------

    @property
    def is_zero_form(self) -> bool:
        return not self.terms

    def coeff(self, idx: Index) -> Scalar:
        for i, c in self.terms:
            if i == idx:
                return c
        return sp.Integer(0)

    def as_scalar(self) -> Scalar:
        if self.degree != 0:
            raise DegreeError("not a degree-0 form")
        return self.coeff(())

    def coeff_row(self) -> list[Scalar]:
        """Coefficient vector of a 1-form over the chart coordinate basis."""
        if self.degree != 1:
            raise DegreeError("coefficient rows are for 1-forms")
        row = [sp.Integer(0)] * self.chart.dim
        for (i,), c in self.terms:
            row[i] = c
        return row

    def monomials(self) -> list[Index]:
        return [idx for idx, _ in self.terms]

    # -- ring operations ---------------------------------------------------

    def _binop(self, other: "DifferentialForm", f: Callable) -> "DifferentialForm":
        if self.chart != other.chart:
            raise ChartMismatch(
                f"forms on {self.chart.name} and {other.chart.name}"
            )
        if self.degree != other.degree and self.terms and other.terms:
            raise DegreeError("cannot add forms of different degree")
        degree = self.degree if self.terms or not other.terms else other.degree
        coeffs = dict(self.terms)
        for idx, c in other.terms:
            coeffs[idx] = f(coeffs.get(idx, sp.Integer(0)), c)
        return DifferentialForm(self.chart, degree, tuple(coeffs.items()))

    def __add__(self, other):
        return self._binop(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._binop(other, lambda a, b: a - b)

    def __neg__(self):
        return DifferentialForm(
            self.chart, self.degree, tuple((i, -c) for i, c in self.terms)
        )

    def smul(self, s: Scalar) -> "DifferentialForm":
        s = sp.sympify(s)
        return DifferentialForm(
            self.chart, self.degree, tuple((i, s * c) for i, c in self.terms)
        )

    def __rmul__(self, s):
        return self.smul(s)

    def __str__(self):
        from .dsl import print_form

        return print_form(self)

    __repr__ = __str__


def d_coord(chart: Chart, name: str) -> DifferentialForm:
    """The coordinate differential d(name)."""
    return DifferentialForm(chart, 1, (((chart.index(name),), sp.Integer(1)),))


def form_from_rows(chart: Chart, row: Sequence[Scalar]) -> DifferentialForm:
    return DifferentialForm(
        chart, 1, tuple(((i,), c) for i, c in enumerate(row) if c != 0)
    )


def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    """Graded-anticommutative associative bilinear product."""
    if a.chart != b.chart:
        raise ChartMismatch(f"wedge across charts {a.chart.name}, {b.chart.name}")
    coeffs: dict[Index, Scalar] = {}
    for ia, ca in a.terms:
        for ib, cb in b.terms:
            m = _merge_sorted(ia, ib)
            if m is None:
                continue
            idx, sign = m
            coeffs[idx] = coeffs.get(idx, sp.Integer(0)) + sign * ca * cb
    return DifferentialForm(a.chart, a.degree + b.degree, tuple(coeffs.items()))


def wedge_all(forms: Sequence[DifferentialForm]) -> DifferentialForm:
    out = forms[0]
    for f in forms[1:]:
        out = wedge(out, f)
    return out


def ext_d(a: DifferentialForm) -> DifferentialForm:
    """Exterior derivative; satisfies d∘d = 0 and the graded Leibniz rule."""
    chart = a.chart
    coeffs: dict[Index, Scalar] = {}
    for idx, c in a.terms:
        for j, name in enumerate(chart.coords):
            dc = diff(c, name, chart)
            if dc == 0:
                continue
            m = _merge_sorted((j,), idx)
            if m is None:
                continue
            midx, sign = m
            coeffs[midx] = coeffs.get(midx, sp.Integer(0)) + sign * dc
    return DifferentialForm(chart, a.degree + 1, tuple(coeffs.items()))


@dataclass(frozen=True)
class VectorField:
    chart: Chart
    components: tuple[Scalar, ...]

    def __post_init__(self):
        if len(self.components) != self.chart.dim:
            raise ChartMismatch("component count must equal chart dimension")
        object.__setattr__(
            self, "components", tuple(sp.sympify(c) for c in self.components)
        )

    @staticmethod
    def coordinate(chart: Chart, name: str) -> "VectorField":
        comps = [sp.Integer(0)] * chart.dim
        comps[chart.index(name)] = sp.Integer(1)
        return VectorField(chart, tuple(comps))


def contract(X: VectorField, a: DifferentialForm) -> DifferentialForm:
    """Interior product of a vector field with a form of degree >= 1."""
    if X.chart != a.chart:
        raise ChartMismatch("vector field and form live on different charts")
    if a.degree == 0:
        raise DegreeError("cannot contract a degree-0 form")
    coeffs: dict[Index, Scalar] = {}
    for idx, c in a.terms:
        for pos, i in enumerate(idx):
            xi = X.components[i]
            if xi == 0:
                continue
            rest = idx[:pos] + idx[pos + 1 :]
            sign = -1 if pos % 2 else 1
            coeffs[rest] = coeffs.get(rest, sp.Integer(0)) + sign * xi * c
    return DifferentialForm(a.chart, a.degree - 1, tuple(coeffs.items()))


# ---------------------------------------------------------------------------
# smooth maps


@dataclass(frozen=True)
class SmoothMap:
    """A map between charts given by one scalar per target coordinate.

    ``components[y]`` is the expression of the target coordinate ``y`` in the
    source coordinates.  ``kind`` records the user's claim (submersion /
    diffeomorphism); verification happens lazily and records its pivots.
    """

    source: Chart
    target: Chart
    components: tuple[tuple[str, Scalar], ...]
    kind: str = "unchecked"
    name: str = ""

    def __post_init__(self):
        comp = dict(self.components)
        missing = [c for c in self.target.coords if c not in comp]
        if missing:
            raise ChartMismatch(f"map lacks components for {missing}")
        for y, e in comp.items():
            if not self.source.owns_expr(sp.sympify(e)):
                raise ChartMismatch(
                    f"component {y} uses symbols outside chart {self.source.name}"
                )
        object.__setattr__(
            self,
            "components",
            tuple((y, canon(comp[y])) for y in self.target.coords),
        )

    @staticmethod
    def identity(chart: Chart) -> "SmoothMap":
        return SmoothMap(
            chart,
            chart,
            tuple((c, sp.Symbol(c)) for c in chart.coords),
            kind="diffeomorphism",
            name="id",
        )

    @staticmethod
    def coordinate_projection(source: Chart, target: Chart, name: str = "") -> "SmoothMap":
        if not set(target.coords) <= set(source.coords):
            raise ChartMismatch(
                f"{target.name} is not a coordinate subchart of {source.name}"
            )
        return SmoothMap(
            source,
            target,
            tuple((c, sp.Symbol(c)) for c in target.coords),
            kind="submersion",
            name=name or f"{source.name}->{target.name}",
        )

    def component(self, y: str) -> Scalar:
        return dict(self.components)[y]

    def bindings(self) -> dict[str, Scalar]:
        return {y: e for y, e in self.components}

    def pullback_scalar(self, e: Scalar) -> Scalar:
        return substitute(e, self.bindings(), source=self.target, target=self.source)

    def jacobian(self) -> list[list[Scalar]]:
        """Rows indexed by target coordinates, columns by source coordinates."""
        return [
            [diff(e, x, self.source) for x in self.source.coords]
            for _, e in self.components
        ]

    def verify_submersion(self, ledger: Ledger) -> bool:
        r = solve.rank(self.jacobian(), ledger, f"jacobian of {self.name or 'map'}")
        return r == self.target.dim

    def verify_diffeomorphism(self, ledger: Ledger) -> bool:
        return self.source.dim == self.target.dim and self.verify_submersion(ledger)

    def then(self, g: "SmoothMap") -> "SmoothMap":
        """Composition self;g — first self: A->B, then g: B->C, giving A->C."""
        if g.source != self.target:
            raise ChartMismatch("composition charts do not line up")
        comps = tuple(
            (z, substitute(e, self.bindings(), source=self.target, target=self.source))
            for z, e in g.components
        )
        kind = "unchecked"
        if self.kind == g.kind == "diffeomorphism":
            kind = "diffeomorphism"
        elif self.kind in ("submersion", "diffeomorphism") and g.kind in (
            "submersion",
            "diffeomorphism",
        ):
            kind = "submersion"
        return SmoothMap(self.source, g.target, comps, kind=kind,
                         name=f"{self.name};{g.name}")


def pullback(phi: SmoothMap, a: DifferentialForm) -> DifferentialForm:
    """Pullback along a smooth map; algebra homomorphism commuting with d."""
    if a.chart != phi.target:
        raise ChartMismatch(
            f"form lives on {a.chart.name}, map targets {phi.target.name}"
        )
    src = phi.source
    if a.degree == 0:
        return DifferentialForm.scalar(src, phi.pullback_scalar(a.as_scalar()))
    # differentials of the component functions, as 1-forms on the source
    dcomp: dict[int, DifferentialForm] = {}
    for j, (y, e) in enumerate(phi.components):
        coeffs = {}
        for i, x in enumerate(src.coords):
            de = diff(e, x, src)
            if de != 0:
                coeffs[(i,)] = de
        dcomp[a.chart.index(y)] = DifferentialForm.from_dict(src, 1, coeffs)
    out = DifferentialForm.zero(src, a.degree)
    for idx, c in a.terms:
        piece = DifferentialForm.scalar(src, phi.pullback_scalar(c))
        for i in idx:
            piece = wedge(piece, dcomp[i])
        out = out + piece
    return out


# ---------------------------------------------------------------------------
# reduction modulo an algebraically generated ideal of 1-forms


def mod_reduce(
    a: DifferentialForm,
    gens: Sequence[DifferentialForm],
    ledger: Optional[Ledger] = None,
    avoid: Sequence[int] = (),
) -> DifferentialForm:
    """Canonical representative of ``a`` modulo the algebraic ideal of the
    given (pointwise independent) 1-forms.

    The generators are completed to a coframe by greedy pivoting in chart
    coordinate order; every term of ``a`` containing a generator direction is
    deleted.  The result is zero iff ``a`` lies in the ideal at the generic
    point of the recorded assumptions.

    Columns listed in ``avoid`` are pivoted only as a last resort, so their
    directions stay in the complement whenever the span allows it (used to
    keep an independence direction visible in residues).
    """
    ledger = ledger or Ledger()
    if not gens:
        return a
    chart = a.chart
    for g in gens:
        if g.chart != chart:
            raise ChartMismatch("generators live on a different chart")
        if g.degree != 1:
            raise DegreeError("ideal generators must be 1-forms")
    avoid_set = set(avoid)
    perm = [j for j in range(chart.dim) if j not in avoid_set] + [
        j for j in range(chart.dim) if j in avoid_set
    ]
    rows = [[g.coeff_row()[j] for j in perm] for g in gens]
    red, pivots_p = solve.rref(rows, ledger, "mod_reduce")
    if len(pivots_p) < len(gens):
        raise RankDeficient("dependent ideal generators in mod_reduce")
    if a.degree == 0:
        return a
    pivots = [perm[p] for p in pivots_p]
    # substitution for each pivot direction: dx_p -> -sum(non-pivot entries)
    replacement: dict[int, list[tuple[int, Scalar]]] = {}
    for i, p in enumerate(pivots_p):
        repl = []
        for jp in range(chart.dim):
            j = perm[jp]
            if jp == p or j in pivots:
                continue
            c = red[i][jp]
            if c != 0:
                repl.append((j, canon(-c)))
        replacement[perm[p]] = repl
    coeffs: dict[Index, Scalar] = {}

    def emit(idx: Index, c: Scalar):
        for pos, i in enumerate(idx):
            if i in replacement:
                for j, factor in replacement[i]:
                    m = _merge_sorted((j,), idx[:pos] + idx[pos + 1 :])
                    if m is None:
                        continue
                    midx, sign = m
                    extra = -1 if pos % 2 else 1
                    emit(midx, extra * sign * factor * c)
                return
        coeffs[idx] = coeffs.get(idx, sp.Integer(0)) + c

    for idx, c in a.terms:
        emit(idx, c)
    reduced = {k: canon(ledger.reduce(v)) for k, v in coeffs.items()}
    return DifferentialForm.from_dict(chart, a.degree, reduced)
