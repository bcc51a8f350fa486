"""Pfaffian systems with independence condition.

Ranks, derived flags, Cartan (Cauchy characteristic) systems, Frobenius
tests, systemhood checks, the corank-2 class invariant, and verification of
equivalences that match independence conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import sympy as sp

from . import solve
from .errors import (
    ChartMismatch,
    MissingIndependence,
    NotASystem,
    RankDeficient,
    WrongCorank,
)
from .expr import Chart, Ledger, Scalar, Ternary, all_yes, canon
from .forms import (
    DifferentialForm,
    SmoothMap,
    d_coord,
    ext_d,
    form_from_rows,
    mod_reduce,
    pullback,
    wedge,
)


@dataclass(frozen=True)
class PfaffianSystem:
    """A subbundle of the cotangent bundle presented by 1-form generators,
    with an optional independence 1-form tau."""

    chart: Chart
    generators: tuple[DifferentialForm, ...]
    indep: Optional[DifferentialForm] = None
    name: str = ""

    def __post_init__(self):
        for g in self.generators:
            if g.chart != self.chart:
                raise ChartMismatch(f"generator {g} not on chart {self.chart.name}")
            if g.degree != 1:
                raise RankDeficient("generators must be 1-forms")
        if self.indep is not None and self.indep.chart != self.chart:
            raise ChartMismatch("independence form lives on a different chart")

    @property
    def dim(self) -> int:
        return self.chart.dim

    def rows(self) -> list[list[Scalar]]:
        return [g.coeff_row() for g in self.generators]

    def with_indep(self, tau: DifferentialForm) -> "PfaffianSystem":
        return PfaffianSystem(self.chart, self.generators, tau, self.name)

    def with_generators(self, gens, name="") -> "PfaffianSystem":
        return PfaffianSystem(self.chart, tuple(gens), self.indep, name or self.name)

    def adjoin(self, extra, name="") -> "PfaffianSystem":
        return self.with_generators(self.generators + tuple(extra), name)

    def require_indep(self) -> DifferentialForm:
        if self.indep is None:
            raise MissingIndependence(
                f"system {self.name or '<anonymous>'} has no independence condition"
            )
        return self.indep

    def __str__(self):
        gens = ", ".join(str(g) for g in self.generators)
        return f"[[{gens}]]"


def rank(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> int:
    """Symbolic row rank of the generator matrix over the fraction field."""
    ledger = ledger or Ledger()
    return solve.rank(S.rows(), ledger, f"rank({S.name or 'system'})")


def validate(S: PfaffianSystem, ledger: Ledger) -> None:
    """Check the structural invariants of a Pfaffian system with tau."""
    r = rank(S, ledger)
    if r != len(S.generators):
        raise RankDeficient(
            f"generators of {S.name or 'system'} are dependent (rank {r} of {len(S.generators)})"
        )
    if S.indep is not None:
        if solve.span_contains3(S.rows(), S.indep.coeff_row(), ledger, "indep") is Ternary.YES:
            raise NotASystem("independence form lies in the span of the generators")
        if not ext_d(S.indep).is_zero_form:
            raise NotASystem("independence form must be closed (locally exact)")
        if S.chart.time is not None:
            dt = d_coord(S.chart, S.chart.time)
            if not (S.indep - dt).is_zero_form:
                raise NotASystem(
                    "chart has a time coordinate; independence condition must be d(time)"
                )


def type_of(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> tuple[int, int]:
    """The pair (n, m): n = rank, m = dim - n - 1."""
    n = rank(S, ledger)
    return n, S.dim - n - 1


def corank_dim(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> int:
    """dim M - rank I (type bookkeeping corank)."""
    return S.dim - rank(S, ledger)


def corank_cartan(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> int:
    """rank(C(I)) - rank(I): corank of the system on its own underlying
    manifold (the leaf space of the Cauchy characteristics)."""
    ledger = ledger or Ledger()
    C = cartan_system(S, ledger)
    return rank(C, ledger) - rank(S, ledger)


# ---------------------------------------------------------------------------
# derived systems


def _residues(S: PfaffianSystem, ledger: Ledger) -> list[DifferentialForm]:
    memo = getattr(ledger, "_residue_memo", None)
    if memo is None:
        memo = {}
        ledger._residue_memo = memo
    hit = memo.get(S)
    if hit is None:
        hit = [mod_reduce(ext_d(g), S.generators, ledger) for g in S.generators]
        memo[S] = hit
    return hit


def derived(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> PfaffianSystem:
    """First derived system: sections theta with d theta = 0 mod the system.

    Computed as the kernel of the coefficient map into 2-form residues.
    """
    ledger = ledger or Ledger()
    if not S.generators:
        return S
    residues = _residues(S, ledger)
    monoms = sorted({idx for r in residues for idx in r.monomials()})
    if not monoms:
        return S  # Frobenius: derived system equals the system
    matrix_cols = [[r.coeff(m) for m in monoms] for r in residues]
    kernel = solve.nullspace(
        [list(col) for col in zip(*matrix_cols)] if matrix_cols else [],
        ledger,
        "derived kernel",
    )
    # kernel vectors are coefficient tuples over the generators
    new_gens = []
    for v in kernel:
        row = [sp.Integer(0)] * S.dim
        for coeff, g in zip(v, S.generators):
            if coeff == 0:
                continue
            for (i,), c in g.terms:
                row[i] = canon(row[i] + coeff * c)
        row = solve.clear_denominators(row)
        new_gens.append(form_from_rows(S.chart, row))
    new_gens = [g for g in new_gens if not g.is_zero_form]
    return PfaffianSystem(S.chart, tuple(new_gens), S.indep, name=f"{S.name}'")


@dataclass(frozen=True)
class DerivedFlag:
    """The filtration I = I^(0) >= I^(1) >= ... with its rank data."""

    systems: tuple[PfaffianSystem, ...]
    ranks: tuple[int, ...]
    stabilization_index: int

    @property
    def infinite(self) -> PfaffianSystem:
        return self.systems[self.stabilization_index]

    @property
    def display_ranks(self) -> tuple[int, ...]:
        """Ranks up to stabilization; a stabilized nonzero rank is shown
        twice so constancy is visible."""
        out = list(self.ranks[: self.stabilization_index + 1])
        if out and out[-1] != 0:
            out.append(out[-1])
        return tuple(out)

    @property
    def drops(self) -> tuple[int, ...]:
        """The invariants r_k = rank(I^(k)) - rank(I^(k+1))."""
        rs = self.ranks[: self.stabilization_index + 1]
        return tuple(rs[i] - rs[i + 1] for i in range(len(rs) - 1))


def derived_flag(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> DerivedFlag:
    """Iterate ``derived`` to stabilization."""
    ledger = ledger or Ledger()
    systems = [S]
    ranks = [rank(S, ledger)]
    while True:
        nxt = derived(systems[-1], ledger)
        r = rank(nxt, ledger)
        if r > ranks[-1]:
            raise RankDeficient("derived system rank increased; inconsistent input")
        if r == ranks[-1]:
            # same rank and contained in the previous span: stabilized
            systems.append(nxt)
            ranks.append(r)
            return DerivedFlag(tuple(systems), tuple(ranks), len(systems) - 2)
        systems.append(nxt)
        ranks.append(r)
        if r == 0:
            return DerivedFlag(tuple(systems), tuple(ranks), len(systems) - 1)


def infinite_derived(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> PfaffianSystem:
    return derived_flag(S, ledger).infinite


def is_frobenius(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> Ternary:
    """Whether d(theta) = 0 mod the generators for every generator."""
    ledger = ledger or Ledger()
    verdicts = []
    for r in _residues(S, ledger):
        for _, c in r.terms:
            verdicts.append(ledger.is_zero(c))
    return all_yes(verdicts)


# ---------------------------------------------------------------------------
# Cartan system (Cauchy characteristics)


def cartan_system(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> PfaffianSystem:
    """The Frobenius system whose leaves are the Cauchy characteristics.

    Complete the generators to a coframe (theta^i, pi^a) with pi running over
    the non-pivot coordinate differentials, write
    d theta^i = (1/2) T^i_ab pi^a wedge pi^b mod I, and adjoin all
    contractions T^i_ab pi^b.
    """
    ledger = ledger or Ledger()
    if not S.generators:
        return S
    residues = _residues(S, ledger)
    rows = [g.coeff_row() for g in S.generators]
    # one contraction row per (generator, coframe direction): sum of T^i_ab pi^b
    contraction: dict[tuple[int, int], list[Scalar]] = {}
    for i, res in enumerate(residues):
        for (a, b), c in res.terms:
            row_a = contraction.setdefault((i, a), [sp.Integer(0)] * S.dim)
            row_a[b] = canon(row_a[b] + c)
            row_b = contraction.setdefault((i, b), [sp.Integer(0)] * S.dim)
            row_b[a] = canon(row_b[a] - c)
    extra_rows = [contraction[k] for k in sorted(contraction)]
    red, pivots = solve.rref(rows + extra_rows, ledger, "cartan_system")
    gens = [form_from_rows(S.chart, solve.clear_denominators(red[i])) for i in range(len(pivots))]
    return PfaffianSystem(S.chart, tuple(gens), S.indep, name=f"C({S.name})")


# ---------------------------------------------------------------------------
# systemhood


@dataclass(frozen=True)
class SystemReport:
    """Verdicts for the three axioms of a system with independence condition:
    i. no Cauchy characteristics, ii. tau exact, iii. no integral surfaces on
    which tau is nonvanishing (decided only for control-type systems)."""

    no_cauchy: Ternary
    tau_exact: Ternary
    no_integral_surfaces: Ternary
    cartan_rank: int
    dim: int
    notes: tuple[str, ...] = ()

    @property
    def verdict(self) -> Ternary:
        return all_yes([self.no_cauchy, self.tau_exact, self.no_integral_surfaces])

    @property
    def passes(self) -> bool:
        """Conditions i and ii hold and iii is not refuted."""
        return (
            self.no_cauchy is Ternary.YES
            and self.tau_exact is Ternary.YES
            and self.no_integral_surfaces is not Ternary.NO
        )


def is_system(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> SystemReport:
    ledger = ledger or Ledger()
    tau = S.require_indep()
    C = cartan_system(S, ledger)
    c_rank = rank(C, ledger)
    no_cauchy = Ternary.YES if c_rank == S.dim else Ternary.NO
    tau_exact = Ternary.YES if ext_d(tau).is_zero_form else Ternary.NO
    notes = []
    cts = is_cts_check(S, ledger)
    if cts is Ternary.YES:
        # For a control-type system, full control rank is equivalent to the
        # absence of Cauchy characteristics, and rules out integral surfaces
        # transverse to tau.
        no_surfaces = no_cauchy
        notes.append("condition iii decided via full control rank (control-type system)")
    else:
        no_surfaces = Ternary.UNKNOWN
        notes.append("condition iii unchecked: no algorithmic criterion for non-CTS inputs")
    return SystemReport(
        no_cauchy=no_cauchy,
        tau_exact=tau_exact,
        no_integral_surfaces=no_surfaces,
        cartan_rank=c_rank,
        dim=S.dim,
        notes=tuple(notes),
    )


def is_cts_check(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> Ternary:
    """Whether the span of the generators together with tau is Frobenius."""
    ledger = ledger or Ledger()
    tau = S.require_indep()
    big = PfaffianSystem(S.chart, S.generators + (tau,), None)
    return is_frobenius(big, ledger)


# ---------------------------------------------------------------------------
# corank-2 class


@dataclass(frozen=True)
class CartanClassReport:
    positive: bool
    class_value: int
    infinite_rank: Optional[int] = None
    first_index: Optional[int] = None
    normal_system: Optional[PfaffianSystem] = None
    flag: Optional[DerivedFlag] = None


def cartan_class(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> CartanClassReport:
    """Class invariant of a corank-2 system from its derived flag.

    Either every r_k <= 1 (class 0, reported with rank I^(infinity)), or the
    first index with r_l = 2 yields class rank(I^(l)) and the normal system
    I^(l-1).
    """
    ledger = ledger or Ledger()
    if corank_dim(S, ledger) != 2:
        raise WrongCorank(
            f"class is defined for corank-2 systems; got corank {corank_dim(S, ledger)}"
        )
    flag = derived_flag(S, ledger)
    drops = flag.drops
    for ell, r in enumerate(drops):
        if r >= 2:
            if ell == 0:
                raise WrongCorank("r_0 = 2 contradicts corank 2")
            return CartanClassReport(
                positive=True,
                class_value=flag.ranks[ell],
                first_index=ell,
                normal_system=flag.systems[ell - 1],
                flag=flag,
            )
    return CartanClassReport(
        positive=False,
        class_value=0,
        infinite_rank=flag.ranks[flag.stabilization_index],
        flag=flag,
    )


# ---------------------------------------------------------------------------
# tau-equivalence


@dataclass(frozen=True)
class EquivalenceReport:
    spans_match: Ternary
    indep_matches: Ternary
    notes: tuple[str, ...] = ()

    @property
    def verdict(self) -> Ternary:
        return all_yes([self.spans_match, self.indep_matches])


def verify_tau_equivalence(
    phi: SmoothMap,
    S: PfaffianSystem,
    Sbar: PfaffianSystem,
    ledger: Optional[Ledger] = None,
) -> EquivalenceReport:
    """Check that phi pulls the second system (and its independence
    condition) back onto the first: phi^* Ibar = I and phi^* taubar = tau."""
    ledger = ledger or Ledger()
    if phi.source != S.chart or phi.target != Sbar.chart:
        raise ChartMismatch("map does not connect the two systems' charts")
    pulled = [pullback(phi, g) for g in Sbar.generators]
    spans = solve.span_equal3(
        [g.coeff_row() for g in pulled], S.rows(), ledger, "equivalence spans"
    )
    notes = []
    if S.indep is None and Sbar.indep is None:
        indep = Ternary.YES
        notes.append("no independence conditions declared; spans only")
    elif S.indep is None or Sbar.indep is None:
        indep = Ternary.NO
        notes.append("only one side declares an independence condition")
    else:
        diff_row = (pullback(phi, Sbar.indep) - S.indep).coeff_row()
        indep = all_yes([ledger.is_zero(e) for e in diff_row])
    return EquivalenceReport(spans_match=spans, indep_matches=indep, notes=tuple(notes))
