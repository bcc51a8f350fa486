"""Prolongation constructions and their verification.

Total, partial and by-differentiation prolongations; necessary-condition
checks for claimed Cartan prolongations; the extension construction that
factors any Cartan prolongation through successive prolongations by
differentiation; relative extensions; simplicity, C-regularity and the
corank-3 chain-shape classification.

Two framings appear throughout.  In *map mode* the top system lives on its
own chart and a submersion (often an implicit coordinate projection) relates
it to the base.  In *inclusion mode* both systems are subbundles of the same
chart and the underlying manifolds are the leaf spaces of their Cauchy
characteristics, so "dimension" means the rank of the Cartan system.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import sympy as sp

from . import solve
from .errors import (
    ChartMismatch,
    ComplementNotFound,
    NeedsAssumption,
    NotASystem,
    NotCTS,
    NotIndependent,
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
    pullback,
)
from .pfaffian import (
    PfaffianSystem,
    cartan_system,
    derived,
    is_cts_check,
    is_frobenius,
    is_system,
    rank,
)


# ---------------------------------------------------------------------------
# shared helpers


def transport(form: DifferentialForm, chart: Chart) -> DifferentialForm:
    """Reinterpret a form on an extension of its chart (appended coords)."""
    if chart.coords[: form.chart.dim] != form.chart.coords:
        raise ChartMismatch("target chart does not extend the form's chart")
    return DifferentialForm(chart, form.degree, form.terms)


def transport_system(S: PfaffianSystem, chart: Chart) -> PfaffianSystem:
    return PfaffianSystem(
        chart,
        tuple(transport(g, chart) for g in S.generators),
        transport(S.indep, chart) if S.indep is not None else None,
        name=S.name,
    )


def resolve_projection(
    top: PfaffianSystem, base: PfaffianSystem, projection: Optional[SmoothMap]
) -> Optional[SmoothMap]:
    """Explicit map, implicit coordinate projection, or None (same chart)."""
    if projection is not None:
        if projection.source != top.chart or projection.target != base.chart:
            raise ChartMismatch("projection does not connect top to base chart")
        return projection
    if top.chart == base.chart:
        return None
    if set(base.chart.coords) <= set(top.chart.coords):
        return SmoothMap.coordinate_projection(top.chart, base.chart)
    raise ChartMismatch(
        "no projection given and base chart is not a coordinate subchart of the top"
    )


def pull_system(
    base: PfaffianSystem, projection: Optional[SmoothMap], indep: Optional[DifferentialForm]
) -> PfaffianSystem:
    """The base system seen on the top chart."""
    if projection is None:
        return base if indep is None else base.with_indep(indep)
    gens = tuple(pullback(projection, g) for g in base.generators)
    return PfaffianSystem(projection.source, gens, indep, name=base.name)


class _CartanCache:
    """Per-operation memo for Cartan systems and ranks."""

    def __init__(self, ledger: Ledger):
        self.ledger = ledger
        self._cs: dict = {}
        self._rk: dict = {}

    def cartan(self, S: PfaffianSystem) -> PfaffianSystem:
        if S not in self._cs:
            self._cs[S] = cartan_system(S, self.ledger)
        return self._cs[S]

    def rank(self, S: PfaffianSystem) -> int:
        if S not in self._rk:
            self._rk[S] = rank(S, self.ledger)
        return self._rk[S]

    def cartan_rank(self, S: PfaffianSystem) -> int:
        return self.rank(self.cartan(S))


def coordinate_complement(
    S: PfaffianSystem,
    ledger: Ledger,
    within_cartan: bool = False,
) -> list[str]:
    """Greedy coordinate complement: coordinates u (in chart order) whose
    differentials extend the span of the generators and tau to the whole
    cotangent space (or to the Cartan system when ``within_cartan``)."""
    tau = S.require_indep()
    cache = _CartanCache(ledger)
    if within_cartan:
        C = cache.cartan(S)
        target = cache.rank(C)
        c_rows = C.rows()
    else:
        target = S.dim
        c_rows = None
    rows = S.rows() + [tau.coeff_row()]
    current = solve.rank(rows, ledger, "complement")
    out: list[str] = []
    for c in S.chart.coords:
        if current >= target:
            break
        row = d_coord(S.chart, c).coeff_row()
        if c_rows is not None:
            if solve.span_contains3(c_rows, row, ledger, "complement") is not Ternary.YES:
                continue
        r2 = solve.rank(rows + [row], ledger, "complement")
        if r2 > current:
            rows.append(row)
            out.append(c)
            current = r2
    if current < target:
        raise ComplementNotFound(
            f"could not complete {S.name or 'system'} plus tau to a coframe by coordinates"
        )
    return out


# ---------------------------------------------------------------------------
# the three constructive prolongations


@dataclass(frozen=True)
class ProlongationStep:
    kind: str  # total | partial | by_differentiation
    source: PfaffianSystem
    result: PfaffianSystem
    new_coords: tuple[str, ...]
    new_forms: tuple[DifferentialForm, ...]
    projection: SmoothMap

    def rank_identity_holds(self, ledger: Optional[Ledger] = None) -> bool:
        ledger = ledger or Ledger()
        return rank(self.result, ledger) - rank(self.source, ledger) == (
            self.result.dim - self.source.dim
        )


def _fresh_fibers(chart: Chart, stems: Sequence[str], names: Optional[Sequence[str]]):
    if names is not None:
        if len(names) != len(stems):
            raise ComplementNotFound("wrong number of fiber names supplied")
        for n in names:
            if chart.has(n):
                raise ComplementNotFound(f"fiber name {n} already used")
        return list(names)
    out = []
    cur = chart
    for s in stems:
        n = cur.fresh_name(s + "_")
        out.append(n)
        cur = cur.extend([n])
    return out


def _adjoin(
    S: PfaffianSystem,
    mus: Sequence[DifferentialForm],
    fiber_names: Sequence[str],
    kind: str,
    chart_name: Optional[str] = None,
) -> ProlongationStep:
    tau = S.require_indep()
    new_chart = S.chart.extend(fiber_names, name=chart_name or f"{S.chart.name}_pr")
    gens = [transport(g, new_chart) for g in S.generators]
    tau_n = transport(tau, new_chart)
    new_forms = []
    for mu, lam in zip(mus, fiber_names):
        f = transport(mu, new_chart) - sp.Symbol(lam) * tau_n
        new_forms.append(f)
    result = PfaffianSystem(
        new_chart, tuple(gens) + tuple(new_forms), tau_n, name=f"{S.name}+"
    )
    proj = SmoothMap.coordinate_projection(new_chart, S.chart)
    return ProlongationStep(
        kind=kind,
        source=S,
        result=result,
        new_coords=tuple(fiber_names),
        new_forms=tuple(new_forms),
        projection=proj,
    )


def total_prolongation(
    S: PfaffianSystem,
    ledger: Optional[Ledger] = None,
    fiber_names: Optional[Sequence[str]] = None,
    chart_name: Optional[str] = None,
) -> ProlongationStep:
    """Adjoin du^a - lambda^a tau for a computed coordinate complement u^a."""
    ledger = ledger or Ledger()
    controls = coordinate_complement(S, ledger)
    fibers = _fresh_fibers(S.chart, controls, fiber_names)
    mus = [d_coord(S.chart, c) for c in controls]
    step = _adjoin(S, mus, fibers, "total", chart_name)
    return step


def partial_prolongation(
    S: PfaffianSystem,
    mus: Sequence[DifferentialForm],
    ledger: Optional[Ledger] = None,
    fiber_names: Optional[Sequence[str]] = None,
) -> ProlongationStep:
    """Adjoin mu^a - lambda^a tau for user-chosen 1-forms mu^a.

    The mu must be independent modulo the system and tau; the result is
    verified to still be a system (a partial prolongation of a system is a
    system, so failure flags a bad input).
    """
    ledger = ledger or Ledger()
    tau = S.require_indep()
    n = rank(S, ledger)
    base_rows = S.rows() + [tau.coeff_row()]
    full = solve.rank(base_rows + [m.coeff_row() for m in mus], ledger, "partial")
    if full != n + 1 + len(mus):
        raise NotIndependent("adjoined 1-forms are dependent modulo the system and tau")
    fibers = _fresh_fibers(S.chart, ["lam"] * len(mus), fiber_names)
    step = _adjoin(S, mus, fibers, "partial")
    rep = is_system(step.result, ledger)
    if rep.no_cauchy is Ternary.NO:
        raise NotASystem(
            "partial prolongation has Cauchy characteristics "
            f"(Cartan rank {rep.cartan_rank} < dim {rep.dim}); the input was not a system"
        )
    return step


def prolong_by_diff(
    S: PfaffianSystem,
    controls: Sequence[str],
    ledger: Optional[Ledger] = None,
    fiber_names: Optional[Sequence[str]] = None,
) -> ProlongationStep:
    """Adjoin du^a - lambda^a tau for selected control coordinates of a CTS."""
    ledger = ledger or Ledger()
    if is_cts_check(S, ledger) is not Ternary.YES:
        raise NotCTS("prolongation by differentiation requires a control-type system")
    if not controls:
        return ProlongationStep(
            kind="by_differentiation",
            source=S,
            result=S,
            new_coords=(),
            new_forms=(),
            projection=SmoothMap.identity(S.chart),
        )
    tau = S.require_indep()
    rows = S.rows() + [tau.coeff_row()]
    n0 = solve.rank(rows, ledger, "by_diff")
    mus = [d_coord(S.chart, c) for c in controls]
    full = solve.rank(rows + [m.coeff_row() for m in mus], ledger, "by_diff")
    if full != n0 + len(controls):
        raise NotIndependent("selected coordinates are not controls of the system")
    fibers = _fresh_fibers(S.chart, list(controls), fiber_names)
    step = _adjoin(S, mus, fibers, "by_differentiation")
    return step


# ---------------------------------------------------------------------------
# Cartan prolongation: published necessary conditions


def base_controls(base: PfaffianSystem, ledger: Ledger) -> list[str]:
    """Coordinates playing the role of controls on the base's own manifold."""
    return coordinate_complement(base, ledger, within_cartan=True)


def hatJ_rank(
    top: PfaffianSystem,
    base: PfaffianSystem,
    ledger: Optional[Ledger] = None,
    projection: Optional[SmoothMap] = None,
) -> tuple[int, list[DifferentialForm], list[str]]:
    """Rank and basis of the subbundle of top sections expressible as
    f_1 du^1 + ... + f_m du^m + g tau in the base controls."""
    ledger = ledger or Ledger()
    proj = resolve_projection(top, base, projection)
    controls = base_controls(base, ledger)
    tau_top = top.require_indep()
    du_rows = []
    for c in controls:
        f = d_coord(base.chart, c)
        if proj is not None:
            f = pullback(proj, f)
        du_rows.append(f.coeff_row())
    hat_rows = solve.span_intersect(
        top.rows(), du_rows + [tau_top.coeff_row()], ledger, "hatJ"
    )
    basis = [form_from_rows(top.chart, solve.clear_denominators(r)) for r in hat_rows]
    return len(basis), basis, controls


@dataclass(frozen=True)
class ProlongationCheck:
    """Outcome of the published necessary conditions for a claimed Cartan
    prolongation: containment, independence-condition match, the rank
    identity, and the bounds on rank(hatJ).  Lifting uniqueness itself is not
    decided."""

    verdict: str  # passes | fails | unknown
    contains: Ternary
    indep_matches: Ternary
    rank_identity: bool
    rank_top: int
    rank_base: int
    dim_top: int
    dim_base: int
    hatj_rank: int
    base_m: int
    hatj_ok: bool
    reasons: tuple[str, ...]

    @property
    def passes(self) -> bool:
        return self.verdict == "passes"


def check_cartan_prolongation(
    top: PfaffianSystem,
    base: PfaffianSystem,
    ledger: Optional[Ledger] = None,
    projection: Optional[SmoothMap] = None,
) -> ProlongationCheck:
    ledger = ledger or Ledger()
    cache = _CartanCache(ledger)
    proj = resolve_projection(top, base, projection)
    tau_top = top.require_indep()
    tau_base = base.require_indep()
    reasons = []

    if proj is not None and proj.kind == "unchecked":
        if not proj.verify_submersion(ledger):
            reasons.append("projection is not a submersion")

    pulled = pull_system(base, proj, tau_top)
    # i. containment pi* I subset J
    contains = all_yes(
        solve.span_contains3(top.rows(), g.coeff_row(), ledger, "containment")
        for g in pulled.generators
    )
    if contains is Ternary.NO:
        reasons.append("pullback of the base system is not contained in the top system")

    # ii. independence conditions correspond
    tb = pullback(proj, tau_base) if proj is not None else tau_base
    indep = all_yes(ledger.is_zero(e) for e in (tb - tau_top).coeff_row())
    if indep is Ternary.NO:
        reasons.append("independence conditions do not correspond")

    # iii. rank identity (dimensions via the Cartan systems)
    r_top, r_base = cache.rank(top), cache.rank(base)
    d_top, d_base = cache.cartan_rank(top), cache.cartan_rank(base)
    identity = (r_top - r_base) == (d_top - d_base)
    if not identity:
        reasons.append(
            f"rank identity fails: rank(J) - rank(I) = {r_top - r_base} but "
            f"dim N - dim M = {d_top} - {d_base} = {d_top - d_base}"
        )

    # iv. rank(hatJ) not in {0, m+1}
    q, _, _ = hatJ_rank(top, base, ledger, proj)
    m = d_base - r_base - 1
    hatj_ok = 1 <= q <= m
    if not hatj_ok:
        reasons.append(f"rank(hatJ) = {q} outside the admissible range 1..{m}")

    if contains is Ternary.NO or indep is Ternary.NO or not identity or not hatj_ok:
        verdict = "fails"
    elif contains is Ternary.UNKNOWN or indep is Ternary.UNKNOWN:
        verdict = "unknown"
    else:
        verdict = "passes"
    return ProlongationCheck(
        verdict=verdict,
        contains=contains,
        indep_matches=indep,
        rank_identity=identity,
        rank_top=r_top,
        rank_base=r_base,
        dim_top=d_top,
        dim_base=d_base,
        hatj_rank=q,
        base_m=m,
        hatj_ok=hatj_ok,
        reasons=tuple(reasons),
    )


# ---------------------------------------------------------------------------
# relative extensions


@dataclass(frozen=True)
class ExtensionStep:
    index: int  # step I_k -> I_{k+1}
    jump: int
    check: ProlongationCheck
    total_shaped: bool
    cts: Ternary


@dataclass(frozen=True)
class RelativeExtensionChain:
    """The canonical filtration I_0 = pi* I, I_{k+1} = C(I_k) ∩ J."""

    base: PfaffianSystem
    top: PfaffianSystem
    systems: tuple[PfaffianSystem, ...]
    ranks: tuple[int, ...]
    cartan_ranks: tuple[int, ...]
    steps: tuple[ExtensionStep, ...]
    extension_length: int
    reaches_top: bool

    @property
    def jumps(self) -> tuple[int, ...]:
        return tuple(s.jump for s in self.steps)


def relative_extensions(
    top: PfaffianSystem,
    base: PfaffianSystem,
    ledger: Optional[Ledger] = None,
    projection: Optional[SmoothMap] = None,
) -> RelativeExtensionChain:
    ledger = ledger or Ledger()
    cache = _CartanCache(ledger)
    proj = resolve_projection(top, base, projection)
    tau = top.require_indep()
    I0 = pull_system(base, proj, tau)
    I0 = PfaffianSystem(top.chart, I0.generators, tau, name=f"{base.name}_0")
    systems = [I0]
    ranks = [cache.rank(I0)]
    cartan_ranks = [cache.cartan_rank(I0)]
    top_rows = top.rows()
    while True:
        cur = systems[-1]
        C = cache.cartan(cur)
        inter = solve.span_intersect(C.rows(), top_rows, ledger, "relext")
        # present the next level as the previous basis plus genuinely new
        # directions (the intersection always contains the previous level)
        gens = list(cur.generators)
        acc = [g.coeff_row() for g in gens]
        for r in inter:
            if solve.rank(acc + [r], ledger, "relext basis") > len(acc):
                row = solve.normalize_row(
                    solve.reduce_row_against(acc, r, ledger, "relext basis")
                )
                gens.append(form_from_rows(top.chart, row))
                acc.append(row)
        nxt = PfaffianSystem(
            top.chart, tuple(gens), tau, name=f"{base.name}_{len(systems)}"
        )
        r = cache.rank(nxt)
        if r < ranks[-1]:
            raise RankDeficient("relative extension decreased in rank")
        if r == ranks[-1]:
            break
        systems.append(nxt)
        ranks.append(r)
        cartan_ranks.append(cache.cartan_rank(nxt))
        if len(systems) > top.dim + 2:
            raise RankDeficient("relative extensions failed to stabilize")
    K = len(systems) - 1
    reaches = solve.span_equal(systems[-1].rows(), top_rows, ledger, "relext top")
    steps = []
    for k in range(K):
        lo, hi = systems[k], systems[k + 1]
        chk = check_cartan_prolongation(hi, lo, ledger)
        jump = ranks[k + 1] - ranks[k]
        m_k = cartan_ranks[k] - ranks[k] - 1
        steps.append(
            ExtensionStep(
                index=k,
                jump=jump,
                check=chk,
                total_shaped=bool(jump == m_k and chk.passes),
                cts=is_cts_check(hi, ledger),
            )
        )
    return RelativeExtensionChain(
        base=base,
        top=top,
        systems=tuple(systems),
        ranks=tuple(ranks),
        cartan_ranks=tuple(cartan_ranks),
        steps=tuple(steps),
        extension_length=K,
        reaches_top=reaches,
    )


def is_simple(chain: RelativeExtensionChain) -> bool:
    """Simple means the first extension already equals the top system."""
    return chain.reaches_top and chain.extension_length <= 1


# ---------------------------------------------------------------------------
# C-regularity


@dataclass(frozen=True)
class SubsystemReport:
    """Systemhood of an extension I_k viewed on the manifold cut out by its
    Cauchy characteristics.  On that quotient the absence of Cauchy
    characteristics is automatic; what remains checkable is that sigma
    descends, stays independent, and (for control-type systems) rules out
    integral surfaces."""

    sigma_in_cartan: Ternary
    sigma_independent: Ternary
    cts: Ternary

    @property
    def passes(self) -> bool:
        return (
            self.sigma_in_cartan is Ternary.YES
            and self.sigma_independent is Ternary.YES
        )


@dataclass(frozen=True)
class CRegularReport:
    verdict: str  # passes | fails | unknown
    reaches_top: bool
    subsystems: tuple[SubsystemReport, ...]
    step_checks: tuple[ProlongationCheck, ...]
    reasons: tuple[str, ...]

    @property
    def passes(self) -> bool:
        return self.verdict == "passes"


def _subsystem_report(
    S: PfaffianSystem, cache: _CartanCache, ledger: Ledger
) -> SubsystemReport:
    tau = S.require_indep()
    C = cache.cartan(S)
    in_c = solve.span_contains3(C.rows(), tau.coeff_row(), ledger, "sigma in C")
    in_i = solve.span_contains3(S.rows(), tau.coeff_row(), ledger, "sigma indep")
    indep = (
        Ternary.YES
        if in_i is Ternary.NO
        else (Ternary.NO if in_i is Ternary.YES else Ternary.UNKNOWN)
    )
    return SubsystemReport(
        sigma_in_cartan=in_c, sigma_independent=indep, cts=is_cts_check(S, ledger)
    )


def is_c_regular(
    chain: RelativeExtensionChain, ledger: Optional[Ledger] = None
) -> CRegularReport:
    """Conditions for C-regularity of the prolongation the chain came from:
    the canonical extensions exhaust the top system, sigma is a section of
    every C(I_k), every (M_k, I_k; sigma_k) is a system, and every inclusion
    passes the Cartan-prolongation necessary checks."""
    ledger = ledger or Ledger()
    cache = _CartanCache(ledger)
    reasons = []
    if not chain.reaches_top:
        reasons.append("relative extensions stabilize before reaching the top system")
    subs = tuple(_subsystem_report(S, cache, ledger) for S in chain.systems)
    for k, rep in enumerate(subs):
        if rep.sigma_in_cartan is Ternary.NO:
            reasons.append(f"sigma is not a section of C(I_{k})")
        if rep.sigma_independent is Ternary.NO:
            reasons.append(f"sigma lies in I_{k}")
    checks = tuple(s.check for s in chain.steps)
    for k, chk in enumerate(checks):
        if chk.verdict == "fails":
            detail = "; ".join(chk.reasons)
            reasons.append(f"inclusion I_{k} in I_{k+1} is not a Cartan prolongation: {detail}")
    hard_fail = bool(reasons)
    unknown = any(
        rep.sigma_in_cartan is Ternary.UNKNOWN or rep.sigma_independent is Ternary.UNKNOWN
        for rep in subs
    ) or any(chk.verdict == "unknown" for chk in checks)
    verdict = "fails" if hard_fail else ("unknown" if unknown else "passes")
    return CRegularReport(
        verdict=verdict,
        reaches_top=chain.reaches_top,
        subsystems=subs,
        step_checks=checks,
        reasons=tuple(reasons),
    )


@dataclass(frozen=True)
class FiltrationStepReport:
    index: int
    jump: int
    check: ProlongationCheck
    simple: Ternary
    cts: Ternary

    @property
    def passes(self) -> bool:
        return self.check.passes and self.simple is Ternary.YES


@dataclass(frozen=True)
class FiltrationReport:
    steps: tuple[FiltrationStepReport, ...]
    starts_at_base: Ternary
    ends_at_top: Ternary

    @property
    def passes(self) -> bool:
        return (
            all(s.passes for s in self.steps)
            and self.starts_at_base is Ternary.YES
            and self.ends_at_top is Ternary.YES
        )


def check_filtration(
    base: PfaffianSystem,
    filtration: Sequence[PfaffianSystem],
    top: PfaffianSystem,
    ledger: Optional[Ledger] = None,
    projection: Optional[SmoothMap] = None,
) -> FiltrationReport:
    """Stepwise simple-Cartan-prolongation checks for a user-supplied
    filtration base = F_0 < F_1 < ... < F_L = top (all on the top chart)."""
    ledger = ledger or Ledger()
    cache = _CartanCache(ledger)
    proj = resolve_projection(top, base, projection)
    tau = top.require_indep()
    I0 = pull_system(base, proj, tau)
    starts = solve.span_equal3(filtration[0].rows(), I0.rows(), ledger, "filtration start")
    ends = solve.span_equal3(filtration[-1].rows(), top.rows(), ledger, "filtration end")
    steps = []
    for k in range(len(filtration) - 1):
        lo = filtration[k].with_indep(tau)
        hi = filtration[k + 1].with_indep(tau)
        chk = check_cartan_prolongation(hi, lo, ledger)
        C = cache.cartan(lo)
        inter = solve.span_intersect(C.rows(), hi.rows(), ledger, "filtration simple")
        simple = solve.span_equal3(inter, hi.rows(), ledger, "filtration simple")
        steps.append(
            FiltrationStepReport(
                index=k,
                jump=cache.rank(hi) - cache.rank(lo),
                check=chk,
                simple=simple,
                cts=is_cts_check(hi, ledger),
            )
        )
    return FiltrationReport(steps=tuple(steps), starts_at_base=starts, ends_at_top=ends)


# ---------------------------------------------------------------------------
# corank-3 chain shape


@dataclass(frozen=True)
class ShapeReport:
    classifications: tuple[str, ...]  # total_shaped | rank1 | violation
    conforming: bool
    by_diff_flags: tuple[Ternary, ...]
    reasons: tuple[str, ...]


def verify_corank3_shape(
    chain: RelativeExtensionChain, ledger: Optional[Ledger] = None
) -> ShapeReport:
    """For a corank-3 base: the chain must be total-prolongation-shaped steps
    followed by rank-1 steps, every step passing the necessary checks."""
    ledger = ledger or Ledger()
    cache = _CartanCache(ledger)
    base_m = cache.cartan_rank(chain.systems[0]) - cache.rank(chain.systems[0])
    if base_m != 3:
        raise WrongCorank(f"base has corank {base_m}; the shape test needs corank 3")
    classes = []
    reasons = []
    for s in chain.steps:
        if not s.check.passes:
            classes.append("violation")
            reasons.append(
                f"step {s.index}: {'; '.join(s.check.reasons) or 'necessary checks fail'}"
            )
        elif s.jump == 1:
            classes.append("rank1")
        elif s.jump == 2:
            classes.append("total_shaped")
        else:
            classes.append("violation")
            reasons.append(f"step {s.index}: rank jump {s.jump} exceeds 2")
    seen_rank1 = False
    order_ok = True
    for c in classes:
        if c == "rank1":
            seen_rank1 = True
        if c == "total_shaped" and seen_rank1:
            order_ok = False
    if not order_ok:
        reasons.append("a total-shaped step follows a rank-1 step")
    conforming = order_ok and all(c != "violation" for c in classes)
    return ShapeReport(
        classifications=tuple(classes),
        conforming=conforming,
        by_diff_flags=tuple(s.cts for s in chain.steps),
        reasons=tuple(reasons),
    )


# ---------------------------------------------------------------------------
# the extension construction (factor through prolongations by differentiation)


@dataclass(frozen=True)
class SluisStage:
    index: int
    case_ii_controls: tuple[str, ...]
    case_ii_forms: tuple[DifferentialForm, ...]
    case_ii_fibers: tuple[str, ...]
    top_after: PfaffianSystem
    base_after: PfaffianSystem
    cover: SmoothMap
    cover_rank: int
    hatj_rank: int


@dataclass(frozen=True)
class SluisResult:
    stages: tuple[SluisStage, ...]
    final_top: PfaffianSystem
    final_base: PfaffianSystem
    isomorphism: Optional[SmoothMap]
    verified: Ternary

    @property
    def K(self) -> int:
        return len(self.stages)


def sluis_extension(
    top: PfaffianSystem,
    base: PfaffianSystem,
    ledger: Optional[Ledger] = None,
    projection: Optional[SmoothMap] = None,
    fiber_names: Optional[Sequence[str]] = None,
    base_fiber_names: Optional[Sequence[str]] = None,
    max_stages: Optional[int] = None,
) -> SluisResult:
    """Extend a Cartan prolongation to successive prolongations by
    differentiation terminating in an isomorphism onto a total prolongation
    of the base.

    Each stage differentiates the base controls missing from hatJ (when
    rank(hatJ) < m) and then lifts to the next total prolongation of the base
    through the solved coefficient functions f^a.  ``fiber_names`` feeds the
    fibers adjoined on the top side; ``base_fiber_names`` feeds the fibers of
    the successive total prolongations of the base.
    """
    ledger = ledger or Ledger()
    proj = resolve_projection(top, base, projection)
    if proj is None:
        raise ChartMismatch("the extension construction needs distinct top and base charts")
    tau_top = top.require_indep()
    fiber_pool = list(fiber_names) if fiber_names is not None else None
    base_pool = list(base_fiber_names) if base_fiber_names is not None else None

    cur_top = top
    cur_base = base
    cover = proj
    r = cover.source.dim - cover.target.dim
    if max_stages is None:
        max_stages = max(r, 1) + 1
    stages = []
    for stage_idx in range(1, max_stages + 1):
        if cover.source.dim == cover.target.dim:
            break
        controls = base_controls(cur_base, ledger)
        m = len(controls)
        pulled_du = {
            c: pullback(cover, d_coord(cur_base.chart, c)) for c in controls
        }
        tau_row = cur_top.require_indep().coeff_row()
        du_rows = [pulled_du[c].coeff_row() for c in controls]
        hat_rows = solve.span_intersect(cur_top.rows(), du_rows + [tau_row], ledger, "hatJ")
        q = len(hat_rows)
        if q == 0:
            raise NotASystem(
                "rank(hatJ) = 0: the top system is not a Cartan prolongation of the base"
            )
        case_controls: tuple[str, ...] = ()
        case_forms: tuple[DifferentialForm, ...] = ()
        case_fibers: tuple[str, ...] = ()
        if q < m:
            # Case II: differentiate the base controls outside the pivot set
            f_rows = []
            for hrow in hat_rows:
                coeffs = solve.solve_in_span(
                    du_rows + [tau_row], hrow, ledger, "hatJ coefficients"
                )
                if coeffs is None:
                    raise NeedsAssumption(
                        sp.Integer(0), "hatJ basis failed to resolve over the controls"
                    )
                f_rows.append(coeffs[:m])
            _, pivots = solve.rref(f_rows, ledger, "hatJ control matrix")
            missing = [controls[j] for j in range(m) if j not in pivots]
            mus = [pulled_du[c] for c in missing]
            stems = [c for c in missing]
            if fiber_pool is not None:
                take = fiber_pool[: len(missing)]
                del fiber_pool[: len(missing)]
                fibers = _fresh_fibers(cur_top.chart, stems, take)
            else:
                fibers = _fresh_fibers(cur_top.chart, stems, None)
            new_chart = cur_top.chart.extend(fibers, name=f"{cur_top.chart.name}+")
            tau_n = transport(cur_top.require_indep(), new_chart)
            gens = [transport(g, new_chart) for g in cur_top.generators]
            adjoined = [
                transport(mu, new_chart) - sp.Symbol(lam) * tau_n
                for mu, lam in zip(mus, fibers)
            ]
            cur_top = PfaffianSystem(
                new_chart, tuple(gens) + tuple(adjoined), tau_n, name=f"{cur_top.name}+"
            )
            cover = SmoothMap(
                new_chart,
                cover.target,
                tuple((y, e) for y, e in cover.components),
                kind="submersion",
                name=cover.name,
            )
            case_controls = tuple(missing)
            case_forms = tuple(adjoined)
            case_fibers = tuple(fibers)
            pulled_du = {
                c: pullback(cover, d_coord(cur_base.chart, c)) for c in controls
            }
            tau_row = cur_top.require_indep().coeff_row()

        # Case I: solve du^a = (combination of top generators) + f^a tau
        f_exprs = {}
        for c in controls:
            coeffs = solve.solve_in_span(
                cur_top.rows() + [tau_row],
                pulled_du[c].coeff_row(),
                ledger,
                "case I lift",
            )
            if coeffs is None:
                raise NeedsAssumption(
                    sp.Integer(0),
                    f"no section du({c}) - f d(tau) exists after differentiation",
                )
            f_exprs[c] = canon(coeffs[-1])
        if base_pool is not None:
            take = base_pool[:m]
            del base_pool[:m]
            base_step = total_prolongation(cur_base, ledger, fiber_names=take)
        else:
            base_step = total_prolongation(cur_base, ledger)
        next_base = base_step.result
        comps = list(cover.components)
        for c, lam in zip(controls, base_step.new_coords):
            comps.append((lam, f_exprs[c]))
        new_cover = SmoothMap(
            cur_top.chart,
            next_base.chart,
            tuple(comps),
            kind="unchecked",
            name=f"{cover.name}^{stage_idx}",
        )
        if not new_cover.verify_submersion(ledger):
            raise NeedsAssumption(
                sp.Integer(0),
                "the solved coefficient functions are dependent; restrict the domain",
            )
        # the lifted generators must pull back into the top system
        for g in next_base.generators:
            if (
                solve.span_contains3(
                    cur_top.rows(), pullback(new_cover, g).coeff_row(), ledger, "case I"
                )
                is Ternary.NO
            ):
                raise NotASystem("lift verification failed: pullback escapes the top system")
        cover = new_cover
        cur_base = next_base
        stages.append(
            SluisStage(
                index=stage_idx,
                case_ii_controls=case_controls,
                case_ii_forms=case_forms,
                case_ii_fibers=case_fibers,
                top_after=cur_top,
                base_after=cur_base,
                cover=cover,
                cover_rank=cover.source.dim - cover.target.dim,
                hatj_rank=q,
            )
        )
    iso = None
    verified = Ternary.UNKNOWN
    if cover.source.dim == cover.target.dim:
        from .pfaffian import verify_tau_equivalence

        iso = SmoothMap(
            cover.source, cover.target, cover.components, kind="diffeomorphism",
            name=cover.name,
        )
        rep = verify_tau_equivalence(iso, cur_top, cur_base, ledger)
        verified = rep.verdict
    return SluisResult(
        stages=tuple(stages),
        final_top=cur_top,
        final_base=cur_base,
        isomorphism=iso,
        verified=verified,
    )
