"""Control-theoretic layer.

CTS recognition, strong linearity (the derived-flag Frobenius criterion for
feedback equivalence to decoupled integrator chains), Brunovsky indices,
bounded search for dynamic linearization of systems with two controls,
structure-equation coframings, and class upper bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import sympy as sp

from . import solve
from .errors import (
    ChartMismatch,
    DegreeError,
    NotCTS,
    NotStronglyLinear,
    RankDeficient,
    StructureEquationFailure,
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
    wedge,
)
from .pfaffian import (
    PfaffianSystem,
    DerivedFlag,
    cartan_system,
    derived,
    derived_flag,
    is_cts_check,
    is_frobenius,
    rank,
)
from .prolong import (
    RelativeExtensionChain,
    check_cartan_prolongation,
    is_c_regular,
    prolong_by_diff,
    relative_extensions,
    transport,
)

is_cts = is_cts_check


def is_strongly_linear(S: PfaffianSystem, ledger: Optional[Ledger] = None) -> Ternary:
    """The infinite derived system vanishes and every [[I^(k), tau]] is
    Frobenius."""
    ledger = ledger or Ledger()
    tau = S.require_indep()
    flag = derived_flag(S, ledger)
    if flag.ranks[flag.stabilization_index] != 0:
        return Ternary.NO
    verdicts = []
    for sys_k in flag.systems[: flag.stabilization_index + 1]:
        with_tau = PfaffianSystem(S.chart, sys_k.generators + (tau,), None)
        verdicts.append(is_frobenius(with_tau, ledger))
    return all_yes(verdicts)


def brunovsky_indices(
    S: PfaffianSystem, ledger: Optional[Ledger] = None
) -> tuple[int, ...]:
    """Chain indices (r_1 >= ... >= r_p) read off the derived-flag rank drops.

    The drops d_k count chains with more than k generators, so the indices
    are the conjugate partition minus one.  Requires strong linearity.
    """
    ledger = ledger or Ledger()
    if is_strongly_linear(S, ledger) is not Ternary.YES:
        raise NotStronglyLinear("Brunovsky indices need a strongly linear system")
    flag = derived_flag(S, ledger)
    drops = flag.drops
    for i in range(len(drops) - 1):
        if drops[i + 1] > drops[i]:
            raise NotStronglyLinear("derived-flag drops are not weakly decreasing")
    if not drops:
        return ()
    p = drops[0]
    lengths = [sum(1 for d in drops if d >= i) for i in range(1, p + 1)]
    indices = tuple(L - 1 for L in lengths)
    n = rank(S, ledger)
    assert sum(r + 1 for r in indices) == n
    return indices


# ---------------------------------------------------------------------------
# search for dynamic linearization (two controls)


@dataclass(frozen=True)
class LinearizationReport:
    verdict: str  # already_strongly_linear | linearizable_with_chain | unknown_up_to_depth | not_cts
    witness: Optional[PfaffianSystem]
    chain: Optional[RelativeExtensionChain]
    class_upper_bound: Optional[int]
    depth: int
    brunovsky: tuple[int, ...]
    moves: tuple[str, ...]
    notes: tuple[str, ...]


def trim_system(S: PfaffianSystem) -> PfaffianSystem:
    """Drop chart coordinates that no generator (nor tau) uses.

    Keeps presentation of search witnesses on their natural chart."""
    used: set[int] = set()
    forms = list(S.generators) + ([S.indep] if S.indep is not None else [])
    for g in forms:
        for idx, c in g.terms:
            used.update(idx)
            for s in c.free_symbols:
                if S.chart.has(str(s)):
                    used.add(S.chart.index(str(s)))
    if S.chart.time is not None:
        used.add(S.chart.index(S.chart.time))
    keep = [i for i in range(S.chart.dim) if i in used]
    if len(keep) == S.chart.dim:
        return S
    new_chart = Chart(
        name=S.chart.name + "_t",
        coords=tuple(S.chart.coords[i] for i in keep),
        time=S.chart.time,
    )
    remap = {old: new for new, old in enumerate(keep)}

    def remap_form(g):
        return DifferentialForm(
            new_chart,
            g.degree,
            tuple((tuple(remap[i] for i in idx), c) for idx, c in g.terms),
        )

    return PfaffianSystem(
        new_chart,
        tuple(remap_form(g) for g in S.generators),
        remap_form(S.indep) if S.indep is not None else None,
        name=S.name,
    )


def _node_key(S: PfaffianSystem, ledger: Ledger) -> tuple:
    order = sorted(range(S.chart.dim), key=lambda i: S.chart.coords[i])
    rows = [[g.coeff_row()[i] for i in order] for g in S.generators]
    red, pivots = solve.rref(rows, ledger.child(), "dedup")
    return (
        tuple(S.chart.coords[i] for i in order),
        tuple(tuple(sp.srepr(e) for e in red[i]) for i in range(len(pivots))),
    )


def _control_candidates(S: PfaffianSystem, ledger: Ledger) -> list[str]:
    tau = S.require_indep()
    rows = S.rows() + [tau.coeff_row()]
    out = []
    for c in S.chart.coords:
        row = d_coord(S.chart, c).coeff_row()
        if solve.span_contains3(rows, row, ledger, "candidates") is Ternary.NO:
            out.append(c)
    return out


def _validate_witness(
    S: PfaffianSystem,
    node: PfaffianSystem,
    ledger: Ledger,
    notes: list[str],
):
    """Check conditions i-iii for a strongly linear prolongation witness,
    applying the first-derived reduction whenever the first extension step
    jumps by two (which shortens the chain by one)."""
    top = node
    guard = 0
    while True:
        guard += 1
        if guard > top.dim + 2:
            return None
        chain = relative_extensions(top, S, ledger)
        creg = is_c_regular(chain, ledger)
        cts_ok = all_yes(s.cts for s in chain.steps)
        jumps = chain.jumps
        if creg.passes and cts_ok is Ternary.YES and all(j == 1 for j in jumps):
            return top, chain
        if creg.verdict == "fails":
            notes.append("witness chain failed C-regularity: " + "; ".join(creg.reasons))
            return None
        if any(j > 1 for j in jumps):
            reduced = derived(top, ledger)
            notes.append(
                f"rank-{max(jumps)} step found; replacing the witness by its "
                f"first derived system (rank {rank(reduced, ledger)})"
            )
            if rank(reduced, ledger) <= rank(S, ledger):
                return None
            top = reduced.with_indep(top.require_indep())
            continue
        return None


def dynlin_search(
    S: PfaffianSystem,
    max_depth: int,
    ledger: Optional[Ledger] = None,
    hints: Sequence[Scalar] = (),
) -> LinearizationReport:
    """Breadth-first search over prolongations by differentiation (plus
    user-supplied exact hint targets) for a strongly linear prolongation of a
    two-control system; a found witness is validated independently via its
    relative extensions."""
    ledger = ledger or Ledger()
    n = rank(S, ledger)
    m = S.dim - n - 1
    if m != 2:
        raise WrongCorank(f"the search applies to systems with 2 controls; got m = {m}")
    if is_cts_check(S, ledger) is not Ternary.YES:
        raise NotCTS("dynamic linearization search requires a control-type system")
    notes: list[str] = []
    if is_strongly_linear(S, ledger) is Ternary.YES:
        return LinearizationReport(
            verdict="already_strongly_linear",
            witness=S,
            chain=None,
            class_upper_bound=0,
            depth=0,
            brunovsky=brunovsky_indices(S, ledger),
            moves=(),
            notes=tuple(notes),
        )
    seen = {_node_key(S, ledger)}
    frontier: list[tuple[PfaffianSystem, tuple[str, ...]]] = [(S, ())]
    saw_unknown = False
    for depth in range(1, max_depth + 1):
        new_frontier = []
        for node, moves in frontier:
            children = []
            for c in _control_candidates(node, ledger):
                try:
                    step = prolong_by_diff(node, [c], ledger)
                except (NotCTS, RankDeficient):
                    continue
                children.append((step.result, moves + (f"d/dt {c}",)))
            for h in hints:
                mu = _scalar_hint_form(node.chart, h)
                try:
                    child = _adjoin_hint(node, mu, ledger)
                except (RankDeficient, ChartMismatch, DegreeError):
                    continue
                if child is not None:
                    children.append((child, moves + (f"d/dt ({h})",)))
            for child, cmoves in children:
                key = _node_key(child, ledger)
                if key in seen:
                    continue
                seen.add(key)
                verdict = is_strongly_linear(child, ledger)
                if verdict is Ternary.UNKNOWN:
                    saw_unknown = True
                if verdict is Ternary.YES:
                    validated = _validate_witness(S, child, ledger, notes)
                    if validated is not None:
                        top, chain = validated
                        witness = trim_system(top)
                        return LinearizationReport(
                            verdict="linearizable_with_chain",
                            witness=witness,
                            chain=chain,
                            class_upper_bound=chain.extension_length,
                            depth=depth,
                            brunovsky=brunovsky_indices(witness, ledger),
                            moves=cmoves,
                            notes=tuple(notes),
                        )
                new_frontier.append((child, cmoves))
        frontier = new_frontier
    if saw_unknown:
        notes.append("some nodes had undecidable ranks; see the assumption ledger")
    return LinearizationReport(
        verdict="unknown_up_to_depth",
        witness=None,
        chain=None,
        class_upper_bound=None,
        depth=max_depth,
        brunovsky=(),
        moves=(),
        notes=tuple(notes),
    )


def _scalar_hint_form(chart: Chart, h: Scalar) -> DifferentialForm:
    e = sp.sympify(h)
    if not chart.owns_expr(e):
        raise ChartMismatch(f"hint {h} uses symbols outside chart {chart.name}")
    coeffs = {}
    for i, c in enumerate(chart.coords):
        dc = sp.diff(e, sp.Symbol(c))
        if dc != 0:
            coeffs[(i,)] = dc
    return DifferentialForm.from_dict(chart, 1, coeffs)


def _adjoin_hint(
    node: PfaffianSystem, mu: DifferentialForm, ledger: Ledger
) -> Optional[PfaffianSystem]:
    from .prolong import partial_prolongation

    tau = node.require_indep()
    rows = node.rows() + [tau.coeff_row()]
    r0 = solve.rank(rows, ledger, "hint")
    if solve.rank(rows + [mu.coeff_row()], ledger, "hint") != r0 + 1:
        return None
    step = partial_prolongation(node, [mu], ledger)
    if is_cts_check(step.result, ledger) is not Ternary.YES:
        return None
    return step.result


def validate_witness(
    S: PfaffianSystem,
    witness: PfaffianSystem,
    ledger: Optional[Ledger] = None,
) -> LinearizationReport:
    """Validate a user-supplied prolongation witness: strong linearity plus
    conditions on the relative-extension chain, with the first-derived
    reduction applied to rank-two steps."""
    ledger = ledger or Ledger()
    notes: list[str] = []
    if is_cts_check(S, ledger) is not Ternary.YES:
        return LinearizationReport(
            "not_cts", None, None, None, 0, (), (), ("base system is not a CTS",)
        )
    sl = is_strongly_linear(witness, ledger)
    if sl is not Ternary.YES:
        notes.append(f"supplied witness strong linearity: {sl.value}")
        return LinearizationReport(
            "unknown_up_to_depth", None, None, None, 0, (), (), tuple(notes)
        )
    validated = _validate_witness(S, witness, ledger, notes)
    if validated is None:
        return LinearizationReport(
            "unknown_up_to_depth", None, None, None, 0, (), (), tuple(notes)
        )
    final_top, chain = validated
    witness_t = trim_system(final_top)
    return LinearizationReport(
        verdict="linearizable_with_chain",
        witness=witness_t,
        chain=chain,
        class_upper_bound=chain.extension_length,
        depth=0,
        brunovsky=brunovsky_indices(witness_t, ledger),
        moves=("supplied witness",),
        notes=tuple(notes),
    )


def class_upper_bound(
    S: PfaffianSystem, max_depth: int, ledger: Optional[Ledger] = None
) -> tuple[Optional[int], LinearizationReport]:
    """Minimal extension length among found witnesses (an upper bound for the
    class), or None with an unknown-up-to-depth marker."""
    rep = dynlin_search(S, max_depth, ledger)
    return rep.class_upper_bound, rep


# ---------------------------------------------------------------------------
# adapted coframings and the structure equations


@dataclass(frozen=True)
class AdaptedCoframing:
    chart: Chart
    thetas: tuple[DifferentialForm, ...]
    etas: tuple[DifferentialForm, ...]
    omega1: DifferentialForm
    omega2: DifferentialForm
    sigma: DifferentialForm
    name: str = ""

    @property
    def n(self) -> int:
        return len(self.thetas)

    @property
    def K(self) -> int:
        return len(self.etas)

    def all_forms(self) -> tuple[DifferentialForm, ...]:
        return self.thetas + self.etas + (self.omega1, self.omega2, self.sigma)


@dataclass(frozen=True)
class CoframingReport:
    coframe_ok: bool
    spans_match: Ternary
    residuals: tuple[tuple[str, DifferentialForm], ...]
    class_at_most: Optional[int]

    @property
    def passes(self) -> bool:
        return (
            self.coframe_ok
            and self.spans_match is Ternary.YES
            and all(r.is_zero_form for _, r in self.residuals)
        )


def verify_coframing(
    cof: AdaptedCoframing,
    J: PfaffianSystem,
    ledger: Optional[Ledger] = None,
    raise_on_failure: bool = True,
) -> CoframingReport:
    """Check the coframe rank, that the theta/eta block spans the system, and
    every structure-equation congruence; success bounds the class of the
    theta-system by K."""
    ledger = ledger or Ledger()
    if J.chart != cof.chart:
        raise ChartMismatch("coframing and system live on different charts")
    n, K = cof.n, cof.K
    if n + K + 3 != cof.chart.dim:
        raise RankDeficient(
            f"coframing has {n + K + 3} forms on a {cof.chart.dim}-dimensional chart"
        )
    rows = [f.coeff_row() for f in cof.all_forms()]
    coframe_ok = solve.rank(rows, ledger, "coframe") == cof.chart.dim
    if not coframe_ok and raise_on_failure:
        raise RankDeficient("the supplied forms do not form a coframe")
    block = [f.coeff_row() for f in cof.thetas + cof.etas]
    spans = solve.span_equal3(block, J.rows(), ledger, "coframing span")

    thetas, etas = cof.thetas, cof.etas
    sig, w1, w2 = cof.sigma, cof.omega1, cof.omega2
    theta_ideal = list(thetas)
    residuals: list[tuple[str, DifferentialForm]] = []

    def congruence(label, form, rhs, ideal):
        res = mod_reduce(ext_d(form) - rhs, list(ideal), ledger)
        residuals.append((label, res))
        if not res.is_zero_form and raise_on_failure:
            raise StructureEquationFailure(label, res)

    congruence("d(theta_1)", thetas[0], wedge(sig, w1), theta_ideal)
    for a in range(1, n - 1):
        congruence(
            f"d(theta_{a + 1})", thetas[a], DifferentialForm.zero(cof.chart, 2), theta_ideal
        )
    last_rhs = wedge(sig, etas[0]) if K >= 1 else wedge(sig, w2)
    congruence(f"d(theta_{n})", thetas[n - 1], last_rhs, theta_ideal)
    for k in range(K - 1):
        congruence(
            f"d(eta_{k + 1})",
            etas[k],
            wedge(sig, etas[k + 1]),
            theta_ideal + list(etas[: k + 1]),
        )
    if K >= 1:
        congruence(
            f"d(eta_{K})", etas[K - 1], wedge(sig, w2), theta_ideal + list(etas)
        )
    ok = coframe_ok and spans is Ternary.YES and all(r.is_zero_form for _, r in residuals)
    return CoframingReport(
        coframe_ok=coframe_ok,
        spans_match=spans,
        residuals=tuple(residuals),
        class_at_most=K if ok else None,
    )


def _sigma_residue(
    form: DifferentialForm,
    ideal: Sequence[DifferentialForm],
    time_idx: int,
    ledger: Ledger,
) -> DifferentialForm:
    """Write d(form) = sigma wedge rho mod the ideal (sigma = d(time)) and
    return rho; raises if a residue term misses the time direction."""
    res = mod_reduce(ext_d(form), list(ideal), ledger, avoid=(time_idx,))
    coeffs = {}
    for (a, b), c in res.terms:
        if a == time_idx:
            coeffs[(b,)] = coeffs.get((b,), sp.Integer(0)) + c
        elif b == time_idx:
            coeffs[(a,)] = coeffs.get((a,), sp.Integer(0)) - c
        else:
            raise NotCTS(
                f"residue term {c} d{a}^d{b} without the time direction; not control-type"
            )
    return DifferentialForm.from_dict(form.chart, 1, coeffs)


def build_adapted_coframing(
    chain: RelativeExtensionChain, ledger: Optional[Ledger] = None
) -> AdaptedCoframing:
    """Construct an adapted coframing from a rank-one, all-CTS witness chain
    whose top is strongly linear, following the normalization in the
    structure-equation theorem (pivot to A^n = B^1 = 1, absorb the
    omega-components of the eta residues into theta_1, scale down the
    chain)."""
    ledger = ledger or Ledger()
    top = chain.systems[-1]
    chart = top.chart
    tau = top.require_indep()
    if chart.time is None:
        raise NotCTS("the coframing construction expects sigma = d(time)")
    t_idx = chart.index(chart.time)
    I0 = chain.systems[0]
    n = rank(I0, ledger)
    K = chain.extension_length
    if any(j != 1 for j in chain.jumps):
        raise WrongCorank("coframing construction needs rank-one extension steps")

    # eta_k: a generator of I_k independent of I_{k-1}
    etas = []
    for k in range(1, K + 1):
        prev = chain.systems[k - 1]
        cur = chain.systems[k]
        pick = None
        for g in cur.generators:
            if (
                solve.span_contains3(prev.rows(), g.coeff_row(), ledger, "eta pick")
                is Ternary.NO
            ):
                pick = g
                break
        if pick is None:
            raise RankDeficient("no new generator found along the chain")
        etas.append(pick)

    # theta basis adapted to the first derived system
    I1 = derived(I0, ledger)
    mid = list(I1.generators)
    if len(mid) != n - 2:
        raise WrongCorank(
            f"first derived system has rank {len(mid)}; need n - 2 = {n - 2}"
        )
    ends = []
    rows_mid = [g.coeff_row() for g in mid]
    for g in I0.generators:
        if (
            solve.span_contains3(
                rows_mid + [h.coeff_row() for h in ends], g.coeff_row(), ledger, "theta ends"
            )
            is Ternary.NO
        ):
            ends.append(g)
        if len(ends) == 2:
            break
    if len(ends) != 2:
        raise RankDeficient("could not split the theta basis")
    phi, psi = ends

    ideal0 = list(I0.generators)
    rho_phi = _sigma_residue(phi, ideal0, t_idx, ledger)
    rho_psi = _sigma_residue(psi, ideal0, t_idx, ledger)
    # reduce residues modulo [[I0, sigma]] to compare against eta_1
    mod_gens = ideal0 + [tau]
    rp = mod_reduce(rho_phi, mod_gens, ledger)
    rq = mod_reduce(rho_psi, mod_gens, ledger)
    e1r = mod_reduce(etas[0] if K >= 1 else DifferentialForm.zero(chart, 1), mod_gens, ledger)
    if K >= 1:
        coeffs = solve.solve_in_span(
            [rp.coeff_row(), rq.coeff_row()], e1r.coeff_row(), ledger, "theta_n"
        )
        if coeffs is None:
            raise RankDeficient("eta_1 is not reachable from the theta residues")
        theta_n = coeffs[0] * phi + coeffs[1] * psi
    else:
        theta_n = psi
    # theta_1: the complementary end, with omega1 its exact residue
    cand = phi
    if (
        solve.span_contains3(
            rows_mid + [theta_n.coeff_row()], cand.coeff_row(), ledger, "theta_1"
        )
        is not Ternary.NO
    ):
        cand = psi
    theta_1 = cand
    omega1 = mod_reduce(_sigma_residue(theta_1, ideal0, t_idx, ledger), mod_gens, ledger)
    thetas = [theta_1] + mid + [theta_n]

    # eta normalization: kill the omega1 components by adding theta_1
    # multiples, scale ahead for unit coefficients
    for k in range(K):
        gens_k = list(chain.systems[k + 1].generators)
        mods = gens_k + [tau]
        rho = _sigma_residue(etas[k], gens_k, t_idx, ledger)
        rho_r = mod_reduce(rho, mods, ledger)
        w1_r = mod_reduce(omega1, mods, ledger)
        if k < K - 1:
            nxt_r = mod_reduce(etas[k + 1], mods, ledger)
            coeffs = solve.solve_in_span(
                [nxt_r.coeff_row(), w1_r.coeff_row()], rho_r.coeff_row(), ledger, "eta norm"
            )
            if coeffs is None:
                raise RankDeficient(f"eta_{k + 1} residue outside its expected plane")
            C, D = coeffs
            if D != 0:
                etas[k] = etas[k] - D * theta_1
            ledger.require_nonzero(C, f"eta_{k + 1} scaling")
            etas[k + 1] = canon(C) * etas[k + 1]
        else:
            rest = mod_reduce(rho_r, mods + [omega1], ledger)
            Dc = solve.solve_in_span(
                [w1_r.coeff_row()], (rho_r - rest).coeff_row(), ledger, "eta norm"
            )
            if Dc is not None and Dc and Dc[0] != 0:
                etas[k] = etas[k] - Dc[0] * theta_1
            if rest.is_zero_form:
                raise RankDeficient(
                    "final residue degenerated; the chain is not in general position"
                )
            omega2 = rest
    if K == 0:
        omega2 = mod_reduce(_sigma_residue(theta_n, ideal0, t_idx, ledger), mod_gens, ledger)
    if omega2.is_zero_form:
        raise RankDeficient("omega2 degenerated; the chain is not in general position")
    return AdaptedCoframing(
        chart=chart,
        thetas=tuple(thetas),
        etas=tuple(etas),
        omega1=omega1,
        omega2=omega2,
        sigma=tau,
    )
