"""Linear algebra over the scalar fraction field.

All subbundle computations reduce to row operations on matrices of scalars.
Pivoting is deterministic (greedy, leftmost column, first usable row) and
records every non-constant pivot in the ledger, which is how the engine's
"generic point" semantics stay auditable.
"""

from __future__ import annotations

from typing import Optional, Sequence

import sympy as sp

from .errors import IndeterminateRank
from .expr import Ledger, Scalar, Ternary, canon

Row = list


def _norm(ledger: Ledger, e: Scalar) -> Scalar:
    return canon(ledger.reduce(canon(e)))


def rref(
    rows: Sequence[Sequence[Scalar]],
    ledger: Ledger,
    label: str,
    track: bool = False,
):
    """Reduced row-echelon form with deterministic pivoting.

    Returns ``(reduced_rows, pivot_cols)`` or, with ``track``,
    ``(reduced_rows, pivot_cols, transform)`` where
    ``reduced = transform @ original`` (rows of ``transform`` aligned with
    the reduced rows; zero rows of the reduction keep their transform row).
    """
    work = [[_norm(ledger, e) for e in row] for row in rows]
    nrows = len(work)
    ncols = len(work[0]) if nrows else 0
    trans = [
        [sp.Integer(1) if i == j else sp.Integer(0) for j in range(nrows)]
        for i in range(nrows)
    ] if track else None

    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        if r >= nrows:
            break
        # prefer a pivot whose nonvanishing is decided; fall back to UNKNOWN
        chosen = None
        fallback = None
        for i in range(r, nrows):
            e = work[i][c]
            if e == 0:
                continue
            v = ledger.is_zero(e)
            if v is Ternary.NO:
                chosen = i
                break
            if v is Ternary.UNKNOWN and fallback is None:
                fallback = i
        if chosen is None:
            if fallback is None:
                continue
            if ledger.strict:
                raise IndeterminateRank(work[fallback][c], label)
            chosen = fallback
        if chosen != r:
            work[r], work[chosen] = work[chosen], work[r]
            if track:
                trans[r], trans[chosen] = trans[chosen], trans[r]
        p = work[r][c]
        ledger.require_nonzero(p, label)
        inv = sp.Integer(1) / p
        work[r] = [_norm(ledger, e * inv) for e in work[r]]
        if track:
            trans[r] = [canon(e * inv) for e in trans[r]]
        for i in range(nrows):
            if i == r:
                continue
            f = work[i][c]
            if f == 0:
                continue
            work[i] = [
                _norm(ledger, work[i][j] - f * work[r][j]) for j in range(ncols)
            ]
            if track:
                trans[i] = [
                    canon(trans[i][j] - f * trans[r][j]) for j in range(nrows)
                ]
        pivots.append(c)
        r += 1
    if track:
        return work, pivots, trans
    return work, pivots


def rank(rows, ledger: Ledger, label: str) -> int:
    if not rows:
        return 0
    _, pivots = rref(rows, ledger, label)
    return len(pivots)


def nullspace(rows, ledger: Ledger, label: str):
    """Basis of ``{x : x @ ??? }`` — here: right nullspace of the matrix,
    i.e. vectors v with rows @ v = 0, deterministic free-variable order."""
    if not rows:
        return []
    red, pivots = rref(rows, ledger, label)
    ncols = len(rows[0])
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [sp.Integer(0)] * ncols
        v[f] = sp.Integer(1)
        for i, p in enumerate(pivots):
            v[p] = canon(-red[i][f])
        basis.append(v)
    return basis


def left_nullspace(rows, ledger: Ledger, label: str):
    """Vectors x with x @ rows = 0."""
    if not rows:
        return []
    ncols = len(rows[0])
    transposed = [[rows[i][c] for i in range(len(rows))] for c in range(ncols)]
    return nullspace(transposed, ledger, label)


def _eliminate(rows, target, ledger: Ledger, label: str):
    """Reduce ``target`` against the span of ``rows``.

    Returns ``(residual_row, coeffs_on_reduced, reduced, pivots, transform)``.
    """
    red, pivots, trans = rref(rows, ledger, label, track=True)
    ncols = len(rows[0])
    resid = [_norm(ledger, e) for e in target]
    coeffs_on_red = [sp.Integer(0)] * len(rows)
    for i, p in enumerate(pivots):
        f = resid[p]
        if f == 0:
            continue
        coeffs_on_red[i] = f
        resid = [_norm(ledger, resid[j] - f * red[i][j]) for j in range(ncols)]
    return resid, coeffs_on_red, red, pivots, trans


def span_contains3(rows, target, ledger: Ledger, label: str) -> Ternary:
    """Three-valued membership of ``target`` in the row span."""
    if not rows:
        resid = [_norm(ledger, e) for e in target]
        verdicts = [ledger.is_zero(e) for e in resid]
    else:
        resid, _, _, _, _ = _eliminate(rows, target, ledger, label)
        verdicts = [ledger.is_zero(e) for e in resid]
    out = Ternary.YES
    for v in verdicts:
        if v is Ternary.NO:
            return Ternary.NO
        if v is Ternary.UNKNOWN:
            out = Ternary.UNKNOWN
    return out


def solve_in_span(rows, target, ledger: Ledger, label: str):
    """Coefficients x with x @ rows = target, or None when target is outside
    the span (at the generic point of the current assumptions)."""
    if not rows:
        return None if any(_norm(ledger, e) != 0 for e in target) else []
    resid, coeffs_on_red, red, pivots, trans = _eliminate(rows, target, ledger, label)
    for e in resid:
        if ledger.is_zero(e) is not Ternary.YES:
            return None
    n = len(rows)
    coeffs = [
        canon(sum((coeffs_on_red[i] * trans[i][j] for i in range(n)), sp.Integer(0)))
        for j in range(n)
    ]
    return coeffs


def span_contains(rows, target, ledger: Ledger, label: str) -> bool:
    return solve_in_span(rows, target, ledger, label) is not None


def span_equal3(rows_a, rows_b, ledger: Ledger, label: str) -> Ternary:
    """Three-valued mutual containment of two row spans."""
    verdicts = []
    for row in rows_b:
        verdicts.append(span_contains3(rows_a, row, ledger, label))
    for row in rows_a:
        verdicts.append(span_contains3(rows_b, row, ledger, label))
    out = Ternary.YES
    for v in verdicts:
        if v is Ternary.NO:
            return Ternary.NO
        if v is Ternary.UNKNOWN:
            out = Ternary.UNKNOWN
    return out


def span_equal(rows_a, rows_b, ledger: Ledger, label: str) -> bool:
    ra = rank(rows_a, ledger, label)
    rb = rank(rows_b, ledger, label)
    if ra != rb:
        return False
    rc = rank(list(rows_a) + list(rows_b), ledger, label)
    return rc == ra


def span_intersect(rows_a, rows_b, ledger: Ledger, label: str):
    """Row basis of span(A) ∩ span(B), reduced to echelon form."""
    if not rows_a or not rows_b:
        return []
    a, b = len(rows_a), len(rows_b)
    ncols = len(rows_a[0])
    # solve x @ A - y @ B = 0: right-nullspace of the stacked transpose
    stacked = [
        [rows_a[i][c] for i in range(a)] + [canon(-rows_b[j][c]) for j in range(b)]
        for c in range(ncols)
    ]
    sols = nullspace(stacked, ledger, label)
    inter = []
    for v in sols:
        x = v[:a]
        row = [
            canon(sum((x[i] * rows_a[i][c] for i in range(a)), sp.Integer(0)))
            for c in range(ncols)
        ]
        if any(e != 0 for e in row):
            inter.append(row)
    if not inter:
        return []
    red, pivots = rref(inter, ledger, label)
    return [red[i] for i in range(len(pivots))]


def clear_denominators(row, ledger: Optional[Ledger] = None):
    """Scale a row by the lcm of its denominators (span-preserving cleanup)."""
    dens = []
    cleaned = [canon(e) for e in row]
    for e in cleaned:
        _, d = sp.fraction(e)
        dens.append(d)
    if not dens:
        return cleaned
    common = dens[0]
    for d in dens[1:]:
        common = sp.lcm(common, d)
    if common == 1:
        return cleaned
    return [canon(e * common) for e in cleaned]


def normalize_row(row):
    """Span-preserving cleanup: clear denominators, divide out the common
    polynomial content, normalize the leading sign."""
    cleaned = clear_denominators(row)
    nonzero = [e for e in cleaned if e != 0]
    if not nonzero:
        return cleaned
    try:
        g = nonzero[0]
        for e in nonzero[1:]:
            g = sp.gcd(g, e)
        if g != 0 and g != 1:
            cleaned = [canon(sp.cancel(e / g)) for e in cleaned]
    except (sp.PolynomialError, sp.polys.polyerrors.ComputationFailed):
        pass
    lead = next(e for e in cleaned if e != 0)
    if lead.could_extract_minus_sign():
        cleaned = [canon(-e) for e in cleaned]
    return cleaned


def reduce_row_against(rows, target, ledger: Ledger, label: str):
    """The residual of ``target`` after eliminating the span of ``rows``
    (zero row iff contained, generically)."""
    if not rows:
        return [_norm(ledger, e) for e in target]
    resid, _, _, _, _ = _eliminate(rows, target, ledger, label)
    return resid
