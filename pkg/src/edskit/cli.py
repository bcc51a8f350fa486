"""Command-line interface.

    edskit <command> <file.eds> [options]

Commands: check-system, frobenius, derived-flag, cartan-system, cartan-class,
cts, strongly-linear, prolong, relext, check-prolongation, sluis-extend,
c-regular, corank3-shape, verify-equiv, verify-coframing, dynlin.

Exit codes: 0 = definitive verdict, 2 = Unknown verdicts present, 1 = error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from . import dsl, linearize, pfaffian, prolong, solve
from .errors import EdsError
from .expr import Ledger, Ternary
from .dsl import print_expr, print_form
from .pfaffian import PfaffianSystem
from .reports import Report, emit, error_report


def _tern(v: Ternary) -> str:
    return v.value


def _gens(S: PfaffianSystem, ledger=None) -> list[str]:
    out = []
    for g in S.generators:
        if ledger is not None and ledger.base.zero:
            from .forms import DifferentialForm

            g = DifferentialForm(
                g.chart, g.degree, tuple((i, ledger.reduce(c)) for i, c in g.terms)
            )
        out.append(print_form(g))
    return out


def _chain_fields(chain: prolong.RelativeExtensionChain, ledger=None) -> dict:
    return {
        "extension_length": chain.extension_length,
        "ranks": list(chain.ranks),
        "cartan_ranks": list(chain.cartan_ranks),
        "jumps": list(chain.jumps),
        "reaches_top": chain.reaches_top,
        "generators": {
            f"I_{k}": _gens(S, ledger) for k, S in enumerate(chain.systems)
        },
        "steps": [
            {
                "index": s.index,
                "jump": s.jump,
                "rank_condition": s.check.verdict,
                "total_shaped": s.total_shaped,
                "cts": _tern(s.cts),
                "reasons": list(s.check.reasons),
            }
            for s in chain.steps
        ],
    }


def _check_fields(chk: prolong.ProlongationCheck) -> dict:
    return {
        "conditions": {
            "contains": _tern(chk.contains),
            "indep_matches": _tern(chk.indep_matches),
            "rank_identity": chk.rank_identity,
            "hatj_in_range": chk.hatj_ok,
        },
        "rank_top": chk.rank_top,
        "rank_base": chk.rank_base,
        "dim_top": chk.dim_top,
        "dim_base": chk.dim_base,
        "rank_jump": chk.rank_top - chk.rank_base,
        "dim_jump": chk.dim_top - chk.dim_base,
        "hatj_rank": chk.hatj_rank,
        "base_m": chk.base_m,
        "reasons": list(chk.reasons),
    }


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="edskit",
        description="Symbolic engine for Pfaffian systems with independence condition",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        p = sub.add_parser(name, **kw)
        p.add_argument("file", help="input .eds document")
        p.add_argument("--format", choices=("text", "json"), default="text")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--strict", action="store_true", help="abort on undecidable pivots")
        return p

    p = add("check-system", help="systemhood axioms for a declared system")
    p.add_argument("--system", required=True)

    p = add("frobenius", help="complete integrability of the generator span")
    p.add_argument("--system", required=True)

    p = add("derived-flag", help="derived systems to stabilization")
    p.add_argument("--system", required=True)

    p = add("cartan-system", help="Cauchy-characteristic (Cartan) system")
    p.add_argument("--system", required=True)

    p = add("cartan-class", help="class invariant of a corank-2 system")
    p.add_argument("--system", required=True)

    p = add("cts", help="control-type test: [[I, tau]] Frobenius")
    p.add_argument("--system", required=True)

    p = add("strongly-linear", help="derived-flag Frobenius linearity test")
    p.add_argument("--system", required=True)

    p = add("prolong", help="total/partial/by-differentiation prolongation")
    p.add_argument("--system", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--total", action="store_true")
    g.add_argument("--diff", help="comma-separated control coordinates")
    g.add_argument("--partial", help="semicolon-separated 1-forms to adjoin")
    p.add_argument("--fibers", help="comma-separated names for the new fibers")

    p = add("relext", help="relative extensions of base inside top")
    p.add_argument("--base", required=True)
    p.add_argument("--top", required=True)
    p.add_argument("--map", dest="map_name")

    p = add("check-prolongation", help="necessary conditions for a Cartan prolongation")
    p.add_argument("--base", required=True)
    p.add_argument("--top", required=True)
    p.add_argument("--map", dest="map_name")

    p = add("sluis-extend", help="extend a Cartan prolongation to total prolongations")
    p.add_argument("--base", required=True)
    p.add_argument("--top", required=True)
    p.add_argument("--map", dest="map_name")
    p.add_argument("--fibers", help="names for fibers adjoined on the top side")
    p.add_argument("--base-fibers", help="names for the base total-prolongation fibers")

    p = add("c-regular", help="C-regularity of the relative-extension chain")
    p.add_argument("--base", required=True)
    p.add_argument("--top", required=True)
    p.add_argument("--map", dest="map_name")
    p.add_argument("--filtration", help="comma-separated system names to check stepwise")

    p = add("corank3-shape", help="total-then-rank-1 shape of a corank-3 chain")
    p.add_argument("--base", required=True)
    p.add_argument("--top", required=True)
    p.add_argument("--map", dest="map_name")

    p = add("verify-equiv", help="verify phi* target = system with matching indep")
    p.add_argument("--map", dest="map_name", required=True)
    p.add_argument("--system", required=True, help="system on the map source")
    p.add_argument("--target", required=True, help="system on the map target")
    p.add_argument("--derived", type=int, default=0, help="compare k-th derived systems")

    p = add("verify-coframing", help="structure-equation residuals of a coframing")
    p.add_argument("--coframing", required=True)
    p.add_argument("--system", required=True)

    p = add("dynlin", help="bounded search for a linearizing prolongation")
    p.add_argument("--system", required=True)
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--hint", action="append", default=[], help="scalar whose differential may be adjoined")
    p.add_argument("--witness", help="validate this declared system as the witness")

    return ap


def _load(args):
    with open(args.file, "r", encoding="utf-8") as fh:
        doc = dsl.parse(fh.read())
    ledger = Ledger(base=doc.assumptions, strict=args.strict, seed=args.seed)
    return doc, ledger


def _finish(report: Report, ledger: Ledger, args) -> int:
    report.assumptions = ledger.entries()
    sys.stdout.write(emit(report, args.format).decode())
    return report.exit_code()


def run(args) -> int:
    doc, ledger = _load(args)
    cmd = args.command

    if cmd == "check-system":
        S = doc.system(args.system)
        pfaffian.validate(S, ledger)
        rep = pfaffian.is_system(S, ledger)
        r = Report(
            command=cmd,
            verdict=_tern(rep.verdict),
            fields={
                "conditions": {
                    "no_cauchy_characteristics": _tern(rep.no_cauchy),
                    "indep_exact": _tern(rep.tau_exact),
                    "no_transverse_integral_surfaces": _tern(rep.no_integral_surfaces),
                },
                "cartan_rank": rep.cartan_rank,
                "dim": rep.dim,
            },
            notes=list(rep.notes),
            has_unknown=rep.verdict is Ternary.UNKNOWN,
        )
        return _finish(r, ledger, args)

    if cmd == "frobenius":
        S = doc.system(args.system)
        v = pfaffian.is_frobenius(S, ledger)
        return _finish(
            Report(cmd, _tern(v), has_unknown=v is Ternary.UNKNOWN), ledger, args
        )

    if cmd == "cts":
        S = doc.system(args.system)
        v = pfaffian.is_cts_check(S, ledger)
        return _finish(
            Report(cmd, _tern(v), has_unknown=v is Ternary.UNKNOWN), ledger, args
        )

    if cmd == "strongly-linear":
        S = doc.system(args.system)
        v = linearize.is_strongly_linear(S, ledger)
        fields = {}
        if v is Ternary.YES:
            fields["brunovsky_indices"] = list(linearize.brunovsky_indices(S, ledger))
        return _finish(
            Report(cmd, _tern(v), fields, has_unknown=v is Ternary.UNKNOWN),
            ledger,
            args,
        )

    if cmd == "derived-flag":
        S = doc.system(args.system)
        flag = pfaffian.derived_flag(S, ledger)
        r = Report(
            command=cmd,
            verdict="ok",
            fields={
                "ranks": list(flag.display_ranks),
                "drops": list(flag.drops),
                "stabilization_index": flag.stabilization_index,
                "infinite_rank": flag.ranks[flag.stabilization_index],
                "generators": {
                    f"I^{k}": _gens(Sk, ledger)
                    for k, Sk in enumerate(flag.systems[: flag.stabilization_index + 1])
                },
            },
        )
        return _finish(r, ledger, args)

    if cmd == "cartan-system":
        S = doc.system(args.system)
        C = pfaffian.cartan_system(S, ledger)
        frob = pfaffian.is_frobenius(C, ledger)
        r = Report(
            command=cmd,
            verdict="ok",
            fields={
                "rank": pfaffian.rank(C, ledger),
                "dim": S.dim,
                "cauchy_dimension": S.dim - pfaffian.rank(C, ledger),
                "generators": _gens(C, ledger),
                "frobenius": _tern(frob),
            },
            has_unknown=frob is Ternary.UNKNOWN,
        )
        return _finish(r, ledger, args)

    if cmd == "cartan-class":
        S = doc.system(args.system)
        rep = pfaffian.cartan_class(S, ledger)
        fields = {"ranks": list(rep.flag.display_ranks), "drops": list(rep.flag.drops)}
        if rep.positive:
            fields["class"] = rep.class_value
            fields["first_index"] = rep.first_index
            fields["normal_system"] = _gens(rep.normal_system, ledger)
            verdict = "positive_class"
        else:
            fields["class"] = 0
            fields["infinite_rank"] = rep.infinite_rank
            verdict = "class_0"
        fields["flat_representable"] = (not rep.positive) and rep.infinite_rank == 0
        return _finish(Report(cmd, verdict, fields), ledger, args)

    if cmd == "prolong":
        S = doc.system(args.system)
        fibers = args.fibers.split(",") if args.fibers else None
        if args.total:
            step = prolong.total_prolongation(S, ledger, fiber_names=fibers)
        elif args.diff is not None:
            step = prolong.prolong_by_diff(
                S, [c.strip() for c in args.diff.split(",") if c.strip()], ledger,
                fiber_names=fibers,
            )
        else:
            mus = [
                dsl.parse_form(txt.strip(), S.chart)
                for txt in args.partial.split(";")
                if txt.strip()
            ]
            step = prolong.partial_prolongation(S, mus, ledger, fiber_names=fibers)
        r = Report(
            command=cmd,
            verdict="ok",
            fields={
                "kind": step.kind,
                "new_coordinates": list(step.new_coords),
                "adjoined": [print_form(f) for f in step.new_forms],
                "generators": _gens(step.result, ledger),
                "rank_identity": step.rank_identity_holds(ledger),
                "chart": list(step.result.chart.coords),
            },
        )
        return _finish(r, ledger, args)

    if cmd == "relext":
        base = doc.system(args.base)
        top = doc.system(args.top)
        proj = doc.map(args.map_name) if args.map_name else None
        chain = prolong.relative_extensions(top, base, ledger, proj)
        fields = _chain_fields(chain, ledger)
        fields["simple"] = prolong.is_simple(chain)
        return _finish(Report(cmd, "ok", fields), ledger, args)

    if cmd == "check-prolongation":
        base = doc.system(args.base)
        top = doc.system(args.top)
        proj = doc.map(args.map_name) if args.map_name else None
        chk = prolong.check_cartan_prolongation(top, base, ledger, proj)
        return _finish(
            Report(
                cmd,
                chk.verdict,
                _check_fields(chk),
                has_unknown=chk.verdict == "unknown",
            ),
            ledger,
            args,
        )

    if cmd == "sluis-extend":
        base = doc.system(args.base)
        top = doc.system(args.top)
        proj = doc.map(args.map_name) if args.map_name else None
        fibers = args.fibers.split(",") if args.fibers else None
        base_fibers = args.base_fibers.split(",") if args.base_fibers else None
        res = prolong.sluis_extension(
            top, base, ledger, proj, fiber_names=fibers, base_fiber_names=base_fibers
        )
        stages = []
        for st in res.stages:
            stages.append(
                {
                    "index": st.index,
                    "hatj_rank": st.hatj_rank,
                    "differentiated": list(st.case_ii_controls),
                    "adjoined": [print_form(f) for f in st.case_ii_forms],
                    "fibers": list(st.case_ii_fibers),
                    "cover_rank": st.cover_rank,
                    "cover": {y: print_expr(e) for y, e in st.cover.components},
                }
            )
        fields = {
            "stages": stages,
            "iterations": res.K,
            "final_generators": _gens(res.final_top, ledger),
            "target_generators": _gens(res.final_base, ledger),
            "isomorphism": {y: print_expr(e) for y, e in res.isomorphism.components}
            if res.isomorphism
            else None,
            "verified": _tern(res.verified),
        }
        verdict = "isomorphism" if res.isomorphism is not None else "incomplete"
        return _finish(
            Report(cmd, verdict, fields, has_unknown=res.verified is Ternary.UNKNOWN),
            ledger,
            args,
        )

    if cmd == "c-regular":
        base = doc.system(args.base)
        top = doc.system(args.top)
        proj = doc.map(args.map_name) if args.map_name else None
        chain = prolong.relative_extensions(top, base, ledger, proj)
        rep = prolong.is_c_regular(chain, ledger)
        fields = {
            "chain": _chain_fields(chain, ledger),
            "reasons": list(rep.reasons),
            "subsystems": [
                {
                    "sigma_in_cartan": _tern(s.sigma_in_cartan),
                    "sigma_independent": _tern(s.sigma_independent),
                    "cts": _tern(s.cts),
                }
                for s in rep.subsystems
            ],
        }
        if args.filtration:
            names = [n.strip() for n in args.filtration.split(",") if n.strip()]
            filt = [doc.system(n) for n in names]
            frep = prolong.check_filtration(base, filt, top, ledger, proj)
            fields["filtration"] = {
                "passes": frep.passes,
                "starts_at_base": _tern(frep.starts_at_base),
                "ends_at_top": _tern(frep.ends_at_top),
                "steps": [
                    {
                        "index": s.index,
                        "jump": s.jump,
                        "simple": _tern(s.simple),
                        "cts": _tern(s.cts),
                        "rank_condition": s.check.verdict,
                        "reasons": list(s.check.reasons),
                    }
                    for s in frep.steps
                ],
            }
        return _finish(
            Report(cmd, rep.verdict, fields, has_unknown=rep.verdict == "unknown"),
            ledger,
            args,
        )

    if cmd == "corank3-shape":
        base = doc.system(args.base)
        top = doc.system(args.top)
        proj = doc.map(args.map_name) if args.map_name else None
        chain = prolong.relative_extensions(top, base, ledger, proj)
        rep = prolong.verify_corank3_shape(chain, ledger)
        fields = {
            "classifications": list(rep.classifications),
            "conforming": rep.conforming,
            "by_differentiation_shaped": [_tern(v) for v in rep.by_diff_flags],
            "reasons": list(rep.reasons),
            "chain": _chain_fields(chain, ledger),
        }
        return _finish(
            Report(cmd, "conforming" if rep.conforming else "violation", fields),
            ledger,
            args,
        )

    if cmd == "verify-equiv":
        phi = doc.map(args.map_name)
        S = doc.system(args.system)
        T = doc.system(args.target)
        for _ in range(args.derived):
            S = pfaffian.derived(S, ledger)
            T = pfaffian.derived(T, ledger)
        rep = pfaffian.verify_tau_equivalence(phi, S, T, ledger)
        r = Report(
            command=cmd,
            verdict=_tern(rep.verdict),
            fields={
                "spans_match": _tern(rep.spans_match),
                "indep_matches": _tern(rep.indep_matches),
                "derived_order": args.derived,
            },
            notes=list(rep.notes),
            has_unknown=rep.verdict is Ternary.UNKNOWN,
        )
        return _finish(r, ledger, args)

    if cmd == "verify-coframing":
        cof = doc.coframings.get(args.coframing)
        if cof is None:
            raise EdsError(f"unknown coframing {args.coframing}")
        J = doc.system(args.system)
        rep = linearize.verify_coframing(cof, J, ledger)
        r = Report(
            command=cmd,
            verdict="passes" if rep.passes else "fails",
            fields={
                "coframe_ok": rep.coframe_ok,
                "spans_match": _tern(rep.spans_match),
                "residuals": {label: print_form(res) for label, res in rep.residuals},
                "class_upper_bound": rep.class_at_most,
            },
            has_unknown=rep.spans_match is Ternary.UNKNOWN,
        )
        return _finish(r, ledger, args)

    if cmd == "dynlin":
        S = doc.system(args.system)
        hints = []
        for h in args.hint:
            if h in doc.renames:
                hints.append(doc.renames[h][1])
            else:
                hints.append(dsl.parse_expr(h, S.chart))
        if args.witness:
            rep = linearize.validate_witness(S, doc.system(args.witness), ledger)
        else:
            rep = linearize.dynlin_search(S, args.max_depth, ledger, hints=hints)
        fields = {
            "class_upper_bound": rep.class_upper_bound
            if rep.class_upper_bound is not None
            else f"unknown_up_to_depth({rep.depth})",
            "depth": rep.depth,
            "moves": list(rep.moves),
            "brunovsky_indices": list(rep.brunovsky),
        }
        if rep.witness is not None:
            fields["witness_generators"] = _gens(rep.witness, ledger)
            fields["witness_chart"] = list(rep.witness.chart.coords)
        if rep.chain is not None:
            fields["chain"] = _chain_fields(rep.chain, ledger)
        return _finish(
            Report(
                cmd,
                rep.verdict,
                fields,
                notes=list(rep.notes),
                has_unknown=rep.verdict == "unknown_up_to_depth",
            ),
            ledger,
            args,
        )

    raise EdsError(f"unhandled command {cmd}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except EdsError as exc:
        rep = error_report(getattr(args, "command", "edskit"), exc)
        sys.stdout.write(emit(rep, getattr(args, "format", "text")).decode())
        return 1
    except FileNotFoundError as exc:
        rep = error_report(getattr(args, "command", "edskit"), exc)
        sys.stdout.write(emit(rep, getattr(args, "format", "text")).decode())
        return 1


if __name__ == "__main__":
    sys.exit(main())
