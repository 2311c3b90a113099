"""Command-line interface.

Subcommands: simulate, analyze, check, search, converge, singlet.  Exit
codes: 0 success (all checks hold), 1 malformed input, 2 internal invariant
breach (never expected), 3 a checked inequality came out violated (a
finding, not a failure).  Output files and stdout are byte-identical across
reruns with the same config and seed, for any worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

import numpy as np

from . import io as bio
from .core import (
    Distribution,
    RecordSequence,
    ensemble_covariation_det,
    ensemble_covariation_stoch,
    frequency_covariation,
)
from .inequalities import (
    BellInstanceDet,
    InternalInvariantError,
    PreconditionError,
    bound_report,
    check_budgeted,
    check_consistent_devices,
    check_deviation_corrected,
)
from .metrics import convergence_probe, device_inconsistency, l1_deviation
from .search import SearchProblem, counterexample_hunt, maximize_violation
from .simulate import (
    DriftModel,
    drift_sampler,
    run_experiment,
    singlet_epsilon_grid,
    singlet_reference,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; 2 is reserved for
    # internal invariant breaches here, so remap to 1 (malformed input)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _print_doc(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True, indent=2))


def cmd_simulate(args) -> int:
    doc = bio.load_json(args.config)
    plan, obs, out = bio.parse_simulate_config(doc)
    result = run_experiment(plan, *obs)
    bio.write_records(out["records"], result.records)
    if out.get("ground_truth"):
        bio.write_ground_truth(out["ground_truth"], result.runs)
    bio.dump_json(out["report"], bio.experiment_report_doc(result, bio.config_sha256(doc)))
    for name, rep in (("classical", result.classical), ("corrected", result.corrected)):
        print(f"{name}: lhs={float(rep.lhs):.6g} rhs={float(rep.rhs):.6g} "
              f"verdict={rep.verdict}")
    print(f"wrote {out['records']} and {out['report']}")
    return 0


def _merge_records(paths) -> dict[str, RecordSequence]:
    merged: dict[str, tuple[list, list]] = {}
    for path in paths:
        for pair, rec in bio.read_records(path).items():
            us, vs = merged.setdefault(pair, ([], []))
            us.extend(int(x) for x in rec.u)
            vs.extend(int(x) for x in rec.v)
    return {pair: RecordSequence(us, vs) for pair, (us, vs) in merged.items()}


def cmd_analyze(args) -> int:
    records = _merge_records(args.records)
    if not records:
        raise bio.FormatError("no records found in the given files")
    pairs_doc = {}
    outcome_dists = {}
    freq = {}
    for pair, rec in records.items():
        dist = rec.outcome_distribution()
        outcome_dists[pair] = dist
        freq[pair] = frequency_covariation(rec)
        pairs_doc[pair] = {
            "n": rec.n,
            "frequency_covariation": freq[pair],
            "outcome_distribution": bio.encode_distribution(dist),
        }
    deltas = {}
    names = [p for p in bio.PAIR_NAMES if p in records]
    for i, x in enumerate(names):
        for y in names[i + 1:]:
            deltas[f"{x}:{y}"] = float(l1_deviation(outcome_dists[x], outcome_dists[y]))
    classical = None
    if all(p in records for p in bio.PAIR_NAMES):
        classical = bound_report(freq["AB"], freq["CB"], freq["AC"], rule="classical")
    doc = {
        "schema": "bellhv-analyze/1",
        "version": bio.VERSION,
        "pairs": pairs_doc,
        "outcome_deltas": deltas,
        "classical": None if classical is None else bio.report_to_doc(classical),
    }
    _print_doc(doc)
    return 3 if classical is not None and not classical.holds else 0


def _evaluate_instance(inst, budgets: dict) -> dict:
    """All applicable rule reports for an explicit instance."""
    checks = {}
    if isinstance(inst, BellInstanceDet):
        cov = (ensemble_covariation_det(inst.p_ab, inst.a, inst.b),
               ensemble_covariation_det(inst.p_cb, inst.c, inst.b),
               ensemble_covariation_det(inst.p_ac, inst.a, inst.c))
        checks["classical"] = bound_report(*cov, rule="classical")
        eps = budgets.get("epsilon")
        if eps is None:
            eps = max(l1_deviation(inst.p_ab, inst.p_cb), l1_deviation(inst.p_ab, inst.p_ac))
        checks["deviation-corrected"] = check_deviation_corrected(inst, eps)
        return checks
    cov = (ensemble_covariation_stoch(inst.p_ab, inst.a, inst.b),
           ensemble_covariation_stoch(inst.p_cb, inst.c, inst.b),
           ensemble_covariation_stoch(inst.p_ac, inst.a, inst.c))
    checks["classical"] = bound_report(*cov, rule="classical")
    try:
        checks["consistent-devices"] = check_consistent_devices(inst)
    except PreconditionError:
        pass
    eps = budgets.get("epsilon")
    if eps is None:
        eps = max(l1_deviation(inst.p_ab, inst.p_cb), l1_deviation(inst.p_ab, inst.p_ac))
    eps_p = budgets.get("epsilon_prime")
    if eps_p is None:
        eps_p = max(device_inconsistency(p) for p in (inst.p_ab, inst.p_cb, inst.p_ac))
    checks["budgeted-guaranteed"] = check_budgeted(inst, eps, eps_p, variant="guaranteed")
    checks["budgeted-sharp"] = check_budgeted(inst, eps, eps_p, variant="sharp")
    return checks


def cmd_check(args) -> int:
    doc = bio.load_json(args.instance)
    if doc.get("schema") == "bellhv-report/1":
        doc = doc.get("instance") or {}
    inst, budgets = bio.instance_from_doc(doc)
    checks = _evaluate_instance(inst, budgets)
    any_violated = any(not rep.holds for rep in checks.values())
    out = {
        "schema": "bellhv-check/1",
        "version": bio.VERSION,
        "checks": {name: bio.report_to_doc(rep) for name, rep in checks.items()},
        "verdict": "violated" if any_violated else "holds",
    }
    _print_doc(out)
    return 3 if any_violated else 0


def _decode_budget(doc, key, exact):
    return bio.decode_number(doc.get(key, 0), exact)


def cmd_search(args) -> int:
    doc = bio.load_json(args.config)
    bio.parse_search_config(doc)
    config_hash = bio.config_sha256(doc)
    exact = doc.get("numeric", "rational") == "rational"
    seed = int(doc["seed"])
    out_path = doc["output"]["result"]
    if doc["task"] == "maximize":
        if "m" not in doc:
            raise bio.FormatError("maximize task needs 'm'")
        mode = doc.get("mode", "deterministic")
        m = int(doc["m"])
        l = int(doc.get("l", 1))
        base = None
        if "base" in doc:
            shape = (m,) if mode == "deterministic" else (m, l, l)
            base = bio.decode_distribution(doc["base"], exact, shape)
        observables = None
        if "observables" in doc:
            obs = doc["observables"]
            bio.check_keys(obs, {"a", "b", "c"}, {"a", "b", "c"}, "observables")
            observables = tuple(bio.decode_observable(
                obs[k], "deterministic" if mode == "deterministic" else "stochastic",
                m, l) for k in ("a", "b", "c"))
        problem = SearchProblem(
            mode=mode, m=m, l=l,
            epsilon=_decode_budget(doc, "epsilon", exact),
            epsilon_prime=_decode_budget(doc, "epsilon_prime", exact),
            base=base, observables=observables,
            method=doc.get("method", "vertex"),
            restarts=int(doc.get("restarts", 64)),
            exact=exact)
        result = maximize_violation(problem, seed=seed)
        bio.dump_json(out_path, bio.search_result_doc(result, config_hash))
        print(f"violation={float(result.violation):.9g} "
              f"cap={float(result.certificate['guaranteed_cap']):.9g}")
    else:
        hunt = doc.get("hunt", {})
        kwargs = {}
        if "target" in hunt:
            kwargs["target"] = hunt["target"]
        if "dims" in hunt:
            kwargs["dims"] = [tuple(d) if isinstance(d, list) else d for d in hunt["dims"]]
        if "epsilon_grid" in hunt:
            kwargs["epsilon_grid"] = [bio.decode_number(x, True) for x in hunt["epsilon_grid"]]
        if "epsilon_prime_grid" in hunt:
            kwargs["epsilon_prime_grid"] = [bio.decode_number(x, True)
                                            for x in hunt["epsilon_prime_grid"]]
        if "instances_per_cell" in hunt:
            kwargs["instances_per_cell"] = int(hunt["instances_per_cell"])
        report = counterexample_hunt(seed=seed, **kwargs)
        bio.dump_json(out_path, bio.hunt_report_doc(report, config_hash))
        outcome = "counterexample found" if report.found else "none found"
        print(f"{report.target}: {outcome} over {report.total_instances} instances "
              f"(best margin {float(report.best_margin):.6g})")
    print(f"wrote {out_path}")
    return 0


def cmd_converge(args) -> int:
    doc = bio.load_json(args.config)
    bio.parse_converge_config(doc)
    m = int(doc["m"])
    if "drift" in doc:
        drift = bio.parse_drift(doc["drift"])
        if drift.m != m:
            raise bio.FormatError("drift dimension differs from m")
    else:
        base = (bio.decode_simple_distribution(doc["base"], "base")
                if "base" in doc else Distribution.uniform((m,)))
        drift = DriftModel(kind="stationary", base=base)
    table = convergence_probe(
        drift_sampler(drift), m,
        sizes=[int(n) for n in doc["sizes"]],
        trials=int(doc["trials"]), seed=int(doc["seed"]),
        workers=args.workers)
    out_path = doc["output"]["table"]
    bio.dump_json(out_path, bio.convergence_doc(table, bio.config_sha256(doc)))
    for row in table.rows:
        print(f"n={row.n:>8d}  median_delta={row.median_delta:.6g}")
    print(f"wrote {out_path}")
    return 0


def cmd_singlet(args) -> int:
    parts = args.angles.split(",")
    if len(parts) != 3:
        raise bio.FormatError("--angles needs three comma-separated radians")
    try:
        ta, tb, tc = (float(x) for x in parts)
    except ValueError as exc:
        raise bio.FormatError(f"bad angle: {exc}") from exc
    ref = singlet_reference(ta, tb, tc)
    doc = {
        "schema": "bellhv-singlet/1",
        "version": bio.VERSION,
        "angles": [ta, tb, tc],
        "correlations": {"AB": ref.e_ab, "CB": ref.e_cb, "AC": ref.e_ac},
        "classical": bio.report_to_doc(ref.classical),
        "required_epsilon": ref.required_epsilon,
    }
    if args.grid is not None:
        grid = singlet_epsilon_grid(args.grid)
        doc["grid"] = {
            "step_degrees": grid.step_degrees,
            "max_required_epsilon": grid.max_required_epsilon,
            "at_angles": list(grid.at_angles),
            "analytic_max": grid.analytic_max,
        }
    _print_doc(doc)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="bellhv",
                     description="Finite hidden-variable ensembles: simulate, "
                                 "analyze, check, search")
    sub = parser.add_subparsers(dest="subcommand")

    p = sub.add_parser("simulate", help="run an experiment plan, write records and report")
    p.add_argument("config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="frequency statistics and classical check on records")
    p.add_argument("records", nargs="+")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("check", help="evaluate every applicable rule on an instance file")
    p.add_argument("instance")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("search", help="maximize violation or hunt counterexamples")
    p.add_argument("config")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("converge", help="deviation-vs-run-length table")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=1,
                   help="worker threads; results do not depend on this")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("singlet", help="singlet-correlation reference curve")
    p.add_argument("--angles", required=True, help="theta_a,theta_b,theta_c in radians")
    p.add_argument("--grid", type=float, default=None,
                   help="also grid-search angle triples at this step (degrees)")
    p.set_defaults(func=cmd_singlet)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except InternalInvariantError as exc:
        print(f"internal invariant breach: {exc}", file=sys.stderr)
        return 2
    except (bio.FormatError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
