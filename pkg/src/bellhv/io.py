"""File formats: configs, instances, reports, record CSVs.

Formats are versioned through a ``schema`` field and designed to diff
cleanly: JSON documents are dumped with sorted keys, record CSVs carry the
fixed header ``index,pair,u,v``.  Indices are 1-based in every file; exact
numbers travel as ``"p/q"`` strings.  Record files never contain hidden
values or device states (those are unobservable); an optional ground-truth
CSV carries them for debugging.
"""

from __future__ import annotations

import csv
import hashlib
import json
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import (
    DetObservable,
    Distribution,
    RecordSequence,
    Run,
    StochObservable,
    as_fraction,
)
from .inequalities import BellInstanceDet, BellInstanceStoch, InequalityReport
from .metrics import ConvergenceTable
from .search import HuntReport, SearchResult
from .simulate import DeviceModel, DriftModel, ExperimentPlan, ExperimentResult

try:  # version as installed; fall back when running from a source tree
    from importlib.metadata import version as _pkg_version

    VERSION = _pkg_version("bellhv")
except Exception:  # pragma: no cover
    VERSION = "0.1.0"

PAIR_NAMES = ("AB", "CB", "AC")


class FormatError(ValueError):
    """Malformed configuration, instance or record input."""


# -- numbers -------------------------------------------------------------------


def encode_number(x):
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    if isinstance(x, (bool, int, float, str)) or x is None:
        return x
    return float(x)


def decode_number(x, exact: bool):
    if exact:
        if isinstance(x, float):
            raise FormatError(f"rational mode needs integers or 'p/q' strings, got {x}")
        return as_fraction(x)
    if isinstance(x, str):
        return float(Fraction(x))
    return float(x)


def _encode_seq(values):
    return [encode_number(v) for v in values]


# -- schema validation helpers ---------------------------------------------------


def check_keys(obj: dict, allowed: set, required: set, ctx: str) -> None:
    if not isinstance(obj, dict):
        raise FormatError(f"{ctx} must be an object")
    unknown = set(obj) - allowed
    if unknown:
        raise FormatError(f"{ctx} has unknown keys: {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise FormatError(f"{ctx} is missing keys: {sorted(missing)}")


def config_sha256(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def dump_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc


# -- distributions and instances -------------------------------------------------


def encode_distribution(dist: Distribution):
    flat = _encode_seq(dist.weights)
    if not dist.is_triple:
        return flat
    m, l, _ = dist.index_shape
    return [[[flat[(k * l + s) * l + q] for q in range(l)] for s in range(l)]
            for k in range(m)]


def decode_distribution(data, exact: bool, index_shape: tuple[int, ...]) -> Distribution:
    arr = np.asarray(data, dtype=object)
    if arr.shape != index_shape:
        raise FormatError(f"distribution shape {arr.shape} does not match {index_shape}")
    weights = [decode_number(x, exact) for x in arr.reshape(-1)]
    try:
        return Distribution(weights=tuple(weights), exact=exact, index_shape=index_shape)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad distribution: {exc}") from exc


def decode_observable(data, kind: str, m: int, l: int):
    try:
        if kind == "deterministic":
            obs = DetObservable(data)
            if obs.m != m:
                raise FormatError(f"observable length {obs.m} != m={m}")
        else:
            obs = StochObservable(data)
            if obs.m != m or obs.l != l:
                raise FormatError(f"observable table shape {(obs.l, obs.m)} != {(l, m)}")
    except ValueError as exc:
        raise FormatError(f"bad observable: {exc}") from exc
    return obs


def instance_to_doc(inst, budgets: dict | None = None) -> dict:
    stoch = isinstance(inst, BellInstanceStoch)
    doc = {
        "schema": "bellhv-instance/1",
        "kind": "stochastic" if stoch else "deterministic",
        "numeric": "rational" if inst.exact else "float",
        "m": inst.m,
        "l": inst.l if stoch else 1,
        "distributions": {
            "AB": encode_distribution(inst.p_ab),
            "CB": encode_distribution(inst.p_cb),
            "AC": encode_distribution(inst.p_ac),
        },
        "observables": {
            "a": inst.a.values.tolist(),
            "b": inst.b.values.tolist(),
            "c": inst.c.values.tolist(),
        },
    }
    if budgets:
        doc["budgets"] = {k: encode_number(v) for k, v in budgets.items()}
    return doc


def instance_from_doc(doc: dict):
    """Parse an instance document; returns (instance, budgets dict)."""
    check_keys(doc, {"schema", "kind", "numeric", "m", "l", "distributions",
                      "observables", "budgets"},
                {"kind", "numeric", "m", "distributions", "observables"}, "instance")
    kind = doc["kind"]
    if kind not in ("deterministic", "stochastic"):
        raise FormatError(f"unknown instance kind {kind!r}")
    exact = {"rational": True, "float": False}.get(doc["numeric"])
    if exact is None:
        raise FormatError(f"unknown numeric mode {doc['numeric']!r}")
    m = int(doc["m"])
    l = int(doc.get("l", 1))
    shape = (m,) if kind == "deterministic" else (m, l, l)
    dists = doc["distributions"]
    check_keys(dists, set(PAIR_NAMES), set(PAIR_NAMES), "distributions")
    p_ab, p_cb, p_ac = (decode_distribution(dists[p], exact, shape) for p in PAIR_NAMES)
    obs = doc["observables"]
    check_keys(obs, {"a", "b", "c"}, {"a", "b", "c"}, "observables")
    a, b, c = (decode_observable(obs[k], kind, m, l) for k in ("a", "b", "c"))
    cls = BellInstanceDet if kind == "deterministic" else BellInstanceStoch
    inst = cls(p_ab=p_ab, p_cb=p_cb, p_ac=p_ac, a=a, b=b, c=c)
    budgets = {}
    if "budgets" in doc:
        check_keys(doc["budgets"], {"epsilon", "epsilon_prime"}, set(), "budgets")
        budgets = {k: decode_number(v, exact) for k, v in doc["budgets"].items()}
    return inst, budgets


# -- record CSVs -----------------------------------------------------------------


def write_records(path, records: Mapping[str, RecordSequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "pair", "u", "v"])
        for pair in PAIR_NAMES:
            if pair not in records:
                continue
            rec = records[pair]
            for i in range(rec.n):
                writer.writerow([i + 1, pair, f"{int(rec.u[i]):+d}", f"{int(rec.v[i]):+d}"])


def read_records(path) -> dict[str, RecordSequence]:
    by_pair: dict[str, tuple[list, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "pair", "u", "v"]:
            raise FormatError(f"{path}: expected header index,pair,u,v")
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise FormatError(f"{path}: malformed row {row!r}")
            _idx, pair, u, v = row
            if pair not in PAIR_NAMES:
                raise FormatError(f"{path}: unknown pair {pair!r}")
            try:
                uu, vv = int(u), int(v)
            except ValueError as exc:
                raise FormatError(f"{path}: non-integer outcome in {row!r}") from exc
            if abs(uu) != 1 or abs(vv) != 1:
                raise FormatError(f"{path}: outcomes must be +1 or -1 in {row!r}")
            us, vs = by_pair.setdefault(pair, ([], []))
            us.append(uu)
            vs.append(vv)
    return {pair: RecordSequence(us, vs) for pair, (us, vs) in by_pair.items()}


def write_ground_truth(path, runs: Mapping[str, Run]) -> None:
    """Debug-only dump of the unobservable hidden values and device states."""
    stoch = any(r.is_stochastic for r in runs.values())
    header = ["index", "pair", "lambda"] + (["omega_u", "omega_v"] if stoch else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for pair in PAIR_NAMES:
            if pair not in runs:
                continue
            run = runs[pair]
            for i in range(run.n):
                row = [i + 1, pair, int(run.hidden[i]) + 1]
                if stoch:
                    row += [int(run.device_u[i]) + 1, int(run.device_v[i]) + 1]
                writer.writerow(row)


# -- configuration parsing --------------------------------------------------------


def decode_simple_distribution(data, ctx: str) -> Distribution:
    try:
        arr = np.asarray(data, dtype=np.float64)
        return Distribution.from_weights(arr.reshape(-1), index_shape=arr.shape)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{ctx}: bad distribution ({exc})") from exc


def parse_drift(doc: dict) -> DriftModel:
    check_keys(doc, {"kind", "base", "step", "regimes", "switch_prob"},
                {"kind", "base"}, "drift")
    base = decode_simple_distribution(doc["base"], "drift.base")
    try:
        return DriftModel(
            kind=doc["kind"],
            base=base,
            step=float(doc.get("step", 0.0)),
            regimes=tuple(decode_simple_distribution(r, "drift.regimes")
                          for r in doc.get("regimes", [])),
            switch_prob=float(doc.get("switch_prob", 0.0)))
    except ValueError as exc:
        raise FormatError(f"drift: {exc}") from exc


def parse_device(doc: dict) -> DeviceModel:
    check_keys(doc, {"kind", "state_dist", "coupling"}, {"kind", "state_dist"}, "device")
    try:
        return DeviceModel(
            kind=doc["kind"],
            state_dist=decode_simple_distribution(doc["state_dist"], "device.state_dist"),
            coupling=float(doc.get("coupling", 0.0)))
    except ValueError as exc:
        raise FormatError(f"device: {exc}") from exc


def parse_simulate_config(doc: dict):
    """Validate a simulate config; returns (plan, (a, b, c), output paths)."""
    check_keys(doc, {"schema", "command", "numeric", "seed", "n", "drift", "device",
                      "observables", "output"},
                {"command", "seed", "n", "drift", "observables", "output"}, "config")
    if doc["command"] != "simulate":
        raise FormatError(f"config command {doc['command']!r} is not 'simulate'")
    numeric = doc.get("numeric", "float")
    if numeric not in ("rational", "float"):
        raise FormatError(f"unknown numeric mode {numeric!r}")
    drift = parse_drift(doc["drift"])
    device = parse_device(doc["device"]) if "device" in doc else None
    try:
        plan = ExperimentPlan(n=int(doc["n"]), drift=drift, device=device,
                              seed=int(doc["seed"]), exact=numeric == "rational")
    except ValueError as exc:
        raise FormatError(f"plan: {exc}") from exc
    obs = doc["observables"]
    check_keys(obs, {"a", "b", "c"}, {"a", "b", "c"}, "observables")
    kind = "stochastic" if device is not None else "deterministic"
    a, b, c = (decode_observable(obs[k], kind, drift.m,
                                  device.l if device else 1) for k in ("a", "b", "c"))
    out = doc["output"]
    check_keys(out, {"records", "report", "ground_truth"}, {"records", "report"}, "output")
    return plan, (a, b, c), out


def parse_search_config(doc: dict) -> dict:
    check_keys(doc, {"schema", "command", "task", "mode", "m", "l", "epsilon",
                      "epsilon_prime", "base", "observables", "method", "restarts",
                      "numeric", "seed", "hunt", "output"},
                {"command", "task", "seed", "output"}, "config")
    if doc["command"] != "search":
        raise FormatError(f"config command {doc['command']!r} is not 'search'")
    if doc["task"] not in ("maximize", "hunt"):
        raise FormatError(f"unknown search task {doc['task']!r}")
    check_keys(doc["output"], {"result"}, {"result"}, "output")
    if doc["task"] == "hunt":
        hunt = doc.get("hunt", {})
        check_keys(hunt, {"target", "dims", "epsilon_grid", "epsilon_prime_grid",
                           "instances_per_cell"}, set(), "hunt")
    return doc


def parse_converge_config(doc: dict) -> dict:
    check_keys(doc, {"schema", "command", "m", "base", "drift", "sizes", "trials",
                      "seed", "output"},
                {"command", "m", "sizes", "trials", "seed", "output"}, "config")
    if doc["command"] != "converge":
        raise FormatError(f"config command {doc['command']!r} is not 'converge'")
    check_keys(doc["output"], {"table"}, {"table"}, "output")
    return doc


# -- report documents --------------------------------------------------------------


def report_to_doc(rep: InequalityReport) -> dict:
    return {
        "rule": rep.rule,
        "lhs": encode_number(rep.lhs),
        "rhs": encode_number(rep.rhs),
        "slack": encode_number(rep.slack),
        "epsilon": encode_number(rep.epsilon),
        "epsilon_prime": encode_number(rep.epsilon_prime),
        "verdict": rep.verdict,
    }


def experiment_report_doc(result: ExperimentResult, config_hash: str) -> dict:
    plan = result.plan
    budgets = {"epsilon": result.corrected.epsilon}
    if result.corrected.epsilon_prime is not None:
        budgets["epsilon_prime"] = result.corrected.epsilon_prime
    doc = {
        "schema": "bellhv-report/1",
        "version": VERSION,
        "command": "simulate",
        "config_sha256": config_hash,
        "seed": plan.seed,
        "numeric": "rational" if plan.exact else "float",
        "mode": "stochastic" if plan.stochastic else "deterministic",
        "n": plan.n,
        "frequency_covariations": {p: encode_number(v) for p, v in result.frequency.items()},
        "distributions": {p: encode_distribution(d) for p, d in result.distributions.items()},
        "deltas": {f"{x}:{y}": encode_number(v) for (x, y), v in result.deltas.items()},
        "sigmas": None if result.sigmas is None else
                  {p: encode_number(v) for p, v in result.sigmas.items()},
        "epsilon_estimate": encode_number(result.epsilon_estimate),
        "checks": {
            "classical": report_to_doc(result.classical),
            "corrected": report_to_doc(result.corrected),
        },
        "instance": instance_to_doc(result.instance, budgets=budgets),
    }
    return doc


def search_result_doc(result: SearchResult, config_hash: str) -> dict:
    prob = result.problem
    return {
        "schema": "bellhv-search/1",
        "version": VERSION,
        "config_sha256": config_hash,
        "task": "maximize",
        "mode": prob.mode,
        "m": prob.m,
        "l": prob.l,
        "method": prob.method,
        "epsilon": encode_number(prob.epsilon),
        "epsilon_prime": encode_number(prob.epsilon_prime),
        "violation": encode_number(result.violation),
        "budget_use": {k: encode_number(v) for k, v in result.budget_use.items()},
        "certificate": {k: encode_number(v) for k, v in result.certificate.items()},
        "notes": {k: encode_number(v) for k, v in result.notes.items()},
        "instance": instance_to_doc(
            result.instance,
            budgets={"epsilon": prob.epsilon, "epsilon_prime": prob.epsilon_prime}
            if prob.mode == "stochastic" else {"epsilon": prob.epsilon}),
    }


def hunt_report_doc(report: HuntReport, config_hash: str) -> dict:
    return {
        "schema": "bellhv-hunt/1",
        "version": VERSION,
        "config_sha256": config_hash,
        "task": "hunt",
        "target": report.target,
        "found": report.found,
        "total_instances": report.total_instances,
        "best_margin": encode_number(report.best_margin),
        "cells": [
            {
                "dims": list(c.dims),
                "epsilon": encode_number(c.epsilon),
                "epsilon_prime": encode_number(c.epsilon_prime),
                "instances": c.instances,
                "best_margin": encode_number(c.best_margin),
            }
            for c in report.cells
        ],
        "counterexample": None if not report.found else instance_to_doc(report.counterexample),
        "counterexample_cell": None if not report.found else
                               [encode_number(x) for x in report.counterexample_cell],
    }


def convergence_doc(table: ConvergenceTable, config_hash: str) -> dict:
    return {
        "schema": "bellhv-converge/1",
        "version": VERSION,
        "config_sha256": config_hash,
        "seed": table.seed,
        "trials": table.trials,
        "rows": [{"n": r.n, "median_delta": r.median_delta} for r in table.rows],
        "decay_factor": table.decay_factor(),
        "decaying": table.is_decaying(),
    }
