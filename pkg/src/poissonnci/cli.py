"""Command-line orchestration: verify / lattice / flow with deterministic reports.

Reports are JSON (the text format is a projection of it) and byte-identical
for identical (system, seed, samples, tolerances, version): every check draws
its samples from a substream keyed by (check name, seed), and the wall_time_s
field is pinned to 0.0 in the report (measured time goes to stderr).

Exit codes: 0 all checks pass, 1 check or numerical failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from . import expr as expr_mod
from .geometry import Chart, ExprBivector, ExprField, jacobi_coordinate_residuals
from .nciverify import (
    CheckEntry,
    NciFamily,
    SamplerExhaustedError,
    VerifyReport,
    casimir_residual,
    completeness_spotcheck,
    involution_residuals,
    rank_drop_check,
    regularity_check,
    sample_points,
)
from .numkernel import LatticeRankError, StepExhaustionError, TrajectoryBlowupError
from .systems import BaseRecord, SYSTEM_NAMES, SystemBundle, get_system
from .torusflow import (
    FlowProbe,
    IncompleteLatticeError,
    NoPeriodFoundError,
    angle_relation_check,
    detect_lattice,
    flow,
)

__all__ = ["main", "run_verify", "run_lattice", "run_flow", "build_system_from_config", "ConfigError"]

_DEFAULT_TOL = {
    "jacobi": 1e-7,
    "involution": 1e-8,
    "regularity": 0.0,
    "casimir": 1e-8,
    "rank-drop": 0.0,
    "completeness": 1e-6,
    "angle-relations": 1e-8,
    "drift": 1e-8,
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config-defined systems


def _expect(doc: Mapping, key: str, kind, where: str):
    if key not in doc:
        raise ConfigError(f"{where}: missing required key {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise ConfigError(f"{where}: key {key!r} must be {kind.__name__ if hasattr(kind, '__name__') else kind}")
    return value


def _build_bivector(chart: Chart, entries: Sequence[Mapping], params: Mapping[str, float], where: str) -> ExprBivector:
    table: dict[tuple[int, int], str] = {}
    for idx, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: bivector entry {idx} must be an object")
        try:
            i, j, src = int(entry["i"]), int(entry["j"]), str(entry["expr"])
        except KeyError as err:
            raise ConfigError(f"{where}: bivector entry {idx} missing {err}") from err
        if not 0 <= i < j < chart.dim:
            raise ConfigError(f"{where}: bivector entry {idx} needs 0 <= i < j < {chart.dim}, got ({i}, {j})")
        if (i, j) in table:
            raise ConfigError(f"{where}: duplicate bivector entry ({i}, {j})")
        table[(i, j)] = src
    try:
        return ExprBivector(chart, where, table, params)
    except expr_mod.ParseError as err:
        raise ConfigError(f"{where}: bivector expression error: {err}") from err


def build_system_from_config(doc: Mapping) -> SystemBundle:
    """Validate a SystemConfig JSON document and assemble the bundle.

    Sampling boxes default to [0, 1) for periodic coordinates and [-2, 2]
    otherwise; the regular_predicate expression (accepted where value > 0)
    carves the regular locus out of that box.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    allowed = {"name", "coordinates", "periodic", "parameters", "bivector", "functions", "family", "rank", "regular_predicate", "base"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    name = _expect(doc, "name", str, "config")
    coords = _expect(doc, "coordinates", list, "config")
    if not coords or not all(isinstance(c, str) for c in coords):
        raise ConfigError("config: coordinates must be a nonempty list of strings")
    periodic = doc.get("periodic", [False] * len(coords))
    if not isinstance(periodic, list) or len(periodic) != len(coords) or not all(isinstance(b, bool) for b in periodic):
        raise ConfigError("config: periodic must be a boolean list matching coordinates")
    params = doc.get("parameters", {})
    if not isinstance(params, dict) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in params.values()):
        raise ConfigError("config: parameters must map names to numbers")
    try:
        chart = Chart(name, coords, periodic)
    except ValueError as err:
        raise ConfigError(f"config: {err}") from err

    pi = _build_bivector(chart, _expect(doc, "bivector", list, "config"), params, "config")

    functions = _expect(doc, "functions", dict, "config")
    fields = {}
    for fname, src in functions.items():
        try:
            codomain = "angle" if (fname in coords and periodic[coords.index(fname)]) else "real"
            fields[fname] = ExprField(chart, fname, str(src), params, codomain=codomain)
        except expr_mod.ParseError as err:
            raise ConfigError(f"config: function {fname!r}: {err}") from err

    family_names = _expect(doc, "family", list, "config")
    missing = [fname for fname in family_names if fname not in fields]
    if missing:
        raise ConfigError(f"config: family references undefined functions {missing}")
    rank = _expect(doc, "rank", int, "config")
    if rank != len(coords) - len(family_names):
        raise ConfigError(
            f"config: rank must equal dim - family size = {len(coords) - len(family_names)}, got {rank}"
        )
    try:
        family = NciFamily(pi, tuple(fields[fname] for fname in family_names), rank)
    except ValueError as err:
        raise ConfigError(f"config: {err}") from err

    predicate = None
    if "regular_predicate" in doc:
        try:
            pred_field = ExprField(chart, "regular_predicate", str(doc["regular_predicate"]), params)
        except expr_mod.ParseError as err:
            raise ConfigError(f"config: regular_predicate: {err}") from err
        predicate = lambda vals: pred_field.value_at(vals) > 0.0

    base = None
    if "base" in doc:
        bdoc = doc["base"]
        if not isinstance(bdoc, dict):
            raise ConfigError("config: base must be an object")
        bcoords = _expect(bdoc, "coordinates", list, "config.base")
        try:
            bchart = Chart(name + "-base", bcoords)
        except ValueError as err:
            raise ConfigError(f"config.base: {err}") from err
        bpi = _build_bivector(bchart, _expect(bdoc, "bivector", list, "config.base"), params, "config.base")
        proj_src = _expect(bdoc, "projection", list, "config.base")
        if len(proj_src) != len(bcoords):
            raise ConfigError("config.base: projection needs one expression per base coordinate")
        try:
            proj_fields = [ExprField(chart, f"proj{i}", str(src), params) for i, src in enumerate(proj_src)]
        except expr_mod.ParseError as err:
            raise ConfigError(f"config.base: projection: {err}") from err
        base = BaseRecord(bchart, bpi, lambda vals: np.array([f.value_at(vals) for f in proj_fields]))

    boxes = tuple((0.0, 1.0) if per else (-2.0, 2.0) for per in periodic)
    # lattice detection on config systems assumes the periodic coordinates
    # span the fibers; detection reports an incomplete lattice otherwise
    has_torus = any(periodic)
    return SystemBundle(
        name=name,
        chart=chart,
        pi=pi,
        family=family,
        sample_boxes=boxes,
        predicate=predicate,
        compact_fibers=has_torus,
        base=base,
        lattice_fields=tuple(fields[fname] for fname in family_names[:rank]) if has_torus else None,
        params=dict(params),
        notes="config-defined system",
    )


# ---------------------------------------------------------------------------
# suite runners


def _tol(name: str, bundle: SystemBundle, overrides: Mapping[str, float]) -> float:
    if name in overrides:
        return float(overrides[name])
    if name in bundle.tolerances:
        return float(bundle.tolerances[name])
    return _DEFAULT_TOL.get(name, 1e-8)


def run_verify(bundle: SystemBundle, seed: int, samples: int, tol_overrides: Mapping[str, float] | None = None) -> VerifyReport:
    """Full structural suite: Jacobi axioms plus every applicable family check."""
    tol_overrides = dict(tol_overrides or {})
    report = VerifyReport()

    tol = _tol("jacobi", bundle, tol_overrides)
    plan = bundle.plan(seed, samples).with_(predicate=None)  # the axiom holds on the whole box
    worst, worst_pt = 0.0, None
    for pt in sample_points(bundle.chart, plan, "jacobi"):
        _, rel = jacobi_coordinate_residuals(bundle.pi, pt.values)
        if rel >= worst:
            worst, worst_pt = rel, pt
    report.add(
        CheckEntry("jacobi", worst <= tol, worst, tol, list(worst_pt.values), "max relative coordinate-triple residual")
    )

    if bundle.family is not None:
        fam = bundle.family
        tol = _tol("involution", bundle, tol_overrides)
        res, pts = involution_residuals(fam, bundle.plan(seed, samples))
        worst = float(np.max(res[: fam.rank, :])) if fam.rank else 0.0
        report.add(
            CheckEntry(
                "involution",
                worst <= tol,
                worst,
                tol,
                None,
                f"max |{{f_i, f_j}}| over rows i <= r = {fam.rank}; full-matrix max {float(np.max(res)):.3e}",
            )
        )

        tol = _tol("regularity", bundle, tol_overrides)
        failures = 0
        worst_pt = pts[0]
        for pt in pts:
            rec = regularity_check(fam, pt)
            if not rec.passed:
                failures += 1
                worst_pt = pt
        report.add(
            CheckEntry(
                "regularity",
                failures == 0,
                float(failures),
                tol,
                list(worst_pt.values),
                f"rank(df) = {fam.s} and rank(X_f) = {fam.rank} at every accepted sample",
            )
        )

    if bundle.casimirs:
        tol = _tol("casimir", bundle, tol_overrides)
        worst, worst_pt = 0.0, None
        for f in bundle.casimirs:
            v, pt = casimir_residual(bundle.pi, f, bundle.plan(seed, samples))
            if v >= worst:
                worst, worst_pt = v, pt
        report.add(
            CheckEntry("casimir", worst <= tol, worst, tol, list(worst_pt.values), f"{len(bundle.casimirs)} designated Casimir field(s)")
        )

    if bundle.base is not None and bundle.family is not None:
        entry = rank_drop_check(bundle.family, bundle.base.pi, bundle.base.projection, bundle.plan(seed, samples))
        entry.tolerance = _tol("rank-drop", bundle, tol_overrides)
        report.add(entry)

    if bundle.family is not None and bundle.family.s > bundle.family.rank:
        tol = _tol("completeness", bundle, tol_overrides)
        report.add(completeness_spotcheck(bundle.family, bundle.plan(seed, samples), tol=tol))

    if bundle.actions and bundle.angles:
        tol = _tol("angle-relations", bundle, tol_overrides)
        pts = sample_points(bundle.chart, bundle.plan(seed, samples), "angle-relations")
        entry, _ = angle_relation_check(bundle.pi, bundle.actions, bundle.angles, pts, tol=tol)
        report.add(entry)

    for extra in bundle.extra_checks:
        tol = _tol(extra.name, bundle, tol_overrides)
        report.add(extra.run(bundle, seed, samples, tol))
    return report


def _report_skeleton(bundle: SystemBundle, seed: int, samples: int) -> dict:
    return {
        "tool_version": __version__,
        "system": bundle.name,
        "seed": int(seed),
        "samples": int(samples),
        "checks": [],
        # pinned so identical invocations produce byte-identical reports;
        # measured elapsed time is printed to stderr instead
        "wall_time_s": 0.0,
    }


def _entry_dict(entry: CheckEntry) -> dict:
    return {
        "name": entry.name,
        "pass": bool(entry.passed),
        "max_residual": float(entry.max_residual),
        "tolerance": float(entry.tolerance),
        "worst_point": None if entry.worst_point is None else [float(v) for v in entry.worst_point],
    }


def run_lattice(
    bundle: SystemBundle,
    seed: int,
    samples: int,
    tol_overrides: Mapping[str, float] | None = None,
    probe: FlowProbe = FlowProbe(),
    x0: Sequence[float] | None = None,
) -> tuple[dict, int]:
    """Detect the action lattice at a base point; returns (report, exit_code)."""
    report = _report_skeleton(bundle, seed, samples)
    if bundle.family is None or not bundle.compact_fibers or not bundle.lattice_fields:
        raise ConfigError(f"system {bundle.name!r} has no compact-fiber family for lattice detection")
    if x0 is not None:
        base_pt = bundle.chart.point(x0)
    elif bundle.name == "euler-poinsot":
        from .systems.euler_poinsot import ep_lattice_base_point

        base_pt = ep_lattice_base_point(bundle, seed)
    else:
        base_pt = sample_points(bundle.chart, bundle.plan(seed, 1), "lattice-base")[0]
    try:
        basis = detect_lattice(bundle.pi, bundle.lattice_fields, base_pt, probe)
    except IncompleteLatticeError as err:
        report["lattice"] = {
            "fields": [f.name for f in bundle.lattice_fields],
            "base_point": [float(v) for v in base_pt.values],
            "basis": [[float(v) for v in vec] for vec in err.partial],
            "det": None,
            "residuals": [],
        }
        # residual unavailable: -1.0 keeps the report finite per schema
        report["checks"].append(
            _entry_dict(CheckEntry("lattice-return", False, -1.0, probe.return_tol, list(base_pt.values)))
        )
        return report, 1
    worst = float(max(basis.residuals))
    report["lattice"] = {
        "fields": list(basis.field_names),
        "base_point": [float(v) for v in basis.base_point.values],
        "basis": [[float(v) for v in basis.matrix[:, k]] for k in range(basis.matrix.shape[1])],
        "det": float(basis.det),
        "residuals": [float(rr) for rr in basis.residuals],
    }
    entry = CheckEntry("lattice-return", worst <= probe.return_tol, worst, probe.return_tol, list(base_pt.values))
    report["checks"].append(_entry_dict(entry))
    return report, 0 if entry.passed else 1


def run_flow(
    bundle: SystemBundle,
    field_name: str,
    t_final: float,
    seed: int,
    samples: int,
    tol_overrides: Mapping[str, float] | None = None,
    x0: Sequence[float] | None = None,
) -> tuple[dict, int]:
    """Flow a named field; report the endpoint and conserved-quantity drift."""
    tol_overrides = dict(tol_overrides or {})
    report = _report_skeleton(bundle, seed, samples)
    try:
        h = bundle.field_by_name(field_name)
    except KeyError as err:
        raise ConfigError(str(err)) from err
    base_pt = bundle.chart.point(x0) if x0 is not None else sample_points(bundle.chart, bundle.plan(seed, 1), "flow-base")[0]
    try:
        end = flow(bundle.pi, h, base_pt, t_final)
    except (TrajectoryBlowupError, StepExhaustionError) as err:
        report["flow"] = {"field": field_name, "t": float(t_final), "error": str(err)}
        # drift unavailable after a blowup: -1.0 keeps the report finite
        report["checks"].append(_entry_dict(CheckEntry("drift", False, -1.0, _tol("drift", bundle, tol_overrides))))
        return report, 1
    drift_fields = list(bundle.family.fields) if bundle.family is not None else [h]
    drift = {f.name: abs(f.value(end) - f.value(base_pt)) for f in drift_fields}
    flow_section = {
        "field": field_name,
        "t": float(t_final),
        "x0": [float(v) for v in base_pt.values],
        "endpoint": [float(v) for v in end.values],
        "drift": {k: float(v) for k, v in sorted(drift.items())},
    }
    if bundle.actions and bundle.angles:
        for j, action in enumerate(bundle.actions):
            if action.name == field_name:
                from .geometry import wrap_half

                advance = wrap_half(bundle.angles[j].value(end) - bundle.angles[j].value(base_pt))
                flow_section["angle_advance"] = {"angle": bundle.angles[j].name, "advance": float(advance)}
                break
    report["flow"] = flow_section
    tol = _tol("drift", bundle, tol_overrides)
    worst = max(drift.values()) if drift else 0.0
    entry = CheckEntry("drift", worst <= tol, float(worst), tol, list(base_pt.values))
    report["checks"].append(_entry_dict(entry))
    return report, 0 if entry.passed else 1


# ---------------------------------------------------------------------------
# rendering


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def render_text(report: dict) -> str:
    lines = [f"system {report['system']}  seed {report['seed']}  samples {report['samples']}  v{report['tool_version']}"]
    for check in report["checks"]:
        status = "PASS" if check["pass"] else "FAIL"
        lines.append(f"  {status}  {check['name']:<18} max_residual {check['max_residual']:.3e}  tol {check['tolerance']:.1e}")
    if "lattice" in report:
        lat = report["lattice"]
        lines.append(f"  lattice fields: {', '.join(lat['fields'])}")
        for vec in lat["basis"]:
            lines.append("    column " + "  ".join(f"{v:+.9f}" for v in vec))
        if lat["det"] is not None:
            lines.append(f"    |det| {abs(lat['det']):.9f}  residuals " + " ".join(f"{rr:.2e}" for rr in lat["residuals"]))
    if "flow" in report:
        fl = report["flow"]
        if "error" in fl:
            lines.append(f"  flow {fl['field']} for t={fl['t']}: ERROR {fl['error']}")
        else:
            lines.append(f"  flow {fl['field']} for t={fl['t']}")
            lines.append("    endpoint " + " ".join(f"{v:+.9f}" for v in fl["endpoint"]))
            for fname, value in fl["drift"].items():
                lines.append(f"    drift {fname:<10} {value:.3e}")
            if "angle_advance" in fl:
                aa = fl["angle_advance"]
                lines.append(f"    angle {aa['angle']} advanced by {aa['advance']:+.9f}")
    lines.append("all checks passed" if all(c["pass"] for c in report["checks"]) else "FAILURES present")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument parsing


def _parse_kv(pairs: Sequence[str], flag: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"{flag} expects NAME=VALUE, got {pair!r}")
        key, _, value = pair.partition("=")
        try:
            out[key.strip()] = float(value)
        except ValueError as err:
            raise ConfigError(f"{flag} {key!r}: {value!r} is not a number") from err
    return out


def _add_common(sub: argparse.ArgumentParser) -> None:
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--system", choices=SYSTEM_NAMES, help="built-in system name")
    group.add_argument("--config", help="path to a SystemConfig JSON document")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--samples", type=int, default=50)
    sub.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE", help="tolerance override (repeatable)")
    sub.add_argument("--param", action="append", default=[], metavar="NAME=VALUE", help="system parameter (repeatable)")
    sub.add_argument("--n", type=int, help="shorthand for --param n=N")
    sub.add_argument("--format", choices=("json", "text"), default="json")
    sub.add_argument("--out", help="write the report to this path instead of stdout")


def _resolve_bundle(args) -> SystemBundle:
    params = _parse_kv(args.param, "--param")
    if args.n is not None:
        params["n"] = args.n
    if args.system:
        try:
            return get_system(args.system, params)
        except (KeyError, ValueError) as err:
            raise ConfigError(str(err)) from err
    if params:
        raise ConfigError("--param applies to built-in systems; config files carry their own parameters")
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    return build_system_from_config(doc)


def _emit(report: dict, args) -> None:
    payload = render_json(report) if args.format == "json" else render_text(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="poissonnci", description="NCI system verification workbench")
    subs = parser.add_subparsers(dest="command", required=True)

    p_verify = subs.add_parser("verify", help="run the structural verification suite")
    _add_common(p_verify)

    p_lattice = subs.add_parser("lattice", help="detect the action lattice on a compact fiber")
    _add_common(p_lattice)
    p_lattice.add_argument("--x0", help="comma-separated base point coordinates")
    p_lattice.add_argument("--return-tol", type=float, default=1e-6)
    p_lattice.add_argument("--t-max", type=float, default=12.0)
    p_lattice.add_argument("--coarse-step", type=float, default=0.05)

    p_flow = subs.add_parser("flow", help="integrate a Hamiltonian flow and report drift")
    _add_common(p_flow)
    p_flow.add_argument("--field", required=True, help="name of the Hamiltonian field")
    p_flow.add_argument("--T", type=float, required=True, help="flow time")
    p_flow.add_argument("--x0", help="comma-separated start point coordinates")

    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 2 if err.code not in (0, None) else 0

    started = time.monotonic()
    try:
        bundle = _resolve_bundle(args)
        tol_overrides = _parse_kv(args.tol, "--tol")
        x0 = [float(v) for v in args.x0.split(",")] if getattr(args, "x0", None) else None

        if args.command == "verify":
            verify = run_verify(bundle, args.seed, args.samples, tol_overrides)
            report = _report_skeleton(bundle, args.seed, args.samples)
            report["checks"] = [_entry_dict(e) for e in verify.entries]
            code = 0 if verify.all_pass else 1
        elif args.command == "lattice":
            probe = FlowProbe(return_tol=args.return_tol, t_max=args.t_max, coarse_step=args.coarse_step)
            report, code = run_lattice(bundle, args.seed, args.samples, tol_overrides, probe, x0)
        else:
            report, code = run_flow(bundle, args.field, args.T, args.seed, args.samples, tol_overrides, x0)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, SamplerExhaustedError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (TrajectoryBlowupError, StepExhaustionError, NoPeriodFoundError, LatticeRankError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 1

    _emit(report, args)
    print(f"elapsed {time.monotonic() - started:.2f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
