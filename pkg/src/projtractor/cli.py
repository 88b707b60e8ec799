"""Command-line entry point: load a geometry file, run an analysis, emit a report.

Exit codes: 0 ok, 2 schema/parse/usage error, 3 evaluation error,
4 indeterminate rank, 5 biconditional alarm, 6 algebraic degeneracy.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from .errors import (
    AlgebraicDegeneracyError,
    ExprSyntaxError,
    GeometryFileError,
    OrderTooHighError,
    ProjTractorError,
    SingularSchoutenError,
    ZeroTauError,
)
from .exprdsl import Num, jet as J, parse
from .geometry import (
    ChartGeometry,
    christoffels_from_metric,
    curvature_pack,
    metric_jets,
    scalar_curvature,
    special_connection,
    specialize_connection,
)
from . import metrizability as M
from .solver import DEFAULT_ORDER_LIMIT, ProlongationField, dimension_bound
from .tractor import splitting_L

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_EVAL = 3
EXIT_INDETERMINATE = 4
EXIT_ALARM = 5
EXIT_DEGENERATE = 6

COMMANDS = ("analyze", "metrizability", "check-normal", "correspond")


class UsageError(ProjTractorError):
    pass


# -- loading -----------------------------------------------------------------------

def load_schema(name):
    text = resources.files("projtractor").joinpath("schema", f"{name}-v1.json").read_text()
    return json.loads(text)


def _parse_entry(value, variables, path):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Num(float(value))
    try:
        return parse(value, variables)
    except ExprSyntaxError as exc:
        raise GeometryFileError(str(exc), path) from None


def _parse_array(arr, shape, variables, path):
    a = np.asarray(arr, dtype=object)
    if a.shape != shape:
        raise GeometryFileError(f"expected shape {list(shape)}, got {list(a.shape)}", path)
    out = np.empty(shape, dtype=object)
    for idx in np.ndindex(*shape):
        out[idx] = _parse_entry(a[idx], variables, path + list(idx))
    return out.tolist()


def _to_tuple(x):
    return tuple(_to_tuple(e) for e in x) if isinstance(x, list) else x


def geometry_from_document(doc):
    """Validate a GeometryFile document and build a ChartGeometry."""
    validator = jsonschema.Draft202012Validator(load_schema("geometry"))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise GeometryFileError(err.message, list(err.absolute_path))
    n = doc["dimension"]
    variables = doc["variables"]
    if len(variables) != n:
        raise GeometryFileError(f"dimension is {n} but {len(variables)} variables are given",
                                ["variables"])
    if len(doc["domain"]) != n:
        raise GeometryFileError(f"domain needs {n} intervals", ["domain"])
    for i, (lo, hi) in enumerate(doc["domain"]):
        if not lo < hi:
            raise GeometryFileError("interval must satisfy lo < hi", ["domain", i])
    kwargs = {}
    if "metric" in doc:
        m = _parse_array(doc["metric"], (n, n), variables, ["metric"])
        kwargs["metric"] = _to_tuple(m)
    else:
        c = _parse_array(doc["connection"]["Gamma"], (n, n, n), variables, ["connection", "Gamma"])
        kwargs["connection"] = _to_tuple(c)
    if "sigma" in doc:
        kwargs["sigma"] = _to_tuple(_parse_array(doc["sigma"], (n, n), variables, ["sigma"]))
    try:
        return ChartGeometry(
            name=doc["name"], variables=tuple(variables), domain=np.asarray(doc["domain"], float),
            samples=doc.get("samples", 25), seed=doc.get("seed", 0), **kwargs)
    except ValueError as exc:
        raise GeometryFileError(str(exc), []) from None


def load_geometry(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise GeometryFileError(f"cannot read file: {exc.strerror}", []) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GeometryFileError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})",
                                []) from None
    return geometry_from_document(doc)


# -- report helpers --------------------------------------------------------------------

def check(residual, tol, below=True):
    """A boolean verdict always carried with its residual and tolerance."""
    residual = float(residual)
    return {"value": bool(residual <= tol) if below else bool(residual > tol),
            "residual": residual, "tol": float(tol)}


def _spread(values):
    v = np.ravel(np.asarray(values, dtype=float))
    mean = float(np.mean(v))
    return {"mean": mean, "min": float(v.min()), "max": float(v.max()),
            "relative_spread": float((v.max() - v.min()) / max(abs(mean), 1e-300))}


def _sup(x):
    return M._sup(x)


# -- analyses -------------------------------------------------------------------------

def run_analyze(geom, points, opts):
    tol = opts.tol
    gamma = special_connection(geom, points, 2)
    curv = curvature_pack(gamma)
    out = {
        "curvature_sup_norms": {
            "riemann": _sup(curv.riemann), "ricci": _sup(curv.ricci),
            "schouten": _sup(curv.schouten), "weyl": _sup(curv.weyl), "cotton": _sup(curv.cotton),
        },
        "special_connection": check(_sup(J.einsum("...iia->...a", gamma)), tol),
        "projectively_flat": check(M.projective_flatness_residual(curv, geom.n)[0], tol),
        "flatness_tensor": "cotton" if geom.n == 2 else "weyl",
    }
    if geom.has_metric:
        g = metric_jets(geom, points, 3)
        lc = christoffels_from_metric(g, points)
        p_lc = curvature_pack(lc, cotton=False).schouten
        out["levi_civita"] = {
            "schouten_equals_metric": check(_sup(J.value_of(p_lc) - J.value_of(g)), tol),
            "scalar_curvature": _spread(J.value_of(scalar_curvature(g))),
            "einstein": check(M.einstein_residual(g)[0], tol),
        }
    return out, EXIT_OK


def _sigma_and_connection(geom, points, order):
    field = M.SigmaField.for_geometry(geom)
    gamma = special_connection(geom, points, order - 1)
    return field, field.jets(geom, points, order), gamma


def run_metrizability(geom, points, opts):
    tol = opts.tol
    field = ProlongationField(geom)
    report = dimension_bound(field, points, depth=opts.depth, order_limit=opts.order)
    out = {"obstruction": report.as_dict()}
    code = EXIT_INDETERMINATE if report.indeterminate else EXIT_OK
    if geom.has_metric or geom.sigma is not None:
        sf, sigma, gamma = _sigma_and_connection(geom, points, 3)
        curv = curvature_pack(gamma)
        lv = splitting_L(sigma, gamma, curv.schouten)
        out["sigma"] = {
            "provenance": sf.provenance,
            "solves_metrizability": check(M.metrizability_residual(sigma, gamma)[0], tol),
            "prolonged_system": check(M.psys_residual(lv, gamma, curv)[0], tol),
            "min_abs_det_sigma": float(np.abs(np.linalg.det(J.value_of(sigma))).min()),
        }
    return out, code


def run_check_normal(geom, points, opts):
    if not geom.has_metric and geom.sigma is None:
        raise UsageError("check-normal needs a metric or a sigma field")
    v = M.theorem_mt_verdict(geom, points, tol=opts.tol)
    tol = opts.tol
    out = {
        "solves_metrizability": check(v.D_res, tol),
        "normal": check(v.normality_res, tol),
        "einstein": check(v.einstein_res, tol),
        "projectively_flat": check(v.flatness_res, tol),
        "einstein_meaning": "constant Gauss curvature" if geom.n == 2 else "trace-free Ricci vanishes",
        "witness_threshold": v.witness_threshold,
        "ambiguous_residuals": v.ambiguous,
        "theorem_mt_consistent": v.consistent,
    }
    return out, EXIT_OK if v.consistent else EXIT_ALARM


def run_correspond(geom, points, opts):
    if not geom.has_metric and geom.sigma is None:
        raise UsageError("correspond needs a metric or a sigma field")
    tol = opts.tol
    sf, sigma, gamma = _sigma_and_connection(geom, points, 4)
    curv = curvature_pack(gamma, cotton=False)
    dets = M.det_L(sigma, gamma, curv.schouten)
    g = M.metric_from_sigma(sigma)
    scal = J.value_of(scalar_curvature(g))
    normal_res = M.normality_residual(sigma, gamma, curv.schouten)[0]
    out = {
        "det_L": _spread(dets),
        "det_L_constant": check(float(np.ptp(dets)), tol),
        "scalar_curvature": _spread(scal),
        "normal": check(normal_res, tol),
    }
    nonzero = np.abs(scal) > tol
    if np.all(nonzero):
        out["det_L_over_scalar_curvature"] = _spread(dets / scal)
    try:
        tau = M.mttoK_forward(sigma, gamma, curv.schouten, points)
    except AlgebraicDegeneracyError as exc:
        out["degenerate"] = {
            "message": str(exc),
            "max_abs_det_L": float(np.abs(dets).max()),
            "max_abs_scalar_curvature": float(np.abs(scal).max()),
        }
        return out, EXIT_DEGENERATE
    tau_sigma = J.value_of(M.tau_from_sigma(sigma))
    out["tau"] = _spread(J.value_of(tau))
    out["tau_over_tau_sigma"] = _spread(J.value_of(tau) / tau_sigma)
    try:
        back = M.mttoK_inverse(tau, gamma)
        out["roundtrip"] = check(_sup(J.value_of(back) - J.value_of(sigma)), 1e-6)
    except (ZeroTauError, SingularSchoutenError) as exc:
        out["roundtrip"] = {"available": False, "reason": str(exc)}
    return out, EXIT_OK


RUNNERS = {
    "analyze": run_analyze,
    "metrizability": run_metrizability,
    "check-normal": run_check_normal,
    "correspond": run_correspond,
}


# -- driver ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="projtractor",
        description="Projective tractor analysis of metrizability on a chart.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "analyze": "curvature summary and projective flatness",
        "metrizability": "solution-space bound and residuals of sigma",
        "check-normal": "normality versus Einstein verdict",
        "correspond": "tau correspondence and det L(sigma)",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("file", help="geometry JSON file")
        p.add_argument("--samples", type=int, default=None, help="number of sample points")
        p.add_argument("--seed", type=int, default=None, help="sampling seed")
        p.add_argument("--tol", type=float, default=M.DEFAULT_TOL, help="zero tolerance")
        p.add_argument("--depth", type=int, default=1, help="derived-constraint depth")
        p.add_argument("--order", type=int, default=DEFAULT_ORDER_LIMIT, help="maximum jet order")
        p.add_argument("--json", dest="json_out", default=None, help="write the report here")
        p.add_argument("--timings", action="store_true", help="include wall-clock timings")
    return parser


def _error_kind(exc):
    return type(exc).__name__


def run(opts):
    """Execute a parsed command; returns (report dict, exit code)."""
    report = {
        "tool": "projtractor",
        "version": __version__,
        "report_schema": 1,
        "command": opts.command,
    }
    t0 = time.perf_counter()
    try:
        geom = load_geometry(opts.file)
    except GeometryFileError as exc:
        report.update(geometry={"name": "", "dimension": 0, "kind": "metric"},
                      parameters={"samples": 0, "seed": 0, "tol": opts.tol},
                      error={"kind": _error_kind(exc), "message": str(exc), "path": list(exc.path)},
                      exit_code=EXIT_PARSE)
        return report, EXIT_PARSE
    samples = geom.samples if opts.samples is None else opts.samples
    seed = geom.seed if opts.seed is None else opts.seed
    report["geometry"] = {"name": geom.name, "dimension": geom.n,
                          "kind": "metric" if geom.has_metric else "connection"}
    report["parameters"] = {"samples": samples, "seed": seed, "tol": opts.tol,
                            "depth": opts.depth, "order": opts.order}
    points = geom.sample_points(samples, seed)
    t1 = time.perf_counter()
    try:
        body, code = RUNNERS[opts.command](geom, points, opts)
        report[opts.command.replace("-", "_")] = body
    except (UsageError, OrderTooHighError) as exc:
        report["error"] = {"kind": _error_kind(exc), "message": str(exc)}
        code = EXIT_PARSE
    except AlgebraicDegeneracyError as exc:
        report["error"] = {"kind": _error_kind(exc), "message": str(exc)}
        code = EXIT_DEGENERATE
    except (ProjTractorError, ValueError, ArithmeticError) as exc:
        report["error"] = {"kind": _error_kind(exc), "message": str(exc)}
        code = EXIT_EVAL
    report["exit_code"] = code
    if opts.timings:
        report["timings"] = {"load_s": t1 - t0, "analysis_s": time.perf_counter() - t1}
    return report, code


def dumps(report):
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def summary(report):
    lines = [f"{report['command']}: {report['geometry']['name'] or '<unloaded>'}"]
    if "error" in report:
        lines.append(f"  error ({report['error']['kind']}): {report['error']['message']}")
    body = report.get(report["command"].replace("-", "_"), {})

    def walk(d, prefix):
        for key in sorted(d):
            val = d[key]
            if isinstance(val, dict) and "value" in val and "residual" in val:
                lines.append(f"  {prefix}{key}: {'yes' if val['value'] else 'no'} "
                             f"(residual {val['residual']:.3e}, tol {val['tol']:.1e})")
            elif isinstance(val, dict) and key != "obstruction":
                walk(val, f"{prefix}{key}.")
    walk(body, "")
    obs = body.get("obstruction")
    if obs:
        state = "indeterminate" if obs["indeterminate"] else "determinate"
        lines.append(f"  dim_upper_bound: {obs['dim_upper_bound']} of N = {obs['N']} "
                     f"(rank {obs['rank']}, {state})")
    if "degenerate" in body:
        lines.append(f"  degenerate: {body['degenerate']['message']}")
    if "theorem_mt_consistent" in body:
        lines.append(f"  theorem_mt_consistent: {body['theorem_mt_consistent']}")
    lines.append(f"  exit code {report['exit_code']}")
    return "\n".join(lines)


def main(argv=None):
    parser = build_parser()
    opts = parser.parse_args(argv)
    report, code = run(opts)
    text = dumps(report)
    if opts.json_out:
        with open(opts.json_out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(summary(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
