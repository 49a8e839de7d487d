"""Command-line front end: one JSON config in, one report out.

Exit status is 0 when the check passes, 2 when it fails and 1 for usage,
I/O or configuration errors.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
from importlib import resources
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np
from scipy.linalg import subspace_angles

from . import control, regularity, scale_ops, schrodinger, variational
from .convergence import EXACT_FLOOR, fit_order, parallel_map
from .errors import ScaleCalcError
from .expr import ClosedForm, ExpressionError
from .gridfn import AnalyticFunction, Grid, GridFunction, evaluate, sample

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

#: fields each command needs on top of the schema
REQUIRED = {
    "derive": ("grid", "eps", "function"),
    "leibniz": ("grid", "eps", "f", "g"),
    "integral-check": ("grid", "eps", "function"),
    "holder": ("grid", "ladder", "function"),
    "lemma-scaling": ("grid", "ladder", "h_fn", "f", "alpha", "beta"),
    "el-check": ("grid", "eps", "lagrangian", "trajectory"),
    "dbr-check": ("grid", "eps", "lagrangian", "trajectory"),
    "invariance": ("grid", "eps", "lagrangian", "trajectory", "generator", "subintervals"),
    "noether": ("grid", "eps", "lagrangian", "trajectory", "generator"),
    "symmetry-search": ("grid", "eps", "lagrangian", "probes", "degree"),
    "pontryagin": ("grid", "eps", "system", "triple"),
    "reduction-check": ("grid", "eps", "lagrangian", "trajectory"),
    "hamiltonian-noether": ("grid", "eps", "system", "triple", "control_generator"),
    "schrodinger": ("wave", "params"),
}


class ConfigError(ValueError):
    pass


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def load_schema() -> dict:
    return json.loads(resources.files("scalecalc").joinpath("config.schema.json").read_text())


def _field(path) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in path)


def validate(config: dict) -> None:
    """Schema plus per-command checks; errors name the offending field."""
    v = jsonschema.Draft202012Validator(load_schema())
    err = jsonschema.exceptions.best_match(v.iter_errors(config))
    if err is not None:
        raise ConfigError(f"{_field(err.absolute_path)}: {err.message}")
    cmd = config["command"]
    for name in REQUIRED[cmd]:
        if name not in config:
            raise ConfigError(f"$.{name}: required by command {cmd!r}")
    if cmd == "schrodinger":
        mode = config["mode"]
        need = ("probe",) if mode[1] == "residual" else ("grid", "path")
        for name in need:
            if name not in config:
                raise ConfigError(f"$.{name}: required by schrodinger {mode[1]}")
        if mode[0] == "linear" and "hbar" not in config["params"]:
            raise ConfigError("$.params.hbar: required by the linear variant")
        if mode[0] == "nonlinear" and "gamma" not in config["params"]:
            raise ConfigError("$.params.gamma: required by the nonlinear variant")
    if "ladder" in config:
        ladder_ks(config["ladder"])
    if "lagrangian" in config:
        lag = config["lagrangian"]
        if lag["kind"] == "expression" and "expr" not in lag:
            raise ConfigError("$.lagrangian.expr: required for kind 'expression'")


def ladder_ks(spec: dict) -> list[int]:
    ratio = spec.get("ratio", 2)
    ks, k = [], spec["k_min"]
    while k <= spec["k_max"]:
        ks.append(k)
        k *= ratio
    if len(ks) < 4:
        raise ConfigError(f"$.ladder: order fits need at least 4 rungs, got {len(ks)}")
    return ks


def make_grid(spec: dict) -> Grid:
    return Grid.over(float(spec["a"]), float(spec["b"]), float(spec["h"]), int(spec.get("n_pad", 0)))


def make_function(spec: dict, grid: Grid, base: Path) -> GridFunction:
    """Sample a function spec on ``grid``."""
    kind = spec["kind"]
    if kind == "expression":
        f = ClosedForm(spec["expr"], ("t",))
        return evaluate(lambda t: f(t), grid)
    if kind == "product":
        out = make_function(spec["factors"][0], grid, base)
        for fs in spec["factors"][1:]:
            out = out * make_function(fs, grid, base)
        return out
    if kind == "csv":
        gf = GridFunction.from_csv((base / spec["path"]).read_text(), int(spec.get("n_pad", 0)))
        if gf.grid != grid:
            raise ConfigError(f"$.path: CSV grid {gf.grid} differs from the configured grid {grid}")
        return gf
    return sample(analytic(spec), grid)


def analytic(spec: dict) -> AnalyticFunction:
    if spec["kind"] in ("expression", "product", "csv"):
        raise ConfigError(f"function kind {spec['kind']!r} has no closed-form catalog entry")
    return AnalyticFunction.from_dict(spec)


def _c(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _sup(f: GridFunction) -> float:
    return float(np.max(np.abs(f.core())))


# ---------------------------------------------------------------------------
# command handlers: each returns (passed, result, table)
# ---------------------------------------------------------------------------

def _table_series(grid: Grid, columns: dict[str, GridFunction]):
    header = ["t"] + [f"{n}_{p}" for n in columns for p in ("re", "im")]
    rows = []
    for i, t in enumerate(grid.core_nodes):
        row = [t]
        for f in columns.values():
            v = f.core()[i]
            row += [v.real, v.imag]
        rows.append(row)
    return header, rows


def cmd_derive(cfg, grid, base):
    k = cfg["eps"]["k"]
    f = make_function(cfg["function"], grid, base)
    cols = {"delta_plus": scale_ops.delta_plus(f, k), "delta_minus": scale_ops.delta_minus(f, k),
            "box": scale_ops.scale_derivative(f, k), "boxminus": scale_ops.conj_scale_derivative(f, k)}
    result = {"eps": k * grid.h, "sup": {n: _sup(g) for n, g in cols.items()}}
    passed = True
    kind = cfg["function"]["kind"]
    if kind not in ("expression", "product", "csv") and analytic(cfg["function"]).differentiable:
        fn = analytic(cfg["function"])
        exact = evaluate(lambda t: fn.derivative(t, 1), grid)
        gap = _sup(cols["box"] - exact)
        result["classical_gap"] = gap
        if "tolerance" in cfg:
            passed = gap <= cfg["tolerance"]
    return passed, result, _table_series(grid, cols)


def cmd_leibniz(cfg, grid, base):
    k = cfg["eps"]["k"]
    f = make_function(cfg["f"], grid, base)
    g = make_function(cfg["g"], grid, base)
    reps = {v: scale_ops.leibniz(f, g, k, v) for v in scale_ops.VARIANTS}
    d, p = reps[scale_ops.DERIVED_EXACT], reps[scale_ops.PAPER_PRINTED]
    tol = cfg.get("tolerance", 1e-12)
    result = {v: r.to_dict() for v, r in reps.items()}
    result["discrepancy"] = _sup(p.correction - d.correction)
    result["tolerance"] = tol
    table = _table_series(grid, {"residual_derived": d.lhs - d.main_terms - d.correction,
                                 "residual_printed": p.lhs - p.main_terms - p.correction})
    return d.relative_residual <= tol, result, table


def cmd_integral_check(cfg, grid, base):
    k = cfg["eps"]["k"]
    f = make_function(cfg["function"], grid, base)
    a, b = cfg.get("interval", [grid.a, grid.b])
    ref = analytic(cfg["function"]) if cfg.get("reference", False) else None
    rep = scale_ops.integral_identity_check(f, k, a, b, reference=ref)
    tol = cfg.get("tolerance", 1e-3)
    return rep.gap <= tol, {**rep.to_dict(), "tolerance": tol}, None


def cmd_holder(cfg, grid, base):
    f = make_function(cfg["function"], grid, base)
    est = regularity.holder_estimate(f, ladder_ks(cfg["ladder"]))
    passed = est.reliable
    res = est.to_dict()
    if "expect_alpha" in cfg:
        tol = cfg.get("alpha_tol", 0.1)
        res["expect_alpha"], res["alpha_tol"] = cfg["expect_alpha"], tol
        passed = passed and abs(est.alpha_hat - cfg["expect_alpha"]) <= tol
    table = (["eps", "oscillation"], [list(r) for r in est.ladder])
    return passed, res, table


def cmd_lemma_scaling(cfg, grid, base):
    alpha, beta = cfg["alpha"], cfg["beta"]
    h_fn = make_function(cfg["h_fn"], grid, base)
    fbase = make_function(cfg["f"], grid, base)
    expo = cfg.get("f_exponent", alpha - 1)
    rep = regularity.lemma_scaling_check(h_fn, lambda k: fbase * (k * grid.h) ** expo,
                                         alpha, beta, ladder_ks(cfg["ladder"]))
    return rep.passed, {**rep.to_dict(), "f_exponent": expo}, None


def _lagrangian(cfg) -> variational.Lagrangian:
    return variational.Lagrangian.from_dict(cfg["lagrangian"])


def _order_check(cfg, grid, sup_at: Callable[[int], float], scale_at, label):
    ks = ladder_ks(cfg["ladder"])
    sups = parallel_map(sup_at, ks)
    floor = EXACT_FLOOR * max(1.0, max(parallel_map(scale_at, ks)))
    fit = fit_order([k * grid.h for k in ks], sups, floor=floor, label=label)
    return fit


def _residual_command(cfg, grid, base, residual, label):
    L = _lagrangian(cfg)
    q = make_function(cfg["trajectory"], grid, base)
    k = cfg["eps"]["k"]
    r = residual(L, q, k)
    sup = _sup(r)
    tol = cfg.get("tolerance", variational.default_tolerance(L, q, k))
    result = {"sup_residual": sup, "tolerance": tol, "eps": k * grid.h}
    passed = sup <= tol
    if "ladder" in cfg:
        scale = lambda kk: _sup(evaluate(L.d3, grid, q, scale_ops.scale_derivative(q, kk)))  # noqa: E731
        fit = _order_check(cfg, grid, lambda kk: _sup(residual(L, q, kk)), scale, label)
        min_order = cfg.get("min_order", 0.95)
        result["order"] = fit.to_dict()
        result["min_order"] = min_order
        passed = passed and fit.at_least(min_order)
    return passed, result, _table_series(grid, {"residual": r})


def cmd_el_check(cfg, grid, base):
    return _residual_command(cfg, grid, base, variational.el_residual, "el residual")


def cmd_dbr_check(cfg, grid, base):
    variant = cfg.get("variant", scale_ops.DERIVED_EXACT)
    res = lambda L, q, k: variational.dbr_residual(L, q, k, variant)  # noqa: E731
    passed, result, table = _residual_command(cfg, grid, base, res, f"dbr residual ({variant})")
    result["variant"] = variant
    return passed, result, table


def cmd_invariance(cfg, grid, base):
    L = _lagrangian(cfg)
    q = make_function(cfg["trajectory"], grid, base)
    gen = variational.Generator.from_dict(cfg["generator"])
    subs = [tuple(s) for s in cfg["subintervals"]]
    vals = variational.invariance_residual(L, q, gen, cfg["eps"]["k"], subs)
    tol = cfg.get("tolerance", 1e-8)
    result = {"integrals": [{"interval": list(s), "value": _c(v)} for s, v in zip(subs, vals)],
              "tolerance": tol}
    return variational.is_invariant(vals, subs, tol), result, None


def _constancy_pass(rep, tol):
    scale = max(1.0, float(np.max(np.abs(rep.values))))
    tol = EXACT_FLOOR * scale if tol is None else tol
    return rep.max_drift <= tol, tol


def cmd_noether(cfg, grid, base):
    L = _lagrangian(cfg)
    q = make_function(cfg["trajectory"], grid, base)
    gen = variational.Generator.from_dict(cfg["generator"])
    ks = ladder_ks(cfg["ladder"]) if "ladder" in cfg else None
    rep = variational.noether_constant(L, q, gen, cfg["eps"]["k"], ladder=ks)
    passed, tol = _constancy_pass(rep, cfg.get("tolerance"))
    result = rep.to_dict()
    c0 = rep.initial
    result["C"] = c0.real if c0.imag == 0 else _c(c0)
    result["tolerance"] = tol
    if rep.eps_order is not None:
        min_order = cfg.get("min_order", 0.95)
        result["min_order"] = min_order
        passed = passed or rep.eps_order.at_least(min_order)
    return passed, result, _table_series(grid, {"C": rep.series})


def _angle(result: variational.SymmetrySearchResult, vecs: list[np.ndarray]) -> float:
    if not len(result.coefficients):
        return float(np.pi / 2)
    return float(np.max(subspace_angles(np.array(vecs).T, result.coefficients.T)))


def cmd_symmetry_search(cfg, grid, base):
    L = _lagrangian(cfg)
    probes = [make_function(p, grid, base) for p in cfg["probes"]]
    res = variational.symmetry_search(L, probes, cfg["degree"], cfg["eps"]["k"])
    out = res.to_dict()
    passed = res.status == "OK"
    tol = cfg.get("tolerance", 1e-6)
    checks = []
    for want, name in ((True, "expect"), (False, "absent")):
        for g in cfg.get(name, []):
            ang = _angle(res, [res.embed(g["tau"], g["xi"])])
            ok = (ang <= tol) if want else (ang > tol)
            checks.append({"generator": g, "in_null_space": want, "angle": ang, "ok": ok})
            passed = passed and ok
    if cfg.get("expect"):
        ang = _angle(res, [res.embed(g["tau"], g["xi"]) for g in cfg["expect"]])
        out["expected_span_angle"] = ang
        passed = passed and ang <= tol
    out["checks"] = checks
    out["tolerance"] = tol
    return passed, out, None


def _triple(cfg, grid, base) -> control.PontryaginTriple:
    t = cfg["triple"]
    return control.PontryaginTriple(*(make_function(t[n], grid, base) for n in ("q", "u", "p")))


def cmd_pontryagin(cfg, grid, base):
    sys_ = control.ControlSystem.from_dict(cfg["system"])
    tr = _triple(cfg, grid, base)
    k = cfg["eps"]["k"]
    res = control.pontryagin_residuals(sys_, tr, k)
    sups = res.sup()
    tol = cfg.get("tolerance", 10.0 * k * grid.h * sys_.K)
    table = _table_series(grid, {"state": res.state, "adjoint": res.adjoint,
                                 "stationary": res.stationary})
    return max(sups.values()) <= tol, {"sup_residual": sups, "tolerance": tol}, table


def cmd_reduction_check(cfg, grid, base):
    L = _lagrangian(cfg)
    q = make_function(cfg["trajectory"], grid, base)
    rep = control.reduction_check(L, q, cfg["eps"]["k"])
    tol = cfg.get("tolerance", 1e-12)
    result = {"el_equiv_gap": rep.el_equiv_gap, "sup_el_residual": _sup(rep.el),
              "tolerance": tol}
    return rep.el_equiv_gap <= tol, result, _table_series(grid, {"p": rep.p_defined,
                                                                  "adjoint": rep.adjoint,
                                                                  "el": rep.el})


def cmd_hamiltonian_noether(cfg, grid, base):
    sys_ = control.ControlSystem.from_dict(cfg["system"])
    tr = _triple(cfg, grid, base)
    gen = control.ControlGenerator.from_dict(cfg["control_generator"])
    rep = control.hamiltonian_noether_constant(sys_, tr, gen, cfg["eps"]["k"])
    passed, tol = _constancy_pass(rep, cfg.get("tolerance"))
    result = rep.to_dict()
    c0 = rep.initial
    result["C"] = c0.real if c0.imag == 0 else _c(c0)
    result["tolerance"] = tol
    return passed, result, _table_series(grid, {"C": rep.series})


def cmd_schrodinger(cfg, grid, base):
    variant, what = cfg["mode"]
    psi = schrodinger.WaveFunction.from_dict(cfg["wave"])
    params = schrodinger.SchrodingerParams.from_dict(cfg["params"])
    if what == "residual":
        pt, pq = cfg["probe"]["t"], cfg["probe"]["q"]
        probe = schrodinger.ProbeGrid.over(pt[0], pt[1], pt[2], pq[0], pq[1], pq[2])
        if variant == "linear":
            field = schrodinger.linear_pde_residual(psi, params, probe)
        else:
            a = cfg.get("a", [0.0, -1.0])
            if a == "path":
                if grid is None or "path" not in cfg or "eps" not in cfg:
                    raise ConfigError("$.a: 'path' needs grid, path and eps")
                a = schrodinger.a_eps(make_function(cfg["path"], grid, base), cfg["eps"]["k"])
            elif isinstance(a, list):
                a = complex(a[0], a[1])
            field = schrodinger.nonlinear_pde_residual(psi, params, probe, a)
        tol = cfg.get("tolerance", 1e-10)
        rows = list(csv.reader(io.StringIO(field.to_csv())))
        return field.sup <= tol, {**field.to_dict(), "tolerance": tol}, (rows[0], rows[1:])
    path = make_function(cfg["path"], grid, base)
    fn = schrodinger.constant_ex2 if variant == "linear" else schrodinger.constant_ex1
    rep = fn(psi, params, path)
    passed, tol = _constancy_pass(rep, cfg.get("tolerance"))
    result = {**rep.to_dict(), "tolerance": tol}
    if variant == "linear" and "eps" in cfg:
        result["side_condition"] = schrodinger.linear_side_condition(path, params, cfg["eps"]["k"]).to_dict()
    return passed, result, _table_series(grid, {"C": rep.series})


HANDLERS = {
    "derive": cmd_derive, "leibniz": cmd_leibniz, "integral-check": cmd_integral_check,
    "holder": cmd_holder, "lemma-scaling": cmd_lemma_scaling, "el-check": cmd_el_check,
    "dbr-check": cmd_dbr_check, "invariance": cmd_invariance, "noether": cmd_noether,
    "symmetry-search": cmd_symmetry_search, "pontryagin": cmd_pontryagin,
    "reduction-check": cmd_reduction_check, "hamiltonian-noether": cmd_hamiltonian_noether,
    "schrodinger": cmd_schrodinger,
}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _plain(x):
    """Make numpy scalars and tuples JSON-friendly."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, complex):
        return _c(x)
    return x


def render(config: dict, passed: bool, result: dict, table, fmt: str) -> str:
    report = _plain({"command": config["command"], "config": config, "passed": passed,
                     "result": result})
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    buf.write("# config=" + json.dumps(report["config"], sort_keys=True) + "\n")
    buf.write("# passed=" + json.dumps(passed) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    if table is None:
        w.writerow(["key", "value"])
        for key, value in sorted(_flatten(report["result"]).items()):
            w.writerow([key, repr(value) if isinstance(value, float) else value])
    else:
        header, rows = table
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = json.dumps(v, sort_keys=True)
        else:
            out[key] = v
    return out


def run(config: dict, base: Path = Path("."), output: str | None = None,
        fmt: str | None = None) -> tuple[int, str]:
    """Validate and execute ``config``; write the report and return ``(exit code, summary)``."""
    config = copy.deepcopy(config)
    validate(config)
    out_cfg = config.get("output", {})
    fmt = fmt or out_cfg.get("format", "json")
    output = output or out_cfg.get("path") or f"{config['command']}_report.{fmt}"
    grid = make_grid(config["grid"]) if "grid" in config else None
    passed, result, table = HANDLERS[config["command"]](config, grid, base)
    text = render(config, bool(passed), result, table, fmt)
    Path(output).write_text(text)
    label = config["command"] + ("" if "mode" not in config else " " + " ".join(config["mode"]))
    summary = f"{'PASS' if passed else 'FAIL'} {label} -> {output}"
    return (EXIT_PASS if passed else EXIT_FAIL), summary


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scalecalc", description="Scale-calculus verification checks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_common(sp):
        sp.add_argument("config", help="JSON configuration file")
        sp.add_argument("-o", "--output", help="report path (default: config output.path)")
        sp.add_argument("--format", choices=("json", "csv"), help="report format")

    for name in HANDLERS:
        if name == "schrodinger":
            continue
        add_common(sub.add_parser(name))
    s = sub.add_parser("schrodinger")
    s.add_argument("variant", choices=("linear", "nonlinear"))
    s.add_argument("what", choices=("residual", "constant"))
    add_common(s)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    try:
        path = Path(args.config)
        config = json.loads(path.read_text())
        if not isinstance(config, dict):
            raise ConfigError("$: configuration must be a JSON object")
        if config.get("command", args.command) != args.command:
            raise ConfigError(f"$.command: {config['command']!r} does not match subcommand {args.command!r}")
        config["command"] = args.command
        if args.command == "schrodinger":
            mode = [args.variant, args.what]
            if config.get("mode", mode) != mode:
                raise ConfigError(f"$.mode: {config['mode']} does not match {mode}")
            config["mode"] = mode
        code, summary = run(config, path.parent, args.output, args.format)
    except (ConfigError, ExpressionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ScaleCalcError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(summary)
    return code


if __name__ == "__main__":
    sys.exit(main())
