"""Command-line front end.

Exit codes: 0 all checks passed, 1 a verdict failed (the report is still
written), 2 malformed or schema-violating input, 3 numerical failure.
"""
from __future__ import annotations

import os

_threads = os.environ.get("CFSNOETHER_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import sys
from pathlib import Path

import numpy as np

from . import continuum as cont
from .action import ActionParams, el_residual
from .io import (
    SchemaError, grid_from_dict, load_config, load_lemma, load_model, load_omega, load_packet,
    load_system, load_variation, read_json, system_to_dict,
)
from .noether import (
    KillingVariation, PreconditionError, identity_terms, killing_conservation_derivative,
    noether_derivative, volume_reduction_check,
)
from .optimize import InfeasibleStart, minimize_cfs, minimize_compact
from .reports import envelope, plot_series, sibling, write_csv, write_report
from .spectral import EigenSolverError
from .variations import PointFlow, TAU_MATCH, TauRangeError, UnitaryConjugation, random_hermitian

EXIT_OK, EXIT_VERDICT, EXIT_SCHEMA, EXIT_NUMERIC = 0, 1, 2, 3

NUMERIC_ERRORS = (EigenSolverError, cont.QuadratureError, cont.OutsideConeError,
                  np.linalg.LinAlgError, FloatingPointError, InfeasibleStart)


def _tol(args, name: str, default: float) -> float:
    val = getattr(args, name, None)
    return default if val is None else val


def _finish(args, out, report: dict) -> int:
    write_report(out, report)
    if not args.quiet:
        verdict = {True: "PASS", False: "FAIL", None: "DONE"}[report["passed"]]
        print(f"{report['command']}: {verdict} -> {out}")
    return EXIT_OK if report["passed"] in (True, None) else EXIT_VERDICT


def _default_omega(m) -> list[int]:
    supp = m.support
    return supp[: max(1, len(supp) // 2)]


def _load_region(args, m):
    return load_omega(args.omega, m) if args.omega else _default_omega(m)


# ------------------------------------------------------------ discrete commands

def cmd_solve(args) -> int:
    m = load_system(args.system)
    cfg, params = load_config(args.config, args.seed)
    if m.mode == "compact":
        res = minimize_compact(m.kernel, m.points, cfg, initial_weights=m.weights)
    else:
        res = minimize_cfs(m, params, cfg)
    summary = res.summary()
    summary["el_report"] = res.el_report.to_dict()
    report = envelope("solve", cfg.seed, bool(res.converged), summary,
                      {"system": str(args.system), "config": str(args.config)})
    doc = system_to_dict(res.measure)
    doc["report"] = report
    trace = sibling(args.out, "_trace.csv")
    rows = [(h["iter"], h["S"], h["T"], h["trace"], h["residual"]) for h in res.history]
    write_csv(trace, ["iter", "S", "T", "trace", "residual"], rows)
    if args.plots:
        plot_series(sibling(args.out, "_trace.png"), [r[0] for r in rows],
                    {"S": [r[1] for r in rows]}, "iteration", "action")
    write_report(args.out, doc)
    if not args.quiet:
        print(f"solve: S = {res.objective:.12g} after {res.iterations} iterations"
              f" ({'converged' if res.converged else 'not converged'}) -> {args.out}")
    return EXIT_OK if res.converged else EXIT_VERDICT


_EL_COLUMNS = ("mode", "nu_estimate", "nu_spread", "g_mean", "residual_constancy",
               "residual_minimality", "probe_min", "probe_count", "probe_radius", "seed")


def cmd_el_check(args) -> int:
    m = load_system(args.system)
    _, params = load_config(args.config, args.seed)
    rep = el_residual(m, params)
    ell_scale = max((abs(v) for v in rep.ell_values), default=0.0)
    tol = _tol(args, "tol_abs", 1e-12) + _tol(args, "tol_rel", 1e-6) * ell_scale
    body = rep.to_dict()
    body["tolerance"] = tol
    passed = rep.residual_constancy <= tol and rep.residual_minimality <= tol
    if not args.quiet:
        d = rep.to_dict()
        for key in _EL_COLUMNS:
            val = d[key]
            print(f"{key:<22}{val:.6e}" if isinstance(val, float) else f"{key:<22}{val}")
    report = envelope("el-check", params.seed, passed, body, {"system": str(args.system)})
    return _finish(args, args.report, report)


def _identity_variation(args, m, rng):
    if args.variation:
        v = load_variation(args.variation, m)
        if isinstance(v, KillingVariation):
            raise SchemaError("verify-identity: killing variations are not supported here")
        return v
    if m.mode == "compact":
        perm = np.roll(np.arange(len(m.points)), 1)
        return PointFlow.permutation(m.points, perm)
    return UnitaryConjugation(random_hermitian(m.hilbert_dim, rng), 1.0)


def cmd_verify_identity(args) -> int:
    m = load_system(args.system)
    rng = np.random.default_rng(args.seed)
    v = _identity_variation(args, m, rng)
    omega = _load_region(args, m)
    if args.taus:
        taus = [float(t) for t in args.taus.split(",")]
    elif v.exact_taus is not None:
        taus = [t for t in v.exact_taus if abs(t) > TAU_MATCH]
    else:
        taus = [0.1 * v.tau_max, -0.25 * v.tau_max, 0.37 * v.tau_max]
    threshold = _tol(args, "tol_rel", 1e-10)
    rows, worst = [], 0.0
    for tau in taus:
        t = identity_terms(m, omega, v, tau, args.kappa)
        rel = t.residual / max(t.scale, 1e-300)
        worst = max(worst, rel)
        rows.append({"tau": tau, **t.to_dict(), "relative_residual": rel})
    body = {"omega": omega, "kappa": args.kappa, "terms": rows, "residual": worst, "threshold": threshold}
    write_csv(sibling(args.report, "_identity.csv"),
              ["tau", "lhs", "middle", "surface", "residual", "scale"],
              [(r["tau"], r["lhs"], r["middle"], r["surface"], r["residual"], r["scale"]) for r in rows])
    report = envelope("verify-identity", args.seed, worst <= threshold, body,
                      {"system": str(args.system), "variation": str(args.variation or "random unitary")})
    return _finish(args, args.report, report)


def _el_slack_input(args, m) -> float:
    if args.el_residual is not None:
        return args.el_residual
    return el_residual(m, ActionParams(kappa=args.kappa, seed=args.seed, probes=0)).residual_constancy


def _profile_outputs(args, verdict):
    rows = verdict.profile
    write_csv(sibling(args.report, "_profile.csv"), ["tau", "surface_layer"], rows)
    if args.plots and rows:
        plot_series(sibling(args.report, "_profile.png"), [r[0] for r in rows],
                    {"surface layer": [r[1] for r in rows]}, "tau", "surface layer integral")


def cmd_verify_noether(args) -> int:
    m = load_system(args.system)
    v = load_variation(args.variation, m)
    if isinstance(v, KillingVariation):
        raise SchemaError("verify-noether: use verify-killing for killing variations")
    omega = _load_region(args, m)
    verdict = noether_derivative(m, omega, v, args.kappa, el_residual=_el_slack_input(args, m),
                                 tol_abs=_tol(args, "tol_abs", 1e-12), tol_rel=_tol(args, "tol_rel", 1e-6))
    _profile_outputs(args, verdict)
    body = verdict.to_dict()
    body["omega"] = omega
    report = envelope("verify-noether", args.seed, verdict.passed, body,
                      {"system": str(args.system), "variation": str(args.variation)})
    return _finish(args, args.report, report)


def cmd_verify_killing(args) -> int:
    m = load_system(args.system)
    kv = load_variation(args.variation, m)
    if not isinstance(kv, KillingVariation):
        raise SchemaError("verify-killing: variation must be of kind killing")
    omega = _load_region(args, m)
    verdict = killing_conservation_derivative(
        m, omega, kv, args.kappa, el_residual=_el_slack_input(args, m),
        tol_abs=_tol(args, "tol_abs", 1e-12), tol_rel=_tol(args, "tol_rel", 1e-6))
    _profile_outputs(args, verdict)
    body = verdict.to_dict()
    body["omega"] = omega
    report = envelope("verify-killing", args.seed, verdict.passed, body,
                      {"system": str(args.system), "variation": str(args.variation)})
    return _finish(args, args.report, report)


def cmd_volume_check(args) -> int:
    m = load_system(args.system)
    v = load_variation(args.variation, m)
    if isinstance(v, KillingVariation):
        v = v.flow
    omega = _load_region(args, m)
    tau = args.tau
    if tau is None:
        pos = [t for t in (v.exact_taus or ()) if t > TAU_MATCH]
        tau = min(pos) if pos else v.tau_max
    threshold = _tol(args, "tol_rel", 1e-10)
    inputs = {"system": str(args.system), "variation": str(args.variation)}
    try:
        red = volume_reduction_check(m, omega, v, tau, args.kappa)
    except PreconditionError as exc:
        report = envelope("volume-check", args.seed, False, {"error": str(exc), "tau": tau, "omega": omega}, inputs)
        return _finish(args, args.report, report)
    body = red.to_dict()
    body.update({"tau": tau, "omega": omega, "threshold": threshold,
                 "relative_residual": red.residual / max(red.scale, 1e-300)})
    report = envelope("volume-check", args.seed, red.residual <= threshold * red.scale, body, inputs)
    return _finish(args, args.report, report)


# ------------------------------------------------------------ continuum

def _grid(args):
    return grid_from_dict(read_json(args.grid)) if getattr(args, "grid", None) else cont.Grid()


def cmd_current(args) -> int:
    model = load_model(args.model)
    pa = load_packet(args.packet)
    grid = _grid(args)
    inputs = {"model": str(args.model), "packet": str(args.packet)}
    if args.packet_b:
        pb = load_packet(args.packet_b)
        inputs["packet_b"] = str(args.packet_b)
        return _cross_current(args, model, pa, pb, grid, inputs)
    try:
        closed = cont.current_closed(model, pa, grid)
    except cont.NegativeSlopeError as exc:
        return _finish(args, args.out, envelope("continuum current", args.seed, False, {"error": str(exc)}, inputs))
    body = {"closed": closed}
    dual_ok = closed["relative_difference"] <= _tol(args, "tol_abs", 1e-8)
    passed = dual_ok
    if not args.no_direct:
        lim = cont.current_direct_limit(model, pa, pa, args.eta0, grid)
        rel = abs(lim["extrapolated"] - closed["momentum_form"]) / max(abs(closed["momentum_form"]), 1e-300)
        lim["relative_difference"] = rel
        body["direct"] = lim
        passed = passed and rel <= _tol(args, "tol_rel", 0.02)
        _eta_outputs(args, lim, closed["momentum_form"])
    return _finish(args, args.out, envelope("continuum current", args.seed, passed, body, inputs))


def _cross_current(args, model, pa, pb, grid, inputs) -> int:
    if pa.generation == pb.generation:
        raise SchemaError("continuum current: packet-b must belong to another generation")
    ab = cont.current_direct_limit(model, pa, pb, args.eta0, grid)
    ba = cont.current_direct_limit(model, pb, pa, args.eta0, grid)
    aa = cont.current_closed(model, pa, grid)["momentum_form"]
    bb = cont.current_closed(model, pb, grid)["momentum_form"]
    cross = ab["extrapolated"] + ba["extrapolated"]
    diag = abs(aa) + abs(bb)
    ratio = abs(cross) / max(diag, 1e-300)
    shell = [float(model.h(pa.mass ** 2)), float(model.h(pb.mass ** 2))]
    body = {"J_ab": ab, "J_ba": ba, "cross_sum": cross, "diagonal_abs_sum": diag,
            "ratio": ratio, "shell_values": shell}
    passed = ratio <= _tol(args, "tol_rel", 0.01)
    write_csv(sibling(args.out, "_eta.csv"), ["eta", "J_ab", "J_ba"],
              list(zip(ab["etas"], ab["values"], ba["values"])))
    return _finish(args, args.out, envelope("continuum current", args.seed, passed, body, inputs))


def _eta_outputs(args, lim, closed_value):
    write_csv(sibling(args.out, "_eta.csv"), ["eta", "J_direct"], list(zip(lim["etas"], lim["values"])))
    if args.plots:
        plot_series(sibling(args.out, "_eta.png"), lim["etas"],
                    {"direct": lim["values"], "closed": [closed_value] * len(lim["etas"])},
                    "eta", "current", logx=True)


def cmd_energy(args) -> int:
    model = load_model(args.model)
    p = load_packet(args.packet)
    inputs = {"model": str(args.model), "packet": str(args.packet)}
    try:
        res = cont.energy_closed(model, p, _grid(args))
    except cont.NegativeSlopeError as exc:
        return _finish(args, args.out, envelope("continuum energy", args.seed, False, {"error": str(exc)}, inputs))
    passed = res["relative_difference"] <= _tol(args, "tol_abs", 1e-8) and res["bound_holds"]
    return _finish(args, args.out, envelope("continuum energy", args.seed, passed, res, inputs))


def cmd_lemma(args) -> int:
    conf = load_lemma(args.config)
    try:
        f_hat = cont.gaussian_test_function(conf["scale"])
        runs = [cont.fourier_layer_lemma(f_hat, d, conf["grid"]) for d in conf["dims"]]
    except cont.LemmaPreconditionError as exc:
        raise SchemaError(str(exc)) from None
    tol = _tol(args, "tol_abs", 1e-6)
    for r in runs:
        r["passed"] = r["abs_difference"] <= tol * max(1.0, abs(complex(*r["rhs"])))
    body = {"runs": runs, "tolerance": tol, "scale": conf["scale"]}
    passed = all(r["passed"] for r in runs)
    return _finish(args, args.out, envelope("continuum lemma", args.seed, passed, body,
                                            {"config": str(args.config or "default")}))


def cmd_stability(args) -> int:
    model = load_model(args.model)
    res = cont.state_stability_check(model)
    return _finish(args, args.out, envelope("continuum stability", args.seed, res["passed"], res,
                                            {"model": str(args.model)}))


def cmd_consistency(args) -> int:
    model = load_model(args.model)
    inputs = {"model": str(args.model)}
    try:
        res = cont.consistency_check(model, _tol(args, "tol_rel", 1e-12))
    except cont.NegativeSlopeError as exc:
        return _finish(args, args.out, envelope("continuum consistency", args.seed, False, {"error": str(exc)}, inputs))
    return _finish(args, args.out, envelope("continuum consistency", args.seed, res["passed"], res, inputs))


# ------------------------------------------------------------ parser

def _globals(parser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=d if suppress else 0, help="random seed (default 0)")
    parser.add_argument("--tol-abs", type=float, default=d, help="absolute tolerance override")
    parser.add_argument("--tol-rel", type=float, default=d, help="relative tolerance override")
    parser.add_argument("--plots", action="store_true", default=d if suppress else False,
                        help="also render PNG figures next to the CSV series")
    parser.add_argument("--quiet", action="store_true", default=d if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfsnoether", description=__doc__.splitlines()[0])
    _globals(p, suppress=False)
    shared = argparse.ArgumentParser(add_help=False)
    _globals(shared, suppress=True)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[shared], help="minimize the causal action")
    s.add_argument("--system", required=True, type=Path)
    s.add_argument("--config", type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("el-check", parents=[shared], help="Euler-Lagrange residuals")
    s.add_argument("--system", required=True, type=Path)
    s.add_argument("--config", type=Path, help="action parameters (kappa, probes, probe_radius, nu)")
    s.add_argument("--report", required=True, type=Path)
    s.set_defaults(func=cmd_el_check)

    for name, func, helptext in (
        ("verify-identity", cmd_verify_identity, "exact surface layer identity"),
        ("verify-noether", cmd_verify_noether, "tau-derivative of the surface layer integral"),
        ("verify-killing", cmd_verify_killing, "conservation for a Killing pair"),
        ("volume-check", cmd_volume_check, "surface layer as a volume difference"),
    ):
        s = sub.add_parser(name, parents=[shared], help=helptext)
        s.add_argument("--system", required=True, type=Path)
        s.add_argument("--variation", type=Path, required=name != "verify-identity")
        s.add_argument("--omega", type=Path)
        s.add_argument("--report", required=True, type=Path)
        s.add_argument("--kappa", type=float, default=0.0)
        if name == "verify-identity":
            s.add_argument("--taus", help="comma-separated tau values")
        if name in ("verify-noether", "verify-killing"):
            s.add_argument("--el-residual", type=float, help="EL residual used to widen the tolerance")
        if name == "volume-check":
            s.add_argument("--tau", type=float)
        s.set_defaults(func=func)

    c = sub.add_parser("continuum", help="Minkowski continuum checks")
    csub = c.add_subparsers(dest="continuum_command", required=True)
    for name, func in (("current", cmd_current), ("energy", cmd_energy),
                       ("stability", cmd_stability), ("consistency", cmd_consistency)):
        s = csub.add_parser(name, parents=[shared])
        s.add_argument("--model", required=True, type=Path)
        if name in ("current", "energy"):
            s.add_argument("--packet", required=True, type=Path)
            s.add_argument("--grid", type=Path, help="quadrature grid overrides (JSON)")
        if name == "current":
            s.add_argument("--packet-b", type=Path, help="second packet for a cross term")
            s.add_argument("--eta0", type=float, default=0.02)
            s.add_argument("--no-direct", action="store_true")
        s.add_argument("--out", required=True, type=Path)
        s.set_defaults(func=func)
    s = csub.add_parser("lemma", parents=[shared])
    s.add_argument("--config", type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_lemma)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    np.seterr(over="raise", invalid="ignore")
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except TauRangeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
