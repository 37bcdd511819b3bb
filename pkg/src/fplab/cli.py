"""Batch interface: one subcommand per piece of the laboratory.

    fplab constants    --config cfg.json [--sweep-s lo:hi:count]
    fplab verify-lemma --config cfg.json [--budget N] [--seed N]
    fplab nonlinearity --config cfg.json
    fplab solve        --config cfg.json [--lambda X] [--force] [--mode M]
    fplab phi-estimate --config cfg.json --radii 0.5,1.0
    fplab probe        --config cfg.json [--lambda X]

Configuration is a single JSON file; command-line flags override it.
Every run writes its fully resolved configuration next to its outputs and
locks the output directory while writing.  Exit codes: 0 success,
1 validation error, 2 numerical warning (low-confidence estimates).
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import reports
from .cone import (ConeFunction, seminorm_bound_terms, seminorm_estimate,
                   seminorm_reference_interval, unboundedness_probe)
from .constants import (ConstantSet, DomainSpec, ProblemParams, WeightSpec,
                        estimate_embedding_constant, geometric_constant,
                        kappa, lambda_interval, unit_ball_volume)
from .discretization import EnergyModel, Grid
from .nonlinearity import (BumpNonlinearity, factorial_bumps,
                           geometric_origin_bumps, oscillation_diagnostics)
from .solver import (SolveConfig, estimate_phi, multistart_sequence,
                     nested_ball_search, verify_nonnegativity)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

DEFAULT_CONFIG = {
    "problem": {
        "s": 0.75,
        "p": 2.0,
        "domain": {"kind": "interval", "a": -1.0, "b": 1.0},
        "alpha": {"kind": "constant", "value": 1.0},
        "lambda": 0.0,
    },
    "nonlinearity": {"preset": "factorial", "k_max": 8},
    "grid": {"n": 255},
    "solver": {},
    "mc": {"budget": 1_000_000, "seed": 0},
    "output": {"dir": "fplab-out"},
}


class ValidationError(Exception):
    pass


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path=None, overrides=None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if path is not None:
        cfg = _merge(cfg, reports.read_json(path))
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def build_domain(block: dict) -> DomainSpec:
    kind = block.get("kind", "interval")
    if kind == "interval":
        return DomainSpec.interval(block["a"], block["b"])
    if kind == "ball":
        return DomainSpec.ball(block["center"], block["radius"])
    if kind == "box":
        return DomainSpec.box(block["lo"], block["hi"])
    raise ValidationError(f"unknown domain kind {kind!r}")


def build_weight(block: dict, domain: DomainSpec) -> WeightSpec:
    kind = block.get("kind", "constant")
    if kind == "constant":
        return WeightSpec.constant(block.get("value", 1.0))
    if kind == "expression":
        expr = block["expr"]
        fn = eval(f"lambda x: ({expr}) + 0.0*np.asarray(x, dtype=float)",
                  {"np": np, "math": math})  # noqa: S307 - documented CLI hook
        return WeightSpec.from_callable(
            fn, domain, samples=int(block.get("samples", 10_000)), label=expr)
    raise ValidationError(f"unknown weight kind {kind!r}")


def build_problem(cfg: dict) -> ProblemParams:
    blk = cfg["problem"]
    domain = build_domain(blk["domain"])
    weight = build_weight(blk.get("alpha", {}), domain)
    try:
        return ProblemParams(s=float(blk["s"]), p=float(blk["p"]),
                             domain=domain, alpha=weight,
                             lam=float(blk.get("lambda", 0.0)))
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def build_nonlinearity(cfg: dict, p: float) -> BumpNonlinearity:
    blk = cfg["nonlinearity"]
    preset = blk.get("preset", "factorial")
    try:
        if preset == "factorial":
            return factorial_bumps(
                p, int(blk.get("k_max", 8)),
                profile=blk.get("profile", "semicircle"),
                log_domain=bool(blk.get("log_domain", False)))
        if preset == "geometric-origin":
            return geometric_origin_bumps(
                p, int(blk.get("k_max", 6)),
                base=float(blk.get("base", 4.0)),
                mass_base=float(blk.get("mass_base", 8.0)))
    except (ValueError, OverflowError) as exc:
        raise ValidationError(str(exc)) from exc
    raise ValidationError(f"unknown nonlinearity preset {preset!r}")


def build_grid(cfg: dict, domain: DomainSpec) -> Grid:
    if domain.kind != "interval":
        raise ValidationError("grid experiments require an interval domain")
    return Grid(domain.lo[0], domain.hi[0], int(cfg["grid"].get("n", 255)))


def build_solver_config(cfg: dict) -> SolveConfig:
    blk = dict(cfg.get("solver", {}))
    blk.pop("mode", None)
    blk.pop("c_sequence", None)
    if "ball_radii" in blk and blk["ball_radii"] is not None:
        blk["ball_radii"] = tuple(blk["ball_radii"])
    try:
        return SolveConfig(**blk)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad solver block: {exc}") from exc


def _resolve_out(cfg: dict, args) -> Path:
    out = Path(args.out) if args.out else Path(cfg["output"]["dir"])
    return out


def _write_resolved(cfg: dict, outdir: Path) -> None:
    reports.write_json(outdir / "config.resolved.json", cfg)


def _assemble_constants(params: ProblemParams, nl, grid) -> ConstantSet:
    diag = oscillation_diagnostics(nl, params.p) if len(nl.ends) >= 3 else None
    a_lim = diag.a_limit_estimate if diag else 0.0
    b_lim = (nl.limit_ratio if nl.limit_ratio is not None
             else (diag.b_limit_estimate if diag else math.inf))
    k_est = estimate_embedding_constant(grid, params)
    return ConstantSet(
        kappa=kappa(params.p, params.n_dim, params.s),
        omega_n=unit_ball_volume(params.n_dim),
        tau=params.tau,
        measure=params.domain.measure,
        alpha0=params.alpha.alpha0,
        alpha_inf=params.alpha.alpha_inf,
        k_est=k_est,
        constant_c=geometric_constant(params, k_est),
        interval=lambda_interval(params, a_lim, b_lim, k_est),
        a_limit=a_lim,
        b_limit=b_lim,
        k_grid_nodes=grid.n,
        alpha_samples=params.alpha.sample_count,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_constants(cfg: dict, args) -> int:
    params = build_problem(cfg)
    nl = build_nonlinearity(cfg, params.p)
    grid = build_grid(cfg, params.domain)
    outdir = _resolve_out(cfg, args)
    with reports.output_lock(outdir):
        _write_resolved(cfg, outdir)
        cset = _assemble_constants(params, nl, grid)
        reports.write_record(outdir / "constants.txt", cset.rows())
        print(f"constants report -> {outdir / 'constants.txt'}")
        for key, value, units, prov in cset.rows():
            print(f"  {key:15s} = {reports.format_value(value):22s} [{prov}]")
        if args.sweep_s:
            lo, hi, count = args.sweep_s.split(":")
            svals = np.linspace(float(lo), float(hi), int(count))
            rows = []
            for s in svals:
                try:
                    p_s = ProblemParams(s=float(s), p=params.p,
                                        domain=params.domain,
                                        alpha=params.alpha, lam=params.lam)
                except ValueError:
                    continue
                kap = kappa(p_s.p, p_s.n_dim, p_s.s)
                cset_s = _assemble_constants(p_s, nl, grid)
                rows.append((s, kap, cset_s.k_est, cset_s.constant_c,
                             cset_s.interval.lower, cset_s.interval.upper))
            reports.write_csv(outdir / "constants_sweep.csv",
                              ("s", "kappa", "K", "C", "lambda1", "lambda2"),
                              rows)
            print(f"sweep ({len(rows)} rows) -> {outdir / 'constants_sweep.csv'}")
    return EXIT_OK


def cmd_verify_lemma(cfg: dict, args) -> int:
    params = build_problem(cfg)
    outdir = _resolve_out(cfg, args)
    budget = args.budget or int(cfg["mc"].get("budget", 1_000_000))
    seed = args.seed if args.seed is not None else int(cfg["mc"].get("seed", 0))
    cone = ConeFunction.for_domain(params.domain)
    with reports.output_lock(outdir):
        _write_resolved(cfg, outdir)
        bd = seminorm_estimate(cone, params, budget=budget, seed=seed)
        rows = list(bd.rows())
        if params.n_dim == 1:
            exact = seminorm_reference_interval(cone, params)
            for i, val in enumerate(exact):
                rows[i] = rows[i] + (val,)
            rows[-1] = rows[-1] + (sum(exact),)
            header = ("term", "estimate", "std_error",
                      "bound_expression", "relation", "exact")
        else:
            header = ("term", "estimate", "std_error",
                      "bound_expression", "relation")
        reports.write_csv(outdir / "seminorm_breakdown.csv", header, rows)
        status = "PASS" if bd.satisfied else "FAIL"
        print(f"{status}: total {bd.total.value:.6g} "
              f"(std err {bd.total.std_error:.2g}) vs bound {bd.bound:.6g} "
              f"at 3 sigma")
        print(f"breakdown -> {outdir / 'seminorm_breakdown.csv'}")
        if bd.low_confidence:
            print("warning: low-confidence Monte-Carlo (error bars above "
                  "target); raise --budget")
            return EXIT_NUMERICAL
        if not bd.satisfied:
            return EXIT_NUMERICAL
    return EXIT_OK


def cmd_nonlinearity(cfg: dict, args) -> int:
    params = build_problem(cfg)
    nl = build_nonlinearity(cfg, params.p)
    outdir = _resolve_out(cfg, args)
    with reports.output_lock(outdir):
        _write_resolved(cfg, outdir)
        rows = nl.table_rows(params.p)
        reports.write_csv(
            outdir / "bumps.csv",
            ("k", "a_k", "b_k", "m_k", "F_b_k", "ratio_at_b_k", "ratio_at_gap"),
            rows)
        print(f"bump table -> {outdir / 'bumps.csv'}")
        if len(nl.ends) >= 3:
            diag = oscillation_diagnostics(nl, params.p)
            reports.write_csv(
                outdir / "oscillation.csv",
                ("k", "t_bump_end", "ratio_bump_end", "t_gap", "ratio_gap"),
                diag.probe_rows)
            print(f"oscillation probes -> {outdir / 'oscillation.csv'}")
            print(f"A proxy {diag.a_limit_estimate:.6g}, "
                  f"B proxy {diag.b_limit_estimate:.6g}")
        if nl.limit_ratio is not None:
            kap = kappa(params.p, params.n_dim, params.s)
            om = unit_ball_volume(params.n_dim)
            lam1 = (kap * om * 2.0 ** params.n_dim
                    / (params.p * params.tau ** params.ps
                       * params.alpha.alpha0 * nl.limit_ratio))
            print(f"oscillation threshold lambda1 = "
                  f"{reports.format_value(lam1)}")
    return EXIT_OK


def _solve_summary_rows(records, grid, params):
    rows = []
    for j, rec in enumerate(records):
        rows.append((j, rec.norm, rec.sup_norm, rec.energy.j, rec.residual,
                     verify_nonnegativity(rec, grid, params),
                     rec.converged,
                     rec.ball_index if rec.ball_index is not None else -1,
                     rec.start_label))
    return rows


def cmd_solve(cfg: dict, args) -> int:
    params = build_problem(cfg)
    if args.lam is not None:
        params = params.with_lambda(args.lam)
        cfg = _merge(cfg, {"problem": {"lambda": args.lam}})
    nl = build_nonlinearity(cfg, params.p)
    grid = build_grid(cfg, params.domain)
    scfg = build_solver_config(cfg)
    mode = args.mode or cfg.get("solver", {}).get("mode", "multistart")
    outdir = _resolve_out(cfg, args)

    # refuse an empty admissible interval unless forced
    out_of_interval = None
    if len(nl.ends) >= 3 and params.p == 2.0:
        diag = oscillation_diagnostics(nl, params.p)
        b_lim = nl.limit_ratio if nl.limit_ratio is not None \
            else diag.b_limit_estimate
        k_est = estimate_embedding_constant(grid, params)
        interval = lambda_interval(params, diag.a_limit_estimate, b_lim, k_est)
        if interval.is_empty and not args.force:
            print("validation error: admissible multiplier interval is "
                  "empty (A >= C * B); pass --force to run anyway",
                  file=sys.stderr)
            return EXIT_VALIDATION
        out_of_interval = not interval.contains(params.lam)

    with reports.output_lock(outdir):
        _write_resolved(cfg, outdir)
        import warnings as _warnings

        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore")
            if mode == "multistart":
                result = multistart_sequence(scfg, nl, params, grid)
                records = result.records
            elif mode == "nested":
                c_seq = cfg.get("solver", {}).get("c_sequence")
                if not c_seq:
                    print("validation error: nested mode needs "
                          "solver.c_sequence", file=sys.stderr)
                    return EXIT_VALIDATION
                k_est = estimate_embedding_constant(grid, params)
                records = nested_ball_search(c_seq, k_est, scfg, nl,
                                             params, grid)
            else:
                print(f"validation error: unknown mode {mode!r}",
                      file=sys.stderr)
                return EXIT_VALIDATION
        for j, rec in enumerate(records):
            reports.write_field(outdir / f"solution_{j:03d}.csv",
                                grid.nodes, rec.field)
        rows = _solve_summary_rows(records, grid, params)
        reports.write_csv(
            outdir / "summary.csv",
            ("j", "norm", "sup_norm", "energy", "residual", "nonnegative",
             "converged", "ball_index", "start"),
            rows)
        manifest = {
            "mode": mode,
            "out_of_interval": out_of_interval,
            "config": cfg,
            "solutions": [
                {"index": j, "file": f"solution_{j:03d}.csv",
                 "norm": rec.norm, "sup_norm": rec.sup_norm,
                 "energy": rec.energy.j, "residual": rec.residual,
                 "converged": rec.converged}
                for j, rec in enumerate(records)
            ],
        }
        reports.write_json(outdir / "manifest.json", manifest)
        print(f"{len(records)} solution record(s) -> {outdir}")
        if out_of_interval:
            print("note: multiplier outside the indicative admissible "
                  "interval (flagged in manifest)")
        for row in rows:
            print(f"  j={row[0]} |u|={row[1]:.6g} sup={row[2]:.6g} "
                  f"J={row[3]:.6g} res={row[4]:.2g}")
    return EXIT_OK


def cmd_phi_estimate(cfg: dict, args) -> int:
    params = build_problem(cfg)
    nl = build_nonlinearity(cfg, params.p)
    grid = build_grid(cfg, params.domain)
    scfg = build_solver_config(cfg)
    outdir = _resolve_out(cfg, args)
    radii = [float(r) for r in args.radii.split(",")] if args.radii else [1.0]
    if any(r <= 0 for r in radii):
        print("validation error: radii must be positive", file=sys.stderr)
        return EXIT_VALIDATION
    low_conf = False
    with reports.output_lock(outdir):
        _write_resolved(cfg, outdir)
        rows = []
        for r in radii:
            est = estimate_phi(r, scfg, nl, params, grid)
            low_conf |= est.low_confidence
            rows.append((r, est.sup_psi, est.phi, est.samples,
                         est.low_confidence))
        reports.write_csv(outdir / "phi_estimates.csv",
                          ("r", "sup_psi", "phi", "samples", "low_confidence"),
                          rows)
        print(f"phi estimates -> {outdir / 'phi_estimates.csv'}")
    return EXIT_NUMERICAL if low_conf else EXIT_OK


def cmd_probe(cfg: dict, args) -> int:
    params = build_problem(cfg)
    if args.lam is not None:
        params = params.with_lambda(args.lam)
        cfg = _merge(cfg, {"problem": {"lambda": args.lam}})
    nl = build_nonlinearity(cfg, params.p)
    outdir = _resolve_out(cfg, args)
    cone = ConeFunction.for_domain(params.domain)
    with reports.output_lock(outdir):
        _write_resolved(cfg, outdir)
        zetas = nl.ends[np.isfinite(nl.masses)] \
            if nl.finite_masses else nl.ends
        pairs = unboundedness_probe(cone, nl, params, zetas)
        reports.write_csv(outdir / "probe.csv", ("zeta", "energy_bound"),
                          pairs)
        onset = next((i + 1 for i, (_, b) in enumerate(pairs) if b < 0), None)
        tail_negative = (onset is not None and
                         all(b < 0 for _, b in pairs[onset - 1:]))
        print(f"probe -> {outdir / 'probe.csv'}")
        if onset and tail_negative:
            print(f"negative-energy onset at bump index k* = {onset}")
        else:
            print("no persistent negative-energy onset in the probed range")
    return EXIT_OK


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fplab",
        description="numerical laboratory for a nonlocal oscillating-"
                    "reaction Dirichlet problem")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON configuration file")
    parser.add_argument("--out", type=Path, default=None,
                        help="output directory (overrides config)")
    parser.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="multiplier override")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--budget", type=int, default=None,
                        help="Monte-Carlo samples per piece")
    parser.add_argument("--force", action="store_true",
                        help="run solve even with an empty multiplier interval")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("constants", help="emit the constants report")
    sp.add_argument("--sweep-s", default=None, metavar="LO:HI:COUNT",
                    help="additionally sweep the fractional order")
    sp.set_defaults(fn=cmd_constants)

    sp = sub.add_parser("verify-lemma",
                        help="Monte-Carlo check of the cone seminorm bound")
    sp.set_defaults(fn=cmd_verify_lemma)

    sp = sub.add_parser("nonlinearity", help="emit the bump table")
    sp.set_defaults(fn=cmd_nonlinearity)

    sp = sub.add_parser("solve", help="search for distinct solutions")
    sp.add_argument("--mode", choices=("multistart", "nested"), default=None)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("phi-estimate", help="sublevel quotient estimates")
    sp.add_argument("--radii", default=None, help="comma-separated radii")
    sp.set_defaults(fn=cmd_phi_estimate)

    sp = sub.add_parser("probe", help="scaled-cone energy upper bounds")
    sp.set_defaults(fn=cmd_probe)

    args = parser.parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides = _merge(overrides, {"mc": {"seed": args.seed},
                                       "solver": {"seed": args.seed}})
    try:
        cfg = load_config(args.config, overrides)
        return args.fn(cfg, args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
