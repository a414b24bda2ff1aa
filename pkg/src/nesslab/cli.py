"""Command-line front end for steady-state sweeps and validation runs.

Subcommands: ``ness`` (single point), ``sweep-gamma``, ``heatmap``,
``scaling``, ``norm-bounds``, ``oracle-check``.  Parameters come from an
optional JSON config file plus flag overrides (flags win).  Exit codes:
0 ok, 1 config error, 2 solver failure, 3 validation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict

import numpy as np

from .lattice import LatticeSpec
from .lindblad import DissipationSpec
from .normbound import bound_sums
from .oracle import oracle_ness
from .runner import (
    PointTask,
    ResultRecord,
    profile_to_csv,
    records_to_csv,
    records_to_json,
    resolve_cache_dir,
    run_points,
    solve_point,
    write_text,
)
from .scaling import ScalingSeries, classify_regime
from .steady import solve_ness

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_VALIDATION = 3

ORACLE_CHECK_TOL = 1e-8
_ORACLE_DEFAULT_GRID = {
    "L_list": [2, 3, 4, 5],
    "alpha_grid": [0.5, 1.0, 1.5, 2.0],
    "gamma_grid": [0.0, 0.5, 2.0],
}


class ConfigError(ValueError):
    pass


def _parse_grid(text: str, cast=float):
    """Comma list ("0.1,0.5,2") or inclusive range ("0.1:1.4:0.1")."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range grid must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError(f"grid step must be positive in {text!r}")
        count = int(round((stop - start) / step)) + 1
        values = [start + i * step for i in range(count) if start + i * step <= stop + 1e-12]
    else:
        values = [float(p) for p in text.split(",") if p.strip()]
    if not values:
        raise ConfigError(f"empty grid {text!r}")
    if cast is int:
        return [int(round(v)) for v in values]
    return [round(v, 12) for v in values]


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            config = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    return config


def _section(config: dict, name: str) -> dict:
    value = config.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return dict(value)


def resolve_settings(args) -> dict:
    """Merge config file and flags into one flat settings dict."""
    config = _load_config(args.config)
    lattice = _section(config, "lattice")
    dissipation = _section(config, "dissipation")
    solver = _section(config, "solver")
    execution = _section(config, "execution")
    output = _section(config, "output")

    def flag(name, fallback):
        value = getattr(args, name, None)
        return fallback if value is None else value

    settings = {
        "L": flag("L", lattice.get("L")),
        "L_list": flag("L_list", lattice.get("L_list")),
        "alpha": flag("alpha", lattice.get("alpha")),
        "alpha_grid": flag("alpha_grid", lattice.get("alpha_grid")),
        "gamma": flag("gamma", dissipation.get("gamma")),
        "gamma_grid": flag("gamma_grid", dissipation.get("gamma_grid")),
        "Gamma": flag("Gamma", dissipation.get("Gamma", 1.0)),
        "tolerance": flag("tolerance", solver.get("tolerance", 1e-10)),
        "max_iterations": flag("max_iterations", solver.get("max_iterations", 500)),
        "workers": flag("workers", execution.get("workers", 1)),
        "blas_threads_per_worker": execution.get("blas_threads_per_worker", 1),
        "cache_dir": flag("cache_dir", execution.get("cache_dir")),
        "format": flag("format", output.get("format", "csv")),
        "out": flag("out", output.get("path")),
    }
    if isinstance(settings["L_list"], str):
        settings["L_list"] = _parse_grid(settings["L_list"], int)
    if isinstance(settings["alpha_grid"], str):
        settings["alpha_grid"] = _parse_grid(settings["alpha_grid"])
    if isinstance(settings["gamma_grid"], str):
        settings["gamma_grid"] = _parse_grid(settings["gamma_grid"])

    tol = settings["tolerance"]
    if not (isinstance(tol, (int, float)) and 0 < tol <= 1e-4):
        raise ConfigError(f"tolerance must be in (0, 1e-4], got {tol}")
    if not (isinstance(settings["workers"], int) and settings["workers"] >= 1):
        raise ConfigError(f"workers must be an integer >= 1, got {settings['workers']}")
    if settings["format"] not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {settings['format']}")
    for grid_name in ("L_list", "alpha_grid", "gamma_grid"):
        grid = settings[grid_name]
        if grid is not None and len(grid) == 0:
            raise ConfigError(f"{grid_name} must be non-empty")
    if settings["L"] is not None and int(settings["L"]) < 1:
        raise ConfigError(f"L must be >= 1, got {settings['L']}")
    if settings["L_list"] is not None and any(int(v) < 1 for v in settings["L_list"]):
        raise ConfigError("all L_list entries must be >= 1")
    settings["cache_dir"] = resolve_cache_dir(settings["cache_dir"])
    return settings


def _config_hash(settings: dict) -> str:
    physics = {
        key: settings.get(key)
        for key in ("L", "L_list", "alpha", "alpha_grid", "gamma", "gamma_grid",
                    "Gamma", "tolerance", "max_iterations")
    }
    text = json.dumps(physics, sort_keys=True, default=repr)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _require(settings, *names):
    for name in names:
        if settings.get(name) is None:
            raise ConfigError(f"missing required setting {name!r}")


def _emit(records, settings, default_name):
    text = (records_to_csv(records) if settings["format"] == "csv"
            else records_to_json(records))
    out = settings["out"] or default_name
    if out == "-":
        sys.stdout.write(text)
    else:
        write_text(out, text)
        print(f"wrote {out} ({len(records)} records)")
    return out


def cmd_ness(args) -> int:
    settings = resolve_settings(args)
    _require(settings, "L", "alpha", "gamma")
    task = PointTask(
        length=int(settings["L"]), alpha=float(settings["alpha"]),
        gamma=float(settings["gamma"]), drive=float(settings["Gamma"]),
        tolerance=float(settings["tolerance"]),
        max_iterations=int(settings["max_iterations"]),
        config_hash=_config_hash(settings),
    )
    record = run_points([task], cache_dir=settings["cache_dir"])[0]
    if not record.converged:
        print(f"solver failure: {record.error}", file=sys.stderr)
        return EXIT_SOLVER
    _emit([record], settings, "ness.csv")

    if args.profile:
        result = solve_ness(
            LatticeSpec(length=task.length, alpha=task.alpha),
            DissipationSpec(dephasing=task.gamma, drive=task.drive),
            tolerance=task.tolerance, max_iterations=task.max_iterations,
        )
        in_currents = np.concatenate(
            ([result.injected_current], result.site_in_currents)
        )
        write_text(args.profile, profile_to_csv(result.density, in_currents))
        print(f"wrote {args.profile} ({task.length} sites)")
    return EXIT_OK


def _alpha_values(settings):
    if settings["alpha_grid"]:
        return settings["alpha_grid"]
    if settings["alpha"] is not None:
        return [settings["alpha"]]
    raise ConfigError("missing alpha or alpha_grid")


def _grid_records(settings, alphas, gammas, lengths):
    chash = _config_hash(settings)
    tasks = [
        PointTask(length=int(L), alpha=float(a), gamma=float(g),
                  drive=float(settings["Gamma"]),
                  tolerance=float(settings["tolerance"]),
                  max_iterations=int(settings["max_iterations"]),
                  config_hash=chash)
        for a in alphas for g in gammas for L in lengths
    ]
    return run_points(
        tasks, workers=settings["workers"], cache_dir=settings["cache_dir"],
        blas_threads_per_worker=settings["blas_threads_per_worker"],
    )


def cmd_sweep_gamma(args) -> int:
    settings = resolve_settings(args)
    _require(settings, "L", "gamma_grid")
    alphas = _alpha_values(settings)
    records = _grid_records(settings, sorted(alphas), sorted(settings["gamma_grid"]),
                            [settings["L"]])
    _emit(records, settings, "sweep_gamma.csv")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    settings = resolve_settings(args)
    _require(settings, "L", "alpha_grid", "gamma_grid")
    records = _grid_records(settings, sorted(settings["alpha_grid"]),
                            sorted(settings["gamma_grid"]), [settings["L"]])
    _emit(records, settings, "heatmap.csv")
    return EXIT_OK


def cmd_scaling(args) -> int:
    settings = resolve_settings(args)
    _require(settings, "L_list", "gamma")
    alphas = _alpha_values(settings)
    if len(settings["L_list"]) < 4:
        raise ConfigError("scaling needs at least 4 sizes in L_list")
    lengths = sorted(int(v) for v in settings["L_list"])
    records = _grid_records(settings, sorted(alphas), [settings["gamma"]], lengths)
    out = _emit(records, settings, "scaling.csv")

    summary = []
    by_alpha = {}
    for rec in records:
        by_alpha.setdefault(rec.alpha, []).append(rec)
    for alpha in sorted(by_alpha):
        recs = sorted(by_alpha[alpha], key=lambda r: r.L)
        if not all(r.converged for r in recs):
            summary.append({"alpha": alpha, "error": "unconverged points"})
            continue
        series = ScalingSeries(
            alpha=alpha, gamma=float(settings["gamma"]),
            drive=float(settings["Gamma"]),
            lengths=tuple(r.L for r in recs),
            currents=tuple(r.J_ness for r in recs),
        )
        regime, fit = classify_regime(series)
        summary.append({
            "alpha": alpha, "regime": regime, "model": fit.model,
            "exponent_or_slope": fit.params[0], "level": fit.params[1],
            "stderr": list(fit.stderr), "r_squared": fit.r_squared,
            "aic": fit.aic,
        })
    summary_path = args.summary or (str(out) + ".summary.json" if out != "-" else "-")
    text = json.dumps(summary, indent=2) + "\n"
    if summary_path == "-":
        sys.stdout.write(text)
    else:
        write_text(summary_path, text)
        print(f"wrote {summary_path} ({len(summary)} fits)")
    return EXIT_OK


def cmd_norm_bounds(args) -> int:
    settings = resolve_settings(args)
    _require(settings, "L_list", "alpha_grid")
    rows = ["L,alpha,direct_sum,double_sum,inner_sqrt_sum,outer_sqrt_sum,"
            "asymptotic,violation"]
    reports = []
    for length in sorted(int(v) for v in settings["L_list"]):
        for alpha in sorted(settings["alpha_grid"]):
            rep = bound_sums(length, float(alpha))
            reports.append(rep)
            asym = "" if rep.asymptotic is None else repr(rep.asymptotic)
            rows.append(
                f"{rep.length},{repr(rep.alpha)},{repr(rep.direct_sum)},"
                f"{repr(rep.double_sum)},{repr(rep.inner_sqrt_sum)},"
                f"{repr(rep.outer_sqrt_sum)},{asym},"
                f"{'true' if rep.inequality_violation() else 'false'}"
            )
    text = "\n".join(rows) + "\n"
    out = settings["out"] or "norm_bounds.csv"
    if out == "-":
        sys.stdout.write(text)
    else:
        write_text(out, text)
        print(f"wrote {out} ({len(reports)} rows)")
    if any(rep.inequality_violation() for rep in reports):
        print("bound inequality violated", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    settings = resolve_settings(args)
    lengths = settings["L_list"] or _ORACLE_DEFAULT_GRID["L_list"]
    alphas = settings["alpha_grid"] or _ORACLE_DEFAULT_GRID["alpha_grid"]
    gammas = settings["gamma_grid"] or _ORACLE_DEFAULT_GRID["gamma_grid"]
    lengths = [int(v) for v in lengths]
    if max(lengths) > 5:
        raise ConfigError(f"oracle check limited to L <= 5, got {max(lengths)}")

    worst = 0.0
    failures = 0
    for length in lengths:
        for alpha in alphas:
            for gamma in gammas:
                spec = LatticeSpec(length=length, alpha=float(alpha))
                diss = DissipationSpec(dephasing=float(gamma),
                                       drive=float(settings["Gamma"]))
                solved = solve_ness(spec, diss,
                                    tolerance=float(settings["tolerance"]))
                _, c_oracle = oracle_ness(spec, diss)
                dev = float(np.abs(solved.correlations - c_oracle).max())
                worst = max(worst, dev)
                status = "ok" if dev <= ORACLE_CHECK_TOL else "FAIL"
                if status == "FAIL":
                    failures += 1
                print(f"L={length} alpha={alpha} gamma={gamma}: "
                      f"max|dC|={dev:.3e} {status}")
    print(f"oracle check: worst deviation {worst:.3e} over "
          f"{len(lengths) * len(alphas) * len(gammas)} points")
    if failures:
        print(f"{failures} points exceeded {ORACLE_CHECK_TOL:g}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nesslab",
        description="Steady-state transport of boundary-driven dephased "
                    "chains with power-law hopping.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output path ('-' for stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--workers", type=int)
        p.add_argument("--cache-dir", dest="cache_dir")
        p.add_argument("--L", type=int)
        p.add_argument("--L-list", dest="L_list")
        p.add_argument("--alpha", type=float)
        p.add_argument("--alpha-grid", dest="alpha_grid")
        p.add_argument("--gamma", type=float)
        p.add_argument("--gamma-grid", dest="gamma_grid")
        p.add_argument("--Gamma", type=float)
        p.add_argument("--tolerance", type=float)
        p.add_argument("--max-iterations", dest="max_iterations", type=int)

    p = sub.add_parser("ness", help="single steady-state solve")
    add_common(p)
    p.add_argument("--profile", help="write per-site density/current CSV here")
    p.set_defaults(handler=cmd_ness)

    p = sub.add_parser("sweep-gamma", help="current vs dephasing strength")
    add_common(p)
    p.set_defaults(handler=cmd_sweep_gamma)

    p = sub.add_parser("heatmap", help="current over an alpha/gamma grid")
    add_common(p)
    p.set_defaults(handler=cmd_heatmap)

    p = sub.add_parser("scaling", help="size scaling fits per alpha")
    add_common(p)
    p.add_argument("--summary", help="summary JSON path ('-' for stdout)")
    p.set_defaults(handler=cmd_scaling)

    p = sub.add_parser("norm-bounds", help="current-operator norm bound table")
    add_common(p)
    p.set_defaults(handler=cmd_norm_bounds)

    p = sub.add_parser("oracle-check", help="solver vs many-body oracle")
    add_common(p)
    p.set_defaults(handler=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
