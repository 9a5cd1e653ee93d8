"""
Subcommand dispatch: turns a validated CliConfig into result rows.

`run` never raises for expected failures; it returns a result dictionary
{"success", "rows", "error", "exit_code"} and the command layer decides
what to print.
"""

from typing import Any, Callable, Optional
import logging
import math
import time

import numpy as np

from .config import CliConfig
from .core import ConfigError, InvalidArgumentError, NumericalBreakdownError, SlowEnvError, jinja_env
from .noise import PotentialSample, noise_params, sample_potential
from .propagator import Scheme, SchemeConfig, feynman_kac_mass, propagate_period
from .results import HEADER, ResultRow, make_row, run_id, write_rows
from .torus_grid import TorusGrid
from .utils.rng import RngKey, stream_id

logger = logging.getLogger(__name__)

VALIDATE_TOLERANCE = 1e-6

# Subcommands that propagate the noise on a grid without refusing a coarse one
GRID_WARNED = frozenset({"lyapunov", "furstenberg", "sweep", "bounds", "sync", "birkhoff"})

Handler = Callable[[CliConfig, dict[str, Any]], list[ResultRow]]


def _base(cfg: CliConfig) -> dict[str, Any]:
    noise = cfg.resolved_noise
    return {
        "run_id": run_id(cfg.canonical()),
        "subcommand": cfg.subcommand,
        "noise_kind": noise.kind if noise is not None else "cos",
        "noise_params": noise_params(noise) if noise is not None else "amplitude=1",
        "kappa": float(cfg.kappa),
        "n_grid": int(cfg.n_grid),
        "scheme": cfg.scheme.value,
        "dt_max": float(cfg.dt_max),
        "seed": cfg.seed,
    }


def _warn_coarse_grid(cfg: CliConfig) -> None:
    from .asymptotics import warn_grid_rule

    noise = cfg.resolved_noise
    if noise is None or noise.kind != "white" or cfg.subcommand not in GRID_WARNED:
        return
    for tau in cfg.taus or [cfg.tau]:
        warn_grid_rule(cfg.n_grid, cfg.kappa, float(tau))


def _estimate_columns(est) -> dict[str, Any]:
    return {
        "tau": float(est.tau),
        "n_periods": int(est.n_periods_used),
        "burn_in": int(est.burn_in_used),
        "lambda_hat": float(est.lambda_hat),
        "stderr": float(est.stderr),
        "clamp_events": est.clamp_events,
        "status": "burn_in_capped" if est.diagnostics.get("burn_in_capped") else "ok",
    }


def _lyapunov(cfg: CliConfig, base: dict[str, Any]) -> list[ResultRow]:
    from .lyapunov import estimate_time_average

    return [make_row(**base, **_estimate_columns(estimate_time_average(cfg.run_config())))]


def _furstenberg(cfg: CliConfig, base: dict[str, Any]) -> list[ResultRow]:
    from .lyapunov import estimate_furstenberg

    est = estimate_furstenberg(cfg.run_config(), cfg.n_outer, reuse_chain=cfg.reuse_chain)
    return [make_row(**base, **_estimate_columns(est))]


def _sweep(cfg: CliConfig, base: dict[str, Any]) -> list[ResultRow]:
    from .lyapunov import sweep_tau

    rows = []
    for entry in sweep_tau(cfg.run_config(), cfg.taus, cfg.estimator, cfg.n_outer):
        if entry.ok:
            rows.append(make_row(**base, **_estimate_columns(entry.estimate)))
        else:
            rows.append(make_row(**base, tau=entry.tau, status="failed"))
    return rows


def _limit_rows(base: dict[str, Any], report) -> list[ResultRow]:
    per_tau = report.lattice_targets or (None,) * len(report.estimates)
    rows = [
        make_row(**base, **_estimate_columns(est), target=target)
        for est, target in zip(report.estimates, per_tau)
    ]
    rows.append(
        make_row(
            **base,
            stderr=float(report.extrapolated_stderr),
            target=float(report.target),
            extrapolated=float(report.extrapolated),
            closed_form=report.closed_form,
            status="under_resolved" if report.under_resolved else "ok",
        )
    )
    return rows


def _smalltau(cfg: CliConfig, base: dict[str, Any]) -> list[ResultRow]:
    from .asymptotics import small_tau_slope

    return _limit_rows(base, small_tau_slope(cfg.noise, cfg.kappa, cfg.taus, cfg.run_config()))


def _sqrtlaw(cfg: CliConfig, base: dict[str, Any]) -> list[ResultRow]:
    from .asymptotics import sqrt_law_fit

    return _limit_rows(base, sqrt_law_fit(cfg.kappa, cfg.taus, cfg.run_config()))


def _spectrum(cfg: CliConfig, base: dict[str, Any]) -> list[ResultRow]:
    from .spectral import spectrum_sample

    sample = spectrum_sample(
        cfg.noise, TorusGrid(cfg.n_grid), cfg.kappa, cfg.n_samples,
        RngKey(cfg.seed, stream_id("spectrum")), cfg.workers,
    )
    zeta, zeta_se = sample.zeta_mean
    mu, _ = sample.mu_mean
    return [make_row(**base, stderr=zeta_se, zeta_mean=zeta, mu_mean=mu, status="ok")]


def _bounds(cfg: CliConfig, base: dict[str, Any]) -> list[ResultRow]:
    from .lyapunov import estimate_time_average
    from .spectral import sandwich_bounds

    rc = cfg.run_config()
    est = estimate_time_average(rc)
    report = sandwich_bounds(
        cfg.noise, cfg.kappa, cfg.tau, cfg.n_samples, est,
        RngKey(cfg.seed, stream_id("spectrum")), rc.grid, cfg.workers,
    )
    columns = _estimate_columns(est)
    if not (report.upper_ok and report.lower_ok):
        columns["status"] = "bounds_violated"
    return [
        make_row(
            **base,
            **columns,
            target=float(report.lower),
            zeta_mean=float(report.E_zeta_hat),
            mu_mean=float(report.E_mu_hat),
        )
    ]


def _sync(cfg: CliConfig, base: dict[str, Any]) -> list[ResultRow]:
    from .lyapunov import synchronization_experiment

    summary = synchronization_experiment(cfg.run_config())
    return [
        make_row(
            **base,
            tau=float(cfg.tau),
            n_periods=summary.periods_tracked,
            stderr=summary.slope_stderr,
            slope=summary.mean_slope,
            negative_fraction=summary.negative_fraction,
            status="underflow" if summary.underflow else "ok",
        )
    ]


def _birkhoff(cfg: CliConfig, base: dict[str, Any]) -> list[ResultRow]:
    from .projective import birkhoff_coefficient_estimate

    grid = TorusGrid(cfg.n_grid)
    xi = sample_potential(cfg.noise, grid, RngKey(cfg.seed, stream_id("birkhoff")))
    estimate = birkhoff_coefficient_estimate(
        xi, cfg.tau, cfg.run_config().scheme_config, cfg.n_pairs,
        RngKey(cfg.seed, stream_id("birkhoff-pairs")),
    )
    return [make_row(**base, tau=float(cfg.tau), mu_hat_birkhoff=estimate.mu_hat, status="ok")]


def _chaos_const(cfg: CliConfig, base: dict[str, Any]) -> list[ResultRow]:
    from .asymptotics import period_averaged_chaos, sqrt_law_target, zeroth_chaos_constant

    n_grid = cfg.n_grid if cfg.convention == "lattice" else None
    target = None if cfg.convention == "lattice" else sqrt_law_target(cfg.kappa, cfg.convention)
    rows = []
    for tau in cfg.taus or [cfg.tau]:
        rows.append(
            make_row(
                **base,
                tau=float(tau),
                chaos_value=zeroth_chaos_constant(tau, cfg.kappa, cfg.cutoff, cfg.convention, n_grid),
                extrapolated=period_averaged_chaos(tau, cfg.kappa, cfg.cutoff, cfg.convention, n_grid),
                target=target,
                closed_form=math.sqrt(math.pi / cfg.kappa),
                status="ok",
            )
        )
    return rows


def cos_potential(grid: TorusGrid, amplitude: float = 1.0) -> PotentialSample:
    return PotentialSample.from_values(grid, amplitude * np.cos(2.0 * np.pi * grid.nodes), kind="cos")


def _validate(cfg: CliConfig, base: dict[str, Any]) -> list[ResultRow]:
    """Strang, Crank-Nicolson and Feynman-Kac against the eigen reference on cos(2 pi x)."""
    from .projective import ProjectiveDensity

    grid = TorusGrid(cfg.n_grid)
    tau = cfg.resolved_tau
    xi = cos_potential(grid)
    z = ProjectiveDensity.uniform(grid)
    reference = propagate_period(z, xi, tau, SchemeConfig(scheme=Scheme.EIGEN, kappa=cfg.kappa)).log_mass

    rows = []
    for scheme in (Scheme.STRANG, Scheme.CRANK_NICOLSON):
        sc = SchemeConfig(scheme=scheme, dt_max=cfg.dt_max, kappa=cfg.kappa)
        delta = abs(propagate_period(z, xi, tau, sc).log_mass - reference)
        rows.append(
            make_row(
                **{**base, "scheme": scheme.value},
                tau=tau,
                lambda_hat=reference / tau,
                scheme_delta=delta,
                status="ok" if delta <= VALIDATE_TOLERANCE else "exceeds_tolerance",
            )
        )

    mass, mass_se = feynman_kac_mass(
        xi, tau, z, cfg.n_paths, min(cfg.dt_fk, tau),
        RngKey(cfg.seed, stream_id("feynman-kac")), kappa=cfg.kappa,
    )
    delta = abs(mass - math.exp(reference))
    rows.append(
        make_row(
            **{**base, "scheme": "feynman_kac", "dt_max": float(min(cfg.dt_fk, tau))},
            tau=tau,
            lambda_hat=reference / tau,
            stderr=mass_se,
            scheme_delta=delta,
            status="ok" if delta <= 3.0 * mass_se else "exceeds_tolerance",
        )
    )
    return rows


HANDLERS: dict[str, Handler] = {
    "lyapunov": _lyapunov,
    "furstenberg": _furstenberg,
    "sweep": _sweep,
    "smalltau": _smalltau,
    "sqrtlaw": _sqrtlaw,
    "spectrum": _spectrum,
    "bounds": _bounds,
    "sync": _sync,
    "birkhoff": _birkhoff,
    "chaos-const": _chaos_const,
    "validate": _validate,
}


def render_report(cfg: CliConfig, rows: list[ResultRow], error: Optional[str] = None) -> str:
    template = jinja_env.get_template("report.md.j2")
    return template.render(cfg=cfg, config=cfg.canonical(), header=HEADER, rows=rows, error=error)


def run(cfg: CliConfig) -> dict[str, Any]:
    """
    Execute one subcommand and write its rows.

    Exit codes: 0 success, 1 numerical breakdown (a diagnostics row is still
    written), 5 for arguments the library rejects.
    """
    base = _base(cfg)
    started = time.perf_counter()
    error: Optional[str] = None
    exit_code = 0
    _warn_coarse_grid(cfg)
    try:
        rows = HANDLERS[cfg.subcommand](cfg, base)
    except NumericalBreakdownError as e:
        logger.error("numerical breakdown: %s %s", e, e.diagnostics)
        rows = [make_row(**base, tau=cfg.resolved_tau, status="numerical_breakdown")]
        error, exit_code = f"Numerical breakdown: {e}", 1
    except InvalidArgumentError as e:
        return {"success": False, "rows": [], "error": str(e), "exit_code": 5, "diagnostics": e.diagnostics}
    except ConfigError as e:
        return {"success": False, "rows": [], "error": str(e), "exit_code": e.exit_code}
    except SlowEnvError as e:
        logger.error("%s %s", e, e.diagnostics)
        rows = [make_row(**base, tau=cfg.resolved_tau, status="failed")]
        error, exit_code = str(e), 1

    if cfg.timing:
        elapsed = time.perf_counter() - started
        rows = [{**row, "wall_time_s": elapsed} for row in rows]

    written = None
    if cfg.output_path:
        written = str(write_rows(rows, cfg.output_path, cfg.output_format))
    if cfg.report_path:
        with open(cfg.report_path, "w", encoding="utf-8", newline="") as f:
            f.write(render_report(cfg, rows, error))

    return {
        "success": exit_code == 0,
        "rows": rows,
        "error": error,
        "exit_code": exit_code,
        "output_path": written,
    }
