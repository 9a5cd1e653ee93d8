"""
Lyapunov exponent estimators.

Time average: burn in, then lambda_hat = (sum of period log masses) / (tau N),
with batch-means errors pooled over replicas.

Furstenberg: independent (environment, invariant profile) pairs, one
evaluation period each.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Any, Literal, Optional, Sequence, Union
import logging

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict

from .core import InvalidArgumentError, SlowEnvError
from .noise import NoiseSpec, RenewalPotential
from .projective import ProjectiveDensity, SyncReport, auto_burn_in, synchronization_rate
from .propagator import Scheme, SchemeConfig, evolve, propagate_period
from .torus_grid import TorusGrid
from .utils.rng import RngKey, stream_id
from .utils.stats import batch_means, mean_and_stderr, pool_inverse_variance

logger = logging.getLogger(__name__)

MIN_OUTER = 30


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    noise: NoiseSpec
    kappa: float = pydantic.Field(default=1.0, gt=0)
    tau: float = pydantic.Field(gt=0)
    n_grid: int = pydantic.Field(default=256, ge=2)
    n_periods: int = pydantic.Field(default=1000, ge=1)
    burn_in: Union[Literal["auto"], pydantic.NonNegativeInt] = "auto"
    max_burn_in: int = pydantic.Field(default=10_000, ge=1)
    replicas: int = pydantic.Field(default=1, ge=1)
    scheme: Scheme = Scheme.STRANG
    dt_max: float = pydantic.Field(default=1e-3, gt=0)
    seed: int
    # None turns batch means off: errors then treat period increments as independent
    batch_count: Optional[int] = pydantic.Field(default=20, ge=2)
    initial: Literal["uniform", "cosine"] = "uniform"
    centered: bool = False
    workers: int = pydantic.Field(default=1, ge=1)

    @pydantic.model_validator(mode="after")
    def _enough_periods_for_batches(self):
        if self.batch_count is not None and self.n_periods < 10 * self.batch_count:
            raise ValueError(
                f"n_periods={self.n_periods} is below 10 x batch_count={self.batch_count}"
            )
        return self

    @property
    def scheme_config(self) -> SchemeConfig:
        return SchemeConfig(scheme=self.scheme, dt_max=self.dt_max, kappa=self.kappa)

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.n_grid)

    def renewal(self, purpose: str, replica: int = 0) -> RenewalPotential:
        key = RngKey(self.seed, stream_id(purpose, replica))
        return RenewalPotential(self.noise, self.grid, self.tau, key, centered=self.centered)

    def initial_density(self) -> ProjectiveDensity:
        if self.initial == "cosine":
            return ProjectiveDensity.cosine_profile(self.grid)
        return ProjectiveDensity.uniform(self.grid)


@dataclass(frozen=True)
class LyapunovEstimate:
    lambda_hat: float
    stderr: float
    n_periods_used: int
    burn_in_used: int
    tau: float
    replicas: int = 1
    diagnostics: dict[str, Any] = dc_field(default_factory=dict)
    total_log_masses: tuple[float, ...] = ()

    @property
    def clamp_events(self) -> int:
        return int(self.diagnostics.get("clamp_events", 0))


@dataclass(frozen=True)
class _ReplicaRun:
    lambda_hat: float
    stderr: float
    total_log_mass: float
    burn_in: int
    burn_in_capped: bool
    clamp_events: int


def _burn(cfg: RunConfig, r: RenewalPotential, z: ProjectiveDensity) -> tuple[ProjectiveDensity, int, bool, int]:
    """Returns (state after burn-in, periods burnt, capped, clamp events)."""
    sc = cfg.scheme_config
    if cfg.burn_in == "auto":
        b = auto_burn_in(r, sc, cap=cfg.max_burn_in)
        periods, capped = b.periods, b.capped
    else:
        periods, capped = int(cfg.burn_in), False
    if periods == 0:
        return z, 0, capped, 0
    run = evolve(z, r, periods, sc, keep_history=False)
    return run.z_final, periods, capped, run.clamp_events


def _increment_stderr(increments: np.ndarray, batch_count: Optional[int]) -> float:
    if batch_count is None:
        return mean_and_stderr(increments)[1]
    return batch_means(increments, batch_count)[1]


def _run_replica(cfg: RunConfig, replica: int, u0: ProjectiveDensity) -> _ReplicaRun:
    r = cfg.renewal("chain", replica)
    z, burnt, capped, clamps = _burn(cfg, r, u0)
    run = evolve(z, r, cfg.n_periods, cfg.scheme_config, start=burnt, keep_history=False)
    increments = run.log_masses / cfg.tau
    return _ReplicaRun(
        lambda_hat=run.total_log_mass / (cfg.tau * cfg.n_periods),
        stderr=_increment_stderr(increments, cfg.batch_count),
        total_log_mass=run.total_log_mass,
        burn_in=burnt,
        burn_in_capped=capped,
        clamp_events=clamps + run.clamp_events,
    )


def _map(workers: int, func, items: Sequence) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


def estimate_time_average(cfg: RunConfig, u0: Optional[ProjectiveDensity] = None) -> LyapunovEstimate:
    """
    Time-average estimator over `cfg.replicas` independent chains.

    Replica r uses the stream ("chain", r); results do not depend on the
    worker count.
    """
    start = u0 if u0 is not None else cfg.initial_density()
    if start.grid != cfg.grid:
        raise InvalidArgumentError("initial density lives on a different grid")

    runs = _map(cfg.workers, lambda rep: _run_replica(cfg, rep, start), range(cfg.replicas))
    lam, se = pool_inverse_variance([run.lambda_hat for run in runs], [run.stderr for run in runs])
    capped = [run.burn_in_capped for run in runs]
    if any(capped):
        logger.warning("burn-in cap reached in %d of %d replicas", sum(capped), len(runs))
    return LyapunovEstimate(
        lambda_hat=lam,
        stderr=se,
        n_periods_used=cfg.n_periods,
        burn_in_used=max(run.burn_in for run in runs),
        tau=cfg.tau,
        replicas=cfg.replicas,
        diagnostics={
            "clamp_events": sum(run.clamp_events for run in runs),
            "burn_in_capped": any(capped),
            "burn_in_per_replica": [run.burn_in for run in runs],
            "replica_lambdas": [run.lambda_hat for run in runs],
            "replica_stderrs": [run.stderr for run in runs],
        },
        total_log_masses=tuple(run.total_log_mass for run in runs),
    )


def _furstenberg_outer(cfg: RunConfig, j: int, u0: ProjectiveDensity) -> tuple[float, int, bool, int]:
    burn_chain = cfg.renewal("furstenberg-burn", j)
    z, burnt, capped, clamps = _burn(cfg, burn_chain, u0)
    xi = cfg.renewal("furstenberg-eval", j).sample(0)
    result = propagate_period(z, xi, cfg.tau, cfg.scheme_config)
    return result.log_mass / cfg.tau, burnt, capped, clamps + result.clamp_events


def estimate_furstenberg(
    cfg: RunConfig,
    n_outer: int = MIN_OUTER,
    u0: Optional[ProjectiveDensity] = None,
    reuse_chain: bool = False,
) -> LyapunovEstimate:
    """
    Average of (1/tau) log int exp(tau H(omega)) z over independent pairs.

    Each outer replicate burns in on stream ("furstenberg-burn", j) and
    evaluates on a potential from ("furstenberg-eval", j), which the burn-in
    never touches. With `reuse_chain` a single chain is burnt in once, every
    evaluation period is absorbed and the chain continues; errors then come
    from batch means.
    """
    if n_outer < MIN_OUTER:
        raise InvalidArgumentError(f"n_outer must be at least {MIN_OUTER}, got {n_outer}")
    start = u0 if u0 is not None else cfg.initial_density()

    if reuse_chain:
        z, burnt, capped, clamps = _burn(cfg, cfg.renewal("furstenberg-burn", 0), start)
        evaluation = cfg.renewal("furstenberg-eval", 0)
        values = np.empty(n_outer)
        for j in range(n_outer):
            result = propagate_period(z, evaluation.sample(j), cfg.tau, cfg.scheme_config)
            values[j] = result.log_mass / cfg.tau
            clamps += result.clamp_events
            z = result.z_next
        batches = cfg.batch_count if cfg.batch_count and n_outer >= 10 * cfg.batch_count else None
        lam = float(values.mean())
        se = _increment_stderr(values, batches)
        burn_per_outer = [burnt]
        any_capped = capped
    else:
        outs = _map(cfg.workers, lambda j: _furstenberg_outer(cfg, j, start), range(n_outer))
        values = np.array([o[0] for o in outs])
        lam, se = mean_and_stderr(values)
        burn_per_outer = [o[1] for o in outs]
        any_capped = any(o[2] for o in outs)
        clamps = sum(o[3] for o in outs)

    if any_capped:
        logger.warning("burn-in cap reached during the Furstenberg estimate")
    return LyapunovEstimate(
        lambda_hat=lam,
        stderr=se,
        n_periods_used=n_outer,
        burn_in_used=max(burn_per_outer),
        tau=cfg.tau,
        replicas=n_outer,
        diagnostics={
            "clamp_events": clamps,
            "burn_in_capped": any_capped,
            "reuse_chain": reuse_chain,
        },
    )


@dataclass(frozen=True)
class SweepRow:
    tau: float
    estimate: Optional[LyapunovEstimate] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.estimate is not None


def sweep_tau(
    cfg: RunConfig,
    taus: Sequence[float],
    estimator: Literal["time_average", "furstenberg"] = "time_average",
    n_outer: int = MIN_OUTER,
) -> list[SweepRow]:
    """One estimate per tau; a failing tau gives a flagged row and the sweep goes on."""
    if len(taus) == 0:
        raise InvalidArgumentError("taus must not be empty")
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise InvalidArgumentError("taus must be sorted in increasing order")
    if any(t <= 0 for t in taus):
        raise InvalidArgumentError("taus must be positive")

    rows = []
    for tau in taus:
        try:
            local = cfg.model_copy(update={"tau": float(tau)})
            if estimator == "furstenberg":
                est = estimate_furstenberg(local, n_outer)
            else:
                est = estimate_time_average(local)
            rows.append(SweepRow(float(tau), est))
        except SlowEnvError as e:
            logger.warning("tau=%g failed: %s", tau, e)
            rows.append(SweepRow(float(tau), error=str(e)))
    return rows


@dataclass(frozen=True)
class SyncSummary:
    reports: tuple[SyncReport, ...]
    mean_slope: float
    slope_stderr: float
    negative_fraction: float

    @property
    def underflow(self) -> bool:
        return any(report.underflow for report in self.reports)

    @property
    def periods_tracked(self) -> int:
        return max(report.distances.size for report in self.reports)


def synchronization_experiment(cfg: RunConfig) -> SyncSummary:
    """
    Synchronization of the uniform and cosine profiles in `cfg.replicas`
    independent environments (stream ("sync", r) for replica r).

    With one replica the error is the fit's own; otherwise it is the spread
    of the fitted slopes across replicas.
    """
    a = ProjectiveDensity.uniform(cfg.grid)
    b = ProjectiveDensity.cosine_profile(cfg.grid)
    sc = cfg.scheme_config

    reports = _map(
        cfg.workers,
        lambda rep: synchronization_rate(a, b, cfg.renewal("sync", rep), cfg.n_periods, sc),
        range(cfg.replicas),
    )
    slopes = np.array([report.fitted_slope for report in reports])
    if slopes.size == 1:
        mean, se = float(slopes[0]), float(reports[0].slope_stderr)
    else:
        mean, se = mean_and_stderr(slopes)
    negative = float(np.count_nonzero(slopes < 0.0)) / slopes.size
    if negative < 1.0:
        logger.warning("%d of %d replicas did not synchronize", int(np.count_nonzero(slopes >= 0.0)), slopes.size)
    return SyncSummary(tuple(reports), mean, se, negative)
