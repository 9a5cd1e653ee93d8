"""
The projective space Pr of positive unit-mass densities, Hilbert's projective
distance, synchronization diagnostics and Birkhoff contraction estimates.
"""

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import TYPE_CHECKING
import logging
import math

import numpy as np
from scipy import stats

from .core import EPS_POS, DegenerateMassError, InvalidArgumentError, NumericalBreakdownError
from .torus_grid import Field, TorusGrid, heat_apply
from .utils.rng import RngKey, generator, stream_id
from .utils.stats import log_slope

if TYPE_CHECKING:
    from .noise import NoiseSpec, PotentialSample, RenewalPotential
    from .propagator import SchemeConfig

logger = logging.getLogger(__name__)

# Tracking floor for d_H, a few decades above where rounding in log ratios takes over
UNDERFLOW = 1e-10
COUPLING_TOLERANCE = 1e-8
BURN_IN_MARGIN = 0.25


@dataclass(frozen=True, eq=False)
class ProjectiveDensity:
    """Strictly positive grid density with unit integral."""

    field: Field

    def __post_init__(self) -> None:
        v = self.field.values
        if not np.all(v > 0):
            raise InvalidArgumentError("projective densities must be strictly positive")
        mass = float(np.sum(v) * self.field.grid.dx)
        if abs(mass - 1.0) > 1e-12:
            raise InvalidArgumentError(f"projective density has mass {mass!r}, expected 1")

    @property
    def grid(self) -> TorusGrid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @cached_property
    def log_values(self) -> np.ndarray:
        out = np.log(self.field.values)
        out.flags.writeable = False
        return out

    @classmethod
    def uniform(cls, grid: TorusGrid) -> "ProjectiveDensity":
        return cls(Field.constant(grid, 1.0))

    @classmethod
    def from_values(cls, grid: TorusGrid, values) -> "ProjectiveDensity":
        """Normalize arbitrary positive values into Pr."""
        return normalize(Field(grid, values))[0]

    @classmethod
    def cosine_profile(cls, grid: TorusGrid) -> "ProjectiveDensity":
        """normalize(exp(cos 2 pi x)), the second seed of the burn-in pair."""
        return cls.from_values(grid, np.exp(np.cos(2.0 * np.pi * grid.nodes)))


def normalize_values(values: np.ndarray, grid: TorusGrid) -> tuple[np.ndarray, float, int]:
    """
    Divide by the integral, then clamp entries that are non-positive (or
    underflowed in the division) to EPS_POS and renormalize.

    Returns (normalized values, log of the integral, number of clamped entries).

    Raises:
        NumericalBreakdownError: On non-finite input or a result that is
            still not strictly positive
        DegenerateMassError: If no entry is positive
    """
    y = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise NumericalBreakdownError(
            "non-finite values in density",
            {"n_nonfinite": int(np.sum(~np.isfinite(y))), "n": grid.n},
        )
    positive = np.clip(y, 0.0, None)
    if not np.any(positive > 0.0):
        raise DegenerateMassError(
            "field has no positive mass", {"min": float(y.min()), "max": float(y.max())}
        )
    # Scale by the peak first so the sum cannot overflow
    peak = float(positive.max())
    mass = float(np.sum(positive / peak) * grid.dx)
    z = positive / peak / mass
    log_mass = math.log(peak) + math.log(mass)

    bad = z <= 0.0
    clamps = int(np.count_nonzero(bad))
    if clamps:
        z = np.where(bad, EPS_POS, z)
        rest = float(np.sum(z) * grid.dx)
        z = z / rest
        log_mass += math.log(rest)
        logger.debug("clamped %d non-positive entries to %g", clamps, EPS_POS)
    if not np.all(z > 0.0):
        raise NumericalBreakdownError(
            "density is not strictly positive after clamping",
            {"n_nonpositive": int(np.count_nonzero(z <= 0.0)), "n": grid.n, "clamps": clamps},
        )
    return z, log_mass, clamps


def normalize(f: Field) -> tuple[ProjectiveDensity, float]:
    """Split f into its projective component and log of its mass."""
    z, log_mass, _ = normalize_values(f.values, f.grid)
    return ProjectiveDensity(Field(f.grid, z)), log_mass


def hilbert_distance(phi: ProjectiveDensity, psi: ProjectiveDensity) -> float:
    """max log(phi/psi) - min log(phi/psi)."""
    if phi.grid != psi.grid:
        raise InvalidArgumentError("densities live on different grids")
    if not (np.all(phi.values > 0) and np.all(psi.values > 0)):
        raise InvalidArgumentError("Hilbert distance needs strictly positive densities")
    r = phi.log_values - psi.log_values
    return float(r.max() - r.min())


@dataclass(frozen=True)
class SyncReport:
    distances: np.ndarray
    fitted_slope: float
    slope_stderr: float
    underflow: bool = False
    window: tuple[int, int] = (0, 0)
    initial_distance: float = 0.0


def synchronization_rate(
    u0_a: ProjectiveDensity,
    u0_b: ProjectiveDensity,
    r: "RenewalPotential",
    n_periods: int,
    cfg: "SchemeConfig",
    start: int = 0,
) -> SyncReport:
    """
    Evolve two profiles under the same noise and fit the decay of d_H.

    The fit is log d_H against time over the periods after the first 10%.
    Tracking stops at the first distance below UNDERFLOW; if that happens
    before the fit window has two points the slope comes from everything
    available (including the initial distance) and `underflow` is set.
    """
    from .propagator import Eigensystem, Scheme, propagate_period

    if n_periods < 1:
        raise InvalidArgumentError("n_periods must be at least 1")
    d0 = hilbert_distance(u0_a, u0_b)
    if d0 <= 0.0:
        raise InvalidArgumentError("initial profiles coincide in projective space")

    za, zb = u0_a, u0_b
    distances: list[float] = []
    underflow = False
    for i in range(n_periods):
        xi = r.sample(start + i)
        eig = Eigensystem.from_sample(xi, cfg.kappa) if cfg.scheme == Scheme.EIGEN else None
        za = propagate_period(za, xi, r.tau, cfg, eigensystem=eig).z_next
        zb = propagate_period(zb, xi, r.tau, cfg, eigensystem=eig).z_next
        d = hilbert_distance(za, zb)
        distances.append(d)
        if d < UNDERFLOW:
            underflow = True
            logger.info("synchronization reached %.1e after %d periods", d, i + 1)
            break

    dist = np.asarray(distances)
    times = r.tau * np.arange(1, dist.size + 1)
    first = math.ceil(0.1 * n_periods)
    usable = np.flatnonzero((np.arange(dist.size) >= first) & (dist >= UNDERFLOW))

    if usable.size >= 2:
        slope, stderr = log_slope(times[usable], dist[usable])
        window = (int(usable[0]), int(usable[-1]) + 1)
    else:
        keep = dist >= UNDERFLOW
        t_fit = np.concatenate([[0.0], times[keep]])
        d_fit = np.concatenate([[d0], dist[keep]])
        if t_fit.size < 2:
            # Only the initial point survives: report the bound implied by the floor
            t_fit = np.array([0.0, times[0]])
            d_fit = np.array([d0, UNDERFLOW])
        slope, stderr = log_slope(t_fit, d_fit)
        window = (0, int(np.count_nonzero(keep)))
        underflow = True
    return SyncReport(dist, slope, stderr, underflow, window, d0)


@dataclass(frozen=True)
class BurnIn:
    periods: int
    coupling_periods: int
    capped: bool


def auto_burn_in(
    r: "RenewalPotential", cfg: "SchemeConfig", cap: int = 10_000, start: int = 0
) -> BurnIn:
    """
    Coupled-pair burn-in: evolve {1, normalize(exp(cos 2 pi x))} under the
    chain's own noise until d_H < 1e-8, then add a 25% margin.
    """
    from .propagator import Eigensystem, Scheme, propagate_period

    za = ProjectiveDensity.uniform(r.grid)
    zb = ProjectiveDensity.cosine_profile(r.grid)
    for i in range(cap):
        xi = r.sample(start + i)
        eig = Eigensystem.from_sample(xi, cfg.kappa) if cfg.scheme == Scheme.EIGEN else None
        za = propagate_period(za, xi, r.tau, cfg, eigensystem=eig).z_next
        zb = propagate_period(zb, xi, r.tau, cfg, eigensystem=eig).z_next
        if hilbert_distance(za, zb) < COUPLING_TOLERANCE:
            periods = math.ceil((i + 1) * (1.0 + BURN_IN_MARGIN))
            if periods > cap:
                logger.warning("burn-in %d exceeds cap %d; using the cap", periods, cap)
                return BurnIn(cap, i + 1, True)
            return BurnIn(periods, i + 1, False)
    logger.warning("coupled pair did not reach d_H < %g within %d periods", COUPLING_TOLERANCE, cap)
    return BurnIn(cap, cap, True)


def random_density(grid: TorusGrid, rng: np.random.Generator, log_range: float = 2.0) -> ProjectiveDensity:
    """Random element of Pr: a smoothed white field as log-density, rescaled to `log_range`."""
    smooth = heat_apply(Field(grid, rng.standard_normal(grid.n)), 0.01, 1.0).values
    spread = smooth.max() - smooth.min()
    log_density = (smooth - smooth.min()) * (log_range / spread) if spread > 0 else np.zeros(grid.n)
    return ProjectiveDensity.from_values(grid, np.exp(log_density))


@dataclass(frozen=True)
class BirkhoffEstimate:
    """Empirical lower bound on the Birkhoff coefficient of one period map."""

    mu_hat: float
    ratios: np.ndarray
    distances_before: np.ndarray
    distances_after: np.ndarray
    skipped: int = 0


def birkhoff_coefficient_estimate(
    xi: "PotentialSample",
    tau: float,
    cfg: "SchemeConfig",
    n_pairs: int,
    key: RngKey,
) -> BirkhoffEstimate:
    """Max over random pairs of d_H(A phi, A psi) / d_H(phi, psi), A = one period."""
    from .propagator import Eigensystem, Scheme, propagate_period

    if n_pairs < 1:
        raise InvalidArgumentError("n_pairs must be at least 1")
    eig = Eigensystem.from_sample(xi, cfg.kappa) if cfg.scheme == Scheme.EIGEN else None

    before, after = [], []
    skipped = 0
    for j in range(n_pairs):
        rng = generator(key.at(j))
        phi = random_density(xi.grid, rng)
        psi = random_density(xi.grid, rng)
        d = hilbert_distance(phi, psi)
        if d == 0.0:
            skipped += 1
            continue
        a_phi = propagate_period(phi, xi, tau, cfg, eigensystem=eig).z_next
        a_psi = propagate_period(psi, xi, tau, cfg, eigensystem=eig).z_next
        before.append(d)
        after.append(hilbert_distance(a_phi, a_psi))

    if not before:
        raise InvalidArgumentError("every sampled pair was degenerate")
    b, a = np.asarray(before), np.asarray(after)
    ratios = a / b
    return BirkhoffEstimate(float(ratios.max()), ratios, b, a, skipped)


@dataclass(frozen=True)
class InvarianceReport:
    statistic: float
    pvalue: float
    before: np.ndarray = dc_field(repr=False)
    after: np.ndarray = dc_field(repr=False)


def invariance_check(
    spec: "NoiseSpec",
    grid: TorusGrid,
    tau: float,
    cfg: "SchemeConfig",
    n_replicas: int,
    burn_in: int,
    seed: int,
) -> InvarianceReport:
    """
    Compare d_H(z, 1) at the end of burn-in with its value one fresh period
    later, across independent replicas (two-sample Kolmogorov-Smirnov).
    """
    from .noise import RenewalPotential
    from .propagator import evolve, propagate_period

    uniform = ProjectiveDensity.uniform(grid)
    before, after = np.empty(n_replicas), np.empty(n_replicas)
    for j in range(n_replicas):
        r = RenewalPotential(spec, grid, tau, RngKey(seed, stream_id("invariance", j)))
        z = evolve(uniform, r, burn_in, cfg, keep_history=False).z_final
        before[j] = hilbert_distance(z, uniform)
        z_next = propagate_period(z, r.sample(burn_in), tau, cfg).z_next
        after[j] = hilbert_distance(z_next, uniform)
    result = stats.ks_2samp(before, after)
    return InvarianceReport(float(result.statistic), float(result.pvalue), before, after)
