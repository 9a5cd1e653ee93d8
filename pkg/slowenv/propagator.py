"""
One renewal period of the dynamics: the action of exp(tau H), H = kappa L + xi,
on a projective density, with the mass kept in log space.

Three schemes discretize the same semi-discrete operator (L is the periodic
second difference):

- eigen: dense eigendecomposition, exact in time (the reference)
- strang: heat / reaction / heat splitting with exact FFT heat sub-steps
- crank_nicolson: theta = 1/2 stepping with a sparse LU factorization

A Feynman-Kac Monte Carlo estimator of the period mass serves as an
independent check.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional
import logging
import math

import numpy as np
import pydantic
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from pydantic import BaseModel, ConfigDict

from .core import InvalidArgumentError, NumericalBreakdownError, UnsupportedNoiseError
from .noise import PotentialSample, RenewalPotential
from .projective import ProjectiveDensity, normalize_values
from .torus_grid import Field, TorusGrid, apply_multiplier, heat_multiplier
from .utils.rng import RngKey, generator
from .utils.stats import mean_and_stderr

logger = logging.getLogger(__name__)

# Rescale the running solution mid-period once it leaves [1e-100, 1e100]
RESCALE_LIMIT = 1e100


class Scheme(str, Enum):
    EIGEN = "eigen"
    STRANG = "strang"
    CRANK_NICOLSON = "crank_nicolson"


class SchemeConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scheme: Scheme = Scheme.STRANG
    dt_max: float = pydantic.Field(default=1e-3, gt=0)
    kappa: float = pydantic.Field(default=1.0, gt=0)


@dataclass(frozen=True)
class PeriodResult:
    z_next: ProjectiveDensity
    log_mass: float
    clamp_events: int = 0


@dataclass(frozen=True)
class EvolveResult:
    total_log_mass: float
    z_final: ProjectiveDensity
    log_masses: np.ndarray
    clamp_events: int
    per_period: tuple[PeriodResult, ...] = ()


def laplacian_matrix(grid: TorusGrid) -> np.ndarray:
    """Periodic second difference divided by dx^2 (dense, symmetric)."""
    eye = np.eye(grid.n)
    return (np.roll(eye, 1, axis=1) + np.roll(eye, -1, axis=1) - 2.0 * eye) / grid.dx**2


def hamiltonian_matrix(xi: PotentialSample, kappa: float) -> np.ndarray:
    return kappa * laplacian_matrix(xi.grid) + np.diag(xi.array)


def sparse_hamiltonian(xi: PotentialSample, kappa: float) -> scipy.sparse.csc_matrix:
    n = xi.grid.n
    c = kappa / xi.grid.dx**2
    shift = scipy.sparse.csr_matrix(
        (np.ones(n), (np.arange(n), (np.arange(n) + 1) % n)), shape=(n, n)
    )
    lap = c * (shift + shift.T) - 2.0 * c * scipy.sparse.identity(n, format="csr")
    return (lap + scipy.sparse.diags(xi.array)).tocsc()


@dataclass(frozen=True, eq=False)
class Eigensystem:
    """Eigendecomposition of kappa L + diag(xi), ascending eigenvalues."""

    values: np.ndarray
    vectors: np.ndarray
    kappa: float

    @classmethod
    def from_sample(cls, xi: PotentialSample, kappa: float) -> "Eigensystem":
        h = hamiltonian_matrix(xi, kappa)
        try:
            w, v = scipy.linalg.eigh(h)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericalBreakdownError(
                f"eigensolver failed: {e}",
                {"n": xi.grid.n, "kappa": kappa, "xi_max": float(np.abs(xi.array).max())},
            )
        return cls(w, v, kappa)

    @property
    def top(self) -> float:
        return float(self.values[-1])

    def apply(self, values: np.ndarray, tau: float) -> tuple[np.ndarray, float]:
        """exp(tau H) values, returned as (array, log scale) with the top mode shifted out."""
        growth = np.exp(tau * (self.values - self.top))
        return self.vectors @ (growth * (self.vectors.T @ values)), tau * self.top


def _strang(values: np.ndarray, xi: PotentialSample, tau: float, cfg: SchemeConfig) -> tuple[np.ndarray, float]:
    xi_max = float(np.abs(xi.array).max())
    dt_cap = cfg.dt_max if xi_max == 0.0 else min(cfg.dt_max, 1.0 / (10.0 * xi_max))
    steps = max(1, math.ceil(tau / dt_cap - 1e-12))
    dt = tau / steps

    half = heat_multiplier(xi.grid, 0.5 * dt, cfg.kappa, "lattice")
    full = heat_multiplier(xi.grid, dt, cfg.kappa, "lattice")
    react = np.exp(dt * xi.array)

    y = apply_multiplier(values, half)
    log_scale = 0.0
    for step in range(steps):
        y = apply_multiplier(y * react, full if step < steps - 1 else half)
        peak = float(np.abs(y).max())
        if peak > RESCALE_LIMIT or 0.0 < peak < 1.0 / RESCALE_LIMIT:
            y /= peak
            log_scale += math.log(peak)
    return y, log_scale


def _crank_nicolson(values: np.ndarray, xi: PotentialSample, tau: float, cfg: SchemeConfig) -> tuple[np.ndarray, float]:
    steps = max(1, math.ceil(tau / cfg.dt_max - 1e-12))
    dt = tau / steps
    h = sparse_hamiltonian(xi, cfg.kappa)
    eye = scipy.sparse.identity(xi.grid.n, format="csc")
    forward = (eye + 0.5 * dt * h).tocsr()
    solver = scipy.sparse.linalg.splu((eye - 0.5 * dt * h).tocsc())

    y = np.array(values, dtype=np.float64)
    log_scale = 0.0
    for _ in range(steps):
        y = solver.solve(forward @ y)
        peak = float(np.abs(y).max())
        if peak > RESCALE_LIMIT or 0.0 < peak < 1.0 / RESCALE_LIMIT:
            y /= peak
            log_scale += math.log(peak)
    return y, log_scale


def _finish_period(y: np.ndarray, log_scale: float, grid: TorusGrid, diagnostics: dict) -> PeriodResult:
    if not np.all(np.isfinite(y)):
        raise NumericalBreakdownError("NaN or Inf after propagation", diagnostics)
    if not float(np.sum(y)) > 0.0:
        raise NumericalBreakdownError(
            "non-positive mass after propagation", {**diagnostics, "mass": float(np.sum(y) * grid.dx)}
        )
    z, log_mass, clamps = normalize_values(y, grid)
    return PeriodResult(ProjectiveDensity(Field(grid, z)), log_scale + log_mass, clamps)


def propagate_values(
    values: np.ndarray,
    xi: PotentialSample,
    tau: float,
    cfg: SchemeConfig,
    eigensystem: Optional[Eigensystem] = None,
) -> PeriodResult:
    """
    Propagate an arbitrary positive (not necessarily normalized) profile.

    Scaling the input by c adds log c to log_mass and leaves z_next unchanged.
    """
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    y0 = np.asarray(values, dtype=np.float64)
    if y0.shape != (xi.grid.n,):
        raise InvalidArgumentError("profile and potential live on different grids")

    if cfg.scheme == Scheme.EIGEN:
        eig = eigensystem or Eigensystem.from_sample(xi, cfg.kappa)
        y, log_scale = eig.apply(y0, tau)
    elif cfg.scheme == Scheme.STRANG:
        y, log_scale = _strang(y0, xi, tau, cfg)
    elif cfg.scheme == Scheme.CRANK_NICOLSON:
        y, log_scale = _crank_nicolson(y0, xi, tau, cfg)
    else:
        raise InvalidArgumentError(f"unknown scheme {cfg.scheme!r}")

    diagnostics = {
        "scheme": cfg.scheme.value,
        "tau": tau,
        "kappa": cfg.kappa,
        "dt_max": cfg.dt_max,
        "n": xi.grid.n,
        "period_index": xi.index,
        "xi_max": float(np.abs(xi.array).max()),
    }
    return _finish_period(y, log_scale, xi.grid, diagnostics)


def propagate_period(
    z: ProjectiveDensity,
    xi: PotentialSample,
    tau: float,
    cfg: SchemeConfig,
    eigensystem: Optional[Eigensystem] = None,
) -> PeriodResult:
    """One renewal period: z -> normalized exp(tau H) z and log of its mass."""
    return propagate_values(z.values, xi, tau, cfg, eigensystem)


def evolve(
    u0: ProjectiveDensity,
    r: RenewalPotential,
    n_periods: int,
    cfg: SchemeConfig,
    start: int = 0,
    keep_history: bool = True,
) -> EvolveResult:
    """
    Run `n_periods` renewal periods from period index `start`.

    total_log_mass is the sum of the per-period log masses (the telescoped
    log of the total mass). `keep_history=False` drops the per-period
    densities and keeps only their log masses.
    """
    if n_periods < 1:
        raise InvalidArgumentError("n_periods must be at least 1")
    z = u0
    log_masses = np.empty(n_periods)
    clamps = 0
    history = []
    for i in range(n_periods):
        result = propagate_period(z, r.sample(start + i), r.tau, cfg)
        log_masses[i] = result.log_mass
        clamps += result.clamp_events
        z = result.z_next
        if keep_history:
            history.append(result)
    if clamps:
        logger.info("%d positivity clamps over %d periods", clamps, n_periods)
    return EvolveResult(float(np.sum(log_masses)), z, log_masses, clamps, tuple(history))


def feynman_kac_mass(
    xi: PotentialSample,
    tau: float,
    z: ProjectiveDensity,
    n_paths: int,
    dt_fk: float,
    key: RngKey,
    kappa: float = 1.0,
) -> tuple[float, float]:
    """
    Monte Carlo estimate of int exp(tau H) z dx.

    E_{x ~ Unif}[z(B_tau) exp(int_0^tau xi(B_s) ds)] with Brownian increments of
    variance 2 kappa dt, xi read at the nearest node and the time integral by
    the left-endpoint rule. Returns (mean, standard error).
    """
    if xi.kind == "white":
        raise UnsupportedNoiseError("pathwise integrals of white noise are not grid-stable")
    if not 0 < dt_fk <= tau:
        raise InvalidArgumentError(f"need 0 < dt_fk <= tau, got dt_fk={dt_fk}, tau={tau}")
    if n_paths < 1:
        raise InvalidArgumentError("n_paths must be at least 1")

    n = xi.grid.n
    steps = max(1, math.ceil(tau / dt_fk - 1e-12))
    dt = tau / steps
    spread = math.sqrt(2.0 * kappa * dt)
    rng = generator(key)

    x = rng.uniform(0.0, 1.0, n_paths)
    exponent = np.zeros(n_paths)
    for _ in range(steps):
        exponent += xi.array[np.rint(x * n).astype(np.int64) % n] * dt
        x = np.mod(x + spread * rng.standard_normal(n_paths), 1.0)
    weights = z.values[np.rint(x * n).astype(np.int64) % n] * np.exp(exponent)
    return mean_and_stderr(weights)
