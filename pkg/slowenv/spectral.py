"""
Top eigenpair of H = kappa L + diag(xi), the Doob transform quantities
(zeta, psi, mu) and the large-tau sandwich

    E[zeta] >= lambda(tau) >= E[zeta - mu / tau].
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import TYPE_CHECKING, Optional
import logging
import math

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .core import EPS_POS, InvalidArgumentError, NumericalBreakdownError, PerronViolationError
from .noise import NoiseSpec, PotentialSample, sample_potential
from .projective import ProjectiveDensity, hilbert_distance
from .propagator import (
    Eigensystem,
    Scheme,
    SchemeConfig,
    hamiltonian_matrix,
    propagate_period,
    sparse_hamiltonian,
)
from .torus_grid import Field, TorusGrid
from .utils.rng import RngKey
from .utils.stats import mean_and_stderr

if TYPE_CHECKING:
    from .lyapunov import LyapunovEstimate

logger = logging.getLogger(__name__)

# Largest n solved with a dense symmetric eigensolver
DENSE_LIMIT = 2048
PERRON_TOLERANCE = 1e-10
MIN_BOUND_SAMPLES = 30


@dataclass(frozen=True)
class EigenPair:
    zeta: float
    psi: ProjectiveDensity
    residual: float


def _diagnostics(xi: PotentialSample, kappa: float) -> dict:
    return {
        "n": xi.grid.n,
        "kappa": kappa,
        "xi_min": float(xi.array.min()),
        "xi_max": float(xi.array.max()),
        "kind": xi.kind,
    }


def _perron_density(vec: np.ndarray, xi: PotentialSample, kappa: float) -> ProjectiveDensity:
    grid = xi.grid
    vec = vec if vec.sum() >= 0 else -vec
    psi = vec / (np.sum(vec) * grid.dx)
    if psi.min() < -PERRON_TOLERANCE:
        raise PerronViolationError(
            f"top eigenvector has an entry {psi.min():.3e} after sign fix",
            _diagnostics(xi, kappa),
        )
    psi = np.where(psi <= 0.0, EPS_POS, psi)
    return ProjectiveDensity(Field(grid, psi / (np.sum(psi) * grid.dx)))


def top_eigenpair(
    xi: PotentialSample, kappa: float, eigensystem: Optional[Eigensystem] = None
) -> EigenPair:
    """
    Largest eigenvalue zeta of kappa L + diag(xi) and its positive
    eigenvector psi with unit integral.

    A supplied `eigensystem` of the same sample is reused. Otherwise the
    dense solver computes only the top pair; above DENSE_LIMIT nodes the
    sparse Lanczos solver is used.

    Raises:
        NumericalBreakdownError: If the eigensolver fails
        PerronViolationError: If the sign-fixed eigenvector is not positive
    """
    if kappa <= 0:
        raise InvalidArgumentError(f"kappa must be positive, got {kappa}")
    n = xi.grid.n

    if eigensystem is not None:
        zeta, vec = eigensystem.top, eigensystem.vectors[:, -1]
    elif n <= DENSE_LIMIT:
        try:
            w, v = scipy.linalg.eigh(hamiltonian_matrix(xi, kappa), subset_by_index=[n - 1, n - 1])
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericalBreakdownError(f"eigensolver failed: {e}", _diagnostics(xi, kappa))
        zeta, vec = float(w[0]), v[:, 0]
    else:
        try:
            w, v = scipy.sparse.linalg.eigsh(
                sparse_hamiltonian(xi, kappa), k=1, which="LA", tol=1e-13
            )
        except scipy.sparse.linalg.ArpackNoConvergence as e:
            raise NumericalBreakdownError(f"Lanczos solver did not converge: {e}", _diagnostics(xi, kappa))
        zeta, vec = float(w[0]), v[:, 0]

    psi = _perron_density(np.asarray(vec, dtype=np.float64), xi, kappa)
    h_psi = kappa * _second_difference(psi.values, xi.grid) + xi.array * psi.values
    residual = float(np.abs(h_psi - zeta * psi.values).max() / psi.values.max())
    return EigenPair(float(zeta), psi, residual)


def _second_difference(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return (np.roll(values, 1) + np.roll(values, -1) - 2.0 * values) / grid.dx**2


def doob_mu(pair: EigenPair) -> float:
    """log max psi - log min psi, i.e. d_H(psi, 1)."""
    return hilbert_distance(pair.psi, ProjectiveDensity.uniform(pair.psi.grid))


def doob_consistency_check(
    xi: PotentialSample, tau: float, kappa: float, cfg: SchemeConfig
) -> tuple[float, float]:
    """
    Propagate the top eigenfunction for one period; it must come back as
    itself with mass exp(tau zeta).

    Returns (d_H(z_next, psi), |log_mass - tau zeta|).
    """
    if cfg.scheme != Scheme.EIGEN:
        raise InvalidArgumentError("the eigenfunction check runs on the eigen scheme only")
    cfg = cfg.model_copy(update={"kappa": kappa})
    eig = Eigensystem.from_sample(xi, kappa)
    pair = top_eigenpair(xi, kappa, eigensystem=eig)
    result = propagate_period(pair.psi, xi, tau, cfg, eigensystem=eig)
    return hilbert_distance(result.z_next, pair.psi), abs(result.log_mass - tau * pair.zeta)


@dataclass(frozen=True)
class SpectrumSample:
    """(zeta, mu) over i.i.d. potentials."""

    zetas: np.ndarray
    mus: np.ndarray
    n_grid: int

    @property
    def zeta_mean(self) -> tuple[float, float]:
        return mean_and_stderr(self.zetas)

    @property
    def mu_mean(self) -> tuple[float, float]:
        return mean_and_stderr(self.mus)


def spectrum_sample(
    spec: NoiseSpec,
    grid: TorusGrid,
    kappa: float,
    n_samples: int,
    key: RngKey,
    workers: int = 1,
) -> SpectrumSample:
    """Top eigenvalue and mu for `n_samples` potentials drawn at key.at(0..n-1)."""
    if n_samples < 1:
        raise InvalidArgumentError("n_samples must be at least 1")

    def one(i: int) -> tuple[float, float]:
        pair = top_eigenpair(sample_potential(spec, grid, key.at(i)), kappa)
        return pair.zeta, doob_mu(pair)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(one, range(n_samples)))
    else:
        pairs = [one(i) for i in range(n_samples)]
    arr = np.asarray(pairs, dtype=np.float64).reshape(n_samples, 2)
    return SpectrumSample(arr[:, 0].copy(), arr[:, 1].copy(), grid.n)


@dataclass(frozen=True)
class BoundsReport:
    E_zeta_hat: float
    zeta_stderr: float
    E_mu_hat: float
    mu_stderr: float
    lower: float
    lower_stderr: float
    lambda_hat: "LyapunovEstimate"
    tau: float
    upper_ok: bool
    lower_ok: bool
    sample: SpectrumSample = dc_field(repr=False)


def sandwich_bounds(
    spec: NoiseSpec,
    kappa: float,
    tau: float,
    n_samples: int,
    lambda_hat: "LyapunovEstimate",
    key: RngKey,
    grid: TorusGrid,
    workers: int = 1,
) -> BoundsReport:
    """
    Monte Carlo E[zeta] and E[mu] and the check of lambda_hat against
    E[zeta] from above and E[zeta - mu/tau] from below, each with three
    combined standard errors of slack.
    """
    if n_samples < MIN_BOUND_SAMPLES:
        raise InvalidArgumentError(f"need at least {MIN_BOUND_SAMPLES} samples, got {n_samples}")
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")

    sample = spectrum_sample(spec, grid, kappa, n_samples, key, workers)
    zeta, zeta_se = sample.zeta_mean
    mu, mu_se = sample.mu_mean
    lower, lower_se = mean_and_stderr(sample.zetas - sample.mus / tau)

    lam, lam_se = lambda_hat.lambda_hat, lambda_hat.stderr
    slack = 1e-12
    upper_ok = lam <= zeta + 3.0 * math.hypot(lam_se, zeta_se) + slack
    lower_ok = lam >= lower - 3.0 * math.hypot(lam_se, lower_se) - slack
    if not (upper_ok and lower_ok):
        logger.warning(
            "lambda_hat=%.6g outside [%.6g, %.6g] at tau=%g", lam, lower, zeta, tau
        )
    return BoundsReport(
        E_zeta_hat=zeta,
        zeta_stderr=zeta_se,
        E_mu_hat=mu,
        mu_stderr=mu_se,
        lower=lower,
        lower_stderr=lower_se,
        lambda_hat=lambda_hat,
        tau=tau,
        upper_ok=bool(upper_ok),
        lower_ok=bool(lower_ok),
        sample=sample,
    )
