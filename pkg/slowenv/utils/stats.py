"""
Monte Carlo error bars and small fitting helpers.
"""

from dataclasses import dataclass
from typing import Optional, Sequence
import math

import numpy as np
from scipy import stats

from ..core import InvalidArgumentError


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    intercept_stderr: float
    slope: float
    slope_stderr: float
    weights: np.ndarray


def mean_and_stderr(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and its standard error (zero for a single value)."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise InvalidArgumentError("mean of an empty sample")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def batch_means(values: Sequence[float], batch_count: int = 20) -> tuple[float, float]:
    """
    Mean of a correlated series with a batch-means standard error.

    The mean uses every value; the error uses `batch_count` contiguous batches
    of equal length (a trailing remainder shorter than one batch is left out
    of the error estimate only).
    """
    x = np.asarray(values, dtype=np.float64)
    if batch_count < 2:
        raise InvalidArgumentError("batch_count must be at least 2")
    if x.size < batch_count:
        raise InvalidArgumentError(
            f"need at least {batch_count} values for {batch_count} batches, got {x.size}"
        )
    size = x.size // batch_count
    means = x[: size * batch_count].reshape(batch_count, size).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(batch_count))


def pool_inverse_variance(
    means: Sequence[float], stderrs: Sequence[float]
) -> tuple[float, float]:
    """
    Combine independent estimates by inverse-variance weighting.

    Estimates with zero error cannot be weighted; when any is present the
    plain average is returned with the root-sum-square error over count.
    """
    m = np.asarray(means, dtype=np.float64)
    s = np.asarray(stderrs, dtype=np.float64)
    if m.size == 0:
        raise InvalidArgumentError("nothing to pool")
    if m.size == 1:
        return float(m[0]), float(s[0])
    if np.any(s <= 0.0):
        return float(m.mean()), float(math.sqrt(float(np.sum(s**2))) / m.size)
    w = 1.0 / s**2
    return float(np.sum(w * m) / np.sum(w)), float(1.0 / math.sqrt(float(np.sum(w))))


def weighted_linear_fit(
    x: Sequence[float], y: Sequence[float], stderr: Optional[Sequence[float]] = None
) -> LinearFit:
    """
    Weighted least squares for y = intercept + slope * x.

    Weights are 1/stderr**2 when every error is positive, uniform otherwise.
    A single point yields a flat line through it.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.size != ya.size or xa.size == 0:
        raise InvalidArgumentError("x and y must be non-empty and of equal length")

    if stderr is not None and np.all(np.asarray(stderr) > 0.0):
        se = np.asarray(stderr, dtype=np.float64)
        w = 1.0 / se**2
        scaled = True
    else:
        se = None
        w = np.ones_like(xa)
        scaled = False

    if xa.size == 1:
        err = float(se[0]) if se is not None else 0.0
        return LinearFit(float(ya[0]), err, 0.0, 0.0, w)

    design = np.column_stack([np.ones_like(xa), xa])
    normal = design.T @ (w[:, None] * design)
    beta = np.linalg.solve(normal, design.T @ (w * ya))
    cov = np.linalg.inv(normal)
    if not scaled:
        dof = xa.size - 2
        resid = ya - design @ beta
        cov = cov * (float(resid @ resid) / dof if dof > 0 else 0.0)
    return LinearFit(
        intercept=float(beta[0]),
        intercept_stderr=float(math.sqrt(max(cov[0, 0], 0.0))),
        slope=float(beta[1]),
        slope_stderr=float(math.sqrt(max(cov[1, 1], 0.0))),
        weights=w,
    )


def log_slope(times: Sequence[float], values: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of log(values) against times, with its stderr."""
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.size < 2:
        raise InvalidArgumentError("need at least two points for a slope")
    if t.size == 2:
        return float((np.log(v[1]) - np.log(v[0])) / (t[1] - t[0])), 0.0
    fit = stats.linregress(t, np.log(v))
    return float(fit.slope), float(fit.stderr)
