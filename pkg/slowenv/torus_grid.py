"""
Uniform periodic grid on the unit torus, quadrature, discrete Fourier
transform and the exact heat semigroup.

The Laplacian convention is the one of the Fourier transform
F(phi)(k) = int exp(-2 pi i x k) phi(x) dx, i.e. Fourier symbol -(2 pi k)^2.
The periodic second difference has symbol -(4/dx^2) sin^2(pi k / n); both
are available through `symbol`.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal
import logging

import numpy as np

from .core import InvalidArgumentError

logger = logging.getLogger(__name__)

HeatSymbol = Literal["fourier", "lattice"]


@dataclass(frozen=True)
class TorusGrid:
    """n equispaced nodes x_j = j/n on the torus R/Z."""

    n: int

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)):
            raise InvalidArgumentError(f"grid size must be an integer, got {self.n!r}")
        if self.n < 2:
            raise InvalidArgumentError(f"grid size must be at least 2, got {self.n}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.n, dtype=np.float64) / self.n
        x.flags.writeable = False
        return x

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Integer frequencies in FFT order, covering -floor(n/2)..ceil(n/2)-1."""
        k = np.arange(self.n, dtype=np.int64)
        k[k >= (self.n + 1) // 2] -= self.n
        k.flags.writeable = False
        return k

    def heat_symbol(self, symbol: HeatSymbol = "fourier") -> np.ndarray:
        """Nonnegative symbol of -Laplacian on the real-FFT modes 0..n//2."""
        k = np.arange(self.n // 2 + 1, dtype=np.float64)
        if symbol == "fourier":
            return (2.0 * np.pi * k) ** 2
        if symbol == "lattice":
            return 4.0 * self.n**2 * np.sin(np.pi * k / self.n) ** 2
        raise InvalidArgumentError(f"unknown heat symbol {symbol!r}")


@dataclass(frozen=True, eq=False)
class Field:
    """Real grid function; values are copied, float64 and read-only."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64)
        if arr.shape != (self.grid.n,):
            raise InvalidArgumentError(
                f"field needs {self.grid.n} values, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("field values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_function(cls, grid: TorusGrid, func: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return cls(grid, np.broadcast_to(func(grid.nodes), (grid.n,)))

    @classmethod
    def constant(cls, grid: TorusGrid, value: float) -> "Field":
        return cls(grid, np.full(grid.n, float(value)))


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    """Discrete Fourier coefficients in FFT order (see TorusGrid.frequencies)."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.coeffs, dtype=np.complex128)
        if arr.shape != (self.grid.n,):
            raise InvalidArgumentError(
                f"spectrum needs {self.grid.n} coefficients, got shape {arr.shape}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @property
    def frequencies(self) -> np.ndarray:
        return self.grid.frequencies

    def coeff(self, k: int) -> complex:
        """Coefficient of frequency k."""
        idx = np.flatnonzero(self.grid.frequencies == k)
        if idx.size == 0:
            raise InvalidArgumentError(f"frequency {k} is not resolved on n={self.grid.n}")
        return complex(self.coeffs[idx[0]])


def make_grid(n: int) -> TorusGrid:
    return TorusGrid(n)


def integrate(f: Field) -> float:
    """Rectangle rule; exact for trigonometric polynomials below Nyquist."""
    return float(np.sum(f.values) * f.grid.dx)


def spectral_forward(f: Field) -> SpectralCoeffs:
    return SpectralCoeffs(f.grid, np.fft.fft(f.values) / f.grid.n)


def spectral_inverse(c: SpectralCoeffs) -> Field:
    if c.coeffs.shape != (c.grid.n,):
        raise InvalidArgumentError("coefficient count does not match the grid")
    return Field(c.grid, np.fft.ifft(c.coeffs * c.grid.n).real)


def heat_multiplier(
    grid: TorusGrid, t: float, kappa: float, symbol: HeatSymbol = "fourier"
) -> np.ndarray:
    """Real-FFT multiplier exp(-t kappa sigma_k); the k = 0 entry is exactly 1."""
    if t < 0:
        raise InvalidArgumentError(f"heat time must be nonnegative, got {t}")
    if kappa <= 0:
        raise InvalidArgumentError(f"kappa must be positive, got {kappa}")
    return np.exp(-t * kappa * grid.heat_symbol(symbol))


def apply_multiplier(values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    return np.fft.irfft(np.fft.rfft(values) * multiplier, n=values.shape[-1])


def heat_apply(
    f: Field, t: float, kappa: float, symbol: HeatSymbol = "fourier"
) -> Field:
    """
    Exact action of exp(t kappa Laplacian) on the grid function.

    The mean is preserved exactly. Negative overshoots of positive inputs
    beyond working precision are logged.
    """
    mult = heat_multiplier(f.grid, t, kappa, symbol)
    if t == 0:
        return f
    out = apply_multiplier(f.values, mult)
    if f.values.min() > 0 and out.min() < -1e-12 * f.values.max():
        logger.debug(
            "heat kernel overshoot: min %.3e for input max %.3e (t=%g, kappa=%g)",
            out.min(), f.values.max(), t, kappa,
        )
    return Field(f.grid, out)
