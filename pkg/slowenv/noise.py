"""
Random environments: the frozen potential xi_stat, its renewal sequence and
the small-tau variance functional.

Every law is centered. A potential is a pure function of (spec, grid, key),
so the renewal sequence never needs to be stored.
"""

from dataclasses import dataclass
from typing import Annotated, Literal, Optional, Union
import logging
import math

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, TypeAdapter

from .core import InvalidArgumentError, NotFiniteError
from .torus_grid import Field, TorusGrid, integrate
from .utils.rng import RngKey, generator
from .utils.stats import mean_and_stderr

logger = logging.getLogger(__name__)

Law = Literal["rademacher", "uniform_sym", "gaussian"]


class _SpecModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class PiecewiseConstant(_SpecModel):
    """Sum_i X_i 1_{A_i}: i.i.d. values on m equal contiguous blocks."""

    kind: Literal["piecewise"] = "piecewise"
    m: int = pydantic.Field(ge=1)
    law: Law = "gaussian"
    sigma: float = pydantic.Field(default=1.0, gt=0)


class HolderFourier(_SpecModel):
    """
    Random Fourier series sum_k a_k (g_k cos 2 pi k x + g'_k sin 2 pi k x).

    a_k = k^-(alpha + 1/2) unless `amplitudes` lists a_1..a_K explicitly.
    """

    kind: Literal["holder"] = "holder"
    alpha: float = pydantic.Field(default=0.5, gt=0, lt=1)
    K: int = pydantic.Field(default=32, ge=1)
    multipliers: Literal["gaussian", "rademacher"] = "gaussian"
    amplitudes: Optional[tuple[float, ...]] = None

    @pydantic.model_validator(mode="before")
    @classmethod
    def _cutoff_from_amplitudes(cls, data):
        if isinstance(data, dict) and data.get("amplitudes") is not None and "K" not in data:
            data = {**data, "K": len(data["amplitudes"])}
        return data

    @pydantic.model_validator(mode="after")
    def _amplitudes_match_cutoff(self):
        if self.amplitudes is not None and len(self.amplitudes) != self.K:
            raise ValueError(f"amplitudes has {len(self.amplitudes)} entries but K={self.K}")
        return self

    def coefficients(self) -> np.ndarray:
        if self.amplitudes is not None:
            return np.asarray(self.amplitudes, dtype=np.float64)
        k = np.arange(1, self.K + 1, dtype=np.float64)
        return k ** -(self.alpha + 0.5)


class WhiteNoise(_SpecModel):
    """Spatial white noise; cell values have variance 1/dx."""

    kind: Literal["white"] = "white"


class ConstantInSpace(_SpecModel):
    """One law draw for the whole torus."""

    kind: Literal["constant"] = "constant"
    law: Law = "rademacher"
    sigma: float = pydantic.Field(default=1.0, gt=0)


class ZeroNoise(_SpecModel):
    """xi = 0, the deterministic control."""

    kind: Literal["zero"] = "zero"


NoiseSpec = Annotated[
    Union[PiecewiseConstant, HolderFourier, WhiteNoise, ConstantInSpace, ZeroNoise],
    pydantic.Field(discriminator="kind"),
]
noise_adapter: TypeAdapter = TypeAdapter(NoiseSpec)

NOISE_KINDS: tuple[str, ...] = ("piecewise", "holder", "white", "constant", "zero")
BOUNDED_KINDS = frozenset({"piecewise", "holder", "constant", "zero"})


def parse_noise(data: dict) -> NoiseSpec:
    return noise_adapter.validate_python(data)


def noise_params(spec: NoiseSpec) -> str:
    """Comma-free `key=value;...` rendering of the spec parameters."""
    parts = []
    for name, value in spec.model_dump(exclude={"kind"}).items():
        if value is None:
            continue
        if isinstance(value, (tuple, list)):
            value = "|".join(format(v, ".17g") for v in value)
        elif isinstance(value, float):
            value = format(value, ".17g")
        parts.append(f"{name}={value}")
    return ";".join(parts)


@dataclass(frozen=True, eq=False)
class PotentialSample:
    """One frozen environment xi_stat(omega) on the grid."""

    grid: TorusGrid
    values: Field
    kind: str
    index: int = 0

    @property
    def array(self) -> np.ndarray:
        return self.values.values

    @classmethod
    def from_values(cls, grid: TorusGrid, values, kind: str = "custom", index: int = 0) -> "PotentialSample":
        return cls(grid, Field(grid, values), kind, index)


def _draw_law(rng: np.random.Generator, law: str, sigma: float, size: int) -> np.ndarray:
    if law == "rademacher":
        return sigma * (2.0 * rng.integers(0, 2, size=size) - 1.0)
    if law == "uniform_sym":
        half_width = math.sqrt(3.0) * sigma
        return rng.uniform(-half_width, half_width, size=size)
    if law == "gaussian":
        return sigma * rng.standard_normal(size)
    raise InvalidArgumentError(f"unknown law {law!r}")


def sample_potential(spec: NoiseSpec, grid: TorusGrid, key: RngKey) -> PotentialSample:
    """Draw xi_stat for the given key; identical keys give identical arrays."""
    rng = generator(key)
    n = grid.n

    if isinstance(spec, PiecewiseConstant):
        if n % spec.m != 0:
            raise InvalidArgumentError(
                f"piecewise noise needs n divisible by m (n={n}, m={spec.m})"
            )
        values = np.repeat(_draw_law(rng, spec.law, spec.sigma, spec.m), n // spec.m)
    elif isinstance(spec, HolderFourier):
        if 2 * spec.K >= n:
            raise InvalidArgumentError(
                f"Fourier cutoff K={spec.K} is not resolved on n={n} (need 2K < n)"
            )
        a = spec.coefficients()
        if spec.multipliers == "gaussian":
            g = rng.standard_normal((2, spec.K))
        else:
            g = 2.0 * rng.integers(0, 2, size=(2, spec.K)) - 1.0
        phase = 2.0 * np.pi * np.outer(np.arange(1, spec.K + 1), grid.nodes)
        values = (a * g[0]) @ np.cos(phase) + (a * g[1]) @ np.sin(phase)
    elif isinstance(spec, WhiteNoise):
        values = math.sqrt(n) * rng.standard_normal(n)
    elif isinstance(spec, ConstantInSpace):
        values = np.full(n, _draw_law(rng, spec.law, spec.sigma, 1)[0])
    elif isinstance(spec, ZeroNoise):
        values = np.zeros(n)
    else:
        raise InvalidArgumentError(f"unsupported noise spec {spec!r}")

    return PotentialSample(grid, Field(grid, values), spec.kind, key.index)


def center_spatially(p: PotentialSample) -> PotentialSample:
    """Remove the spatial mean <xi, 1>."""
    centered = p.array - integrate(p.values)
    return PotentialSample(p.grid, Field(p.grid, centered), p.kind, p.index)


@dataclass(frozen=True)
class RenewalPotential:
    """
    xi^tau: sample floor(t/tau) of an i.i.d. sequence, generated on demand.

    With `centered` every sample has its spatial mean removed. The mean only
    shifts each period log mass by tau <xi, 1>, whose expectation is zero, so
    the Lyapunov exponent is the same.
    """

    spec: NoiseSpec
    grid: TorusGrid
    tau: float
    key: RngKey
    centered: bool = False

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise InvalidArgumentError(f"renewal period must be positive, got {self.tau}")

    def sample(self, index: int) -> PotentialSample:
        if index < 0:
            raise InvalidArgumentError(f"period index must be nonnegative, got {index}")
        p = sample_potential(self.spec, self.grid, self.key.at(index))
        return center_spatially(p) if self.centered else p


def renewal_at(r: RenewalPotential, t: float) -> PotentialSample:
    if t < 0:
        raise InvalidArgumentError(f"time must be nonnegative, got {t}")
    return r.sample(math.floor(t / r.tau))


def variance_functional(spec: NoiseSpec) -> float:
    """
    Closed form of (1/4) int int E|xi(x) - xi(y)|^2 dx dy.

    Raises:
        NotFiniteError: For white noise, where the functional diverges
    """
    if isinstance(spec, PiecewiseConstant):
        return spec.sigma**2 * (1.0 - 1.0 / spec.m) / 2.0
    if isinstance(spec, HolderFourier):
        return 0.5 * float(np.sum(spec.coefficients() ** 2))
    if isinstance(spec, (ConstantInSpace, ZeroNoise)):
        return 0.0
    if isinstance(spec, WhiteNoise):
        raise NotFiniteError("the variance functional of white noise is infinite")
    raise InvalidArgumentError(f"unsupported noise spec {spec!r}")


def variance_functional_mc(
    spec: NoiseSpec, grid: TorusGrid, n_samples: int, key: RngKey
) -> tuple[float, float]:
    """
    Monte Carlo estimate of the variance functional, with standard error.

    Each sample contributes its exact grid value
    (1/4) int int |xi(x) - xi(y)|^2 = (int xi^2 - (int xi)^2) / 2.
    """
    if isinstance(spec, WhiteNoise):
        raise NotFiniteError("the variance functional of white noise is infinite")
    if n_samples < 2:
        raise InvalidArgumentError("need at least two samples")
    contributions = np.empty(n_samples)
    for i in range(n_samples):
        xi = sample_potential(spec, grid, key.at(i)).array
        contributions[i] = 0.5 * (np.mean(xi**2) - np.mean(xi) ** 2)
    return mean_and_stderr(contributions)
