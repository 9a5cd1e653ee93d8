import numpy as np
import pydantic
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowenv.core import InvalidArgumentError, NotFiniteError
from slowenv.noise import (
    ConstantInSpace,
    HolderFourier,
    PiecewiseConstant,
    PotentialSample,
    RenewalPotential,
    WhiteNoise,
    ZeroNoise,
    center_spatially,
    noise_params,
    parse_noise,
    renewal_at,
    sample_potential,
    variance_functional,
    variance_functional_mc,
)
from slowenv.torus_grid import TorusGrid, integrate
from slowenv.utils.rng import RngKey, stream_id


def key(i: int = 0, seed: int = 1) -> RngKey:
    return RngKey(seed, stream_id("test"), i)


def test_piecewise_rademacher_blocks(grid256):
    spec = PiecewiseConstant(m=4, law="rademacher", sigma=1.0)
    xi = sample_potential(spec, grid256, key())
    assert set(np.unique(xi.array)) <= {-1.0, 1.0}
    blocks = xi.array.reshape(4, 64)
    assert np.all(blocks == blocks[:, :1])


def test_piecewise_needs_divisible_grid():
    with pytest.raises(InvalidArgumentError):
        sample_potential(PiecewiseConstant(m=3), TorusGrid(64), key())


def test_uniform_law_has_requested_spread():
    spec = PiecewiseConstant(m=64, law="uniform_sym", sigma=2.0)
    values = np.concatenate([sample_potential(spec, TorusGrid(64), key(i)).array for i in range(200)])
    assert np.abs(values).max() <= 2.0 * np.sqrt(3.0)
    assert values.std() == pytest.approx(2.0, rel=0.05)


def test_holder_has_no_constant_mode(grid256):
    xi = sample_potential(HolderFourier(alpha=0.5, K=32), grid256, key())
    assert abs(integrate(xi.values)) < 1e-12


def test_holder_cutoff_must_be_resolved():
    with pytest.raises(InvalidArgumentError):
        sample_potential(HolderFourier(K=32), TorusGrid(64), key())


def test_holder_amplitudes_fix_the_cutoff():
    spec = HolderFourier(amplitudes=(1.0, 0.0, 0.0))
    assert spec.K == 3
    np.testing.assert_array_equal(spec.coefficients(), [1.0, 0.0, 0.0])
    with pytest.raises(pydantic.ValidationError):
        HolderFourier(K=2, amplitudes=(1.0,))


def test_holder_default_coefficients():
    np.testing.assert_allclose(HolderFourier(alpha=0.5, K=4).coefficients(), np.arange(1, 5) ** -1.0)


def test_white_noise_cell_variance(grid256):
    draws = np.stack([sample_potential(WhiteNoise(), grid256, key(i)).array for i in range(10_000)])
    per_node = draws.var(axis=0, ddof=1)
    assert per_node.mean() == pytest.approx(256.0, rel=0.05)
    assert np.abs(per_node / 256.0 - 1.0).max() < 0.1


@pytest.mark.parametrize(
    "spec",
    [
        PiecewiseConstant(m=4, law="gaussian"),
        PiecewiseConstant(m=8, law="rademacher"),
        HolderFourier(K=8, multipliers="rademacher"),
        WhiteNoise(),
        ConstantInSpace(law="uniform_sym"),
    ],
)
def test_ensemble_mean_is_zero_at_every_node(spec):
    grid = TorusGrid(32)
    replicas = 10_000
    draws = np.stack([sample_potential(spec, grid, key(i, seed=5)).array for i in range(replicas)])
    mean = draws.mean(axis=0)
    std = draws.std(axis=0, ddof=1)
    assert np.all(np.abs(mean) <= 4.0 * std / np.sqrt(replicas))


def test_zero_noise_is_zero(grid64):
    np.testing.assert_array_equal(sample_potential(ZeroNoise(), grid64, key()).array, 0.0)


def test_center_spatially(grid64):
    const = PotentialSample.from_values(grid64, np.full(64, 3.0))
    assert np.abs(center_spatially(const).array).max() < 1e-13

    cos = PotentialSample.from_values(grid64, np.cos(2 * np.pi * grid64.nodes))
    assert np.abs(center_spatially(cos).array - cos.array).max() < 1e-13

    xi = sample_potential(PiecewiseConstant(m=4), grid64, key())
    centered = center_spatially(xi)
    assert abs(integrate(centered.values)) < 1e-13
    np.testing.assert_allclose(center_spatially(centered).array, centered.array, atol=1e-13)


def test_renewal_indexing():
    r = RenewalPotential(PiecewiseConstant(m=4), TorusGrid(16), 0.5, key())
    assert renewal_at(r, 0.0).index == 0
    assert renewal_at(r, 0.49).index == 0
    assert renewal_at(r, 0.5).index == 1
    np.testing.assert_array_equal(renewal_at(r, 1.2).array, renewal_at(r, 1.2).array)
    with pytest.raises(InvalidArgumentError):
        renewal_at(r, -0.1)


def test_renewal_needs_positive_period():
    with pytest.raises(InvalidArgumentError):
        RenewalPotential(ZeroNoise(), TorusGrid(8), 0.0, key())


def test_centered_renewal_removes_the_mean():
    r = RenewalPotential(PiecewiseConstant(m=4), TorusGrid(16), 1.0, key(), centered=True)
    for i in range(5):
        assert abs(integrate(r.sample(i).values)) < 1e-13


def test_renewal_samples_differ_between_periods():
    r = RenewalPotential(PiecewiseConstant(m=8), TorusGrid(64), 1.0, key())
    assert not np.array_equal(r.sample(0).array, r.sample(1).array)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), stream=st.integers(0, 2**40), index=st.integers(0, 10**9))
def test_sampling_is_a_pure_function_of_the_key(seed, stream, index):
    spec = HolderFourier(K=4)
    grid = TorusGrid(16)
    a = sample_potential(spec, grid, RngKey(seed, stream, index))
    b = sample_potential(spec, grid, RngKey(seed, stream, index))
    np.testing.assert_array_equal(a.array, b.array)


def test_variance_functional_closed_forms():
    assert variance_functional(PiecewiseConstant(m=4, sigma=1.0)) == pytest.approx(0.375)
    assert variance_functional(PiecewiseConstant(m=1, sigma=3.0)) == 0.0
    assert variance_functional(ConstantInSpace()) == 0.0
    assert variance_functional(ZeroNoise()) == 0.0
    assert variance_functional(HolderFourier(amplitudes=(1.0,))) == pytest.approx(0.5)
    with pytest.raises(NotFiniteError):
        variance_functional(WhiteNoise())


@pytest.mark.parametrize(
    "spec",
    [PiecewiseConstant(m=4, law="gaussian"), PiecewiseConstant(m=4, law="rademacher"), HolderFourier(amplitudes=(1.0,))],
)
def test_variance_functional_monte_carlo_agrees(spec):
    value, stderr = variance_functional_mc(spec, TorusGrid(64), 4000, key(seed=9))
    assert abs(value - variance_functional(spec)) <= 4.0 * stderr + 1e-12


def test_pairwise_difference_matches_four_times_functional():
    spec = PiecewiseConstant(m=4, law="gaussian")
    grid = TorusGrid(16)
    rng = np.random.default_rng(0)
    diffs = []
    for i in range(4000):
        xi = sample_potential(spec, grid, key(i, seed=2)).array
        x, y = rng.integers(0, grid.n, size=2)
        diffs.append((xi[x] - xi[y]) ** 2)
    diffs = np.asarray(diffs)
    stderr = diffs.std(ddof=1) / np.sqrt(diffs.size)
    assert abs(diffs.mean() - 4 * variance_functional(spec)) <= 3.5 * stderr


def test_variance_functional_mc_rejects_white_noise():
    with pytest.raises(NotFiniteError):
        variance_functional_mc(WhiteNoise(), TorusGrid(16), 10, key())


def test_parse_noise_and_params():
    spec = parse_noise({"kind": "piecewise", "m": 4, "law": "rademacher", "sigma": 1.0})
    assert isinstance(spec, PiecewiseConstant)
    assert noise_params(spec) == "m=4;law=rademacher;sigma=1"
    assert noise_params(HolderFourier(amplitudes=(1.0, 0.5))) == (
        "alpha=0.5;K=2;multipliers=gaussian;amplitudes=1|0.5"
    )
    with pytest.raises(pydantic.ValidationError):
        parse_noise({"kind": "piecewise", "m": 0})
    with pytest.raises(pydantic.ValidationError):
        parse_noise({"kind": "brownian"})
