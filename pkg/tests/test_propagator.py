import math

import numpy as np
import pytest

from slowenv.core import InvalidArgumentError, NumericalBreakdownError, UnsupportedNoiseError
from slowenv.noise import ConstantInSpace, PiecewiseConstant, RenewalPotential, WhiteNoise, ZeroNoise, sample_potential
from slowenv.projective import ProjectiveDensity, hilbert_distance, normalize
from slowenv.propagator import (
    Eigensystem,
    Scheme,
    SchemeConfig,
    evolve,
    feynman_kac_mass,
    hamiltonian_matrix,
    laplacian_matrix,
    propagate_period,
    propagate_values,
    sparse_hamiltonian,
)
from slowenv.torus_grid import Field, TorusGrid, heat_apply
from slowenv.utils.rng import RngKey, stream_id

from .conftest import constant_sample, cos_sample

ALL_SCHEMES = [Scheme.EIGEN, Scheme.STRANG, Scheme.CRANK_NICOLSON]


def cfg_for(scheme: Scheme, dt_max: float = 1e-3, kappa: float = 1.0) -> SchemeConfig:
    return SchemeConfig(scheme=scheme, dt_max=dt_max, kappa=kappa)


def test_laplacian_matrix_is_periodic_second_difference():
    lap = laplacian_matrix(TorusGrid(4))
    expected = 16.0 * np.array(
        [[-2, 1, 0, 1], [1, -2, 1, 0], [0, 1, -2, 1], [1, 0, 1, -2]], dtype=float
    )
    np.testing.assert_array_equal(lap, expected)


def test_sparse_and_dense_hamiltonians_agree(grid64):
    xi = cos_sample(grid64, 2.0)
    np.testing.assert_allclose(sparse_hamiltonian(xi, 0.7).toarray(), hamiltonian_matrix(xi, 0.7), atol=1e-9)


@pytest.mark.parametrize("scheme", ALL_SCHEMES)
def test_zero_potential_keeps_the_constant(scheme, grid64):
    tol = 1e-9 if scheme == Scheme.EIGEN else 1e-12
    result = propagate_period(ProjectiveDensity.uniform(grid64), constant_sample(grid64, 0.0), 0.3, cfg_for(scheme))
    assert abs(result.log_mass) < tol
    assert np.abs(result.z_next.values - 1.0).max() < tol
    assert result.clamp_events == 0


@pytest.mark.parametrize("scheme", ALL_SCHEMES)
def test_constant_potential_adds_tau_c(scheme, grid64):
    tol = 1e-9 if scheme == Scheme.EIGEN else 1e-12
    z = ProjectiveDensity.cosine_profile(grid64)
    result = propagate_period(z, constant_sample(grid64, 0.8), 0.25, cfg_for(scheme))
    assert result.log_mass == pytest.approx(0.25 * 0.8, abs=tol)


def test_constant_potential_profile_is_heat_flowed(grid64):
    z = ProjectiveDensity.cosine_profile(grid64)
    result = propagate_period(z, constant_sample(grid64, -1.3), 0.05, cfg_for(Scheme.STRANG))
    flowed = heat_apply(z.field, 0.05, 1.0, symbol="lattice").values
    assert np.abs(result.z_next.values - flowed).max() < 1e-12


def test_strang_matches_eigen_on_cosine(grid256):
    xi = cos_sample(grid256)
    z = ProjectiveDensity.uniform(grid256)
    exact = propagate_period(z, xi, 0.1, cfg_for(Scheme.EIGEN)).log_mass
    split = propagate_period(z, xi, 0.1, cfg_for(Scheme.STRANG, 1e-3)).log_mass
    assert abs(split - exact) <= 1e-6


def test_strang_error_is_second_order(grid256):
    xi = cos_sample(grid256)
    z = ProjectiveDensity.uniform(grid256)
    exact = propagate_period(z, xi, 0.1, cfg_for(Scheme.EIGEN)).log_mass
    coarse = abs(propagate_period(z, xi, 0.1, cfg_for(Scheme.STRANG, 2e-3)).log_mass - exact)
    fine = abs(propagate_period(z, xi, 0.1, cfg_for(Scheme.STRANG, 1e-3)).log_mass - exact)
    assert 3.5 <= coarse / fine <= 4.5


def test_crank_nicolson_matches_eigen_on_cosine(grid64):
    xi = cos_sample(grid64)
    z = ProjectiveDensity.uniform(grid64)
    exact = propagate_period(z, xi, 0.1, cfg_for(Scheme.EIGEN)).log_mass
    cn = propagate_period(z, xi, 0.1, cfg_for(Scheme.CRANK_NICOLSON, 1e-3)).log_mass
    assert abs(cn - exact) <= 1e-5


def test_scaling_shifts_log_mass_only(grid64, strang_cfg):
    xi = cos_sample(grid64, 1.5)
    z = ProjectiveDensity.cosine_profile(grid64)
    base = propagate_values(z.values, xi, 0.2, strang_cfg)
    scaled = propagate_values(7.0 * z.values, xi, 0.2, strang_cfg)
    assert scaled.log_mass == pytest.approx(base.log_mass + math.log(7.0), abs=1e-12)
    assert hilbert_distance(scaled.z_next, base.z_next) < 1e-12


def test_two_half_periods_compose(grid64, eigen_cfg):
    xi = cos_sample(grid64, 2.0)
    z = ProjectiveDensity.cosine_profile(grid64)
    eig = Eigensystem.from_sample(xi, 1.0)
    whole = propagate_period(z, xi, 0.4, eigen_cfg, eig)
    first = propagate_period(z, xi, 0.2, eigen_cfg, eig)
    second = propagate_period(first.z_next, xi, 0.2, eigen_cfg, eig)
    assert first.log_mass + second.log_mass == pytest.approx(whole.log_mass, abs=1e-8)
    assert hilbert_distance(second.z_next, whole.z_next) < 1e-8


def test_propagate_rejects_bad_arguments(grid64, strang_cfg):
    z = ProjectiveDensity.uniform(grid64)
    with pytest.raises(InvalidArgumentError):
        propagate_period(z, cos_sample(grid64), 0.0, strang_cfg)
    with pytest.raises(InvalidArgumentError):
        propagate_period(z, cos_sample(TorusGrid(32)), 0.1, strang_cfg)


def test_sign_changing_profile_breaks_down(grid64, strang_cfg):
    with pytest.raises(NumericalBreakdownError) as info:
        propagate_values(-np.ones(64), cos_sample(grid64), 0.1, strang_cfg)
    assert info.value.diagnostics["scheme"] == "strang"


def test_evolve_zero_noise(grid256, strang_cfg):
    r = RenewalPotential(ZeroNoise(), grid256, 0.1, RngKey(0))
    run = evolve(ProjectiveDensity.uniform(grid256), r, 100, strang_cfg)
    assert abs(run.total_log_mass) < 1e-10
    assert len(run.per_period) == 100


def test_evolve_constant_potentials_add_up():
    grid = TorusGrid(16)
    r = RenewalPotential(ConstantInSpace(), grid, 0.5, RngKey(3, stream_id("chain")))
    cfg = cfg_for(Scheme.STRANG, 1e-2)
    run = evolve(ProjectiveDensity.cosine_profile(grid), r, 40, cfg)
    expected = 0.5 * sum(r.sample(i).array[0] for i in range(40))
    assert run.total_log_mass == pytest.approx(expected, abs=1e-10)


def test_evolve_telescoping_and_history(grid64, strang_cfg):
    r = RenewalPotential(PiecewiseConstant(m=4), grid64, 0.2, RngKey(5))
    run = evolve(ProjectiveDensity.uniform(grid64), r, 30, strang_cfg)
    assert run.total_log_mass == pytest.approx(sum(p.log_mass for p in run.per_period), rel=1e-10)
    assert run.z_final is run.per_period[-1].z_next
    assert run.clamp_events == 0

    light = evolve(ProjectiveDensity.uniform(grid64), r, 30, strang_cfg, keep_history=False)
    assert light.per_period == ()
    np.testing.assert_array_equal(light.log_masses, run.log_masses)


def test_evolve_from_offset_uses_later_samples(grid64, strang_cfg):
    r = RenewalPotential(PiecewiseConstant(m=4), grid64, 0.2, RngKey(5))
    full = evolve(ProjectiveDensity.uniform(grid64), r, 6, strang_cfg)
    head = evolve(ProjectiveDensity.uniform(grid64), r, 3, strang_cfg)
    tail = evolve(head.z_final, r, 3, strang_cfg, start=3)
    np.testing.assert_allclose(np.concatenate([head.log_masses, tail.log_masses]), full.log_masses, rtol=1e-14)


def test_evolve_needs_a_period(grid64, strang_cfg):
    r = RenewalPotential(ZeroNoise(), grid64, 0.1, RngKey(0))
    with pytest.raises(InvalidArgumentError):
        evolve(ProjectiveDensity.uniform(grid64), r, 0, strang_cfg)


def test_steep_profile_under_a_large_potential_stays_positive(grid64, strang_cfg):
    z0, _ = normalize(Field(grid64, np.exp(300.0 * np.cos(2.0 * np.pi * grid64.nodes))))
    result = propagate_period(z0, constant_sample(grid64, 1e6), 1e-4, strang_cfg)
    assert np.all(result.z_next.values > 0)
    assert result.log_mass == pytest.approx(100.0, abs=1e-6)


def test_positivity_without_clamps_for_bounded_noise():
    grid = TorusGrid(256)
    cfg = cfg_for(Scheme.STRANG, 1e-3)
    for i, spec in enumerate([PiecewiseConstant(m=4, law="gaussian"), PiecewiseConstant(m=16, law="rademacher")]):
        xi = sample_potential(spec, grid, RngKey(i))
        result = propagate_period(ProjectiveDensity.uniform(grid), xi, 0.5, cfg)
        assert result.clamp_events == 0
        assert result.z_next.values.min() > 0


def test_feynman_kac_deterministic_cases(grid64):
    z = ProjectiveDensity.uniform(grid64)
    mean, stderr = feynman_kac_mass(constant_sample(grid64, 0.0), 0.3, z, 1000, 0.01, RngKey(1))
    assert mean == 1.0
    assert stderr == 0.0

    mean, stderr = feynman_kac_mass(constant_sample(grid64, 0.7), 0.3, z, 1000, 0.01, RngKey(1))
    assert mean == pytest.approx(math.exp(0.21), rel=1e-12)
    assert stderr < 1e-12


def test_feynman_kac_agrees_with_eigen(grid256, eigen_cfg):
    xi = cos_sample(grid256)
    z = ProjectiveDensity.uniform(grid256)
    exact = math.exp(propagate_period(z, xi, 0.2, eigen_cfg).log_mass)
    mean, stderr = feynman_kac_mass(xi, 0.2, z, 100_000, 1e-3, RngKey(11, stream_id("feynman-kac")))
    assert stderr > 0
    assert abs(mean - exact) <= 4.0 * stderr


def test_feynman_kac_preconditions(grid64):
    z = ProjectiveDensity.uniform(grid64)
    white = sample_potential(WhiteNoise(), grid64, RngKey(0))
    with pytest.raises(UnsupportedNoiseError):
        feynman_kac_mass(white, 0.1, z, 10, 0.01, RngKey(0))
    with pytest.raises(InvalidArgumentError):
        feynman_kac_mass(cos_sample(grid64), 0.1, z, 10, 0.2, RngKey(0))


def test_scheme_config_validation():
    with pytest.raises(ValueError):
        SchemeConfig(dt_max=0.0)
    with pytest.raises(ValueError):
        SchemeConfig(kappa=-1.0)
    assert SchemeConfig().scheme == Scheme.STRANG


def test_large_potentials_cap_the_substep():
    grid = TorusGrid(128)
    xi = sample_potential(WhiteNoise(), grid, RngKey(2))
    z = ProjectiveDensity.uniform(grid)
    cap = 1.0 / (10.0 * float(np.abs(xi.array).max()))
    loose = propagate_period(z, xi, 0.05, cfg_for(Scheme.STRANG, 1.0))
    capped = propagate_period(z, xi, 0.05, cfg_for(Scheme.STRANG, cap))
    assert math.isfinite(loose.log_mass)
    assert loose.log_mass == capped.log_mass
    np.testing.assert_array_equal(loose.z_next.values, capped.z_next.values)
