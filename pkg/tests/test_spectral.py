"""Fourier toolbox: transforms, norms, projections, advection, semigroups."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shellflow.spectral import (
    Grid,
    ResolutionError,
    SpectralField,
    advect,
    apply_friction_semigroup,
    apply_semigroup,
    from_physical,
    l2_norm_sq,
    leray_complement,
    leray_project,
    load_spectral,
    max_divergence_ratio,
    mean_mode_magnitude,
    physical_energy,
    project_low,
    random_field,
    save_spectral,
    sobolev_norm,
    symmetrize,
    to_physical,
    zeros,
)

TWO_PI = 2 * np.pi


def inner(f, g):
    return float(np.real(np.sum(f.coeff * np.conj(g.coeff))))


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(4, 16)
    with pytest.raises(ValueError):
        Grid(2, 15)
    g = Grid(2, 18)
    assert g.cutoff == 5  # 3 * cutoff < size keeps retained products alias-free
    with pytest.raises(ResolutionError):
        g.mode_index([9, 0])


@pytest.mark.parametrize("dim", [2, 3])
def test_parseval_and_roundtrip(dim, rng):
    grid = Grid(dim, 16)
    f = random_field(grid, rng, radius=4.0, norm=2.5)
    phys = to_physical(f.coeff, grid)
    assert abs(physical_energy(phys, grid) - l2_norm_sq(f.coeff)) < 1e-10 * l2_norm_sq(f.coeff)
    back = from_physical(phys, grid)
    assert np.max(np.abs(back - f.coeff)) < 1e-12


def test_sobolev_norm_single_mode():
    grid = Grid(3, 16)
    f = zeros(grid)
    f.coeff[grid.mode_index([1, 0, 0])] = 1 / np.sqrt(2)
    f.coeff[grid.mode_index([-1, 0, 0])] = 1 / np.sqrt(2)
    assert abs(sobolev_norm(f, 0.0) - 1.0) < 1e-14
    assert abs(sobolev_norm(f, 1.0) - TWO_PI) < 1e-12
    assert abs(sobolev_norm(f, -1.0) - 1.0 / TWO_PI) < 1e-12
    assert sobolev_norm(zeros(grid), 1.7) == 0.0


@pytest.mark.parametrize("dim", [2, 3])
def test_interpolation_inequality(dim, rng):
    grid = Grid(dim, 12)
    for _ in range(5):
        f = random_field(grid, rng, radius=3.0)
        l2 = sobolev_norm(f, 0.0)
        assert l2**2 <= sobolev_norm(f, 1.0) * sobolev_norm(f, -1.0) * (1 + 1e-12)


def test_leray_projector(rng):
    grid = Grid(3, 16)
    v = random_field(grid, rng, radius=4.0, vector=True, divergence_free=False)
    pv = leray_project(v)
    assert max_divergence_ratio(pv) < 1e-12
    np.testing.assert_allclose(leray_project(pv).coeff, pv.coeff, atol=1e-14)
    # gradient fields are annihilated
    phi = random_field(grid, rng, radius=4.0)
    gradient = SpectralField(grid, (TWO_PI * 1j) * grid.kvec * phi.coeff)
    assert np.max(np.abs(leray_project(gradient).coeff)) < 1e-12
    # orthogonal decomposition
    qv = leray_complement(v)
    total = l2_norm_sq(v.coeff)
    parts = l2_norm_sq(pv.coeff) + l2_norm_sq(qv.coeff)
    assert abs(total - parts) < 1e-12 * total
    assert abs(inner(pv, qv)) < 1e-12 * total
    assert l2_norm_sq(pv.coeff) <= total * (1 + 1e-14)


def brute_force_advection(velocity, field, grid):
    """Direct convolution oracle for -(v.grad)f on sparse fields (no FFT)."""
    mag_v = np.abs(velocity.coeff).sum(axis=0)
    idx_v = np.argwhere(mag_v > 1e-300)
    idx_f = np.argwhere(np.abs(field.coeff) > 1e-300)
    out = np.zeros(grid.shape, dtype=np.complex128)
    for pv in idx_v:
        kv = grid.kvec[(slice(None),) + tuple(pv)]
        vhat = velocity.coeff[(slice(None),) + tuple(pv)]
        for pf in idx_f:
            kf = grid.kvec[(slice(None),) + tuple(pf)]
            fhat = field.coeff[tuple(pf)]
            target = kv + kf
            if np.max(np.abs(target)) > grid.cutoff:
                continue
            out[grid.mode_index(target)] -= (TWO_PI * 1j) * np.dot(vhat, kf) * fhat
    return out


@pytest.mark.parametrize("dim", [2, 3])
def test_advect_matches_direct_convolution(dim, rng):
    grid = Grid(dim, 18 if dim == 2 else 16)
    v = random_field(grid, rng, radius=2.0, vector=True)
    f = random_field(grid, rng, radius=2.0)
    result = advect(v, f)
    expected = brute_force_advection(v, f, grid)
    assert np.max(np.abs(result.coeff - expected)) < 1e-12 * np.max(np.abs(expected))


def test_advect_trivial_cases(rng):
    grid = Grid(2, 12)
    f = random_field(grid, rng, radius=2.0)
    zero_v = zeros(grid, vector=True)
    assert np.max(np.abs(advect(zero_v, f).coeff)) == 0.0
    v = random_field(grid, rng, radius=2.0, vector=True)
    assert np.max(np.abs(advect(v, zeros(grid)).coeff)) == 0.0


@pytest.mark.parametrize("dim", [2, 3])
def test_advect_skew_symmetry(dim, rng):
    grid = Grid(dim, 12)
    v = random_field(grid, rng, radius=3.0, vector=True, norm=2.0)
    rho = random_field(grid, rng, radius=3.0, norm=1.5)
    b = advect(v, rho)
    assert abs(inner(b, rho)) < 1e-12 * l2_norm_sq(rho.coeff)
    u = random_field(grid, rng, radius=3.0, vector=True)
    bu = advect(v, u)
    assert abs(inner(bu, u)) < 1e-12 * l2_norm_sq(u.coeff)
    assert mean_mode_magnitude(b) == 0.0


@pytest.mark.parametrize("size", [12, 16, 18])
def test_advect_skew_symmetry_at_full_occupancy(size, rng):
    # fields filling the whole dealias cube: worst case for aliasing, the
    # transport pairing must still vanish exactly
    grid = Grid(2, size)
    full_radius = grid.cutoff * np.sqrt(2) + 0.5
    v = random_field(grid, rng, radius=full_radius, vector=True, norm=2.0)
    f = random_field(grid, rng, radius=full_radius)
    b = advect(v, f)
    assert abs(inner(b, f)) < 1e-12 * l2_norm_sq(f.coeff)
    u = random_field(grid, rng, radius=full_radius, vector=True)
    assert abs(inner(advect(v, u), u)) < 1e-12 * l2_norm_sq(u.coeff)


def test_advect_requires_dealiased_inputs(rng):
    grid = Grid(2, 12)  # cutoff 4
    v = random_field(grid, rng, radius=3.0, vector=True)
    bad = zeros(grid)
    bad.coeff[grid.mode_index([5, 0])] = 1.0
    bad.coeff[grid.mode_index([-5, 0])] = 1.0
    with pytest.raises(ResolutionError):
        advect(v, bad)
    not_divfree = random_field(grid, rng, radius=2.0, vector=True, divergence_free=False)
    with pytest.raises(ValueError):
        advect(not_divfree, bad.copy())


def test_semigroup_closed_form_and_composition(rng):
    grid = Grid(3, 12)
    f = zeros(grid)
    f.coeff[grid.mode_index([1, 0, 0])] = 0.5
    f.coeff[grid.mode_index([-1, 0, 0])] = 0.5
    out = apply_semigroup(f, 1.0, 1.0)
    expected = 0.5 * np.exp(-4 * np.pi**2)
    assert abs(out.coeff[grid.mode_index([1, 0, 0])] - expected) < 1e-15
    g = random_field(grid, rng, radius=3.0)
    one = apply_semigroup(apply_semigroup(g, 0.3, 0.2), 0.3, 0.5)
    two = apply_semigroup(g, 0.3, 0.7)
    assert np.max(np.abs(one.coeff - two.coeff)) < 1e-12
    ident = apply_semigroup(g, 2.0, 0.0)
    np.testing.assert_array_equal(ident.coeff, g.coeff)


def test_friction_semigroup(rng):
    grid = Grid(2, 12)
    f = zeros(grid)
    f.coeff[grid.mode_index([2, 1])] = 1.0
    f.coeff[grid.mode_index([-2, -1])] = 1.0
    eps, t = 0.25, 0.1
    out = apply_friction_semigroup(f, eps, t)
    lam = (1 + eps * TWO_PI**2 * 5) * t / eps
    assert abs(out.coeff[grid.mode_index([2, 1])] - np.exp(-lam)) < 1e-14
    with pytest.raises(ValueError):
        apply_friction_semigroup(f, 0.0, 0.1)


def test_project_low_closed_ball(rng):
    grid = Grid(2, 18)
    f = zeros(grid)
    f.coeff[grid.mode_index([3, 4])] = 1.0  # |k| = 5 exactly
    f.coeff[grid.mode_index([-3, -4])] = 1.0
    f.coeff[grid.mode_index([6, 0])] = 1.0
    f.coeff[grid.mode_index([-6, 0])] = 1.0
    low = project_low(f, 5.0)
    assert abs(low.coeff[grid.mode_index([3, 4])]) == 1.0
    assert abs(low.coeff[grid.mode_index([6, 0])]) == 0.0


def test_symmetrize_and_random_field_reality(rng):
    grid = Grid(3, 12)
    f = random_field(grid, rng, radius=3.0, vector=True)
    from shellflow.spectral import reality_defect

    assert reality_defect(f) < 1e-13
    phys = to_physical(f.coeff, grid)
    raw = np.fft.fftn(phys, axes=(-3, -2, -1)) / grid.n_points
    assert np.max(np.abs(np.imag(np.fft.ifftn(raw, axes=(-3, -2, -1)) * grid.n_points))) < 1e-12


def test_spectral_dump_roundtrip(tmp_path, rng):
    grid = Grid(2, 12)
    f = random_field(grid, rng, radius=3.0, vector=True, norm=1.7)
    path = tmp_path / "field.dump"
    save_spectral(f, path)
    g = load_spectral(path)
    np.testing.assert_array_equal(f.coeff, g.coeff)
    scalar = random_field(grid, rng, radius=2.0)
    save_spectral(scalar, path)
    back = load_spectral(path)
    np.testing.assert_array_equal(scalar.coeff, back.coeff)


@settings(deadline=None, max_examples=10)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_energy_identities_random(seed):
    rng = np.random.default_rng(seed)
    grid = Grid(2, 12)
    f = random_field(grid, rng, radius=3.0, norm=None)
    if l2_norm_sq(f.coeff) == 0:
        return
    # Parseval and interpolation on arbitrary draws
    phys = to_physical(f.coeff, grid)
    assert abs(physical_energy(phys, grid) - l2_norm_sq(f.coeff)) <= 1e-10 * l2_norm_sq(f.coeff)
    assert sobolev_norm(f, 0) ** 2 <= sobolev_norm(f, 1) * sobolev_norm(f, -1) * (1 + 1e-12)
