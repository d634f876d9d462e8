"""Exact corrector, angle-sum form, limit constants, deviation trends."""

import numpy as np
import pytest

from shellflow.corrector import (
    ALIGNMENT_LIMIT_3D,
    SCALAR_CONSTANT,
    VECTOR_LIMIT_CONSTANT_3D,
    alignment_average,
    apply_corrector_exact,
    apply_corrector_perp_formula,
    corrector_matrix,
    deviation_report,
    matrix_exponentials,
    scalar_table,
    vector_table,
)
from shellflow.lattice import _polarization_frame, build_shell
from shellflow.spectral import (
    Grid,
    ResolutionError,
    SpectralField,
    l2_norm_sq,
    max_divergence_ratio,
    project_low,
    random_field,
    zeros,
)

TWO_PI = 2 * np.pi


@pytest.fixture
def rng():
    return np.random.default_rng(99)


def roll_shift(coeff, k, grid):
    """Multiply by e_k in coefficient space: mode m picks up the old m - k."""
    out = coeff
    for axis in range(grid.dim):
        out = np.roll(out, int(k[axis]), axis=axis - grid.dim)
    return out


def double_sum_corrector(field, basis):
    """Brute-force corrector: loop every (k, alpha), shift, differentiate, project.

    Structurally independent of the per-mode matrix evaluation; valid while
    shifted modes stay inside the array (checked by the caller's setup).
    """
    grid = field.grid
    project = field.is_vector
    ik = (TWO_PI * 1j) * grid.kvec
    total = np.zeros_like(field.coeff)
    for row in range(basis.kappa):
        k = basis.vectors[row]
        for alpha in range(basis.n_pol):
            a = basis.bases[row, alpha]
            a_dot_grad = np.einsum("d,d...->...", a, ik)
            inner = a_dot_grad * field.coeff
            inner = roll_shift(inner, -k, grid)
            if project:
                from shellflow.spectral import _leray_arrays

                inner = _leray_arrays(inner, grid)
            outer = a_dot_grad * inner
            outer = roll_shift(outer, k, grid)
            if project:
                outer = _leray_arrays(outer, grid)
            total = total + outer
    return SpectralField(grid, total)


@pytest.mark.parametrize("n_min", [1, 2])
def test_scalar_corrector_is_two_thirds_kappa_laplacian(n_min, rng):
    basis = build_shell(n_min, 3)
    grid = Grid(3, 8 * n_min + 8)
    rho = random_field(grid, rng, radius=2.0)
    result = apply_corrector_exact(rho, basis)
    expected = (2.0 / 3.0) * basis.kappa * grid.lap_symbol * rho.coeff
    scale = np.max(np.abs(expected))
    assert np.max(np.abs(result.coeff - expected)) < 1e-10 * scale
    oracle = double_sum_corrector(rho, basis)
    assert np.max(np.abs(result.coeff - oracle.coeff)) < 1e-10 * scale


def test_scalar_corrector_dimension_two_constant(rng):
    basis = build_shell(2, 2)
    grid = Grid(2, 24)
    rho = random_field(grid, rng, radius=2.0)
    result = apply_corrector_exact(rho, basis)
    expected = SCALAR_CONSTANT[2] * basis.kappa * grid.lap_symbol * rho.coeff
    scale = np.max(np.abs(expected))
    assert np.max(np.abs(result.coeff - expected)) < 1e-10 * scale
    oracle = double_sum_corrector(rho, basis)
    assert np.max(np.abs(result.coeff - oracle.coeff)) < 1e-10 * scale


def test_vector_corrector_matches_double_sum_and_block_diagonal(rng):
    basis = build_shell(2, 3)
    grid = Grid(3, 16)
    u = random_field(grid, rng, radius=1.5, vector=True)
    result = apply_corrector_exact(u, basis)
    oracle = double_sum_corrector(u, basis)
    scale = np.max(np.abs(oracle.coeff))
    assert np.max(np.abs(result.coeff - oracle.coeff)) < 1e-10 * scale
    # block diagonality: no modes beyond the input support
    in_support = np.abs(u.coeff).sum(axis=0) > 0
    out_mag = np.abs(oracle.coeff).sum(axis=0)
    assert np.max(out_mag[~in_support]) < 1e-14 * scale
    assert max_divergence_ratio(result) < 1e-12


def test_zero_fields(rng):
    basis = build_shell(1, 3)
    grid = Grid(3, 12)
    assert np.all(apply_corrector_exact(zeros(grid), basis).coeff == 0)
    assert np.all(apply_corrector_exact(zeros(grid, vector=True), basis).coeff == 0)
    assert np.all(apply_corrector_perp_formula(zeros(grid, vector=True), basis).coeff == 0)


def test_corrector_negative_semidefinite(rng):
    basis = build_shell(2, 3)
    grid = Grid(3, 16)
    for _ in range(5):
        u = random_field(grid, rng, radius=1.5, vector=True)
        su = apply_corrector_exact(u, basis)
        quad = float(np.real(np.sum(su.coeff * np.conj(u.coeff))))
        assert quad <= 1e-12 * l2_norm_sq(u.coeff)


def test_basis_independence(rng):
    ell = np.array([2, -1, 1])
    for n_min in (2, 4):
        m_ref2 = corrector_matrix(build_shell(n_min, 3, reference=2), ell)
        m_ref0 = corrector_matrix(build_shell(n_min, 3, reference=0), ell)
        assert np.max(np.abs(m_ref2 - m_ref0)) < 1e-12 * np.max(np.abs(m_ref2))


def test_support_overflow_rejected(rng):
    basis = build_shell(2, 3)
    grid = Grid(3, 12)  # size//2 - 1 = 5 < |l| + 2N
    u = random_field(grid, rng, radius=2.0, vector=True)
    with pytest.raises(ResolutionError):
        apply_corrector_exact(u, basis)


def test_perp_formula_cross_validation(rng):
    # angle-sum form must equal (2/3) kappa Delta - exact corrector, 3d
    for n_min in (4, 8):
        basis = build_shell(n_min, 3)
        grid = Grid(3, 8 * n_min)
        u = random_field(grid, rng, radius=2.0, vector=True)
        exact = apply_corrector_exact(u, basis)
        perp = apply_corrector_perp_formula(u, basis)
        expected = (2.0 / 3.0) * basis.kappa * grid.lap_symbol * u.coeff - exact.coeff
        scale = np.max(np.abs(expected))
        assert np.max(np.abs(perp.coeff - expected)) < 1e-10 * scale


def test_perp_formula_guards(rng):
    basis = build_shell(1, 3)
    grid = Grid(3, 16)
    u = random_field(grid, rng, radius=1.0, vector=True)  # support meets the shell
    with pytest.raises(ZeroDivisionError):
        apply_corrector_perp_formula(u, basis)
    with pytest.raises(ValueError):
        apply_corrector_perp_formula(random_field(grid, rng, radius=1.0), basis)


def test_alignment_average_tends_to_four_fifteenths():
    errors = []
    for n_min in (4, 8):
        basis = build_shell(n_min, 3)
        worst = 0.0
        for ell in ([1, 0, 0], [1, 1, 0], [2, 1, -1]):
            frame = _polarization_frame(np.array(ell), reference=2)
            for beta in range(2):
                val = alignment_average(basis, ell, frame[beta])
                worst = max(worst, abs(val - ALIGNMENT_LIMIT_3D))
        errors.append(worst)
    assert errors[1] < errors[0]
    assert errors[1] < 0.05


def test_deviation_report_basics(rng):
    basis = build_shell(8, 3)
    grid = Grid(3, 12)
    zero_report = deviation_report(zeros(grid, vector=True), basis, delta=0.8)
    assert zero_report.deviation_hminus1 == 0.0 and zero_report.ratio == 0.0
    u = random_field(grid, rng, radius=1.0, vector=True)
    report = deviation_report(u, basis, delta=0.8)
    assert report.ratio > 0
    assert report.limit_constant == VECTOR_LIMIT_CONSTANT_3D
    assert "ratio" in report.to_json()
    too_wide = random_field(grid, rng, radius=2.0, vector=True)
    with pytest.raises(ValueError):
        deviation_report(too_wide, basis, delta=0.8)


def test_deviation_ratio_decreases_with_shell(rng):
    grid = Grid(3, 12)
    u = random_field(grid, rng, radius=1.0, vector=True)
    ratios = [deviation_report(u, build_shell(n, 3), delta=0.8).ratio for n in (4, 8)]
    assert ratios[1] < ratios[0]


def test_grid_tables_match_matrix_form(rng):
    basis = build_shell(2, 2)
    grid = Grid(2, 24)  # cutoff 8; interior modes |l|_inf + 2N <= 8
    lam = scalar_table(grid, basis, galerkin=True)
    ell = [1, -2]
    expected = -4 * np.pi**2 * sum(
        np.dot(basis.bases[r, 0], ell) ** 2 for r in range(basis.kappa)
    )
    assert abs(lam[grid.mode_index(ell)] - expected) < 1e-10 * abs(expected)
    # interior scalar multiplier equals the dimension constant
    c_kappa = SCALAR_CONSTANT[2] * basis.kappa
    assert abs(lam[grid.mode_index(ell)] - c_kappa * grid.lap_symbol[grid.mode_index(ell)]) \
        < 1e-10 * abs(expected)

    table = vector_table(grid, basis, galerkin=False)
    mat = table[(slice(None), slice(None)) + grid.mode_index(ell)]
    direct = corrector_matrix(basis, ell)
    # same action on vectors perpendicular to l (the solenoidal subspace)
    perp = np.array([2.0, 1.0]) / np.sqrt(5.0)
    assert np.max(np.abs(mat @ perp - direct @ perp)) < 1e-10 * np.max(np.abs(direct))


def test_matrix_exponentials_small_dt(rng):
    basis = build_shell(2, 2)
    grid = Grid(2, 24)
    table = vector_table(grid, basis, galerkin=True)
    dt = 1e-7
    expm = matrix_exponentials(table, dt, grid)
    ell_idx = grid.mode_index([1, 1])
    mat = table[(slice(None), slice(None)) + ell_idx]
    approx = np.eye(2) + dt * mat
    got = expm[(slice(None), slice(None)) + ell_idx]
    assert np.max(np.abs(got - approx)) < 1e-9
    u = random_field(grid, rng, radius=3.0, vector=True)
    pushed = SpectralField(grid, np.einsum("ij...,j...->i...", expm, u.coeff))
    assert max_divergence_ratio(pushed) < 1e-10
