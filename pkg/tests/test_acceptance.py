"""Acceptance criteria, one test per criterion, at their stated tolerances.

Each test prints a `criterion NN: PASS/FAIL` line (visible with -s or on
failure). The long simulation criteria (5-9) run at the same configurations
the CLI exposes as the full presets, so `pytest tests/test_acceptance.py`
reproduces the shipped numbers end to end. Criterion 13 (figure regeneration)
lives in the frontend package's vitest suite.

Criterion 11 is implemented exactly as stated and is expected to fail: with
the explicit eps_q = 2^(-4^q) kappa_q^-36 N_q^-72 the friction-chain
condition eps_{q-1}^-1 kappa_{q-1}^(1/2) <= eps_q^(-1/2) is violated for
q in {2..5} by factors up to 2^5264 (exact log2 arithmetic), so it is
marked strict-xfail; see the validator output for the margins.
"""

import math
import shutil
from pathlib import Path

import numpy as np
import pytest

from shellflow.corrector import (
    ALIGNMENT_LIMIT_3D,
    alignment_table,
    apply_corrector_exact,
    apply_corrector_perp_formula,
    deviation_report,
)
from shellflow.experiments import build_config, run_experiment
from shellflow.lattice import build_shell
from shellflow.schedule import paper_schedule, validate_schedule
from shellflow.solvers import AdvectedScalarSim, TransportScalarSim, corrected_process_eval, AdvectedState
from shellflow.spectral import Grid, SpectralField, l2_norm_sq, random_field, zeros
from shellflow.velocity import NSEVelocity, OUVelocity, StochasticConvolution

pytestmark = pytest.mark.acceptance

REPO_ROOT = Path(__file__).resolve().parent.parent
OUT = REPO_ROOT / "out"


def report(num: int, passed: bool, detail: str):
    print(f"criterion {num:02d}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"criterion {num:02d} failed: {detail}"


# ---------------------------------------------------------------------------


def brute_double_sum(field, basis):
    """The stated oracle: loop every (k, alpha), shift, differentiate."""
    grid = field.grid
    ik = (2 * np.pi * 1j) * grid.kvec
    total = np.zeros_like(field.coeff)
    for row in range(basis.kappa):
        k = basis.vectors[row]
        for alpha in range(basis.n_pol):
            a = basis.bases[row, alpha]
            a_dot_grad = np.einsum("d,d...->...", a, ik)
            inner = a_dot_grad * field.coeff
            for axis in range(grid.dim):
                inner = np.roll(inner, -int(k[axis]), axis=axis - grid.dim)
            outer = a_dot_grad * inner
            for axis in range(grid.dim):
                outer = np.roll(outer, int(k[axis]), axis=axis - grid.dim)
            total = total + outer
    return total


def test_criterion_01_scalar_corrector_exact():
    worst = 0.0
    for n_min in (1, 2):
        basis = build_shell(n_min, 3)
        grid = Grid(3, 6 * n_min + 8)
        rho = random_field(grid, np.random.default_rng(101 + n_min), radius=2.0)
        result = apply_corrector_exact(rho, basis)
        expected = (2.0 / 3.0) * basis.kappa * grid.lap_symbol * rho.coeff
        occupied = np.abs(rho.coeff) > 0
        rel = np.abs(result.coeff[occupied] - expected[occupied]) / np.abs(expected[occupied])
        worst = max(worst, float(np.max(rel)))
        oracle = brute_double_sum(rho, basis)
        rel_oracle = np.abs(result.coeff[occupied] - oracle[occupied]) / np.abs(expected[occupied])
        worst = max(worst, float(np.max(rel_oracle)))
    report(1, worst <= 1e-10,
           f"scalar corrector = (2/3) kappa Delta, per-mode rel err {worst:.2e} (<= 1e-10)")


def test_criterion_02_formula_cross_validation():
    worst = 0.0
    for n_min in (4, 8):
        basis = build_shell(n_min, 3)
        grid = Grid(3, 4 * n_min + 8)  # holds |l| <= 2 shifted by the shell
        u = random_field(grid, np.random.default_rng(202 + n_min), radius=2.0, vector=True)
        exact = apply_corrector_exact(u, basis)
        perp = apply_corrector_perp_formula(u, basis)
        expected = (2.0 / 3.0) * basis.kappa * grid.lap_symbol * u.coeff - exact.coeff
        scale = np.max(np.abs(expected))
        worst = max(worst, float(np.max(np.abs(perp.coeff - expected)) / scale))
    report(2, worst <= 1e-10,
           f"angle-sum form matches (2/3)kappa Delta - S, rel err {worst:.2e} (<= 1e-10)")


def test_criterion_03_shell_average_four_fifteenths():
    errors = {}
    for n_min in (4, 8, 16, 32):
        basis = build_shell(n_min, 3)
        table = alignment_table(basis, max_radius=2.0)
        errors[n_min] = max(abs(v - ALIGNMENT_LIMIT_3D) for v in table.values())
    ok = errors[32] <= 0.02 and errors[32] < errors[4]
    report(3, ok,
           f"shell average -> 4/15: err(32)={errors[32]:.2e} <= 0.02 and "
           f"< err(4)={errors[4]:.2e}")


def test_criterion_04_deviation_bound_trend():
    grid = Grid(3, 12)
    u = random_field(grid, np.random.default_rng(404), radius=2.0, vector=True)
    delta = 2.0 / 3.0  # largest delta keeping |l| <= 2 inside N^(1-delta) at N=8
    ratios = {}
    for n_min in (8, 16, 32):
        ratios[n_min] = deviation_report(u, build_shell(n_min, 3), delta=delta).ratio
    decreasing = ratios[8] > ratios[16] > ratios[32]
    bounded = all(r * n**delta <= 10.0 for n, r in ratios.items())
    report(4, decreasing and bounded,
           "H^-1 deviation ratio strictly decreasing over N in {8,16,32}: "
           + ", ".join(f"{n}: {r:.3e}" for n, r in ratios.items()))


# ---------------------------------------------------------------------------


def _energy_defect_run(velocity_kind: str) -> tuple[float, float]:
    grid = Grid(2, 128)
    basis = build_shell(1, 2)
    eps = 1.0
    seed = 505 if velocity_kind == "ou" else 506
    if velocity_kind == "ou":
        vel = OUVelocity(basis, grid, eps, rng=np.random.default_rng(seed))
    else:
        vel = NSEVelocity(basis, grid, eps)
    rho0 = random_field(grid, np.random.default_rng(seed + 10), radius=4.0, norm=1.0)
    sim = AdvectedScalarSim(grid, vel, nu=2e-3, rho0=rho0.coeff, seed=seed + 20,
                            midpoint_tol=1e-10)
    t_end, dt = 0.5, 7.8e-5
    n_steps = int(round(t_end / dt))
    for _ in range(n_steps):
        sim.step(dt)
    final = float(sim.norms(1.0)["l2sq"][0])
    defect = abs(final + float(sim.diss[0]) - 1.0)
    return defect, 5 * dt * t_end


def test_criterion_05_energy_equality():
    results = {}
    for kind in ("ou", "nse"):
        defect, tol = _energy_defect_run(kind)
        results[kind] = (defect, tol)
    ok = all(defect <= tol for defect, tol in results.values())
    report(5, ok,
           "scalar energy equality on 128^2, T=0.5: "
           + ", ".join(f"{k}: defect {d:.2e} (tol {t:.1e})" for k, (d, t) in results.items()))


def test_criterion_06_ito_stratonovich_consistency():
    grid = Grid(2, 18)
    basis = build_shell(1, 2)
    paths = 64
    rho0 = random_field(grid, np.random.default_rng(606), radius=2.0, norm=1.0)
    sim = TransportScalarSim(grid, basis, nu=0.0, rho0=rho0.coeff, seed=607,
                             paths=paths, shared_noise=False)
    dt = 0.2 / (0.5 * basis.kappa * (2 * np.pi) ** 2)
    n_steps = int(math.ceil(0.5 / dt))
    dt = 0.5 / n_steps
    worst = 0.0
    for step in range(n_steps):
        sim.step(dt)
        if (step + 1) % 25 == 0 or step == n_steps - 1:
            mean_energy = float(np.mean(sim.norms(1.0)["l2sq"]))
            drift = abs(mean_energy - 1.0)
            allowed = 0.05 + 5 * dt * sim.time
            worst = max(worst, drift / allowed)
    report(6, worst <= 1.0,
           f"white-driver mean energy drift, 64 paths, t<=0.5: "
           f"worst drift/tolerance = {worst:.2e}")


def test_criterion_07_enhanced_dissipation_in_kappa():
    cfg = build_config("hm1-scaling", "full")
    summary = run_experiment(cfg, OUT / "acceptance-c7")
    rows = summary["per_shell"]
    ratios = summary["kappa_ratios"]
    terminals = [r["terminal_mean_l2sq"] for r in rows]
    sups = [r["window_sup_low_hm1sq"] for r in rows]
    ok = (all(r >= 4 for r in ratios)
          and all(a > b for a, b in zip(terminals, terminals[1:]))
          and all(a > b for a, b in zip(sups, sups[1:])))
    report(7, ok,
           f"kappa sweep {[r['kappa'] for r in rows]}: terminal {terminals}, "
           f"windowed sup {['%.3e' % s for s in sups]} both strictly decreasing")


def test_criterion_08_nu_uniform_decay():
    cfg = build_config("transport-dissipation", "full")
    out_dir = OUT / "acceptance-c8"
    shutil.rmtree(out_dir, ignore_errors=True)
    summary = run_experiment(cfg, out_dir)
    fractions = summary["dissipated_fractions"]
    ok = min(fractions) >= 0.5 and summary["spread"] <= 0.25
    report(8, ok,
           f"3-stage white-driver decay, nu={cfg['nu_list']}: dissipated "
           f"{['%.3f' % f for f in fractions]}, spread {summary['spread']:.3f} (<= 0.25)")


def test_criterion_09_ou_homogenization():
    cfg = build_config("ou-homogenization", "full")
    summary = run_experiment(cfg, OUT / "acceptance-c9")
    gaps = summary["gaps"]  # ordered as eps_list = 1e-2, 1e-3, 1e-4
    ok = gaps[0] > gaps[1] > gaps[2]
    report(9, ok,
           f"terminal-energy gap to the white-driver reference shrinks with eps: "
           f"{['%.3e' % g for g in gaps]}")


def test_criterion_10_stochastic_convolution_law():
    basis = build_shell(1, 2)
    eps = 0.02
    w = StochasticConvolution(basis, eps, batch=10_000)
    rng = np.random.default_rng(1010)
    worst = 0.0
    dt = eps / 5
    for _ in range(40):  # through t' = 8 eps: ramp and saturation
        w.advance(dt, rng)
        expected = basis.kappa * (1.0 - math.exp(-2 * w.elapsed / eps))
        measured = float(np.mean(w.l2_sq()))
        worst = max(worst, abs(measured - expected) / expected)
    report(10, worst <= 0.05,
           f"E|w|^2 vs kappa(1 - e^(-2t'/eps)) over 10^4 paths: "
           f"max rel dev {worst:.3f} (<= 0.05)")


@pytest.mark.xfail(strict=True,
                   reason="spec defect: friction chain condition fails for q in "
                          "{2..5} with the explicit eps_q (see decisions ledger)")
def test_criterion_11_schedule_validator():
    reportv = validate_schedule(paper_schedule(5), q_max=5, eps_hat=0.01)
    failing = [(r.q, r.name, round(r.log2_margin, 1)) for r in reportv.failing()]
    report(11, reportv.passed(),
           f"paper-mode conditions q<=5: failing {failing or 'none'}")


def test_criterion_12_corrected_process_sanity():
    # b(a e_k, a e_-k) = 0: the transported mode pair carries a . k = 0
    basis = build_shell(1, 3)
    worst_pair = 0.0
    for row in range(basis.kappa):
        k = basis.vectors[row].astype(float)
        for alpha in range(basis.n_pol):
            a = basis.bases[row, alpha]
            worst_pair = max(worst_pair, abs(float(np.dot(a, -k))))
    # grid-level version: a single-shell-mode real field self-advects to zero
    grid = Grid(2, 18)
    basis2 = build_shell(1, 2)
    from shellflow.lattice import DriverIncrement, assemble_noise_field
    from shellflow.spectral import advect

    worst_grid = 0.0
    for idx in range(len(basis2.half_rows)):
        vals = np.zeros((len(basis2.half_rows), 1), dtype=np.complex128)
        vals[idx, 0] = 1.0 + 0.5j
        field = assemble_noise_field(basis2, DriverIncrement(1.0, vals), grid)
        out = advect(field, field)
        worst_grid = max(worst_grid, float(np.max(np.abs(out.coeff))))

    # |U - u| decreases when eps decreases 10x at matched noise realizations
    u = random_field(grid, np.random.default_rng(1212), radius=2.0, vector=True)
    state = AdvectedState(u, nu=1e-2)
    distances = []
    for eps in (1e-2, 1e-3):
        vel = NSEVelocity(basis2, grid, eps)
        rng = np.random.default_rng(1213)  # same Brownian draws
        for _ in range(30):
            vel.advance(eps / 10, rng)
        distances.append(corrected_process_eval(state, vel).distance_l2)
    ok = worst_pair <= 1e-14 and worst_grid <= 1e-14 and distances[1] < distances[0]
    report(12, ok,
           f"pair transport vanishes (max {max(worst_pair, worst_grid):.1e}); "
           f"|U-u| at eps 1e-2 -> 1e-3: {distances[0]:.3e} -> {distances[1]:.3e}")
