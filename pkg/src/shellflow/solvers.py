"""Time integration of the advected equations and the energy bookkeeping.

Scheme choices, driven by what the diagnostics must certify:

* white-driver (transport) steps apply the frozen-increment flow
  exp(b_Theta) by a scaled-and-squared operator series. Each application is
  an orthogonal map up to series tolerance, so at nu = 0 every path conserves
  its L2 norm to rounding, while E[exp(b_Theta)] reproduces the corrector
  drift over one step. The literal Ito-form step (increment plus explicit
  corrector term) is kept as scheme="euler"; its mean-energy error per step
  scales like (dt kappa |2 pi k|^2)^2, which rules it out for stiff shells.
* advection by a materialized velocity (OU / forced-NSE) uses an implicit
  midpoint substep solved by fixed-point iteration: the discrete transport
  is exactly energy neutral for any divergence-free velocity, so the energy
  balance defect is set by the iteration tolerance, not the step size.
* diffusion applies the exact heat multiplier, and the ledger's dissipation
  integral accumulates the exact per-step semigroup energy loss, which keeps
  the discrete energy equality defect at rounding level.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .corrector import scalar_table, vector_table
from .lattice import NoiseBasis
from .spectral import (
    Grid,
    SpectralField,
    TWO_PI,
    advect,
    advect_with_collocation,
    low_mode_mask,
    to_physical,
)
from .velocity import NSEVelocity, OUVelocity, WhiteDriver


class SimulationUnstableError(RuntimeError):
    """Raised when a step grows the advected field beyond tolerance."""


# ---------------------------------------------------------------------------
# energy ledger
# ---------------------------------------------------------------------------

LEDGER_COLUMNS = ("t", "l2sq", "h1sq", "hm1sq", "low_hm1sq", "diss_int", "stage")


@dataclass
class EnergyLedger:
    """Per-run time series of norms and the cumulative dissipation integral."""

    t: list = field(default_factory=list)
    l2sq: list = field(default_factory=list)
    h1sq: list = field(default_factory=list)
    hm1sq: list = field(default_factory=list)
    low_hm1sq: list = field(default_factory=list)
    diss_int: list = field(default_factory=list)
    stage: list = field(default_factory=list)

    def record(self, t, l2sq, h1sq, hm1sq, low_hm1sq, diss_int, stage):
        self.t.append(float(t))
        self.l2sq.append(float(l2sq))
        self.h1sq.append(float(h1sq))
        self.hm1sq.append(float(hm1sq))
        self.low_hm1sq.append(float(low_hm1sq))
        self.diss_int.append(float(diss_int))
        self.stage.append(int(stage))

    def __len__(self):
        return len(self.t)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LEDGER_COLUMNS)
            for i in range(len(self.t)):
                writer.writerow([
                    f"{self.t[i]:.17g}", f"{self.l2sq[i]:.17g}", f"{self.h1sq[i]:.17g}",
                    f"{self.hm1sq[i]:.17g}", f"{self.low_hm1sq[i]:.17g}",
                    f"{self.diss_int[i]:.17g}", self.stage[i],
                ])

    @staticmethod
    def from_csv(path) -> "EnergyLedger":
        ledger = EnergyLedger()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != LEDGER_COLUMNS:
                raise ValueError(f"unexpected ledger header {header}")
            for row in reader:
                ledger.record(*[float(v) for v in row[:6]], int(row[6]))
        return ledger

    def envelope(self) -> np.ndarray:
        """Smallest non-increasing majorant of the sampled energies."""
        vals = np.asarray(self.l2sq)
        return np.maximum.accumulate(vals[::-1])[::-1]

    def energy_defect(self) -> float:
        """max_t |l2sq(t) + diss_int(t) - l2sq(0)| / l2sq(0)."""
        if not self.t:
            raise ValueError("empty ledger")
        base = self.l2sq[0]
        if base == 0:
            return 0.0
        total = np.asarray(self.l2sq) + np.asarray(self.diss_int)
        return float(np.max(np.abs(total - base)) / base)

    def window_sup(self, t0, t1, column="low_hm1sq") -> float:
        ts = np.asarray(self.t)
        sel = (ts >= float(t0) - 1e-12) & (ts <= float(t1) + 1e-12)
        if not np.any(sel):
            raise ValueError(f"no ledger samples inside [{t0}, {t1}]")
        return float(np.max(np.asarray(getattr(self, column))[sel]))

    def interpolation_defect(self) -> float:
        """max over samples of l2sq^2 / (h1sq * hm1sq); <= 1 when the chain holds."""
        l2 = np.asarray(self.l2sq)
        h1 = np.asarray(self.h1sq)
        hm1 = np.asarray(self.hm1sq)
        keep = (h1 > 0) & (hm1 > 0)
        if not np.any(keep):
            return 0.0
        return float(np.max(l2[keep] ** 2 / (h1[keep] * hm1[keep])))


def batched_norm_sq(coeff: np.ndarray, grid: Grid, s: float, vector: bool,
                    mask: np.ndarray | None = None) -> np.ndarray:
    """|f|_{H^s}^2 over the trailing grid axes, batched over leading axes."""
    zero = (0,) * grid.dim
    if s != 0.0:
        base = TWO_PI**2 * grid.k_sq
        base[zero] = 1.0
        w = base**s
    else:
        w = np.ones(grid.shape)
    w[zero] = 0.0
    if mask is not None:
        w = w * mask
    mag = np.abs(coeff) ** 2
    axes = tuple(range(-grid.dim, 0))
    if vector:
        mag = mag.sum(axis=-grid.dim - 1)
    return np.sum(w * mag, axis=axes)


# ---------------------------------------------------------------------------
# transport (white-driver) stepping kernels
# ---------------------------------------------------------------------------


def transport_exponential_apply(theta_coeff: np.ndarray, coeff: np.ndarray,
                                grid: Grid, project: bool,
                                tol: float = 1e-13, max_terms: int = 120,
                                target_norm: float = 4.0) -> np.ndarray:
    """Apply exp(b_Theta) to coeff by a scaled-and-squared operator series.

    b_Theta(f) = -(Theta.grad) f (Leray-projected for vector f) is skew on
    the dealiased space, so the exponential is orthogonal: the L2 norm is
    conserved to series tolerance for every realization. The scaled operator
    norm stays near target_norm, keeping series cancellation mild.
    """
    vphys = to_physical(theta_coeff, grid)
    vmax = float(np.max(np.sqrt(np.sum(vphys**2, axis=-grid.dim - 1))))
    if vmax == 0:
        return coeff.copy()
    op_norm = vmax * TWO_PI * grid.cutoff * math.sqrt(grid.dim)
    squarings = max(0, math.ceil(math.log2(op_norm / target_norm)))
    vphys_scaled = vphys / 2**squarings
    out = coeff
    for _ in range(2**squarings):
        term = out
        acc = out.copy()
        # the map is orthogonal, so |acc| stays at the input norm; compare
        # term sizes against that fixed scale
        base_sq = float(np.vdot(acc, acc).real)
        for m in range(1, max_terms + 1):
            term = advect_with_collocation(vphys_scaled, term, grid, project) / m
            acc += term
            if float(np.vdot(term, term).real) <= (tol**2) * base_sq:
                break
        else:
            raise SimulationUnstableError(
                f"transport series did not converge (|Theta|_inf={vmax:.3g})"
            )
        out = acc
    return out


class TransportScalarSim:
    """Batched scalar advected by the white driver, exact heat, ledgered.

    paths > 1 runs an ensemble; shared_noise=True drives every batch entry
    with one increment per step (common random numbers across the nu axis).
    nu may be a scalar or an array of length paths.
    """

    def __init__(self, grid: Grid, basis: NoiseBasis, nu, rho0: np.ndarray,
                 seed: int, paths: int = 1, shared_noise: bool = False,
                 scheme: str = "exp", stage_label: int = 0):
        if scheme not in ("exp", "euler"):
            raise ValueError(f"unknown transport scheme {scheme!r}")
        self.grid = grid
        self.nu = np.broadcast_to(np.asarray(nu, dtype=float), (paths,)).copy()
        self.driver = WhiteDriver(basis, grid)
        self.paths = paths
        self.shared_noise = shared_noise
        self.scheme = scheme
        self.stage_label = stage_label
        self.rng = np.random.default_rng(seed)
        coeff = np.asarray(rho0, dtype=np.complex128)
        if coeff.shape == grid.shape:
            coeff = np.broadcast_to(coeff, (paths,) + grid.shape).copy()
        if coeff.shape != (paths,) + grid.shape:
            raise ValueError(f"rho0 shape {coeff.shape} incompatible with paths={paths}")
        self.coeff = coeff
        self.time = 0.0
        self.diss = np.zeros(paths)
        self._lam = scalar_table(grid, basis, galerkin=True) if scheme == "euler" else None
        self._heat_cache = {}

    def _heat(self, dt: float) -> np.ndarray:
        if dt not in self._heat_cache:
            self._heat_cache[dt] = np.exp(
                np.tensordot(self.nu, self.grid.lap_symbol, axes=0) * dt)
        return self._heat_cache[dt]

    def step(self, dt: float):
        batch = None if self.shared_noise else self.paths
        theta = self.driver.sample_field_coeff(dt, self.rng, batch=batch)
        if self.scheme == "exp":
            new = transport_exponential_apply(theta, self.coeff, self.grid, project=False)
        else:
            incr = advect_with_collocation(to_physical(theta, self.grid),
                                           self.coeff, self.grid, project=False)
            new = self.coeff + incr + dt * self._lam * self.coeff
        before = np.sum(np.abs(new) ** 2, axis=tuple(range(-self.grid.dim, 0)))
        new = new * self._heat(dt)
        after = np.sum(np.abs(new) ** 2, axis=tuple(range(-self.grid.dim, 0)))
        self.diss += before - after
        limit = np.sum(np.abs(self.coeff) ** 2, axis=tuple(range(-self.grid.dim, 0)))
        if self.scheme == "exp" and np.any(before > limit * (1 + 1e-7) + 1e-300):
            raise SimulationUnstableError("transport step grew the L2 norm")
        self.coeff = new
        self.time += dt

    def norms(self, low_radius: float):
        grid = self.grid
        low = low_mode_mask(grid, low_radius)
        return {
            "l2sq": batched_norm_sq(self.coeff, grid, 0.0, False),
            "h1sq": batched_norm_sq(self.coeff, grid, 1.0, False),
            "hm1sq": batched_norm_sq(self.coeff, grid, -1.0, False),
            "low_hm1sq": batched_norm_sq(self.coeff, grid, -1.0, False, mask=low),
        }


# ---------------------------------------------------------------------------
# advection by a materialized velocity (OU / forced NSE)
# ---------------------------------------------------------------------------


def midpoint_transport(vphys: np.ndarray, coeff: np.ndarray, grid: Grid, dt: float,
                       project: bool, tol: float = 1e-12, max_iter: int = 80,
                       self_advect: bool = False) -> np.ndarray:
    """Implicit-midpoint step of df/dt = b(v, f) (+ b(f, f) when self_advect).

    Exactly energy neutral at the fixed point because the midpoint value is
    advected by a divergence-free field; solved by fixed-point iteration,
    which converges under the advective CFL bound.
    """

    def rate(m):
        out = advect_with_collocation(vphys, m, grid, project) if vphys is not None \
            else np.zeros_like(m)
        if self_advect:
            mphys = to_physical(m, grid)
            out = out + advect_with_collocation(mphys, m, grid, project=True)
        return out

    mid = coeff + 0.5 * dt * rate(coeff)
    scale = float(np.max(np.abs(coeff))) or 1.0
    for _ in range(max_iter):
        new_mid = coeff + 0.5 * dt * rate(mid)
        delta = float(np.max(np.abs(new_mid - mid)))
        mid = new_mid
        if delta <= tol * scale:
            break
    else:
        raise SimulationUnstableError(
            "midpoint iteration stalled; reduce dt below the advective CFL limit"
        )
    return 2.0 * mid - coeff


class AdvectedScalarSim:
    """Scalar advected by an OU or forced-NSE velocity; Strang split in time.

    Order per step: advance the velocity half a step, advect the scalar with
    the midpoint velocity (energy neutral), advance the velocity the second
    half, then apply the exact heat multiplier and account its energy loss.
    """

    def __init__(self, grid: Grid, velocity, nu, rho0: np.ndarray, seed: int,
                 paths: int = 1, midpoint_tol: float = 1e-12):
        self.grid = grid
        self.velocity = velocity
        self.paths = paths
        self.nu = np.broadcast_to(np.asarray(nu, dtype=float), (paths,)).copy()
        self.rng = np.random.default_rng(seed)
        self.midpoint_tol = midpoint_tol
        coeff = np.asarray(rho0, dtype=np.complex128)
        if coeff.shape == grid.shape:
            coeff = np.broadcast_to(coeff, (paths,) + grid.shape).copy()
        self.coeff = coeff
        self.time = 0.0
        self.diss = np.zeros(paths)
        self._heat_cache = {}

    def _heat(self, dt):
        if dt not in self._heat_cache:
            self._heat_cache[dt] = np.exp(
                np.tensordot(self.nu, self.grid.lap_symbol, axes=0) * dt)
        return self._heat_cache[dt]

    def step(self, dt: float):
        vel = self.velocity
        vel.advance(0.5 * dt, self.rng)
        vphys = to_physical(vel.field_coeff(), self.grid)
        new = midpoint_transport(vphys, self.coeff, self.grid, dt, project=False,
                                 tol=self.midpoint_tol)
        vel.advance(0.5 * dt, self.rng)
        before = np.sum(np.abs(new) ** 2, axis=tuple(range(-self.grid.dim, 0)))
        new = new * self._heat(dt)
        after = np.sum(np.abs(new) ** 2, axis=tuple(range(-self.grid.dim, 0)))
        self.diss += before - after
        self.coeff = new
        self.time += dt

    def norms(self, low_radius: float):
        grid = self.grid
        low = low_mode_mask(grid, low_radius)
        return {
            "l2sq": batched_norm_sq(self.coeff, grid, 0.0, False),
            "h1sq": batched_norm_sq(self.coeff, grid, 1.0, False),
            "hm1sq": batched_norm_sq(self.coeff, grid, -1.0, False),
            "low_hm1sq": batched_norm_sq(self.coeff, grid, -1.0, False, mask=low),
        }


# ---------------------------------------------------------------------------
# single-trajectory states and the step operations
# ---------------------------------------------------------------------------


@dataclass
class AdvectedState:
    """One advected trajectory: the field, its viscosity, elapsed time,
    and the exact cumulative dissipation integral 2 nu int |grad|^2."""

    field: SpectralField
    nu: float
    time: float = 0.0
    diss_int: float = 0.0

    def l2_sq(self) -> float:
        return float(np.sum(np.abs(self.field.coeff) ** 2))


def _heat_multiplier(grid: Grid, nu: float, dt: float) -> np.ndarray:
    return np.exp(grid.lap_symbol * (nu * dt))


def scalar_step(state: AdvectedState, velocity, dt: float,
                rng: np.random.Generator, scheme: str = "exp") -> AdvectedState:
    """Advance a scalar one step under the given velocity model.

    The white driver uses the exponential transport step (or the literal
    Ito-form step when scheme="euler"); OU/NSE velocities use the midpoint
    advection. Diffusion is exact and its energy loss lands in diss_int.
    """
    grid = state.field.grid
    coeff = state.field.coeff
    if velocity.kind == "transport":
        theta = velocity.sample_field_coeff(dt, rng)
        if scheme == "exp":
            new = transport_exponential_apply(theta, coeff, grid, project=False)
        elif scheme == "euler":
            if not hasattr(velocity, "_scalar_lam"):
                velocity._scalar_lam = scalar_table(grid, velocity.basis, galerkin=True)
            incr = advect_with_collocation(to_physical(theta, grid), coeff, grid, False)
            new = coeff + incr + dt * velocity._scalar_lam * coeff
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    elif velocity.kind in ("ou", "nse"):
        velocity.advance(0.5 * dt, rng)
        vphys = to_physical(velocity.field_coeff(), grid)
        new = midpoint_transport(vphys, coeff, grid, dt, project=False)
        velocity.advance(0.5 * dt, rng)
    else:
        raise ValueError(f"velocity kind {velocity.kind!r} not usable here")
    before = float(np.sum(np.abs(new) ** 2))
    heat = _heat_multiplier(grid, state.nu, dt)
    new = new * heat
    after = float(np.sum(np.abs(new) ** 2))
    return AdvectedState(SpectralField(grid, new), state.nu, state.time + dt,
                         state.diss_int + before - after)


def nse_step(state: AdvectedState, velocity, dt: float,
             rng: np.random.Generator, scheme: str = "exp") -> AdvectedState:
    """Advance the advected Navier-Stokes field u one step.

    Self-advection and advection by the velocity share one energy-neutral
    midpoint substep; the white-driver case applies the exponential transport
    afterwards (its mean carries the vector corrector drift).
    """
    grid = state.field.grid
    coeff = state.field.coeff
    if velocity.kind == "transport":
        new = midpoint_transport(None, coeff, grid, dt, project=True, self_advect=True)
        theta = velocity.sample_field_coeff(dt, rng)
        if scheme == "exp":
            new = transport_exponential_apply(theta, new, grid, project=True)
        elif scheme == "euler":
            if not hasattr(velocity, "_vector_blocks"):
                velocity._vector_blocks = vector_table(grid, velocity.basis, galerkin=True)
            incr = advect_with_collocation(to_physical(theta, grid), new, grid, True)
            drift = np.einsum("ij...,j...->i...", velocity._vector_blocks, new)
            new = new + incr + dt * drift
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    elif velocity.kind in ("ou", "nse"):
        velocity.advance(0.5 * dt, rng)
        vphys = to_physical(velocity.field_coeff(), grid)
        new = midpoint_transport(vphys, coeff, grid, dt, project=True, self_advect=True)
        velocity.advance(0.5 * dt, rng)
    else:
        raise ValueError(f"velocity kind {velocity.kind!r} not usable here")
    before = float(np.sum(np.abs(new) ** 2))
    new = new * _heat_multiplier(grid, state.nu, dt)
    after = float(np.sum(np.abs(new) ** 2))
    return AdvectedState(SpectralField(grid, new), state.nu, state.time + dt,
                         state.diss_int + before - after)


# ---------------------------------------------------------------------------
# corrected process
# ---------------------------------------------------------------------------


@dataclass
class CorrectedProcess:
    """The drift-revealing perturbation of u built from the NSE velocity split."""

    U: SpectralField
    first_order: SpectralField      # eps^(1/2) b(w, u)
    second_order: SpectralField     # (eps/2) b(w, b(w, u))
    V: SpectralField                # quadratic-drive compensator
    low_hm4: float
    distance_l2: float              # |U - u|_{L2}


def corrected_process_eval(state: AdvectedState, velocity: NSEVelocity,
                           low_radius: float | None = None) -> CorrectedProcess:
    """Assemble U = u + eps^(1/2) b(w,u) + (eps/2) b(w,b(w,u)) + V."""
    if getattr(velocity, "kind", None) != "nse":
        raise ValueError("corrected process needs the forced-NSE velocity (w, r_tilde)")
    grid = state.field.grid
    eps = velocity.eps
    u = state.field
    w = velocity.w_field()
    first = advect(w, u, check=False)
    second = advect(w, first, check=False)
    b_ww = advect(w, w, check=False)
    inv_friction = 1.0 / (1.0 + eps * TWO_PI**2 * grid.k_sq)
    smoothed_rt = SpectralField(grid, velocity.r_tilde * inv_friction)
    v_comp = SpectralField(
        grid,
        0.5 * eps * advect(b_ww, u, check=False).coeff
        + eps * advect(smoothed_rt, u, check=False).coeff,
    )
    U = SpectralField(
        grid,
        u.coeff + math.sqrt(eps) * first.coeff + 0.5 * eps * second.coeff + v_comp.coeff,
    )
    radius = low_radius if low_radius is not None else grid.cutoff
    low = low_mode_mask(grid, radius)
    low_hm4 = float(np.sqrt(batched_norm_sq(U.coeff, grid, -4.0, True, mask=low)))
    dist = float(np.sqrt(np.sum(np.abs(U.coeff - u.coeff) ** 2)))
    return CorrectedProcess(
        U=U,
        first_order=SpectralField(grid, math.sqrt(eps) * first.coeff),
        second_order=SpectralField(grid, 0.5 * eps * second.coeff),
        V=v_comp,
        low_hm4=low_hm4,
        distance_l2=dist,
    )


# ---------------------------------------------------------------------------
# run-level metrics
# ---------------------------------------------------------------------------


def dissipation_metrics(ledger: EnergyLedger, schedule, nu: float,
                        m_bound: float | None = None) -> dict:
    """Per-stage decay diagnostics and the inverse-interpolation bound values.

    For each stage q: terminal energy at the window end, the supremum of the
    low-mode H^-1 norm over [1 - tau_q/2, 1 - tau_{q+1}], the measured
    c_hat_q = sup / M^2, the assembled c_q = c_hat_q + N_q^{2(delta-1)}, the
    predicted envelope bound M^2 2 c_q / (nu tau_q), and the rate factor
    (nu tau_q / (M^2 c_q))^{1-delta} E(1-tau_{q+1}).
    """
    if len(ledger) == 0:
        raise ValueError("empty ledger")
    initial = ledger.l2sq[0]
    m_sq = m_bound**2 if m_bound is not None else max(initial, 1e-300)
    delta = schedule.delta
    ts = np.asarray(ledger.t)
    env = ledger.envelope()
    stages = []
    for q in range(schedule.n_stages):
        start, end = schedule.window(q)
        w0, w1 = schedule.diagnostics_window(q)
        in_run = ts >= float(start) - 1e-12
        if not np.any(in_run):
            continue
        upto = ts <= float(end) + 1e-12
        if not np.any(in_run & upto):
            continue
        idx_end = int(np.nonzero(in_run & upto)[0][-1])
        terminal = ledger.l2sq[idx_end]
        try:
            sup_low = ledger.window_sup(w0, min(float(w1), ts[-1]), "low_hm1sq")
        except ValueError:
            sup_low = float("nan")
        n_shell = schedule.stage(q).n_shell
        c_hat = sup_low / m_sq if np.isfinite(sup_low) else float("nan")
        c_q = c_hat + n_shell ** (2 * (delta - 1.0))
        tau = float(schedule.stage(q).tau)
        bound = m_sq * 2 * c_q / (nu * tau) if nu > 0 else float("inf")
        env_end = float(env[idx_end])
        rate_factor = (nu * tau / (m_sq * c_q)) ** (1 - delta) * env_end \
            if np.isfinite(c_q) and c_q > 0 and nu > 0 else float("nan")
        stages.append({
            "q": q,
            "terminal_l2sq": float(terminal),
            "window_sup_low_hm1sq": float(sup_low),
            "c_hat": float(c_hat),
            "c_q": float(c_q),
            "envelope_bound": float(bound),
            "envelope_at_end": env_end,
            "rate_factor": float(rate_factor),
        })
    dissipated = 0.0 if initial == 0 else 1.0 - ledger.l2sq[-1] / initial
    return {
        "nu": nu,
        "initial_l2sq": float(initial),
        "final_l2sq": float(ledger.l2sq[-1]),
        "dissipated_fraction": float(dissipated),
        "energy_defect": ledger.energy_defect(),
        "interpolation_defect": ledger.interpolation_defect(),
        "stages": stages,
    }
