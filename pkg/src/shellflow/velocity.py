"""Advecting velocity constructions.

Three models drive the advected fields:

* white driver: the advecting increment is a fresh shell field per step,
  never materialized as a persistent velocity (white-in-time limit);
* exponentially correlated velocity: every shell mode follows an exact
  complex Ornstein-Uhlenbeck update with decorrelation time eps, and the
  assembled field is eps^{-1/2} x an order-one stochastic convolution;
* friction-forced Navier-Stokes velocity: the full field obeys
  dv + (v.grad)v dt = Delta v dt - v/eps dt + (noise)/eps, advanced with an
  exact integrating factor for the linear part, an explicit dealiased
  nonlinear term, and noise sampled jointly with the stochastic convolution
  w so that the split v = eps^{-1/2} w + r holds to rounding after every
  step.

All per-mode updates are exact in law for the linear dynamics: no Euler
discretization of the stiff friction appears anywhere.
"""

from __future__ import annotations

import numpy as np

from .lattice import NoiseBasis, NoiseScatter, sample_driver
from .spectral import (
    Grid,
    SpectralField,
    TWO_PI,
    advect_with_collocation,
    friction_factor,
    to_physical,
)


def expand_half(basis: NoiseBasis, half: np.ndarray) -> np.ndarray:
    """Extend coefficients from the half-lattice to the full shell by conjugation."""
    shape = half.shape[:-2] + (basis.kappa, basis.n_pol)
    full = np.zeros(shape, dtype=np.complex128)
    full[..., basis.half_rows, :] = half
    full[..., basis.neg_row[basis.half_rows], :] = np.conj(half)
    return full


class _ShellScatter(NoiseScatter):
    """NoiseScatter that accepts leading batch axes on the mode values."""

    def field_coeff(self, full_values: np.ndarray) -> np.ndarray:
        grid, basis = self.grid, self.basis
        lead = full_values.shape[:-2]
        out = np.zeros(lead + (grid.dim, grid.n_points), dtype=np.complex128)
        contrib = np.einsum("...kp,kpd->...kd", full_values, basis.bases)
        out[..., self.flat_index] = np.swapaxes(contrib, -1, -2)
        return out.reshape(lead + (grid.dim,) + grid.shape)


class WhiteDriver:
    """White-in-time transport driver: a fresh shell increment per step."""

    kind = "transport"

    def __init__(self, basis: NoiseBasis, grid: Grid):
        self.basis = basis
        self.grid = grid
        self.scatter = _ShellScatter(basis, grid)
        self.eps = None

    def sample_field_coeff(self, dt: float, rng: np.random.Generator,
                           batch: int | None = None) -> np.ndarray:
        """Coefficients of sum sigma dW over one step; leading path axis if batch."""
        shape = ((batch,) if batch else ()) + (len(self.basis.half_rows), self.basis.n_pol)
        half = np.sqrt(dt) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        return self.scatter.field_coeff(expand_half(self.basis, half))


class OUVelocity:
    """Exponentially correlated shell velocity, exact per-mode updates.

    Mode coefficients obey d v = -v/eps dt + dW/eps with stationary complex
    variance 1/eps; the field it assembles is the pure colored-noise velocity
    (remainder-free decomposition v = eps^{-1/2} w).
    """

    kind = "ou"

    def __init__(self, basis: NoiseBasis, grid: Grid, eps: float,
                 batch: int | None = None, rng: np.random.Generator | None = None,
                 stationary: bool = True):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.basis = basis
        self.grid = grid
        self.eps = eps
        self.batch = batch
        self.scatter = _ShellScatter(basis, grid)
        shape = ((batch,) if batch else ()) + (len(basis.half_rows), basis.n_pol)
        if stationary:
            if rng is None:
                raise ValueError("stationary initialization needs an rng")
            std = np.sqrt(0.5 / eps)
            self.half = std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        else:
            self.half = np.zeros(shape, dtype=np.complex128)
        self.time = 0.0

    def advance(self, dt: float, rng: np.random.Generator):
        """One exact OU step: decay e^{-dt/eps} plus the exact noise integral."""
        if dt < 0:
            raise ValueError("dt must be >= 0")
        if dt == 0:
            return
        decay = np.exp(-dt / self.eps)
        var_complex = (1.0 - decay**2) / self.eps
        std = np.sqrt(0.5 * var_complex)
        noise = std * (rng.standard_normal(self.half.shape)
                       + 1j * rng.standard_normal(self.half.shape))
        self.half = decay * self.half + noise
        self.time += dt

    def field_coeff(self) -> np.ndarray:
        return self.scatter.field_coeff(expand_half(self.basis, self.half))

    def field(self) -> SpectralField:
        if self.batch:
            raise ValueError("field() is for unbatched states; use field_coeff()")
        return SpectralField(self.grid, self.field_coeff())

    def l2_sq(self) -> np.ndarray:
        """|v|_{L2}^2 per path (sum over the full shell)."""
        return 2.0 * np.sum(np.abs(self.half) ** 2, axis=(-2, -1))

    def stationary_l2_sq(self) -> float:
        return self.basis.kappa * self.basis.n_pol / self.eps


class StochasticConvolution:
    """The order-one noisy part w: dw = -w/eps dt + eps^{-1/2} dW.

    Starts from zero at a stage opening; E|w_{k,alpha}|^2 saturates at 1 per
    mode so E|w|_{L2}^2 -> kappa * n_pol.
    """

    def __init__(self, basis: NoiseBasis, eps: float, batch: int | None = None):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.basis = basis
        self.eps = eps
        self.batch = batch
        shape = ((batch,) if batch else ()) + (len(basis.half_rows), basis.n_pol)
        self.half = np.zeros(shape, dtype=np.complex128)
        self.elapsed = 0.0

    def advance(self, dt: float, rng: np.random.Generator):
        if dt == 0:
            return
        decay = np.exp(-dt / self.eps)
        var_complex = 1.0 - decay**2
        std = np.sqrt(0.5 * var_complex)
        noise = std * (rng.standard_normal(self.half.shape)
                       + 1j * rng.standard_normal(self.half.shape))
        self.half = decay * self.half + noise
        self.elapsed += dt

    def l2_sq(self):
        return 2.0 * np.sum(np.abs(self.half) ** 2, axis=(-2, -1))

    def sobolev_sq(self, s: float):
        """|w|_{H^s}^2 per path from the mode amplitudes."""
        ksq = np.sum(self.basis.vectors[self.basis.half_rows] ** 2, axis=1).astype(float)
        w = (TWO_PI**2 * ksq) ** s
        mags = np.sum(np.abs(self.half) ** 2, axis=-1)
        return 2.0 * np.sum(w * mags, axis=-1)

    def expected_l2_sq(self, elapsed: float | None = None) -> float:
        t = self.elapsed if elapsed is None else elapsed
        sat = 1.0 - np.exp(-2.0 * t / self.eps)
        return self.basis.kappa * self.basis.n_pol * sat


class NSEVelocity:
    """Friction-forced stochastic Navier-Stokes advecting field.

    Tracks the full field v on the grid, the stochastic convolution w on the
    shell (same Brownian path, jointly sampled), the remainder r = v -
    eps^{-1/2} w, and the auxiliary quadratic-drive process r_tilde solving
    d r_tilde = eps^{-1}(-I + eps Delta) r_tilde dt + eps^{-1} b(w, w) dt.
    """

    kind = "nse"

    def __init__(self, basis: NoiseBasis, grid: Grid, eps: float,
                 v0: SpectralField | None = None):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.basis = basis
        self.grid = grid
        self.eps = eps
        self.scatter = _ShellScatter(basis, grid)
        self.v = np.zeros((grid.dim,) + grid.shape, dtype=np.complex128) \
            if v0 is None else v0.coeff.astype(np.complex128).copy()
        self.w = StochasticConvolution(basis, eps)
        self.r_tilde = np.zeros_like(self.v)
        self.time = 0.0
        self._mode_ksq = np.sum(basis.vectors[basis.half_rows] ** 2, axis=1).astype(float)
        self._noise_cache = {}

    # -- noise sampling -----------------------------------------------------

    def _joint_noise_factors(self, dt: float):
        """Per-half-row std/covariance factors of the (v, w) noise integrals."""
        key = dt
        if key not in self._noise_cache:
            eps = self.eps
            mu = 1.0 / eps + TWO_PI**2 * self._mode_ksq     # v relaxation rate
            lam = 1.0 / eps                                  # w relaxation rate
            var_eta = (1.0 - np.exp(-2 * mu * dt)) / (mu * eps**2)
            var_zeta = (1.0 - np.exp(-2 * lam * dt)) * np.ones_like(mu)
            cov = 2.0 * eps**-1.5 * (1.0 - np.exp(-(mu + lam) * dt)) / (mu + lam)
            s_zeta = np.sqrt(0.5 * var_zeta)
            c1 = 0.5 * cov / s_zeta
            resid = np.maximum(0.5 * var_eta - c1**2, 0.0)
            s_eta_perp = np.sqrt(resid)
            self._noise_cache[key] = (s_zeta, c1, s_eta_perp)
        return self._noise_cache[key]

    def _sample_joint(self, dt: float, rng: np.random.Generator):
        shape = self.w.half.shape
        g1 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        g2 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        s_zeta, c1, s_eta_perp = self._joint_noise_factors(dt)
        zeta = s_zeta[:, None] * g1
        eta = c1[:, None] * g1 + s_eta_perp[:, None] * g2
        return eta, zeta

    # -- fields -------------------------------------------------------------

    def w_field_coeff(self) -> np.ndarray:
        return self.scatter.field_coeff(expand_half(self.basis, self.w.half))

    def field_coeff(self) -> np.ndarray:
        return self.v

    def field(self) -> SpectralField:
        return SpectralField(self.grid, self.v)

    def w_field(self) -> SpectralField:
        return SpectralField(self.grid, self.w_field_coeff())

    def r_field(self) -> SpectralField:
        return SpectralField(self.grid, self.v - self.eps**-0.5 * self.w_field_coeff())

    def r_tilde_field(self) -> SpectralField:
        return SpectralField(self.grid, self.r_tilde)

    # -- dynamics -----------------------------------------------------------

    def advance(self, dt: float, rng: np.random.Generator,
                nonlinear: bool = True):
        """Split step: explicit dealiased b(v,v), exact linear decay, exact noise."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        grid, eps = self.grid, self.eps
        w_coeff_old = self.w_field_coeff()

        drift = self.v
        if nonlinear:
            vphys = to_physical(self.v, grid)
            bvv = advect_with_collocation(vphys, self.v, grid, project=True)
            drift = self.v + dt * bvv
        decay = np.exp(-(1.0 / eps - grid.lap_symbol) * dt)  # lap_symbol <= 0
        eta, zeta = self._sample_joint(dt, rng)
        self.v = decay * drift + self.scatter.field_coeff(expand_half(self.basis, eta))
        self.w.half = np.exp(-dt / eps) * self.w.half + zeta
        self.w.elapsed += dt

        # r_tilde: exact integrating factor, quadratic drive frozen at step start
        wphys = to_physical(w_coeff_old, grid)
        bww = advect_with_collocation(wphys, w_coeff_old, grid, project=True)
        factor = friction_factor(grid, eps, dt)
        mu_grid = (1.0 + eps * TWO_PI**2 * grid.k_sq) / eps
        phi1 = (1.0 - factor) / mu_grid
        self.r_tilde = factor * self.r_tilde + phi1 * (bww / eps)
        self.time += dt

    def suggested_dt(self, cfl: float = 0.3, floor: float = 1e-7) -> float:
        """Resolve the decorrelation time and the advective rate of v."""
        vphys = to_physical(self.v, self.grid)
        vmax = float(np.max(np.sqrt(np.sum(vphys**2, axis=0))))
        rate = vmax * TWO_PI * self.grid.cutoff * np.sqrt(self.grid.dim)
        dt_cfl = cfl / rate if rate > 0 else np.inf
        return max(min(self.eps / 10.0, dt_cfl), floor)


def stage_transition(state, new_basis: NoiseBasis, new_eps: float):
    """Open the next stage: carry v, reset w and r_tilde, swap shell and eps.

    Valid for NSEVelocity (w/r bookkeeping) and OUVelocity (fresh modes start
    from zero; the old shell's energy decays inside v only for the NSE model,
    so the OU model simply reinitializes at zero on the new shell).
    """
    if isinstance(state, NSEVelocity):
        out = NSEVelocity(new_basis, state.grid, new_eps,
                          v0=SpectralField(state.grid, state.v.copy()))
        out.time = state.time
        return out
    if isinstance(state, OUVelocity):
        out = OUVelocity(new_basis, state.grid, new_eps, batch=state.batch,
                         stationary=False)
        out.time = state.time
        return out
    raise TypeError(f"no stage transition for {type(state).__name__}")
