"""Shell geometry and the complex Brownian drivers living on it.

The stage-q noise is carried by integer wavevectors in the annulus
N <= |k| <= 2N, each paired with an orthonormal polarization frame
perpendicular to k (two vectors in 3d, one in 2d). The lattice splits into a
half-set and its negation; drivers are sampled on the half-set and extended
by conjugation so every assembled field is real.

Conventions match the rest of the package: a driver increment over dt is a
complex Gaussian with independent real and imaginary parts of variance dt
each (total complex variance 2*dt), and increments at -k are the conjugates
of those at k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Grid, SpectralField

MAX_SHELL_SIZE = 8_000_000  # lattice points; guards accidental huge shells


def in_half_lattice(k) -> bool:
    """Deterministic half-lattice membership: first nonzero component > 0."""
    for comp in k:
        if comp != 0:
            return comp > 0
    return False


def _polarization_frame(k: np.ndarray, reference: int) -> np.ndarray:
    """Orthonormal vectors perpendicular to k, right-handed with khat in 3d.

    reference selects the axis used to seed the frame; any axis not parallel
    to k gives a valid frame (downstream shell sums are frame independent).
    """
    k = np.asarray(k, dtype=np.float64)
    dim = k.size
    if dim == 2:
        a1 = np.array([-k[1], k[0]]) / np.linalg.norm(k)
        return a1[None, :]
    ref = np.zeros(3)
    ref[reference] = 1.0
    a1 = np.cross(ref, k)
    if np.allclose(a1, 0.0):  # k parallel to the reference axis
        ref = np.zeros(3)
        ref[(reference + 1) % 3] = 1.0
        a1 = np.cross(ref, k)
    a1 /= np.linalg.norm(a1)
    khat = k / np.linalg.norm(k)
    a2 = np.cross(khat, a1)
    return np.stack([a1, a2])


@dataclass
class NoiseBasis:
    """Immutable shell data: wavevectors, frames, and half-lattice indexing.

    vectors holds every shell mode (k and -k); half_rows indexes the chosen
    half-set, neg_row maps each row to the row of its negation, and the frame
    at -k equals the frame at k. kappa is the shell cardinality.
    """

    dim: int
    n_min: int
    vectors: np.ndarray      # (kappa, dim) int64
    bases: np.ndarray        # (kappa, n_pol, dim) float64
    half_rows: np.ndarray    # (kappa // 2,) int64
    neg_row: np.ndarray      # (kappa,) int64

    @property
    def kappa(self) -> int:
        return self.vectors.shape[0]

    @property
    def n_pol(self) -> int:
        return self.bases.shape[1]

    def unit_vectors(self) -> np.ndarray:
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        return self.vectors / norms


def shell_wavevectors(n_min: int, dim: int) -> np.ndarray:
    """All integer k with n_min <= |k| <= 2*n_min, deterministically ordered."""
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if n_min < 1:
        raise ValueError(f"shell radius must be >= 1, got {n_min}")
    span = np.arange(-2 * n_min, 2 * n_min + 1, dtype=np.int64)
    if (len(span) ** dim) > MAX_SHELL_SIZE:
        raise ValueError(f"shell N={n_min} exceeds the configured lattice capacity")
    grids = np.meshgrid(*([span] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    norm_sq = np.sum(pts.astype(np.int64) ** 2, axis=1)
    keep = (norm_sq >= n_min**2) & (norm_sq <= 4 * n_min**2)
    pts = pts[keep]
    order = np.lexsort(pts.T[::-1])
    return pts[order]


def build_shell(n_min: int, dim: int = 3, reference: int = 2) -> NoiseBasis:
    """Construct the stage shell with its polarization frames.

    Frames are built on the half-lattice and mirrored to the negations, so
    the frame triple is right-handed on the half-set and frames agree at +-k.
    """
    vectors = shell_wavevectors(n_min, dim)
    kappa = vectors.shape[0]
    n_pol = 2 if dim == 3 else 1

    lookup = {tuple(int(v) for v in k): i for i, k in enumerate(vectors)}
    neg_row = np.array([lookup[tuple(int(-v) for v in k)] for k in vectors],
                       dtype=np.int64)
    half_mask = np.array([in_half_lattice(k) for k in vectors])
    half_rows = np.nonzero(half_mask)[0].astype(np.int64)

    bases = np.zeros((kappa, n_pol, dim))
    for row in half_rows:
        frame = _polarization_frame(vectors[row], reference)
        bases[row] = frame
        bases[neg_row[row]] = frame
    return NoiseBasis(dim=dim, n_min=n_min, vectors=vectors, bases=bases,
                      half_rows=half_rows, neg_row=neg_row)


@dataclass
class DriverIncrement:
    """Complex Brownian increments over one step, indexed like the basis.

    half_values holds the increments on the half-lattice rows; the remaining
    rows are the conjugates (expanded on demand by full_values).
    """

    dt: float
    half_values: np.ndarray  # (len(half_rows), n_pol) complex128

    def full_values(self, basis: NoiseBasis) -> np.ndarray:
        full = np.zeros((basis.kappa, basis.n_pol), dtype=np.complex128)
        full[basis.half_rows] = self.half_values
        neg = basis.neg_row[basis.half_rows]
        full[neg] = np.conj(self.half_values)
        return full


def sample_driver(basis: NoiseBasis, dt: float, rng: np.random.Generator) -> DriverIncrement:
    """Draw one increment per (half-lattice mode, polarization).

    Real and imaginary parts are independent N(0, dt) so the complex variance
    is 2*dt and E[dW_k dW_{-k}] = 2*dt.
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    shape = (len(basis.half_rows), basis.n_pol)
    scale = np.sqrt(dt)
    vals = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return DriverIncrement(dt=dt, half_values=vals)


class NoiseScatter:
    """Precomputed flat indices for dropping shell contributions onto a grid."""

    def __init__(self, basis: NoiseBasis, grid: Grid):
        if 2 * basis.n_min > grid.cutoff:
            raise ValueError(
                f"shell N={basis.n_min} does not fit inside the dealias cutoff "
                f"{grid.cutoff} of {grid}"
            )
        if basis.dim != grid.dim:
            raise ValueError("basis and grid dimensions differ")
        self.basis = basis
        self.grid = grid
        idx = np.mod(basis.vectors, grid.size)
        flat = idx[:, 0]
        for axis in range(1, grid.dim):
            flat = flat * grid.size + idx[:, axis]
        self.flat_index = flat.astype(np.int64)

    def field_coeff(self, full_values: np.ndarray) -> np.ndarray:
        """Vector-field coefficients of sum_k,alpha a_{k,alpha} e_k w_{k,alpha}."""
        grid, basis = self.grid, self.basis
        out = np.zeros((grid.dim, grid.n_points), dtype=np.complex128)
        # sum over polarizations: (kappa, n_pol) x (kappa, n_pol, dim) -> (kappa, dim)
        contrib = np.einsum("kp,kpd->kd", full_values, basis.bases)
        out[:, self.flat_index] = contrib.T
        return out.reshape((grid.dim,) + grid.shape)


def assemble_noise_field(basis: NoiseBasis, increment: DriverIncrement,
                         grid: Grid) -> SpectralField:
    """Real, divergence-free field sum_{k,alpha} a_{k,alpha} e_k dW^{k,alpha}."""
    expected = (len(basis.half_rows), basis.n_pol)
    if increment.half_values.shape != expected:
        raise ValueError(
            f"increment shape {increment.half_values.shape} does not match basis {expected}"
        )
    scatter = NoiseScatter(basis, grid)
    return SpectralField(grid, scatter.field_coeff(increment.full_values(basis)))
