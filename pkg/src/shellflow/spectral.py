"""Truncated Fourier fields on the unit torus and the spectral operator toolbox.

Fields live on T^d = (R/Z)^d with modes e_k(x) = exp(2*pi*i k.x), so a real
field is a complex coefficient array with conjugate symmetry and the L2 norm
is the plain sum of squared coefficient moduli (the e_k are orthonormal).
Derivatives carry 2*pi factors throughout; every norm below uses |2*pi*k|.

Quadratic terms are evaluated pseudo-spectrally with the 2/3-rule: products
are formed on the collocation grid and modes with any |k_i| > size//3 are
zeroed afterwards, which makes the retained modes alias-free whenever the
inputs are themselves supported inside the dealias cube.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

TWO_PI = 2.0 * np.pi


class ResolutionError(ValueError):
    """Raised when an operation would need modes the grid cannot hold."""


class Grid:
    """Collocation/spectral grid: `size` points per axis in `dim` dimensions.

    Retained modes satisfy max_i |k_i| <= cutoff with 3*cutoff < size, so a
    product of two retained fields never aliases back into the retained cube.
    """

    MAX_POINTS = 1 << 24  # memory guard: reject grids beyond ~16M points

    def __init__(self, dim: int, size: int):
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        if size < 6 or size % 2 != 0:
            raise ValueError(f"size must be even and >= 6, got {size}")
        if size**dim > Grid.MAX_POINTS:
            raise ResolutionError(
                f"grid {size}^{dim} exceeds the configured capacity ({Grid.MAX_POINTS} points)"
            )
        self.dim = dim
        self.size = size
        self.cutoff = (size - 1) // 3

        k1 = np.fft.fftfreq(size, 1.0 / size).astype(np.int64)
        shape = (size,) * dim
        self.kvec = np.empty((dim,) + shape, dtype=np.int64)
        for axis in range(dim):
            view = [None] * dim
            view[axis] = slice(None)
            self.kvec[axis] = k1[tuple(view)]
        self.k_sq = np.sum(self.kvec.astype(np.float64) ** 2, axis=0)
        self.lap_symbol = -(TWO_PI**2) * self.k_sq  # multiplier of Delta
        self.dealias_mask = np.all(np.abs(self.kvec) <= self.cutoff, axis=0)
        self.shape = shape
        self.n_points = size**dim
        self.ik = (TWO_PI * 1j) * self.kvec  # spectral gradient factors
        if dim == 2:
            # gradient packing: one inverse transform yields both components
            # of grad f as real/imaginary parts (f real)
            self.ik_packed = self.ik[0] + 1j * self.ik[1]

    def mode_index(self, k) -> tuple:
        """Array index of integer wavevector k (tuple usable on coeff arrays)."""
        k = np.asarray(k, dtype=np.int64)
        if np.any(np.abs(k) > self.size // 2 - 1):
            raise ResolutionError(f"mode {k.tolist()} outside grid of size {self.size}")
        return tuple(int(v) % self.size for v in k)

    def __repr__(self):
        return f"Grid(dim={self.dim}, size={self.size}, cutoff={self.cutoff})"


@dataclass
class SpectralField:
    """Mean-zero field in coefficient space.

    coeff has shape grid.shape for a scalar and (dim,) + grid.shape for a
    vector field; entries are complex with conjugate symmetry for real fields.
    """

    grid: Grid
    coeff: np.ndarray

    @property
    def is_vector(self) -> bool:
        return self.coeff.ndim == self.grid.dim + 1

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeff.copy())

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coeff + other.coeff)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coeff - other.coeff)

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.grid, self.coeff * scalar)

    __rmul__ = __mul__


def zeros(grid: Grid, vector: bool = False) -> SpectralField:
    shape = ((grid.dim,) if vector else ()) + grid.shape
    return SpectralField(grid, np.zeros(shape, dtype=np.complex128))


# ---------------------------------------------------------------------------
# transforms (array-level; leading axes are broadcast/batch axes)
# ---------------------------------------------------------------------------


def to_physical(coeff: np.ndarray, grid: Grid) -> np.ndarray:
    """Collocation values of the field; real part only (inputs are real fields)."""
    axes = tuple(range(-grid.dim, 0))
    return np.real(_fft.ifftn(coeff, axes=axes) * grid.n_points)


def from_physical(values: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(-grid.dim, 0))
    return _fft.fftn(values, axes=axes) / grid.n_points


def physical_energy(values: np.ndarray, grid: Grid) -> float:
    """Discrete L2 energy of collocation values (matches Parseval)."""
    return float(np.sum(values**2) / grid.n_points)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def l2_norm_sq(coeff: np.ndarray) -> float:
    return float(np.sum(np.abs(coeff) ** 2))


def sobolev_norm(field: SpectralField, s: float) -> float:
    """H^s norm (sum over |2 pi k|^{2s} |u_k|^2)^(1/2); the k=0 mode is ignored."""
    grid = field.grid
    zero = (0,) * grid.dim
    if s != 0.0:
        safe = TWO_PI**2 * grid.k_sq
        safe[zero] = 1.0
        w = safe**s
    else:
        w = np.ones(grid.shape)
    w[zero] = 0.0
    mag = np.abs(field.coeff) ** 2
    if field.is_vector:
        mag = mag.sum(axis=0)
    return float(np.sqrt(np.sum(w * mag)))


def mean_mode_magnitude(field: SpectralField) -> float:
    zero = (0,) * field.grid.dim
    c = field.coeff[(slice(None),) + zero] if field.is_vector else field.coeff[zero]
    return float(np.max(np.abs(np.atleast_1d(c))))


def reality_defect(field: SpectralField) -> float:
    """Max |u_{-k} - conj(u_k)| relative to the field magnitude."""
    c = field.coeff
    axes = tuple(range(-field.grid.dim, 0))
    flipped = c.copy()
    for ax in axes:
        flipped = np.flip(flipped, axis=ax)
        flipped = np.roll(flipped, 1, axis=ax)
    defect = np.max(np.abs(flipped - np.conj(c)))
    scale = np.max(np.abs(c))
    return float(defect / scale) if scale > 0 else 0.0


def divergence(field: SpectralField) -> SpectralField:
    if not field.is_vector:
        raise ValueError("divergence needs a vector field")
    grid = field.grid
    d = (TWO_PI * 1j) * np.sum(grid.kvec * field.coeff, axis=0)
    return SpectralField(grid, d)


def max_divergence_ratio(field: SpectralField) -> float:
    """Per-mode |k . u_k| / |u_k| maximum (0 for exactly solenoidal fields)."""
    grid = field.grid
    dots = np.abs(np.sum(grid.kvec * field.coeff, axis=0))
    mags = np.sqrt(np.sum(np.abs(field.coeff) ** 2, axis=0))
    scale = np.sqrt(grid.k_sq)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(mags > 0, dots / (np.maximum(mags, 1e-300) * np.maximum(scale, 1.0)), 0.0)
    return float(np.max(ratio))


def support_radius(field: SpectralField) -> float:
    """Largest |k| (Euclidean) carrying a coefficient above 1e-14 of the max."""
    mag = np.abs(field.coeff)
    if field.is_vector:
        mag = mag.sum(axis=0)
    scale = mag.max()
    if scale == 0:
        return 0.0
    occupied = mag > 1e-14 * scale
    return float(np.sqrt(np.max(field.grid.k_sq[occupied])))


# ---------------------------------------------------------------------------
# projections and semigroups
# ---------------------------------------------------------------------------


def _leray_arrays(coeff: np.ndarray, grid: Grid) -> np.ndarray:
    """(I - khat khat^T) applied per mode; k=0 untouched."""
    k = grid.kvec.astype(np.float64)
    ksq = grid.k_sq.copy()
    zero = (0,) * grid.dim
    ksq[zero] = 1.0  # avoid 0/0; the k=0 dot product is zero anyway
    dot = np.sum(k * coeff, axis=-grid.dim - 1) / ksq
    return coeff - k * np.expand_dims(dot, axis=-grid.dim - 1)


def leray_project(field: SpectralField) -> SpectralField:
    """Orthogonal projection onto divergence-free fields, diagonal in k."""
    if not field.is_vector:
        raise ValueError("Leray projection acts on vector fields")
    return SpectralField(field.grid, _leray_arrays(field.coeff, field.grid))


def leray_complement(field: SpectralField) -> SpectralField:
    """The gradient part: Id - Leray projector."""
    proj = leray_project(field)
    return SpectralField(field.grid, field.coeff - proj.coeff)


def heat_factor(grid: Grid, c: float, t: float) -> np.ndarray:
    """Per-mode multiplier exp(-c |2 pi k|^2 t)."""
    if c < 0 or t < 0:
        raise ValueError("semigroup needs c >= 0 and t >= 0")
    return np.exp(grid.lap_symbol * (c * t))


def apply_semigroup(field: SpectralField, c: float, t: float) -> SpectralField:
    return SpectralField(field.grid, field.coeff * heat_factor(field.grid, c, t))


def friction_factor(grid: Grid, eps: float, t: float) -> np.ndarray:
    """Multiplier exp(-(1 + eps |2 pi k|^2) t / eps), the large-friction semigroup."""
    if eps <= 0 or t < 0:
        raise ValueError("friction semigroup needs eps > 0, t >= 0")
    return np.exp(-(1.0 + eps * (TWO_PI**2) * grid.k_sq) * (t / eps))


def apply_friction_semigroup(field: SpectralField, eps: float, t: float) -> SpectralField:
    return SpectralField(field.grid, field.coeff * friction_factor(field.grid, eps, t))


def low_mode_mask(grid: Grid, radius: float) -> np.ndarray:
    """Euclidean low-pass: |k| <= radius (closed condition, ties included)."""
    return grid.k_sq <= radius**2 + 1e-12


def project_low(field: SpectralField, radius: float) -> SpectralField:
    mask = low_mode_mask(field.grid, radius)
    return SpectralField(field.grid, field.coeff * mask)


def dealias(coeff: np.ndarray, grid: Grid) -> np.ndarray:
    return coeff * grid.dealias_mask


# ---------------------------------------------------------------------------
# advection
# ---------------------------------------------------------------------------


def _check_dealiased(coeff: np.ndarray, grid: Grid, label: str):
    mag = np.abs(coeff)
    outside = mag * (~grid.dealias_mask)
    if outside.max() > 1e-13 * max(mag.max(), 1e-300):
        raise ResolutionError(
            f"{label} carries modes beyond the dealias cutoff {grid.cutoff}; "
            "refine the grid or project first"
        )


def velocity_collocation(vel_coeff: np.ndarray, grid: Grid) -> np.ndarray:
    """Physical-space samples of an advecting velocity, shape (dim,) + grid.shape."""
    return to_physical(vel_coeff, grid)


def advect_with_collocation(vphys: np.ndarray, coeff: np.ndarray, grid: Grid,
                            project: bool) -> np.ndarray:
    """-(v . grad) f (and Leray-projected for vector f), dealiased.

    vphys holds collocation samples of v; coeff may carry leading batch axes
    (and a component axis directly before the grid axes when project=True).
    """
    axes = tuple(range(-grid.dim, 0))
    comp_axis = -grid.dim - 1

    def transport_scalar(c):
        # 2d: one packed inverse transform carries both gradient components
        # as real/imaginary parts (the gradient of a real field is real)
        if grid.dim == 2:
            packed = _fft.ifftn(c * grid.ik_packed, axes=axes)
            prod = vphys[..., 0, :, :] * packed.real + vphys[..., 1, :, :] * packed.imag
            return _fft.fftn(prod, axes=axes)
        grad = _fft.ifftn(np.expand_dims(c, comp_axis) * grid.ik, axes=axes)
        prod = np.einsum("...ixyz,...ixyz->...xyz", vphys, grad.real)
        return _fft.fftn(prod, axes=axes)

    if project:  # vector advectee: one transport per component
        out = np.empty_like(coeff)
        out_view = np.moveaxis(out, comp_axis, 0)
        coeff_view = np.moveaxis(coeff, comp_axis, 0)
        for comp in range(grid.dim):
            out_view[comp] = transport_scalar(coeff_view[comp])
        out = -_leray_arrays(out, grid)
    else:
        out = -transport_scalar(coeff)
    out *= grid.dealias_mask
    zero = (Ellipsis,) + (0,) * grid.dim
    out[zero] = 0.0
    return out


def advect(velocity: SpectralField, field: SpectralField,
           check: bool = True) -> SpectralField:
    """b(v, f) = -(v.grad) f, Leray-projected when f is a vector field.

    v must be divergence-free; both inputs must fit inside the dealias cube so
    the retained product modes are exact.
    """
    grid = field.grid
    if not velocity.is_vector:
        raise ValueError("advecting velocity must be a vector field")
    if check:
        _check_dealiased(velocity.coeff, grid, "velocity")
        _check_dealiased(field.coeff, grid, "advected field")
        if max_divergence_ratio(velocity) > 1e-10:
            raise ValueError("advecting velocity is not divergence-free")
    vphys = velocity_collocation(velocity.coeff, grid)
    out = advect_with_collocation(vphys, field.coeff, grid, project=field.is_vector)
    return SpectralField(grid, out)


# ---------------------------------------------------------------------------
# field constructors and IO
# ---------------------------------------------------------------------------


def random_field(grid: Grid, rng: np.random.Generator, radius: float,
                 vector: bool = False, divergence_free: bool = True,
                 norm: float = 1.0) -> SpectralField:
    """Random real mean-zero field on 1 <= |k| <= radius inside the dealias cube."""
    shape = ((grid.dim,) if vector else ()) + grid.shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = (grid.k_sq <= radius**2 + 1e-12) & (grid.k_sq > 0) & grid.dealias_mask
    raw *= mask
    field = SpectralField(grid, raw)
    field = symmetrize(field)
    if vector and divergence_free:
        field = leray_project(field)
    n = np.sqrt(l2_norm_sq(field.coeff))
    if n > 0 and norm is not None:
        field.coeff *= norm / n
    return field


def symmetrize(field: SpectralField) -> SpectralField:
    """Enforce u_{-k} = conj(u_k) (project onto real fields)."""
    c = field.coeff
    flipped = c.copy()
    for ax in range(-field.grid.dim, 0):
        flipped = np.flip(flipped, axis=ax)
        flipped = np.roll(flipped, 1, axis=ax)
    sym = 0.5 * (c + np.conj(flipped))
    zero = (Ellipsis,) + (0,) * field.grid.dim
    sym[zero] = 0.0
    return SpectralField(field.grid, sym)


def save_spectral(field: SpectralField, path):
    """Structured-text spectral dump: one `k_tuple re im [...]` row per mode.

    Only modes above 1e-300 magnitude are written; floats use 17 significant
    digits so the round trip is bit exact.
    """
    grid = field.grid
    mag = np.abs(field.coeff)
    if field.is_vector:
        mag = mag.sum(axis=0)
    idx = np.argwhere(mag > 1e-300)
    ncomp = grid.dim if field.is_vector else 1
    with open(path, "w") as fh:
        fh.write(f"# shellflow spectral dump v1\n")
        fh.write(f"# dim={grid.dim} size={grid.size} components={ncomp}\n")
        for pos in idx:
            k = [int(grid.kvec[(a,) + tuple(pos)]) for a in range(grid.dim)]
            if field.is_vector:
                vals = [field.coeff[(c,) + tuple(pos)] for c in range(grid.dim)]
            else:
                vals = [field.coeff[tuple(pos)]]
            row = " ".join(str(v) for v in k)
            row += " " + " ".join(f"{v.real:.17g} {v.imag:.17g}" for v in vals)
            fh.write(row + "\n")


def load_spectral(path) -> SpectralField:
    with open(path) as fh:
        header = fh.readline()
        if "shellflow spectral dump" not in header:
            raise ValueError(f"{path} is not a spectral dump")
        meta = fh.readline().strip("# \n").split()
        kv = dict(item.split("=") for item in meta)
        dim, size, ncomp = int(kv["dim"]), int(kv["size"]), int(kv["components"])
        grid = Grid(dim, size)
        field = zeros(grid, vector=(ncomp > 1))
        for line in fh:
            parts = line.split()
            k = [int(v) for v in parts[:dim]]
            vals = [float(v) for v in parts[dim:]]
            pos = grid.mode_index(k)
            for c in range(ncomp):
                val = complex(vals[2 * c], vals[2 * c + 1])
                if ncomp > 1:
                    field.coeff[(c,) + pos] = val
                else:
                    field.coeff[pos] = val
    return field
