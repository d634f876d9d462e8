"""Pseudo-spectral simulation of shell-forced stochastic advection on the torus."""

__version__ = "0.1.0"

from .spectral import (
    Grid,
    SpectralField,
    ResolutionError,
    advect,
    apply_friction_semigroup,
    apply_semigroup,
    leray_complement,
    leray_project,
    project_low,
    random_field,
    sobolev_norm,
    zeros,
)
from .lattice import (
    DriverIncrement,
    NoiseBasis,
    assemble_noise_field,
    build_shell,
    sample_driver,
)

__all__ = [
    "Grid",
    "SpectralField",
    "ResolutionError",
    "advect",
    "apply_friction_semigroup",
    "apply_semigroup",
    "leray_complement",
    "leray_project",
    "project_low",
    "random_field",
    "sobolev_norm",
    "zeros",
    "DriverIncrement",
    "NoiseBasis",
    "assemble_noise_field",
    "build_shell",
    "sample_driver",
]
