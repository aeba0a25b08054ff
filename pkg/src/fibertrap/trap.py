"""FORT beam geometry and the conservative dipole + gravity potential.

Inside the fiber the guided mode is a non-diverging Gaussian of 1/e^2
intensity radius w0; above the tip the beam diverges with an effective
Rayleigh range pinned to the numerical aperture (z_eff = w0 / NA) by
default, or the diffraction-limited z_R = pi w0^2 / lambda when selected.
All functions are pure and accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import g as STANDARD_GRAVITY

from .errors import DomainError, ValidationError
from .spectra import ProbeSequenceConfig

DIVERGENCE_MODELS = ("na_pinned", "diffraction")


@dataclass(frozen=True)
class BeamGeometry:
    """FORT mode geometry inside and above the fiber."""

    waist_m: float
    numerical_aperture: float
    tip_z_m: float
    fiber_length_m: float
    core_radius_m: float
    divergence_model: str = "na_pinned"
    wavelength_m: float = 855e-9

    def __post_init__(self):
        if self.waist_m <= 0:
            raise ValidationError(f"waist must be positive, got {self.waist_m}")
        if not 0.0 < self.numerical_aperture < 1.0:
            raise ValidationError(
                f"numerical aperture must lie in (0, 1), got {self.numerical_aperture}"
            )
        if self.core_radius_m < 0.5 * self.waist_m:
            raise ValidationError(
                f"core radius {self.core_radius_m} below half the waist {self.waist_m}"
            )
        if self.fiber_length_m <= 0:
            raise ValidationError("fiber length must be positive")
        if self.divergence_model not in DIVERGENCE_MODELS:
            raise ValidationError(
                f"divergence_model must be one of {DIVERGENCE_MODELS}, "
                f"got '{self.divergence_model}'"
            )
        if self.wavelength_m <= 0:
            raise ValidationError("wavelength must be positive")

    @property
    def effective_rayleigh_range_m(self) -> float:
        """Axial scale of the divergence above the tip."""
        if self.divergence_model == "na_pinned":
            return self.waist_m / self.numerical_aperture
        return math.pi * self.waist_m**2 / self.wavelength_m


@dataclass(frozen=True)
class TrapConfig:
    """Dipole trap parameters; trap_depth_j is the on-axis in-fiber depth."""

    geometry: BeamGeometry
    trap_depth_j: float
    gravity_m_s2: float = STANDARD_GRAVITY
    modulation: ProbeSequenceConfig | None = None

    def __post_init__(self):
        if self.trap_depth_j < 0:
            raise ValidationError(
                f"trap depth must be >= 0, got {self.trap_depth_j}"
            )
        if self.gravity_m_s2 < 0:
            raise ValidationError("gravity magnitude must be >= 0")


def beam_waist_at(geometry: BeamGeometry, z):
    """1/e^2 intensity radius at axial position z: constant w0 inside the
    fiber, w0*sqrt(1 + ((z - z_tip)/z_eff)^2) above the tip."""
    dz = np.maximum(np.asarray(z, dtype=float) - geometry.tip_z_m, 0.0)
    u = dz / geometry.effective_rayleigh_range_m
    out = geometry.waist_m * np.sqrt(1.0 + u * u)
    return out if out.ndim else float(out)

def dipole_potential(config: TrapConfig, r, z):
    """Dipole potential energy (J), excluding gravity:
    U(r, z) = -U0 * (w0 / w(z))^2 * exp(-2 r^2 / w(z)^2)."""
    w = np.asarray(beam_waist_at(config.geometry, z), dtype=float)
    r = np.asarray(r, dtype=float)
    u0 = config.trap_depth_j
    w0 = config.geometry.waist_m
    out = -u0 * (w0 / w) ** 2 * np.exp(-2.0 * r * r / (w * w))
    return out if out.ndim else float(out)


def total_potential(config: TrapConfig, mass_kg: float, r, z):
    """Dipole potential plus gravitational m*g*z."""
    z = np.asarray(z, dtype=float)
    out = dipole_potential(config, r, z) + mass_kg * config.gravity_m_s2 * z
    return out if out.ndim else float(out)


def potential_gradient(config: TrapConfig, r, z):
    """Analytic (dU/dr, dU/dz) of the dipole potential (no gravity)."""
    geom = config.geometry
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    zr = geom.effective_rayleigh_range_m
    dz = np.maximum(z - geom.tip_z_m, 0.0)
    u = dz / zr
    s = 1.0 + u * u
    w0 = geom.waist_m
    w2 = w0 * w0 * s
    q = np.exp(-2.0 * r * r / w2)
    c0 = config.trap_depth_j * q / s
    du_dr = 4.0 * c0 * r / w2
    du_dz = 2.0 * c0 * (1.0 - 2.0 * r * r / w2) * u / (zr * s)
    if du_dr.ndim or du_dz.ndim:
        return du_dr, du_dz
    return float(du_dr), float(du_dz)


def on_axis_depth(config: TrapConfig, height_above_tip_m):
    """Trap depth |U| on axis at the given height above the tip:
    U0 / (1 + (dz/z_eff)^2)."""
    dz = np.maximum(np.asarray(height_above_tip_m, dtype=float), 0.0)
    u = dz / config.geometry.effective_rayleigh_range_m
    out = config.trap_depth_j / (1.0 + u * u)
    return out if out.ndim else float(out)


def transverse_trap_frequency(config: TrapConfig, species_mass_kg: float) -> float:
    """Harmonic radial frequency (Hz) of the in-fiber potential:
    nu = (1/2pi) * sqrt(4 U0 / (m w0^2)); 0 for zero depth."""
    if species_mass_kg <= 0:
        raise DomainError("mass must be positive")
    if config.trap_depth_j == 0:
        return 0.0
    w0 = config.geometry.waist_m
    omega = math.sqrt(4.0 * config.trap_depth_j / (species_mass_kg * w0 * w0))
    return omega / (2.0 * math.pi)


def capture_range(config: TrapConfig, threshold_energy_j: float) -> float:
    """Axial distance above the tip at which the on-axis depth falls to the
    threshold: z_eff * sqrt(U0/E - 1) (analytic inversion of on_axis_depth)."""
    u0 = config.trap_depth_j
    if threshold_energy_j <= 0:
        raise DomainError(
            f"threshold energy must be positive, got {threshold_energy_j}"
        )
    if threshold_energy_j > u0:
        raise DomainError(
            f"threshold {threshold_energy_j} J exceeds the trap depth {u0} J"
        )
    zr = config.geometry.effective_rayleigh_range_m
    return zr * math.sqrt(u0 / threshold_energy_j - 1.0)
