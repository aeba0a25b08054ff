"""Forward models for probe transmission at extreme optical depth.

Covers OD arithmetic, multi-line Lorentzian absorption spectra, effective-OD
reduction against inhomogeneous broadening, atom-number extraction from
absorbed pulse energy, mode-overlap column-OD estimation, and stroboscopic
photon-count simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import c, h

from .atoms import AtomSpecies, line_detuning
from .errors import (
    DomainError,
    InconsistentTracesError,
    SaturatedMeasurementError,
    ValidationError,
)

# Modeled transmission below this floor is reported as exactly 0 with a
# saturation flag; fits must weight by counts, never by log-transmission.
SATURATION_FLOOR = 1e-300
_SATURATION_EXPONENT = -math.log(SATURATION_FLOOR)


@dataclass(frozen=True)
class SpectralLine:
    """One absorption line: OD and center relative to the model reference."""

    excited_f: int
    od: float
    center_detuning_hz: float

    def __post_init__(self):
        if self.od < 0:
            raise ValidationError(f"line od must be >= 0, got {self.od}")


@dataclass(frozen=True)
class SpectrumModel:
    lines: tuple[SpectralLine, ...]
    linewidth_fwhm_hz: float
    frequency_offset_hz: float = 0.0

    def __post_init__(self):
        if self.linewidth_fwhm_hz <= 0:
            raise ValidationError(
                f"linewidth must be positive, got {self.linewidth_fwhm_hz}"
            )


@dataclass(frozen=True, eq=False)
class TransmissionTrace:
    """Time-resolved transmitted power with and without atoms."""

    time_s: np.ndarray
    power_ref_w: np.ndarray
    power_atoms_w: np.ndarray
    probe_wavelength_m: float
    power_atoms_stderr_w: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.time_s, dtype=float)
        if not (len(t) == len(self.power_ref_w) == len(self.power_atoms_w)):
            raise ValidationError("trace grids must have equal length")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("trace time grid must be strictly increasing")
        if np.any(np.asarray(self.power_ref_w) < 0) or np.any(
            np.asarray(self.power_atoms_w) < 0
        ):
            raise ValidationError("trace powers must be non-negative")


@dataclass(frozen=True)
class ProbeSequenceConfig:
    """Stroboscopic probing: FORT chopped at modulation_frequency_hz, probe
    counted during gate_time_s within each off window."""

    modulation_frequency_hz: float
    off_window_s: float
    gate_time_s: float
    n_gates: int
    probe_power_w: float

    def __post_init__(self):
        if self.modulation_frequency_hz <= 0:
            raise ValidationError("modulation frequency must be positive")
        if self.gate_time_s > self.off_window_s:
            raise ValidationError(
                f"gate time {self.gate_time_s} exceeds off window {self.off_window_s}"
            )
        if self.off_window_s > 1.0 / self.modulation_frequency_hz:
            raise ValidationError("off window exceeds the modulation period")
        if self.n_gates < 1:
            raise ValidationError("n_gates must be >= 1")
        if self.probe_power_w < 0:
            raise ValidationError("probe power must be non-negative")

    @property
    def period_s(self) -> float:
        return 1.0 / self.modulation_frequency_hz

    @property
    def on_window_s(self) -> float:
        return self.period_s - self.off_window_s


def optical_depth(intensity_in: float, intensity_out: float) -> float:
    """OD = -ln(I_out / I_in)."""
    if intensity_in <= 0:
        raise DomainError(f"intensity_in must be positive, got {intensity_in}")
    if intensity_out < 0:
        raise DomainError(f"intensity_out must be >= 0, got {intensity_out}")
    if intensity_out == 0:
        raise SaturatedMeasurementError(
            "zero transmitted intensity: OD is only bounded from below, "
            "not measurable"
        )
    return -math.log(intensity_out / intensity_in)


def transmission(od: float) -> float:
    """Inverse of optical_depth: T = exp(-od)."""
    return math.exp(-od)


def effective_od(od_raw: float, gamma_hom: float, gamma_inh: float) -> float:
    """On-resonance OD diluted by inhomogeneous broadening."""
    if gamma_hom <= 0:
        raise DomainError(f"gamma_hom must be positive, got {gamma_hom}")
    if gamma_inh < gamma_hom:
        raise DomainError(
            f"gamma_inh ({gamma_inh}) below gamma_hom ({gamma_hom}): "
            "no inhomogeneous narrowing"
        )
    return od_raw * gamma_hom / gamma_inh


def od_profile(model: SpectrumModel, detunings) -> np.ndarray:
    """Summed OD at each detuning: sum_i od_i * L(delta - delta_i), with L the
    unit-peak Lorentzian L(x) = 1 / (1 + (2x / Gamma_FWHM)^2)."""
    delta = np.asarray(detunings, dtype=float)
    if not np.all(np.isfinite(delta)):
        raise DomainError("detunings must be finite")
    total = np.zeros_like(delta)
    for line in model.lines:
        x = delta - (line.center_detuning_hz + model.frequency_offset_hz)
        total += line.od / (1.0 + (2.0 * x / model.linewidth_fwhm_hz) ** 2)
    return total


def transmission_spectrum(model: SpectrumModel, detunings) -> np.ndarray:
    """T(delta) = exp(-od_profile); values below the float floor are exactly 0
    (see saturated_mask)."""
    total = od_profile(model, detunings)
    result = np.exp(-total)
    result[total > _SATURATION_EXPONENT] = 0.0
    return result


def saturated_mask(model: SpectrumModel, detunings) -> np.ndarray:
    """True where the modeled transmission underflows the saturation floor."""
    return od_profile(model, detunings) > _SATURATION_EXPONENT


def half_transmission_detuning(od: float, linewidth_fwhm_hz: float) -> float:
    """|detuning| where a single line of the given od transmits 50%:
    delta_half = (Gamma/2) * sqrt(od/ln 2 - 1). Defined for od > ln 2."""
    if od <= math.log(2.0):
        raise DomainError(f"no half-transmission point for od = {od} <= ln 2")
    return 0.5 * linewidth_fwhm_hz * math.sqrt(od / math.log(2.0) - 1.0)


def spectrum_from_species(
    species: AtomSpecies,
    ground_f: int,
    ods: dict[int, float],
    reference_excited_f: int = 1,
    linewidth_fwhm_hz: float | None = None,
    frequency_offset_hz: float = 0.0,
) -> SpectrumModel:
    """Build a SpectrumModel with line centers taken from the species data,
    expressed relative to the F -> F'_ref transition."""
    lines = tuple(
        SpectralLine(
            excited_f=ef,
            od=od,
            center_detuning_hz=line_detuning(species, ground_f, ef, reference_excited_f),
        )
        for ef, od in sorted(ods.items())
    )
    if linewidth_fwhm_hz is None:
        linewidth_fwhm_hz = species.gamma_fwhm_hz
    return SpectrumModel(
        lines=lines,
        linewidth_fwhm_hz=linewidth_fwhm_hz,
        frequency_offset_hz=frequency_offset_hz,
    )


def absorbed_energy(trace: TransmissionTrace) -> float:
    """Trapezoidal integral of (P_ref - P_atoms) over the trace."""
    diff = np.asarray(trace.power_ref_w, dtype=float) - np.asarray(
        trace.power_atoms_w, dtype=float
    )
    return float(np.trapezoid(diff, np.asarray(trace.time_s, dtype=float)))


def atom_number_from_absorption(
    trace: TransmissionTrace,
    photons_per_atom: float = 2.0,
    noise_floor_j: float = 0.0,
) -> float:
    """Atom number from the absorbed pulse energy: each atom removes
    photons_per_atom quanta of h*c/lambda before going dark."""
    if photons_per_atom <= 0:
        raise DomainError("photons_per_atom must be positive")
    e_abs = absorbed_energy(trace)
    if e_abs < -abs(noise_floor_j):
        raise InconsistentTracesError(
            f"absorbed energy {e_abs:.3e} J is negative beyond the noise floor; "
            "reference and atoms traces are inconsistent"
        )
    photon_energy = h * c / trace.probe_wavelength_m
    return e_abs / (photons_per_atom * photon_energy)


def mode_overlap_column_factor(cloud_width_1e_full_m: float, probe_waist_m: float) -> float:
    """Mode-averaged column density per atom (m^-2) for a transversely
    Gaussian atom column probed by a Gaussian mode:

        O = int I(r) p(r) dA / int I(r) dA = 2 / (pi * (w_p^2 + 2 a^2))

    with I ~ exp(-2 r^2 / w_p^2) (w_p the 1/e^2 intensity radius) and the
    column profile p ~ exp(-r^2 / a^2), a the 1/e half width, i.e. half of
    cloud_width_1e_full_m. The longitudinal distribution is uniform, so the
    factor is independent of the column length."""
    if cloud_width_1e_full_m <= 0 or probe_waist_m <= 0:
        raise DomainError("widths must be positive")
    a = 0.5 * cloud_width_1e_full_m
    return 2.0 / (math.pi * (probe_waist_m**2 + 2.0 * a**2))


def column_od_estimate(
    n_atoms: float,
    cloud_width_1e_full_m: float,
    probe_waist_m: float,
    sigma_m2: float,
    fiber_length_m: float,
) -> float:
    """OD = sigma * N * O with O the mode-overlap column factor; the atoms are
    spread uniformly along fiber_length_m, which therefore cancels."""
    if n_atoms < 0:
        raise DomainError("atom number must be >= 0")
    if sigma_m2 < 0:
        raise DomainError("cross section must be >= 0")
    if fiber_length_m <= 0:
        raise DomainError("fiber length must be positive")
    overlap = mode_overlap_column_factor(cloud_width_1e_full_m, probe_waist_m)
    return sigma_m2 * n_atoms * overlap


def incident_photons_per_gate(
    power_w: float, gate_time_s: float, wavelength_m: float
) -> float:
    """Photon budget: P * tau / (h c / lambda)."""
    if power_w < 0 or gate_time_s < 0 or wavelength_m <= 0:
        raise DomainError("power and gate time must be >= 0, wavelength > 0")
    return power_w * gate_time_s * wavelength_m / (h * c)


def simulate_probe_counts(
    model: SpectrumModel,
    sequence: ProbeSequenceConfig,
    detunings,
    detector_efficiency: float,
    seed: int,
    probe_wavelength_m: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Expected and Poisson-sampled photon counts per detuning, summed over
    all gates. Sampling is deterministic in the seed."""
    if not 0.0 < detector_efficiency <= 1.0:
        raise DomainError(
            f"detector efficiency must lie in (0, 1], got {detector_efficiency}"
        )
    incident = incident_photons_per_gate(
        sequence.probe_power_w, sequence.gate_time_s, probe_wavelength_m
    )
    t = transmission_spectrum(model, detunings)
    expected = incident * t * detector_efficiency * sequence.n_gates
    rng = np.random.default_rng(seed)
    sampled = rng.poisson(expected)
    return expected, sampled
