"""Atomic reference data: hyperfine structure, line strengths, cross sections.

The species data ship as a versioned TOML file (see ``data/rb87_d2.toml``);
everything numeric in this module traces back to that file so the physics
constants stay auditable and swappable.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import SchemaError, SpeciesLookupError, ValidationError

# Polarization/Zeeman average for isotropic light on equally populated
# ground sublevels; convention documented in the data file header.
UNPOLARIZED_FACTOR = 2.0 / 3.0

STRENGTH_SUM_TOL = 1e-9

DATA_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class HyperfineLevel:
    """One hyperfine level, offset relative to its manifold centroid."""

    f: int
    frequency_offset_hz: float

    def __post_init__(self):
        if self.f < 0:
            raise ValidationError(f"F must be non-negative, got {self.f}")

    @property
    def degeneracy(self) -> int:
        return 2 * self.f + 1


@dataclass(frozen=True)
class TransitionStrength:
    ground_f: int
    excited_f: int
    relative_strength: float

    def __post_init__(self):
        if abs(self.ground_f - self.excited_f) > 1 and self.relative_strength != 0.0:
            raise ValidationError(
                f"transition F={self.ground_f} -> F'={self.excited_f} is forbidden "
                f"but has strength {self.relative_strength}"
            )
        if not 0.0 <= self.relative_strength <= 1.0:
            raise ValidationError(
                f"relative_strength must lie in [0, 1], got {self.relative_strength}"
            )


@dataclass(frozen=True)
class AtomSpecies:
    """Immutable atomic reference data; safe to share across workers."""

    name: str
    mass_kg: float
    d2_wavelength_m: float
    gamma_fwhm_hz: float
    ground_levels: tuple[HyperfineLevel, ...]
    excited_levels: tuple[HyperfineLevel, ...]
    strengths: tuple[TransitionStrength, ...]
    schema_version: int = DATA_SCHEMA_VERSION
    _strength_map: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mass_kg <= 0:
            raise ValidationError(f"mass must be positive, got {self.mass_kg}")
        if self.gamma_fwhm_hz <= 0:
            raise ValidationError(
                f"natural linewidth must be positive, got {self.gamma_fwhm_hz}"
            )
        if self.d2_wavelength_m <= 0:
            raise ValidationError(
                f"wavelength must be positive, got {self.d2_wavelength_m}"
            )
        for manifold, levels in (
            ("ground", self.ground_levels),
            ("excited", self.excited_levels),
        ):
            offsets = [lv.frequency_offset_hz for lv in levels]
            if sorted(offsets) != offsets or len(set(offsets)) != len(offsets):
                raise ValidationError(
                    f"{manifold} level offsets must be strictly increasing"
                )
        smap = {(s.ground_f, s.excited_f): s.relative_strength for s in self.strengths}
        object.__setattr__(self, "_strength_map", smap)
        ground_fs = {lv.f for lv in self.ground_levels}
        excited_fs = {lv.f for lv in self.excited_levels}
        for gf in ground_fs:
            allowed = [ef for ef in excited_fs if abs(gf - ef) <= 1]
            missing = [ef for ef in allowed if (gf, ef) not in smap]
            if missing:
                raise ValidationError(
                    f"missing strength entries for F={gf} -> F'={missing}"
                )
            total = sum(smap[(gf, ef)] for ef in allowed)
            if abs(total - 1.0) > STRENGTH_SUM_TOL:
                raise ValidationError(
                    f"strengths from F={gf} sum to {total!r}, expected 1"
                )

    def ground_level(self, f: int) -> HyperfineLevel:
        for lv in self.ground_levels:
            if lv.f == f:
                return lv
        raise SpeciesLookupError(f"no ground level F={f} in {self.name}")

    def excited_level(self, f: int) -> HyperfineLevel:
        for lv in self.excited_levels:
            if lv.f == f:
                return lv
        raise SpeciesLookupError(f"no excited level F'={f} in {self.name}")

    def strength(self, ground_f: int, excited_f: int) -> float:
        """S(F,F'); 0 for forbidden |F-F'| > 1 pairs."""
        self.ground_level(ground_f)
        self.excited_level(excited_f)
        return self._strength_map.get((ground_f, excited_f), 0.0)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "mass_kg": self.mass_kg,
            "d2_wavelength_m": self.d2_wavelength_m,
            "gamma_fwhm_hz": self.gamma_fwhm_hz,
            "levels": [
                {
                    "manifold": manifold,
                    "f": lv.f,
                    "frequency_offset_hz": lv.frequency_offset_hz,
                }
                for manifold, levels in (
                    ("ground", self.ground_levels),
                    ("excited", self.excited_levels),
                )
                for lv in levels
            ],
            "strengths": [
                {
                    "ground_f": s.ground_f,
                    "excited_f": s.excited_f,
                    "relative_strength": s.relative_strength,
                }
                for s in self.strengths
            ],
        }


def _require(doc: dict, key: str, types, context: str):
    if key not in doc:
        raise SchemaError(f"{context}: missing required field '{key}'")
    value = doc[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise SchemaError(
            f"{context}: field '{key}' has type {type(value).__name__}"
        )
    return value


def species_from_dict(doc: dict) -> AtomSpecies:
    """Build a validated AtomSpecies from a parsed species document."""
    ctx = "species data"
    version = _require(doc, "schema_version", int, ctx)
    if version != DATA_SCHEMA_VERSION:
        raise SchemaError(f"{ctx}: unsupported schema_version {version}")
    name = _require(doc, "name", str, ctx)
    mass = _require(doc, "mass_kg", (int, float), ctx)
    wavelength = _require(doc, "d2_wavelength_m", (int, float), ctx)
    gamma = _require(doc, "gamma_fwhm_hz", (int, float), ctx)
    levels = _require(doc, "levels", list, ctx)
    strengths = _require(doc, "strengths", list, ctx)

    ground, excited = [], []
    for entry in levels:
        manifold = _require(entry, "manifold", str, "level entry")
        f = _require(entry, "f", int, "level entry")
        offset = _require(entry, "frequency_offset_hz", (int, float), "level entry")
        level = HyperfineLevel(f=f, frequency_offset_hz=float(offset))
        if manifold == "ground":
            ground.append(level)
        elif manifold == "excited":
            excited.append(level)
        else:
            raise SchemaError(f"level entry: unknown manifold '{manifold}'")

    parsed = tuple(
        TransitionStrength(
            ground_f=_require(s, "ground_f", int, "strength entry"),
            excited_f=_require(s, "excited_f", int, "strength entry"),
            relative_strength=float(
                _require(s, "relative_strength", (int, float), "strength entry")
            ),
        )
        for s in strengths
    )
    return AtomSpecies(
        name=name,
        mass_kg=float(mass),
        d2_wavelength_m=float(wavelength),
        gamma_fwhm_hz=float(gamma),
        ground_levels=tuple(sorted(ground, key=lambda lv: lv.frequency_offset_hz)),
        excited_levels=tuple(sorted(excited, key=lambda lv: lv.frequency_offset_hz)),
        strengths=parsed,
        schema_version=version,
    )


def load_species_data(path) -> AtomSpecies:
    """Load and validate a species reference data file (TOML)."""
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise SchemaError(f"{path}: not valid TOML: {exc}") from exc
    return species_from_dict(doc)


def default_species_path() -> Path:
    """Path of the packaged 87Rb D2 reference data."""
    return Path(resources.files(__package__) / "data" / "rb87_d2.toml")


def load_default_species() -> AtomSpecies:
    return load_species_data(default_species_path())


def line_detuning(
    species: AtomSpecies, ground_f: int, excited_f: int, reference_excited_f: int
) -> float:
    """Signed offset (Hz) of the F->F' line relative to the F->F'_ref line."""
    species.ground_level(ground_f)
    target = species.excited_level(excited_f)
    reference = species.excited_level(reference_excited_f)
    return target.frequency_offset_hz - reference.frequency_offset_hz


def resonant_cross_section(
    species: AtomSpecies,
    ground_f: int,
    excited_f: int,
    polarization_model: str = "unpolarized",
) -> float:
    """Resonant absorption cross section (m^2) on the F->F' hyperfine line.

    sigma = (3*lambda^2 / 2*pi) * S(F,F') * f_pol with f_pol = 2/3 for the
    unpolarized model (isotropic light, equally populated Zeeman levels).
    Forbidden transitions return 0.
    """
    if polarization_model != "unpolarized":
        raise ValueError(f"unknown polarization model '{polarization_model}'")
    strength = species.strength(ground_f, excited_f)
    bare = 3.0 * species.d2_wavelength_m**2 / (2.0 * math.pi)
    return bare * strength * UNPOLARIZED_FACTOR
