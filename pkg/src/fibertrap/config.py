"""Run configuration: TOML/JSON parsing with strict key checking, explicit
SI unit suffixes, and a fully resolved echo for reproducible re-runs."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from scipy.constants import g as STANDARD_GRAVITY
from scipy.constants import k as K_B

from .atoms import AtomSpecies, default_species_path, load_species_data
from .errors import SchemaError, UnitError, UnknownKeyError, ValidationError
from .loading import MotCloud, StepPolicy, TerminationRules
from .spectra import ProbeSequenceConfig
from .trap import BeamGeometry, TrapConfig

SPECIES_ENV_VAR = "FIBERTRAP_SPECIES"

# 270 mW in the fiber gives the 5 mK full depth
DEFAULT_DEPTH_K_PER_W = 5.0e-3 / 0.270


@dataclass(frozen=True)
class LoadingTimeline:
    """Experiment-sequence metadata; only hold_s feeds the simulation (it
    sets the default trajectory time budget)."""

    mot_load_s: float = 0.99
    compress_s: float = 0.03
    hold_s: float = 0.02

    def __post_init__(self):
        for name in ("mot_load_s", "compress_s", "hold_s"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")


@dataclass(frozen=True)
class SimulationSettings:
    n_atoms: int = 10000
    seed: int = 20130801
    workers: int = 1
    step_policy: StepPolicy = StepPolicy()
    termination: TerminationRules = TerminationRules()


@dataclass(frozen=True)
class SpectrumSettings:
    ground_f: int = 1
    reference_excited_f: int = 1
    od: dict = None
    detuning_min_hz: float = -600e6
    detuning_max_hz: float = 600e6
    detuning_step_hz: float = 4e6
    linewidth_fwhm_hz: float | None = None  # species natural width if None
    frequency_offset_hz: float = 0.0

    def __post_init__(self):
        if self.od is None:
            object.__setattr__(self, "od", {0: 300.0, 1: 1000.0, 2: 1000.0})
        if self.detuning_step_hz <= 0:
            raise ValidationError("detuning_step_hz must be positive")
        if self.detuning_max_hz <= self.detuning_min_hz:
            raise ValidationError("detuning_max_hz must exceed detuning_min_hz")

    def detuning_grid(self):
        import numpy as np

        count = int(
            round((self.detuning_max_hz - self.detuning_min_hz) / self.detuning_step_hz)
        )
        return self.detuning_min_hz + self.detuning_step_hz * np.arange(count + 1)


@dataclass(frozen=True)
class ProbeDetectionSettings:
    detector_efficiency: float = 1.0
    counts_seed: int = 1


@dataclass(frozen=True)
class FitSettings:
    free: tuple[str, ...] = ("od_f0", "od_f1", "od_f2")
    method: str = "lm"
    max_iterations: int = 200
    chi2_rescale: bool = True


@dataclass(frozen=True)
class OutputSettings:
    out_json: str | None = None
    plot_csv: str | None = None
    trajectories_csv: str | None = None


@dataclass(frozen=True, eq=False)
class RunConfig:
    species_path: str
    species: AtomSpecies
    trap: TrapConfig
    cloud: MotCloud
    sequence: ProbeSequenceConfig
    timeline: LoadingTimeline
    simulation: SimulationSettings
    spectrum: SpectrumSettings
    probe: ProbeDetectionSettings
    fit: FitSettings
    capture_range_threshold_k: float
    output: OutputSettings
    echo: dict


_SECTION_KEYS = {
    "species": {"path"},
    "trap": {
        "waist_m",
        "numerical_aperture",
        "tip_z_m",
        "fiber_length_m",
        "core_radius_m",
        "trap_depth_K",
        "fort_power_w",
        "depth_K_per_w",
        "divergence_model",
        "fort_wavelength_m",
        "gravity_m_s2",
    },
    "cloud": {"center_m", "half_widths_1e_m", "temperature_K", "atom_count"},
    "sequence": {
        "modulation_frequency_hz",
        "off_window_s",
        "gate_time_s",
        "n_gates",
        "probe_power_w",
        "mot_load_s",
        "compress_s",
        "hold_s",
    },
    "simulation": {
        "n_atoms",
        "seed",
        "workers",
        "dt_max_s",
        "steps_per_period",
        "capture_depth_m",
        "max_time_s",
        "escape_radius_m",
        "escape_top_m",
    },
    "spectrum": {
        "ground_f",
        "reference_excited_f",
        "od",
        "detuning_min_hz",
        "detuning_max_hz",
        "detuning_step_hz",
        "linewidth_fwhm_hz",
        "frequency_offset_hz",
    },
    "probe": {"detector_efficiency", "counts_seed"},
    "fit": {"free", "method", "max_iterations", "chi2_rescale"},
    "capture_range": {"threshold_K"},
    "output": {"out_json", "plot_csv", "trajectories_csv"},
}


def _reject_unknown(section: str, doc: dict, allowed: set[str]):
    for key in doc:
        if key in allowed:
            continue
        stem = key.rsplit("_", 1)[0]
        for known in allowed:
            if known.rsplit("_", 1)[0] == stem and known != key:
                raise UnitError(
                    f"[{section}] key '{key}': expected unit-suffixed key '{known}'"
                )
        raise UnknownKeyError(f"[{section}] unknown key '{key}'")


def _num(section: str, doc: dict, key: str, default):
    value = doc.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"[{section}] key '{key}' must be a number")
    return float(value)


def _integer(section: str, doc: dict, key: str, default):
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"[{section}] key '{key}' must be an integer")
    return value


def _vector3(section: str, doc: dict, key: str, default):
    value = doc.get(key, default)
    if isinstance(value, tuple):
        value = list(value)
    if not isinstance(value, list) or len(value) != 3:
        raise SchemaError(f"[{section}] key '{key}' must be a 3-element array")
    return tuple(float(v) for v in value)


def _load_document(source) -> dict:
    if isinstance(source, dict):
        return source
    path = Path(source)
    if not path.exists():
        raise SchemaError(f"config file not found: {path}")
    if path.suffix == ".json":
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise SchemaError(f"{path}: not valid TOML: {exc}") from exc


def _resolve_species_path(section: dict) -> str:
    path = section.get("path")
    if path is None:
        path = os.environ.get(SPECIES_ENV_VAR)
    if path is None:
        path = str(default_species_path())
    if not Path(path).exists():
        raise SchemaError(f"species data file not found: {path}")
    return path


def _parse_trap(doc: dict) -> TrapConfig:
    geometry = BeamGeometry(
        waist_m=_num("trap", doc, "waist_m", 2.75e-6),
        numerical_aperture=_num("trap", doc, "numerical_aperture", 0.1),
        tip_z_m=_num("trap", doc, "tip_z_m", 0.0),
        fiber_length_m=_num("trap", doc, "fiber_length_m", 0.14),
        core_radius_m=_num("trap", doc, "core_radius_m", 2.75e-6),
        divergence_model=doc.get("divergence_model", "na_pinned"),
        wavelength_m=_num("trap", doc, "fort_wavelength_m", 855e-9),
    )
    depth_k = _num("trap", doc, "trap_depth_K", None)
    power = _num("trap", doc, "fort_power_w", None)
    if depth_k is not None and power is not None:
        raise ValidationError(
            "[trap] give either trap_depth_K or fort_power_w, not both"
        )
    if depth_k is None:
        scale = _num("trap", doc, "depth_K_per_w", DEFAULT_DEPTH_K_PER_W)
        depth_k = 5.0e-3 if power is None else power * scale
    return TrapConfig(
        geometry=geometry,
        trap_depth_j=K_B * depth_k,
        gravity_m_s2=_num("trap", doc, "gravity_m_s2", STANDARD_GRAVITY),
    )


def _parse_od_table(section: dict) -> dict[int, float]:
    table = section.get("od", {"f0": 300.0, "f1": 1000.0, "f2": 1000.0})
    if not isinstance(table, dict):
        raise SchemaError("[spectrum] 'od' must be a table like {f0 = 300.0}")
    ods = {}
    for key, value in table.items():
        if not key.startswith("f") or not key[1:].isdigit():
            raise SchemaError(f"[spectrum] od key '{key}' must look like 'f1'")
        ods[int(key[1:])] = float(value)
    return ods


def parse_config(source) -> RunConfig:
    """Parse and validate a config document (TOML path, JSON path, or dict);
    all defaults are resolved and recorded in the echo."""
    doc = _load_document(source)
    unknown_sections = set(doc) - set(_SECTION_KEYS)
    if unknown_sections:
        raise UnknownKeyError(f"unknown config section '{sorted(unknown_sections)[0]}'")
    for section, allowed in _SECTION_KEYS.items():
        body = doc.get(section, {})
        if not isinstance(body, dict):
            raise SchemaError(f"config section [{section}] must be a table")
        _reject_unknown(section, body, allowed)

    species_path = _resolve_species_path(doc.get("species", {}))
    species = load_species_data(species_path)

    trap = _parse_trap(doc.get("trap", {}))

    cl = doc.get("cloud", {})
    cloud = MotCloud(
        center_m=_vector3("cloud", cl, "center_m", [0.0, 0.0, 1.5e-4]),
        half_widths_1e_m=_vector3(
            "cloud", cl, "half_widths_1e_m", [5.0e-5, 5.0e-5, 1.5e-4]
        ),
        temperature_k=_num("cloud", cl, "temperature_K", 120e-6),
        atom_count=_integer("cloud", cl, "atom_count", 10**7),
    )

    sq = doc.get("sequence", {})
    timeline = LoadingTimeline(
        mot_load_s=_num("sequence", sq, "mot_load_s", 0.99),
        compress_s=_num("sequence", sq, "compress_s", 0.03),
        hold_s=_num("sequence", sq, "hold_s", 0.02),
    )
    sequence = ProbeSequenceConfig(
        modulation_frequency_hz=_num("sequence", sq, "modulation_frequency_hz", 250e3),
        off_window_s=_num("sequence", sq, "off_window_s", 800e-9),
        gate_time_s=_num("sequence", sq, "gate_time_s", 680e-9),
        n_gates=_integer("sequence", sq, "n_gates", 50),
        probe_power_w=_num("sequence", sq, "probe_power_w", 20e-12),
    )

    sm = doc.get("simulation", {})
    max_time = _num("simulation", sm, "max_time_s", None)
    if max_time is None:
        # fall + transit margin on top of the configured hold duration
        max_time = timeline.hold_s + 0.01
    simulation = SimulationSettings(
        n_atoms=_integer("simulation", sm, "n_atoms", 10000),
        seed=_integer("simulation", sm, "seed", 20130801),
        workers=_integer("simulation", sm, "workers", 1),
        step_policy=StepPolicy(
            dt_max_s=_num("simulation", sm, "dt_max_s", 1e-6),
            steps_per_period=_num("simulation", sm, "steps_per_period", 200.0),
        ),
        termination=TerminationRules(
            capture_depth_m=_num("simulation", sm, "capture_depth_m", 1e-3),
            max_time_s=max_time,
            escape_radius_m=_num("simulation", sm, "escape_radius_m", 5e-3),
            escape_top_m=_num("simulation", sm, "escape_top_m", None),
        ),
    )

    sp = doc.get("spectrum", {})
    spectrum = SpectrumSettings(
        ground_f=_integer("spectrum", sp, "ground_f", 1),
        reference_excited_f=_integer("spectrum", sp, "reference_excited_f", 1),
        od=_parse_od_table(sp),
        detuning_min_hz=_num("spectrum", sp, "detuning_min_hz", -600e6),
        detuning_max_hz=_num("spectrum", sp, "detuning_max_hz", 600e6),
        detuning_step_hz=_num("spectrum", sp, "detuning_step_hz", 4e6),
        linewidth_fwhm_hz=_num("spectrum", sp, "linewidth_fwhm_hz", None),
        frequency_offset_hz=_num("spectrum", sp, "frequency_offset_hz", 0.0),
    )

    pr = doc.get("probe", {})
    probe = ProbeDetectionSettings(
        detector_efficiency=_num("probe", pr, "detector_efficiency", 1.0),
        counts_seed=_integer("probe", pr, "counts_seed", 1),
    )

    ft = doc.get("fit", {})
    free = ft.get("free", ["od_f0", "od_f1", "od_f2"])
    if not isinstance(free, (list, tuple)) or not all(
        isinstance(f, str) for f in free
    ):
        raise SchemaError("[fit] 'free' must be a list of parameter names")
    fit = FitSettings(
        free=tuple(free),
        method=ft.get("method", "lm"),
        max_iterations=_integer("fit", ft, "max_iterations", 200),
        chi2_rescale=bool(ft.get("chi2_rescale", True)),
    )

    cr = doc.get("capture_range", {})
    threshold_k = _num("capture_range", cr, "threshold_K", 120e-6)

    out = doc.get("output", {})
    output = OutputSettings(
        out_json=out.get("out_json"),
        plot_csv=out.get("plot_csv"),
        trajectories_csv=out.get("trajectories_csv"),
    )

    echo = {
        "species": {"path": species_path},
        "trap": {
            "waist_m": trap.geometry.waist_m,
            "numerical_aperture": trap.geometry.numerical_aperture,
            "tip_z_m": trap.geometry.tip_z_m,
            "fiber_length_m": trap.geometry.fiber_length_m,
            "core_radius_m": trap.geometry.core_radius_m,
            "trap_depth_K": trap.trap_depth_j / K_B,
            "divergence_model": trap.geometry.divergence_model,
            "fort_wavelength_m": trap.geometry.wavelength_m,
            "gravity_m_s2": trap.gravity_m_s2,
        },
        "cloud": {
            "center_m": list(cloud.center_m),
            "half_widths_1e_m": list(cloud.half_widths_1e_m),
            "temperature_K": cloud.temperature_k,
            "atom_count": cloud.atom_count,
        },
        "sequence": {
            "modulation_frequency_hz": sequence.modulation_frequency_hz,
            "off_window_s": sequence.off_window_s,
            "gate_time_s": sequence.gate_time_s,
            "n_gates": sequence.n_gates,
            "probe_power_w": sequence.probe_power_w,
            "mot_load_s": timeline.mot_load_s,
            "compress_s": timeline.compress_s,
            "hold_s": timeline.hold_s,
        },
        "simulation": {
            "n_atoms": simulation.n_atoms,
            "seed": simulation.seed,
            "workers": simulation.workers,
            "dt_max_s": simulation.step_policy.dt_max_s,
            "steps_per_period": simulation.step_policy.steps_per_period,
            "capture_depth_m": simulation.termination.capture_depth_m,
            "max_time_s": simulation.termination.max_time_s,
            "escape_radius_m": simulation.termination.escape_radius_m,
            **(
                {"escape_top_m": simulation.termination.escape_top_m}
                if simulation.termination.escape_top_m is not None
                else {}
            ),
        },
        "spectrum": {
            "ground_f": spectrum.ground_f,
            "reference_excited_f": spectrum.reference_excited_f,
            "od": {f"f{f}": od for f, od in sorted(spectrum.od.items())},
            "detuning_min_hz": spectrum.detuning_min_hz,
            "detuning_max_hz": spectrum.detuning_max_hz,
            "detuning_step_hz": spectrum.detuning_step_hz,
            **(
                {"linewidth_fwhm_hz": spectrum.linewidth_fwhm_hz}
                if spectrum.linewidth_fwhm_hz is not None
                else {}
            ),
            "frequency_offset_hz": spectrum.frequency_offset_hz,
        },
        "probe": {
            "detector_efficiency": probe.detector_efficiency,
            "counts_seed": probe.counts_seed,
        },
        "fit": {
            "free": list(fit.free),
            "method": fit.method,
            "max_iterations": fit.max_iterations,
            "chi2_rescale": fit.chi2_rescale,
        },
        "capture_range": {"threshold_K": threshold_k},
        "output": {
            k: v
            for k, v in (
                ("out_json", output.out_json),
                ("plot_csv", output.plot_csv),
                ("trajectories_csv", output.trajectories_csv),
            )
            if v is not None
        },
    }

    return RunConfig(
        species_path=species_path,
        species=species,
        trap=trap,
        cloud=cloud,
        sequence=sequence,
        timeline=timeline,
        simulation=simulation,
        spectrum=spectrum,
        probe=probe,
        fit=fit,
        capture_range_threshold_k=threshold_k,
        output=output,
        echo=echo,
    )
