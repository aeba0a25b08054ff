"""fibertrap: Monte-Carlo loading and extreme-OD spectroscopy for atoms in a
hollow-core fiber dipole trap.

Submodules
----------
atoms      hyperfine reference data, line detunings, cross sections
trap       FORT beam geometry and the dipole + gravity potential
loading    Monte-Carlo loading engine and recapture simulation
spectra    transmission forward models and photon-count simulation
fitting    nonlinear OD extraction from spectra
config/io  run configuration, trace ingestion, result envelopes
cli        the `fibertrap` command-line tool

The trajectory hot loop runs on a compiled extension when built, with a pure
numpy fallback selected at import (see fibertrap.backend).
"""

__version__ = "0.1.0"

from .atoms import (  # noqa: F401
    AtomSpecies,
    HyperfineLevel,
    TransitionStrength,
    line_detuning,
    load_default_species,
    load_species_data,
    resonant_cross_section,
)
from .backend import available_backends, get_backend  # noqa: F401
from .loading import (  # noqa: F401
    Ensemble,
    Fate,
    LoadingResult,
    MotCloud,
    StepPolicy,
    TerminationRules,
    TrajectoryOutcome,
    integrate_trajectory,
    run_loading_simulation,
    sample_mot_cloud,
    simulate_recapture,
)
from .spectra import (  # noqa: F401
    ProbeSequenceConfig,
    SpectralLine,
    SpectrumModel,
    TransmissionTrace,
    atom_number_from_absorption,
    column_od_estimate,
    effective_od,
    incident_photons_per_gate,
    optical_depth,
    simulate_probe_counts,
    spectrum_from_species,
    transmission,
    transmission_spectrum,
)
from .trap import (  # noqa: F401
    BeamGeometry,
    TrapConfig,
    beam_waist_at,
    capture_range,
    dipole_potential,
    total_potential,
    transverse_trap_frequency,
)
from .fitting import (  # noqa: F401
    FitOptions,
    FitProblem,
    FitResult,
    estimate_uncertainties,
    fit_spectrum,
    profile_objective,
)
