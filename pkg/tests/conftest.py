import pytest
from scipy.constants import k as K_B

from fibertrap.atoms import load_default_species
from fibertrap.loading import MotCloud
from fibertrap.spectra import ProbeSequenceConfig
from fibertrap.trap import BeamGeometry, TrapConfig


@pytest.fixture(scope="session")
def rb87():
    return load_default_species()


@pytest.fixture(scope="session")
def fiber_geometry():
    return BeamGeometry(
        waist_m=2.75e-6,
        numerical_aperture=0.1,
        tip_z_m=0.0,
        fiber_length_m=0.14,
        core_radius_m=2.75e-6,
    )


@pytest.fixture(scope="session")
def fort_trap(fiber_geometry):
    return TrapConfig(geometry=fiber_geometry, trap_depth_j=K_B * 5e-3)


@pytest.fixture(scope="session")
def compressed_cloud():
    """Compressed cloud held just above the tip (end of the two-stage
    loading sequence)."""
    return MotCloud(
        center_m=(0.0, 0.0, 1.5e-4),
        half_widths_1e_m=(5e-5, 5e-5, 1.5e-4),
        temperature_k=120e-6,
    )


@pytest.fixture(scope="session")
def probe_sequence():
    return ProbeSequenceConfig(
        modulation_frequency_hz=250e3,
        off_window_s=800e-9,
        gate_time_s=680e-9,
        n_gates=50,
        probe_power_w=20e-12,
    )
