import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import c, h
from scipy.integrate import quad

from fibertrap.atoms import resonant_cross_section
from fibertrap.errors import (
    DomainError,
    InconsistentTracesError,
    SaturatedMeasurementError,
    ValidationError,
)
from fibertrap.spectra import (
    ProbeSequenceConfig,
    SpectralLine,
    SpectrumModel,
    TransmissionTrace,
    atom_number_from_absorption,
    column_od_estimate,
    effective_od,
    half_transmission_detuning,
    incident_photons_per_gate,
    mode_overlap_column_factor,
    od_profile,
    optical_depth,
    saturated_mask,
    simulate_probe_counts,
    spectrum_from_species,
    transmission,
    transmission_spectrum,
)

GAMMA = 6.0666e6


def single_line(od, center=0.0, linewidth=GAMMA):
    return SpectrumModel(
        lines=(SpectralLine(excited_f=1, od=od, center_detuning_hz=center),),
        linewidth_fwhm_hz=linewidth,
    )


def test_od_transparent():
    assert optical_depth(1.0, 1.0) == 0.0


def test_od_definition():
    assert optical_depth(1.0, math.exp(-1.0)) == pytest.approx(1.0, rel=1e-15)


def test_od_round_trip_range():
    ods = np.linspace(0.0, 700.0, 1500)
    rt = np.array([optical_depth(1.0, transmission(od)) for od in ods])
    assert np.allclose(rt, ods, rtol=1e-12, atol=1e-12)


@given(st.floats(min_value=0.0, max_value=700.0, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_od_round_trip_property(od):
    assert optical_depth(1.0, transmission(od)) == pytest.approx(
        od, rel=1e-12, abs=1e-12
    )


def test_od_additivity():
    t1, t2 = transmission(3.2), transmission(1.7)
    assert optical_depth(1.0, t1 * t2) == pytest.approx(3.2 + 1.7, rel=1e-12)


def test_saturated_measurement():
    with pytest.raises(SaturatedMeasurementError):
        optical_depth(1.0, 0.0)
    assert transmission(1000.0) == 0.0  # underflow far below any float


def test_od_domain():
    with pytest.raises(DomainError):
        optical_depth(0.0, 1.0)
    with pytest.raises(DomainError):
        optical_depth(1.0, -1.0)


def test_effective_od_homogeneous_limit():
    assert effective_od(123.0, 6e6, 6e6) == 123.0


def test_effective_od_published_endpoint():
    assert effective_od(1e4, 0.12 * 6e6, 6e6) == pytest.approx(1200.0)


def test_effective_od_empty_medium():
    assert effective_od(0.0, 6e6, 60e6) == 0.0


def test_effective_od_domain_error():
    with pytest.raises(DomainError):
        effective_od(1.0, 6e6, 1e6)


def test_spectrum_empty_medium():
    model = single_line(0.0)
    t = transmission_spectrum(model, np.linspace(-1e8, 1e8, 11))
    assert np.all(t == 1.0)


def test_spectrum_single_line_center():
    t = transmission_spectrum(single_line(1.0), [0.0])
    assert t[0] == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_half_transmission_point():
    od = 1000.0
    d_half = half_transmission_detuning(od, GAMMA)
    # the od=1000 window's half-transmission point sits ~19 linewidths out
    assert d_half == pytest.approx(0.5 * GAMMA * math.sqrt(od / math.log(2) - 1))
    assert d_half / GAMMA == pytest.approx(19.0, rel=0.01)
    t = transmission_spectrum(single_line(od), [d_half])
    assert t[0] == pytest.approx(0.5, rel=1e-9)


def test_spectrum_od_monotonicity():
    det = np.linspace(-3e8, 3e8, 301)
    lo = od_profile(single_line(10.0), det)
    hi = od_profile(single_line(11.0), det)
    assert np.all(hi > lo)
    assert np.all(
        transmission_spectrum(single_line(11.0), det)
        <= transmission_spectrum(single_line(10.0), det)
    )


def test_spectrum_series_media_multiply():
    det = np.linspace(-2e8, 2e8, 101)
    m1 = single_line(3.0, center=-5e7)
    m2 = single_line(2.0, center=8e7)
    both = SpectrumModel(
        lines=m1.lines + m2.lines, linewidth_fwhm_hz=GAMMA
    )
    assert np.allclose(
        transmission_spectrum(both, det),
        transmission_spectrum(m1, det) * transmission_spectrum(m2, det),
        rtol=1e-12,
    )


def test_saturation_flagging():
    model = single_line(1000.0)
    det = np.array([0.0, 1e9])
    t = transmission_spectrum(model, det)
    sat = saturated_mask(model, det)
    assert t[0] == 0.0 and sat[0]
    assert t[1] > 0.0 and not sat[1]


def test_spectrum_rejects_nonfinite_detuning():
    with pytest.raises(DomainError):
        transmission_spectrum(single_line(1.0), [np.nan])


def test_negative_od_rejected():
    with pytest.raises(ValidationError):
        single_line(-1.0)


def test_spectrum_from_species_centers(rb87):
    model = spectrum_from_species(rb87, 1, {0: 300.0, 1: 1000.0, 2: 1000.0})
    centers = {line.excited_f: line.center_detuning_hz for line in model.lines}
    assert centers[1] == 0.0
    assert centers[0] == pytest.approx(-72.222e6, rel=1e-4)
    assert centers[2] == pytest.approx(156.9405e6, rel=1e-4)
    assert model.linewidth_fwhm_hz == rb87.gamma_fwhm_hz


def _flat_trace(e_abs, wavelength=780.241209686e-9, n_points=101, duration=100e-6):
    t = np.linspace(0.0, duration, n_points)
    p_ref = np.full(n_points, 5e-9)
    # constant difference integrates exactly under the trapezoid rule
    diff = e_abs / duration
    return TransmissionTrace(
        time_s=t,
        power_ref_w=p_ref,
        power_atoms_w=p_ref - diff,
        probe_wavelength_m=wavelength,
    )


def test_atom_number_zero():
    trace = _flat_trace(0.0)
    assert atom_number_from_absorption(trace) == 0.0


def test_atom_number_headline_value(rb87):
    n_true = 2.5e5
    lam = rb87.d2_wavelength_m
    e_abs = 2.0 * n_true * h * c / lam
    assert e_abs == pytest.approx(1.27e-13, rel=2e-3)
    trace = _flat_trace(e_abs, wavelength=lam)
    assert atom_number_from_absorption(trace) == pytest.approx(n_true, rel=1e-9)


def test_atom_number_photon_scaling(rb87):
    lam = rb87.d2_wavelength_m
    trace = _flat_trace(2.0 * 1e4 * h * c / lam, wavelength=lam)
    n2 = atom_number_from_absorption(trace, photons_per_atom=2.0)
    n4 = atom_number_from_absorption(trace, photons_per_atom=4.0)
    assert n4 == pytest.approx(n2 / 2.0, rel=1e-12)


def test_atom_number_linear_in_amplitude():
    t1 = _flat_trace(1e-14)
    t3 = _flat_trace(3e-14)
    assert atom_number_from_absorption(t3) == pytest.approx(
        3.0 * atom_number_from_absorption(t1), rel=1e-12
    )


def test_atom_number_negative_energy_rejected():
    trace = _flat_trace(-1e-15)
    with pytest.raises(InconsistentTracesError):
        atom_number_from_absorption(trace)
    # within the declared noise floor it is tolerated
    atom_number_from_absorption(trace, noise_floor_j=1e-14)


def test_trace_validation():
    t = np.array([0.0, 1e-6, 0.5e-6])
    with pytest.raises(ValidationError):
        TransmissionTrace(t, np.ones(3), np.ones(3), 780e-9)


def _overlap_quadrature(width_full, waist):
    a = width_full / 2.0
    num = quad(
        lambda r: math.exp(-2 * r * r / waist**2)
        * math.exp(-r * r / a**2)
        / (math.pi * a**2)
        * 2
        * math.pi
        * r,
        0.0,
        20e-6,
        limit=200,
        epsabs=0.0,
        epsrel=1e-12,
    )[0]
    den = quad(
        lambda r: math.exp(-2 * r * r / waist**2) * 2 * math.pi * r,
        0.0,
        20e-6,
        limit=200,
        epsabs=0.0,
        epsrel=1e-12,
    )[0]
    return num / den


def test_overlap_factor_against_quadrature():
    rng = np.random.default_rng(11)
    for _ in range(12):
        width = rng.uniform(0.5e-6, 4e-6)
        waist = rng.uniform(1e-6, 5e-6)
        assert mode_overlap_column_factor(width, waist) == pytest.approx(
            _overlap_quadrature(width, waist), rel=1e-9
        )


def test_column_od_zero_and_linear(rb87):
    sigma = resonant_cross_section(rb87, 1, 2)
    assert column_od_estimate(0.0, 1.4e-6, 2.75e-6, sigma, 0.14) == 0.0
    od1 = column_od_estimate(1e5, 1.4e-6, 2.75e-6, sigma, 0.14)
    od2 = column_od_estimate(2e5, 1.4e-6, 2.75e-6, sigma, 0.14)
    assert od2 == pytest.approx(2 * od1, rel=1e-12)


def test_column_od_headline_cross_check(rb87):
    sigma = resonant_cross_section(rb87, 1, 2)
    od = column_od_estimate(2.5e5, 1.4e-6, 2.75e-6, sigma, 0.14)
    assert 700.0 <= od <= 2800.0  # within a factor 2 of the reported ~1400


def test_column_od_ratios_equal_strength_ratios(rb87):
    ods = [
        column_od_estimate(
            1e5, 1.4e-6, 2.75e-6, resonant_cross_section(rb87, 1, f), 0.14
        )
        for f in (0, 1, 2)
    ]
    assert ods[0] / ods[2] == pytest.approx(
        rb87.strength(1, 0) / rb87.strength(1, 2), rel=1e-12
    )
    assert ods[1] / ods[2] == pytest.approx(1.0, rel=1e-12)


def test_photon_budget(probe_sequence, rb87):
    n = incident_photons_per_gate(
        probe_sequence.probe_power_w,
        probe_sequence.gate_time_s,
        rb87.d2_wavelength_m,
    )
    assert abs(n - 53.4) <= 0.1


def test_probe_counts_opaque(probe_sequence, rb87):
    model = single_line(1000.0)
    expected, sampled = simulate_probe_counts(
        model, probe_sequence, [0.0], 1.0, 3, rb87.d2_wavelength_m
    )
    assert expected[0] == 0.0
    assert sampled[0] == 0


def test_probe_counts_transparent(probe_sequence, rb87):
    model = single_line(0.0)
    expected, sampled = simulate_probe_counts(
        model, probe_sequence, [1e9], 1.0, 3, rb87.d2_wavelength_m
    )
    assert expected[0] == pytest.approx(53.418 * 50, rel=1e-3)
    sigma = math.sqrt(expected[0])
    assert abs(sampled[0] - expected[0]) < 5 * sigma


def test_probe_counts_poisson_mean(probe_sequence, rb87):
    model = single_line(1.0)  # T = 1/e at center
    det = np.zeros(100000)
    expected, sampled = simulate_probe_counts(
        model, probe_sequence, det, 0.5, 42, rb87.d2_wavelength_m
    )
    mu = expected[0]
    stderr = math.sqrt(mu / det.size)
    assert abs(sampled.mean() - mu) < 5 * stderr


def test_probe_counts_deterministic(probe_sequence, rb87):
    model = single_line(2.0)
    det = np.linspace(-1e8, 1e8, 50)
    _, s1 = simulate_probe_counts(model, probe_sequence, det, 0.8, 7, rb87.d2_wavelength_m)
    _, s2 = simulate_probe_counts(model, probe_sequence, det, 0.8, 7, rb87.d2_wavelength_m)
    assert np.array_equal(s1, s2)


def test_probe_counts_efficiency_domain(probe_sequence, rb87):
    with pytest.raises(DomainError):
        simulate_probe_counts(
            single_line(1.0), probe_sequence, [0.0], 0.0, 1, rb87.d2_wavelength_m
        )


def test_sequence_validation():
    with pytest.raises(ValidationError):
        ProbeSequenceConfig(250e3, 800e-9, 900e-9, 50, 20e-12)  # gate > off window
    with pytest.raises(ValidationError):
        ProbeSequenceConfig(250e3, 5e-6, 680e-9, 50, 20e-12)  # off > period
    with pytest.raises(ValidationError):
        ProbeSequenceConfig(250e3, 800e-9, 680e-9, 0, 20e-12)
