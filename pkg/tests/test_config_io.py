import json

import numpy as np
import pytest
from scipy.constants import k as K_B

from fibertrap.config import parse_config
from fibertrap.errors import (
    DataError,
    IngestionError,
    SchemaError,
    UnitError,
    UnknownKeyError,
    ValidationError,
)
from fibertrap.io import (
    CountSpectrum,
    emit_plot_data,
    ingest_trace,
    make_envelope,
    read_envelope,
)

REFERENCE_CONFIG = "configs/reference_run.toml"


# ------------------------------------------------------------------ config


def test_reference_config_parses_and_echoes():
    cfg = parse_config(REFERENCE_CONFIG)
    assert cfg.echo["trap"]["trap_depth_K"] == 5e-3
    assert cfg.trap.trap_depth_j == pytest.approx(K_B * 5e-3)
    assert cfg.sequence.n_gates == 50
    assert cfg.cloud.temperature_k == 1.2e-4


def test_diffraction_config_parses():
    cfg = parse_config("configs/diffraction_run.toml")
    assert cfg.trap.geometry.divergence_model == "diffraction"
    assert cfg.trap.trap_depth_j == pytest.approx(K_B * 5e-3, rel=1e-12)
    # z_R = pi w0^2 / lambda for the 855 nm trap light
    import math

    assert cfg.trap.geometry.effective_rayleigh_range_m == pytest.approx(
        math.pi * (2.75e-6) ** 2 / 8.55e-7
    )


def test_defaults_resolved_in_echo():
    cfg = parse_config({})
    # every section appears fully resolved even for an empty document
    for section in ("trap", "cloud", "sequence", "simulation", "spectrum"):
        assert section in cfg.echo and cfg.echo[section]
    assert cfg.echo["simulation"]["max_time_s"] == pytest.approx(0.03)


def test_negative_duration_rejected():
    with pytest.raises(ValidationError):
        parse_config({"sequence": {"hold_s": -1.0}})


def test_unknown_key_named():
    with pytest.raises(UnknownKeyError, match="colour"):
        parse_config({"trap": {"colour": "red"}})


def test_unknown_section_named():
    with pytest.raises(UnknownKeyError, match="trapp"):
        parse_config({"trapp": {}})


def test_unit_suffix_mismatch():
    with pytest.raises(UnitError, match="trap_depth_K"):
        parse_config({"trap": {"trap_depth_mK": 5.0}})


def test_depth_from_power():
    cfg = parse_config({"trap": {"fort_power_w": 0.270}})
    assert cfg.trap.trap_depth_j == pytest.approx(K_B * 5e-3, rel=1e-12)
    with pytest.raises(ValidationError):
        parse_config({"trap": {"fort_power_w": 0.1, "trap_depth_K": 1e-3}})


def test_missing_species_file():
    with pytest.raises(SchemaError, match="species"):
        parse_config({"species": {"path": "/nonexistent/species.toml"}})


def test_species_env_var(monkeypatch, tmp_path):
    from fibertrap.atoms import default_species_path

    copy = tmp_path / "species.toml"
    copy.write_bytes(default_species_path().read_bytes())
    monkeypatch.setenv("FIBERTRAP_SPECIES", str(copy))
    cfg = parse_config({})
    assert cfg.species_path == str(copy)


def test_config_round_trip_through_echo(tmp_path):
    cfg = parse_config(REFERENCE_CONFIG)
    echo_path = tmp_path / "echo.json"
    echo_path.write_text(json.dumps(cfg.echo))
    again = parse_config(str(echo_path))
    assert again.echo == cfg.echo


def test_spectrum_grid():
    cfg = parse_config(
        {
            "spectrum": {
                "detuning_min_hz": -1e7,
                "detuning_max_hz": 1e7,
                "detuning_step_hz": 1e7,
            }
        }
    )
    assert np.array_equal(cfg.spectrum.detuning_grid(), [-1e7, 0.0, 1e7])


def test_bad_od_table():
    with pytest.raises(SchemaError):
        parse_config({"spectrum": {"od": {"x": 1.0}}})


# --------------------------------------------------------------------- io


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_ingest_power_trace(tmp_path):
    path = _write(
        tmp_path / "trace.csv",
        "time_s,power_ref_W,power_atoms_W\n"
        "0.0,1e-9,0.4e-9\n"
        "1e-6,1e-9,0.5e-9\n"
        "2e-6,1e-9,0.6e-9\n",
    )
    trace = ingest_trace(path, "power_trace", probe_wavelength_m=780e-9)
    assert trace.time_s.size == 3
    assert trace.power_atoms_stderr_w is None
    assert trace.power_atoms_w[0] == 0.4e-9


def test_ingest_repeated_cycles_averaged(tmp_path):
    cols = ",".join(["power_atoms_W"] + [f"power_atoms_W_{k}" for k in range(2, 9)])
    rows = []
    values = [0.40, 0.42, 0.38, 0.41, 0.39, 0.40, 0.43, 0.37]
    rows.append("0.0,1.0," + ",".join(str(v) for v in values))
    rows.append("1e-6,1.0," + ",".join(str(v + 0.1) for v in values))
    path = _write(
        tmp_path / "avg.csv",
        f"time_s,power_ref_W,{cols}\n" + "\n".join(rows) + "\n",
    )
    trace = ingest_trace(path, "power_trace", probe_wavelength_m=780e-9)
    assert trace.power_atoms_w[0] == pytest.approx(np.mean(values))
    expected_stderr = np.std(values, ddof=1) / np.sqrt(8)
    assert trace.power_atoms_stderr_w[0] == pytest.approx(expected_stderr)


def test_ingest_shuffled_rows_error_names_row(tmp_path):
    path = _write(
        tmp_path / "bad.csv",
        "time_s,power_ref_W,power_atoms_W\n"
        "0.0,1e-9,0.4e-9\n"
        "2e-6,1e-9,0.5e-9\n"
        "1e-6,1e-9,0.6e-9\n",
    )
    with pytest.raises(IngestionError, match="row 4"):
        ingest_trace(path, "power_trace", probe_wavelength_m=780e-9)


def test_ingest_count_spectrum(tmp_path):
    path = _write(
        tmp_path / "counts.csv",
        "detuning_hz,counts,n_gates\n-1e6,100,50\n0.0,3,50\n1e6,98,50\n",
    )
    data = ingest_trace(path, "count_spectrum")
    assert isinstance(data, CountSpectrum)
    assert np.array_equal(data.counts, [100.0, 3.0, 98.0])
    assert np.all(data.n_gates == 50)


def test_ingest_missing_column(tmp_path):
    path = _write(tmp_path / "m.csv", "time_s,power_ref_W\n0.0,1e-9\n")
    with pytest.raises(IngestionError, match="power_atoms_W"):
        ingest_trace(path, "power_trace", probe_wavelength_m=780e-9)


def test_ingest_unparseable_cell(tmp_path):
    path = _write(
        tmp_path / "nan.csv",
        "time_s,power_ref_W,power_atoms_W\n0.0,1e-9,oops\n",
    )
    with pytest.raises(IngestionError, match="row 2"):
        ingest_trace(path, "power_trace", probe_wavelength_m=780e-9)


def test_emit_plot_data_deterministic(tmp_path):
    x = np.linspace(0.0, 1.0, 7)
    y = np.sin(x)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_plot_data([("detuning_hz", x), ("transmission", y)], p1)
    emit_plot_data([("detuning_hz", x), ("transmission", y)], p2)
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().splitlines()[0]
    assert header == "detuning_hz,transmission"


def test_emit_plot_data_round_trip_precision(tmp_path):
    x = np.array([1.0 / 3.0, 2.0 / 7.0, 1e-300])
    path = tmp_path / "p.csv"
    emit_plot_data([("v", x)], path)
    lines = path.read_text().splitlines()[1:]
    assert [float(v) for v in lines] == x.tolist()


def test_emit_plot_data_sweep_columns(tmp_path):
    depths = np.array([1e-3, 2e-3, 5e-3])
    eff = np.array([0.006, 0.013, 0.025])
    err = np.array([0.001, 0.002, 0.002])
    path = tmp_path / "sweep.csv"
    emit_plot_data(
        [("trap_depth_K", depths), ("efficiency", eff), ("efficiency_stderr", err)],
        path,
    )
    assert path.read_text().splitlines()[0] == "trap_depth_K,efficiency,efficiency_stderr"


def test_emit_plot_data_empty_refused(tmp_path):
    with pytest.raises(DataError):
        emit_plot_data([], tmp_path / "e.csv")
    with pytest.raises(DataError):
        emit_plot_data([("x", np.array([]))], tmp_path / "e.csv")


def test_envelope_schema_version_rejected(tmp_path):
    env = make_envelope({"x": 1}, {})
    doc = env.to_dict()
    doc["schema_version"] = 99
    path = tmp_path / "bad_env.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(DataError):
        read_envelope(path)


def test_envelope_round_trip(tmp_path):
    payload = {"value": 1.0 / 3.0, "list": [1, 2, 3]}
    env = make_envelope(payload, {"trap": {"trap_depth_K": 5e-3}}, seed=7)
    path = tmp_path / "env.json"
    env.write(path)
    back = read_envelope(path)
    assert back.payload == payload
    assert back.config_echo == env.config_echo
    assert back.seed == 7
    assert back.schema_version == 1
