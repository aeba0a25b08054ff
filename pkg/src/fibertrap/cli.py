"""Command-line interface.

Subcommands: simulate-loading, spectrum, fit-od, atom-number, probe-counts,
capture-range. Every run writes a JSON result envelope (config echo, seed,
payload) plus optional CSV plot data. Exit codes: 0 success, 2 config error,
3 data error, 4 numeric/convergence error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from scipy.constants import k as K_B

from . import __version__
from .config import RunConfig, parse_config
from .errors import DataError, FibertrapError
from .fitting import (
    FitOptions,
    FitProblem,
    default_initial_guess,
    fit_spectrum,
    poisson_weights,
)
from .io import emit_plot_data, ingest_trace, make_envelope
from .loading import run_loading_simulation
from .spectra import (
    atom_number_from_absorption,
    absorbed_energy,
    incident_photons_per_gate,
    saturated_mask,
    simulate_probe_counts,
    spectrum_from_species,
    transmission_spectrum,
)
from .trap import capture_range


def _load_config(args) -> RunConfig:
    source = args.config if args.config else {}
    cfg = parse_config(source)
    if getattr(args, "species", None):
        cfg = parse_config({**cfg.echo, "species": {"path": args.species}})
    return cfg


def _emit(args, cfg: RunConfig, payload: dict, seed: int | None):
    envelope = make_envelope(payload, cfg.echo, seed)
    out = args.out or cfg.output.out_json
    if out:
        envelope.write(out)
    else:
        json.dump(envelope.to_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")


def _spectrum_model(cfg: RunConfig, ods: dict[int, float] | None = None):
    return spectrum_from_species(
        cfg.species,
        cfg.spectrum.ground_f,
        cfg.spectrum.od if ods is None else ods,
        reference_excited_f=cfg.spectrum.reference_excited_f,
        linewidth_fwhm_hz=cfg.spectrum.linewidth_fwhm_hz,
        frequency_offset_hz=cfg.spectrum.frequency_offset_hz,
    )


def cmd_simulate_loading(args) -> int:
    cfg = _load_config(args)
    sim = cfg.simulation
    result = run_loading_simulation(
        cfg.cloud,
        cfg.trap,
        sim.n_atoms,
        sim.seed,
        cfg.species.mass_kg,
        workers=sim.workers,
        step_policy=sim.step_policy,
        termination=sim.termination,
    )
    _emit(args, cfg, result.payload(), sim.seed)
    traj_path = args.trajectories or cfg.output.trajectories_csv
    if traj_path:
        r = np.hypot(result.final_positions_m[:, 0], result.final_positions_m[:, 1])
        speed = np.linalg.norm(result.final_velocities_m_s, axis=1)
        names = {1: "captured_in_fiber", 2: "wall_loss", 3: "facet_loss",
                 4: "escaped", 5: "timeout"}
        emit_plot_data(
            [
                ("atom_index", np.arange(result.n_sampled)),
                ("fate", np.array([names[int(f)] for f in result.fates])),
                ("transit_time_s", result.transit_times_s),
                ("final_r_m", r),
                ("final_speed_m_s", speed),
            ],
            traj_path,
        )
    return 0


def cmd_spectrum(args) -> int:
    cfg = _load_config(args)
    model = _spectrum_model(cfg)
    grid = cfg.spectrum.detuning_grid()
    t = transmission_spectrum(model, grid)
    sat = saturated_mask(model, grid)
    payload = {
        "detuning_hz": grid.tolist(),
        "transmission": t.tolist(),
        "saturated": [int(v) for v in sat],
        "od": {f"f{f}": od for f, od in sorted(cfg.spectrum.od.items())},
        "linewidth_fwhm_hz": model.linewidth_fwhm_hz,
    }
    _emit(args, cfg, payload, None)
    csv_path = args.csv or cfg.output.plot_csv
    if csv_path:
        emit_plot_data(
            [
                ("detuning_hz", grid),
                ("transmission", t),
                ("saturated", sat.astype(int)),
            ],
            csv_path,
        )
    return 0


def cmd_fit_od(args) -> int:
    cfg = _load_config(args)
    data = ingest_trace(args.data, "count_spectrum")
    gates = np.unique(data.n_gates)
    if gates.size != 1:
        raise DataError(f"{args.data}: n_gates must be uniform, found {gates.tolist()}")
    incident = incident_photons_per_gate(
        cfg.sequence.probe_power_w,
        cfg.sequence.gate_time_s,
        cfg.species.d2_wavelength_m,
    )
    amplitude = incident * cfg.probe.detector_efficiency * float(gates[0])
    # template ODs carry the shipped line-strength proportions for the
    # default initial guess
    strengths = {
        lv.f: cfg.species.strength(cfg.spectrum.ground_f, lv.f)
        for lv in cfg.species.excited_levels
        if abs(lv.f - cfg.spectrum.ground_f) <= 1
    }
    template = _spectrum_model(cfg, ods=strengths)
    problem = FitProblem(
        detunings_hz=data.detuning_hz,
        observed=data.counts,
        weights=poisson_weights(data.counts),
        template=template,
        amplitude=amplitude,
        free=cfg.fit.free,
    )
    problem = FitProblem(
        detunings_hz=data.detuning_hz,
        observed=data.counts,
        weights=poisson_weights(data.counts),
        template=template,
        amplitude=amplitude,
        free=cfg.fit.free,
        initial_guess=default_initial_guess(problem),
    )
    options = FitOptions(
        method=cfg.fit.method,
        max_iterations=cfg.fit.max_iterations,
        chi2_rescale=cfg.fit.chi2_rescale,
    )
    result = fit_spectrum(problem, options)
    payload = result.payload()
    payload["model"] = {
        "lines": [
            {
                "excited_f": line.excited_f,
                "center_detuning_hz": line.center_detuning_hz,
            }
            for line in template.lines
        ],
        "linewidth_fwhm_hz": template.linewidth_fwhm_hz,
        "frequency_offset_hz": template.frequency_offset_hz,
        "amplitude": amplitude,
        "ground_f": cfg.spectrum.ground_f,
        "reference_excited_f": cfg.spectrum.reference_excited_f,
    }
    _emit(args, cfg, payload, None)
    return 0


def cmd_atom_number(args) -> int:
    cfg = _load_config(args)
    trace = ingest_trace(
        args.data, "power_trace", probe_wavelength_m=cfg.species.d2_wavelength_m
    )
    n = atom_number_from_absorption(trace, photons_per_atom=args.photons_per_atom)
    payload = {
        "atom_number": n,
        "absorbed_energy_j": absorbed_energy(trace),
        "photons_per_atom": args.photons_per_atom,
        "probe_wavelength_m": trace.probe_wavelength_m,
    }
    _emit(args, cfg, payload, None)
    return 0


def cmd_probe_counts(args) -> int:
    cfg = _load_config(args)
    model = _spectrum_model(cfg)
    grid = cfg.spectrum.detuning_grid()
    expected, sampled = simulate_probe_counts(
        model,
        cfg.sequence,
        grid,
        cfg.probe.detector_efficiency,
        cfg.probe.counts_seed,
        cfg.species.d2_wavelength_m,
    )
    payload = {
        "detuning_hz": grid.tolist(),
        "expected_counts": expected.tolist(),
        "sampled_counts": sampled.tolist(),
        "incident_photons_per_gate": incident_photons_per_gate(
            cfg.sequence.probe_power_w,
            cfg.sequence.gate_time_s,
            cfg.species.d2_wavelength_m,
        ),
        "n_gates": cfg.sequence.n_gates,
        "detector_efficiency": cfg.probe.detector_efficiency,
    }
    _emit(args, cfg, payload, cfg.probe.counts_seed)
    csv_path = args.csv or cfg.output.plot_csv
    if csv_path:
        emit_plot_data(
            [
                ("detuning_hz", grid),
                ("expected_counts", expected),
                ("sampled_counts", sampled),
            ],
            csv_path,
        )
    return 0


def cmd_capture_range(args) -> int:
    cfg = _load_config(args)
    threshold_k = (
        args.threshold_k
        if args.threshold_k is not None
        else cfg.capture_range_threshold_k
    )
    distance = capture_range(cfg.trap, K_B * threshold_k)
    payload = {
        "threshold_K": threshold_k,
        "capture_range_m": distance,
        "tip_z_m": cfg.trap.geometry.tip_z_m,
    }
    _emit(args, cfg, payload, None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fibertrap",
        description="Monte-Carlo fiber-trap loading and extreme-OD spectroscopy",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, csv=False):
        p.add_argument("--config", help="TOML or JSON run configuration")
        p.add_argument("--species", help="species data file (overrides config)")
        p.add_argument("--out", help="result envelope JSON path (default: stdout)")
        if csv:
            p.add_argument("--csv", help="plot data CSV path")

    p = sub.add_parser("simulate-loading", help="Monte-Carlo loading simulation")
    common(p)
    p.add_argument("--trajectories", help="per-trajectory dump CSV path")
    p.set_defaults(func=cmd_simulate_loading)

    p = sub.add_parser("spectrum", help="model transmission spectrum")
    common(p, csv=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("fit-od", help="fit ODs to a measured count spectrum")
    common(p)
    p.add_argument("--data", required=True, help="count spectrum CSV")
    p.set_defaults(func=cmd_fit_od)

    p = sub.add_parser("atom-number", help="atom number from absorbed energy")
    common(p)
    p.add_argument("--data", required=True, help="power trace CSV")
    p.add_argument(
        "--photons-per-atom",
        type=float,
        default=2.0,
        help="photons absorbed per atom before going dark (default 2)",
    )
    p.set_defaults(func=cmd_atom_number)

    p = sub.add_parser("probe-counts", help="simulate stroboscopic photon counts")
    common(p, csv=True)
    p.set_defaults(func=cmd_probe_counts)

    p = sub.add_parser("capture-range", help="axial reach of the trap above the tip")
    common(p)
    p.add_argument(
        "--threshold-k",
        type=float,
        default=None,
        help="depth threshold in kelvin (default from config)",
    )
    p.set_defaults(func=cmd_capture_range)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FibertrapError as exc:
        json.dump(
            {"error": {"category": exc.category, "message": str(exc)}},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
