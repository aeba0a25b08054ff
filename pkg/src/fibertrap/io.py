"""Data ingestion and result persistence: CSV traces/spectra in, JSON result
envelopes and deterministic CSV plot data out."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import DataError, IngestionError, ValidationError
from .spectra import TransmissionTrace

ENVELOPE_SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class CountSpectrum:
    """Photon counts vs detuning, optionally averaged over repeated cycles."""

    detuning_hz: np.ndarray
    counts: np.ndarray
    n_gates: np.ndarray
    counts_stderr: np.ndarray | None = None

    def __post_init__(self):
        if not (len(self.detuning_hz) == len(self.counts) == len(self.n_gates)):
            raise ValidationError("spectrum columns must have equal length")


@dataclass(frozen=True, eq=False)
class ResultEnvelope:
    payload: dict
    config_echo: dict
    seed: int | None = None
    timestamp_utc: str = ""
    tool: str = "fibertrap"
    version: str = __version__
    schema_version: int = ENVELOPE_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "tool": self.tool,
            "version": self.version,
            "timestamp_utc": self.timestamp_utc,
            "seed": self.seed,
            "config_echo": self.config_echo,
            "payload": self.payload,
        }

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def make_envelope(payload: dict, config_echo: dict, seed: int | None = None) -> ResultEnvelope:
    return ResultEnvelope(
        payload=payload,
        config_echo=config_echo,
        seed=seed,
        timestamp_utc=datetime.now(timezone.utc).isoformat(),
    )


def read_envelope(path) -> ResultEnvelope:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != ENVELOPE_SCHEMA_VERSION:
        raise DataError(
            f"envelope schema_version {doc.get('schema_version')!r} unsupported"
        )
    return ResultEnvelope(
        payload=doc["payload"],
        config_echo=doc["config_echo"],
        seed=doc.get("seed"),
        timestamp_utc=doc.get("timestamp_utc", ""),
        tool=doc.get("tool", "fibertrap"),
        version=doc.get("version", ""),
    )


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise IngestionError(f"{path}: empty CSV")
    return [h.strip() for h in rows[0]], rows[1:]


def _column_group(header: list[str], base: str) -> list[int]:
    """Indices of `base` plus any repeated-cycle columns `base_2`, `base_3`..."""
    hits = []
    for i, name in enumerate(header):
        if name == base:
            hits.append(i)
        elif name.startswith(base + "_") and name[len(base) + 1 :].isdigit():
            hits.append(i)
    return hits


def _parse_float(path, row_number: int, cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise IngestionError(
            f"{path}: row {row_number}: cannot parse '{cell}' as a number"
        ) from None


def _check_monotonic(path, name: str, grid: np.ndarray):
    bad = np.nonzero(np.diff(grid) <= 0)[0]
    if bad.size:
        # file line of the offending (later) row: header is line 1, data
        # element i sits on line i + 2, and the offender is element bad+1
        raise IngestionError(
            f"{path}: {name} grid not strictly increasing at row {int(bad[0]) + 3}"
        )


def ingest_trace(path, kind: str, probe_wavelength_m: float | None = None):
    """Load a measurement CSV.

    kind="power_trace": header time_s, power_ref_W, power_atoms_W
    (power_atoms_W may repeat as power_atoms_W_2 ... for repeated loading
    cycles; they are averaged with standard error sigma/sqrt(n)). Returns a
    TransmissionTrace and requires probe_wavelength_m.

    kind="count_spectrum": header detuning_hz, counts[, counts_2 ...],
    n_gates. Returns a CountSpectrum.
    """
    header, rows = _read_csv(path)
    if kind == "power_trace":
        if probe_wavelength_m is None:
            raise ValidationError("power_trace ingestion needs probe_wavelength_m")
        required = ["time_s", "power_ref_W"]
        for name in required:
            if name not in header:
                raise IngestionError(f"{path}: missing column '{name}'")
        atom_cols = _column_group(header, "power_atoms_W")
        if not atom_cols:
            raise IngestionError(f"{path}: missing column 'power_atoms_W'")
        t_i = header.index("time_s")
        r_i = header.index("power_ref_W")
        data = np.array(
            [
                [_parse_float(path, k + 2, row[i]) for i in [t_i, r_i] + atom_cols]
                for k, row in enumerate(rows)
            ]
        )
        time_s = data[:, 0]
        _check_monotonic(path, "time", time_s)
        atoms = data[:, 2:]
        mean = atoms.mean(axis=1)
        stderr = (
            atoms.std(axis=1, ddof=1) / math.sqrt(atoms.shape[1])
            if atoms.shape[1] > 1
            else None
        )
        return TransmissionTrace(
            time_s=time_s,
            power_ref_w=data[:, 1],
            power_atoms_w=mean,
            probe_wavelength_m=probe_wavelength_m,
            power_atoms_stderr_w=stderr,
        )
    if kind == "count_spectrum":
        for name in ("detuning_hz", "n_gates"):
            if name not in header:
                raise IngestionError(f"{path}: missing column '{name}'")
        count_cols = _column_group(header, "counts")
        if not count_cols:
            raise IngestionError(f"{path}: missing column 'counts'")
        d_i = header.index("detuning_hz")
        g_i = header.index("n_gates")
        data = np.array(
            [
                [_parse_float(path, k + 2, row[i]) for i in [d_i, g_i] + count_cols]
                for k, row in enumerate(rows)
            ]
        )
        detuning = data[:, 0]
        _check_monotonic(path, "detuning", detuning)
        counts = data[:, 2:]
        if np.any(counts < 0):
            raise IngestionError(f"{path}: negative counts")
        mean = counts.mean(axis=1)
        stderr = (
            counts.std(axis=1, ddof=1) / math.sqrt(counts.shape[1])
            if counts.shape[1] > 1
            else None
        )
        return CountSpectrum(
            detuning_hz=detuning,
            counts=mean,
            n_gates=data[:, 1].astype(int),
            counts_stderr=stderr,
        )
    raise ValidationError(f"unknown trace kind '{kind}'")


def emit_plot_data(columns, path):
    """Write plot data as CSV: columns is a sequence of (name, array) pairs
    with unit-suffixed names. Numbers use 17 significant digits so identical
    inputs produce byte-identical files."""
    columns = list(columns)
    if not columns:
        raise DataError("refusing to write plot data with no columns")
    arrays = [np.asarray(values) for _, values in columns]
    n = arrays[0].size
    if n == 0:
        raise DataError("refusing to write an empty dataset")
    if any(a.size != n for a in arrays):
        raise DataError("plot data columns must have equal length")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(name for name, _ in columns) + "\n")
        for k in range(n):
            cells = []
            for a in arrays:
                v = a[k]
                if isinstance(v, (str, np.str_)):
                    cells.append(str(v))
                elif isinstance(v, (np.integer, int)):
                    cells.append(str(int(v)))
                else:
                    cells.append(format(float(v), ".17g"))
            fh.write(",".join(cells) + "\n")
