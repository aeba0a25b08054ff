"""Monte-Carlo loading engine: MOT phase-space sampling, trajectory
integration through the dipole + gravity field, outcome classification,
and stroboscopic recapture simulation.

Randomness enters only through the initial ensemble; every atom draws from
its own counter-based stream keyed by (seed, atom index), so chunked or
parallel execution is bit-identical to a serial run.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.constants import k as K_B

from . import backend as _backend
from .errors import ValidationError
from .spectra import ProbeSequenceConfig
from .trap import TrapConfig, transverse_trap_frequency

STREAM_RULE = "philox4x64 key=(seed, atom_index); 3 position + 3 velocity normals"

_CHUNK = 1024  # atoms per work item; fixed so worker count cannot matter


class Fate(str, Enum):
    CAPTURED_IN_FIBER = "captured_in_fiber"
    WALL_LOSS = "wall_loss"
    FACET_LOSS = "facet_loss"
    ESCAPED = "escaped"
    TIMEOUT = "timeout"


_FATE_BY_CODE = {
    1: Fate.CAPTURED_IN_FIBER,
    2: Fate.WALL_LOSS,
    3: Fate.FACET_LOSS,
    4: Fate.ESCAPED,
    5: Fate.TIMEOUT,
}
FATE_CAPTURED_CODE = 1
FATE_TIMEOUT_CODE = 5


@dataclass(frozen=True)
class MotCloud:
    """Gaussian MOT cloud: density ~ exp(-x^2/sigma^2) per axis (1/e half
    widths), Maxwell-Boltzmann velocities."""

    center_m: tuple[float, float, float]
    half_widths_1e_m: tuple[float, float, float]
    temperature_k: float
    atom_count: int = 10**7

    def __post_init__(self):
        if any(w <= 0 for w in self.half_widths_1e_m):
            raise ValidationError("cloud widths must be positive")
        if self.temperature_k <= 0:
            raise ValidationError("cloud temperature must be positive")
        if self.atom_count <= 0:
            raise ValidationError("atom count must be positive")


@dataclass(frozen=True, eq=False)
class Ensemble:
    positions: np.ndarray
    velocities: np.ndarray
    seed: int | None = None
    stream_rule: str = STREAM_RULE

    def __post_init__(self):
        if self.positions.shape != self.velocities.shape:
            raise ValidationError("positions and velocities must match in shape")

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class StepPolicy:
    """Fixed-step velocity-Verlet, tightened near the tip: the step is
    min(dt_max, 1/(steps_per_period * nu_local)) with nu_local the on-axis
    transverse frequency at the atom's height."""

    dt_max_s: float = 1e-6
    steps_per_period: float = 200.0
    drift_tolerance: float = 1e-3


@dataclass(frozen=True)
class TerminationRules:
    capture_depth_m: float = 1e-3
    max_time_s: float = 0.03
    escape_radius_m: float = 5e-3
    escape_top_m: float | None = None  # resolved from geometry/cloud if None


@dataclass(frozen=True, eq=False)
class TrajectoryOutcome:
    fate: Fate
    final_position_m: np.ndarray
    final_velocity_m_s: np.ndarray
    transit_time_s: float
    capture_depth_z_m: float | None
    energy_drift_rel: float
    integrator_ok: bool


@dataclass(frozen=True, eq=False)
class LoadingResult:
    n_sampled: int
    n_captured: int
    efficiency: float
    in_fiber_temperature_k: float
    transverse_width_1e_full_m: float
    fate_histogram: dict[str, int]
    seed: int
    fates: np.ndarray
    transit_times_s: np.ndarray
    final_positions_m: np.ndarray
    final_velocities_m_s: np.ndarray
    capture_depth_z_m: np.ndarray
    energy_drift_rel: np.ndarray
    integrator_ok: bool

    def payload(self) -> dict:
        return {
            "n_sampled": self.n_sampled,
            "n_captured": self.n_captured,
            "efficiency": self.efficiency,
            "in_fiber_temperature_k": _none_if_nan(self.in_fiber_temperature_k),
            "transverse_width_1e_full_m": _none_if_nan(
                self.transverse_width_1e_full_m
            ),
            "fate_histogram": self.fate_histogram,
            "seed": self.seed,
            "max_energy_drift_rel": float(np.max(self.energy_drift_rel)),
            "integrator_ok": self.integrator_ok,
        }


@dataclass(frozen=True, eq=False)
class RecaptureResult:
    n_initial: int
    n_cycles: int
    per_cycle_survival: np.ndarray
    cumulative_survival: np.ndarray
    n_final: int

    def payload(self) -> dict:
        return {
            "n_initial": self.n_initial,
            "n_cycles": self.n_cycles,
            "per_cycle_survival": self.per_cycle_survival.tolist(),
            "cumulative_survival": self.cumulative_survival.tolist(),
            "n_final": self.n_final,
        }


def _none_if_nan(value: float):
    return None if math.isnan(value) else value


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValidationError(f"seed must be a uint64, got {seed}")
    return seed


def _sample_range(cloud: MotCloud, mass_kg: float, seed: int, start: int, stop: int):
    """Sample atoms [start, stop) of the ensemble keyed by seed."""
    n = stop - start
    pos = np.empty((n, 3))
    vel = np.empty((n, 3))
    # 1/e half width sigma means density ~ exp(-x^2/sigma^2): std = sigma/sqrt(2)
    pos_std = np.asarray(cloud.half_widths_1e_m) / math.sqrt(2.0)
    vel_std = math.sqrt(K_B * cloud.temperature_k / mass_kg)
    center = np.asarray(cloud.center_m)
    for j, i in enumerate(range(start, stop)):
        key = np.array([seed, i], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=key))
        draws = rng.standard_normal(6)
        pos[j] = center + pos_std * draws[:3]
        vel[j] = vel_std * draws[3:]
    return pos, vel


def sample_mot_cloud(cloud: MotCloud, n: int, seed: int, mass_kg: float) -> Ensemble:
    """Draw n atoms from the cloud; bit-identical for identical inputs, and
    per-atom streams make any prefix of a larger sample identical too."""
    if n < 1:
        raise ValidationError(f"need n >= 1 atoms, got {n}")
    if mass_kg <= 0:
        raise ValidationError("mass must be positive")
    seed = _check_seed(seed)
    pos, vel = _sample_range(cloud, mass_kg, seed, 0, n)
    return Ensemble(positions=pos, velocities=vel, seed=seed)


def _resolve_escape_top(
    termination: TerminationRules, trap: TrapConfig, cloud: MotCloud | None
) -> float:
    if termination.escape_top_m is not None:
        return termination.escape_top_m
    top = trap.geometry.tip_z_m + 0.02
    if cloud is not None:
        top = max(top, cloud.center_m[2] + 4.0 * cloud.half_widths_1e_m[2] + 1e-3)
    return top


def _kernel_args(
    trap: TrapConfig,
    mass_kg: float,
    policy: StepPolicy,
    termination: TerminationRules,
    escape_top: float,
):
    nu0 = transverse_trap_frequency(trap, mass_kg)
    dt_base = math.inf if nu0 == 0.0 else 1.0 / (policy.steps_per_period * nu0)
    geom = trap.geometry
    return (
        geom.waist_m,
        geom.effective_rayleigh_range_m,
        geom.tip_z_m,
        geom.core_radius_m,
        trap.trap_depth_j,
        mass_kg,
        trap.gravity_m_s2,
        dt_base,
        policy.dt_max_s,
        termination.capture_depth_m,
        termination.max_time_s,
        termination.escape_radius_m,
        escape_top,
    )


def _integrate_arrays(pos, vel, kernel, args):
    n = pos.shape[0]
    fate = np.zeros(n, dtype=np.int8)
    t_out = np.zeros(n)
    capz = np.full(n, np.nan)
    drift = np.zeros(n)
    kernel.integrate_batch(pos, vel, fate, t_out, capz, drift, *args)
    return fate, t_out, capz, drift


def integrate_trajectory(
    initial,
    field: TrapConfig,
    mass_kg: float,
    step_policy: StepPolicy | None = None,
    termination: TerminationRules | None = None,
    backend: str | None = None,
) -> TrajectoryOutcome:
    """Integrate a single atom from `initial = (position, velocity)`."""
    policy = step_policy or StepPolicy()
    term = termination or TerminationRules()
    kernel = _backend.get_backend(backend)
    pos = np.array([initial[0]], dtype=float)
    vel = np.array([initial[1]], dtype=float)
    escape_top = _resolve_escape_top(term, field, None)
    args = _kernel_args(field, mass_kg, policy, term, escape_top)
    fate, t_out, capz, drift = _integrate_arrays(pos, vel, kernel, args)
    captured = int(fate[0]) == FATE_CAPTURED_CODE
    return TrajectoryOutcome(
        fate=_FATE_BY_CODE[int(fate[0])],
        final_position_m=pos[0],
        final_velocity_m_s=vel[0],
        transit_time_s=float(t_out[0]),
        capture_depth_z_m=float(capz[0]) if captured else None,
        energy_drift_rel=float(drift[0]),
        integrator_ok=bool(drift[0] <= policy.drift_tolerance),
    )


def run_loading_simulation(
    cloud: MotCloud,
    trap: TrapConfig,
    n: int,
    seed: int,
    mass_kg: float,
    workers: int = 1,
    step_policy: StepPolicy | None = None,
    termination: TerminationRules | None = None,
    backend: str | None = None,
) -> LoadingResult:
    """Run n independent trajectories sampled from the cloud.

    Worker count only controls concurrency: atoms are sampled from per-atom
    streams and merged in atom-index order, so the result is bit-identical
    for any `workers`.
    """
    if n < 100:
        raise ValidationError(f"need n >= 100 for meaningful statistics, got {n}")
    policy = step_policy or StepPolicy()
    term = termination or TerminationRules()
    kernel = _backend.get_backend(backend)
    escape_top = _resolve_escape_top(term, trap, cloud)
    args = _kernel_args(trap, mass_kg, policy, term, escape_top)
    seed = _check_seed(seed)

    positions = np.empty((n, 3))
    velocities = np.empty((n, 3))
    fates = np.zeros(n, dtype=np.int8)
    times = np.zeros(n)
    capz = np.full(n, np.nan)
    drift = np.zeros(n)

    def work(start: int, stop: int):
        pos, vel = _sample_range(cloud, mass_kg, seed, start, stop)
        f, t, cz, dr = _integrate_arrays(pos, vel, kernel, args)
        positions[start:stop] = pos
        velocities[start:stop] = vel
        fates[start:stop] = f
        times[start:stop] = t
        capz[start:stop] = cz
        drift[start:stop] = dr

    spans = [(a, min(a + _CHUNK, n)) for a in range(0, n, _CHUNK)]
    if workers <= 1:
        for a, b in spans:
            work(a, b)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda ab: work(*ab), spans))

    captured = fates == FATE_CAPTURED_CODE
    n_captured = int(np.count_nonzero(captured))
    hist = {
        fate.value: int(np.count_nonzero(fates == code))
        for code, fate in _FATE_BY_CODE.items()
    }
    if n_captured:
        v = velocities[captured]
        temperature = mass_kg * float(np.mean(v[:, 0] ** 2 + v[:, 1] ** 2)) / (2.0 * K_B)
        p = positions[captured]
        # per-axis second moment -> 1/e half width sqrt(2 <x^2>), full = 2x
        m2 = 0.5 * float(np.mean(p[:, 0] ** 2 + p[:, 1] ** 2))
        width = 2.0 * math.sqrt(2.0 * m2)
    else:
        temperature = math.nan
        width = math.nan

    return LoadingResult(
        n_sampled=n,
        n_captured=n_captured,
        efficiency=n_captured / n,
        in_fiber_temperature_k=temperature,
        transverse_width_1e_full_m=width,
        fate_histogram=hist,
        seed=seed,
        fates=fates,
        transit_times_s=times,
        final_positions_m=positions,
        final_velocities_m_s=velocities,
        capture_depth_z_m=capz,
        energy_drift_rel=drift,
        integrator_ok=bool(np.all(drift <= policy.drift_tolerance)),
    )


def thermal_captured_ensemble(
    trap: TrapConfig,
    mass_kg: float,
    temperature_k: float,
    n: int,
    seed: int,
    depth_below_tip_m: float = 2e-3,
) -> Ensemble:
    """Synthesize a thermal in-fiber ensemble (harmonic transverse spatial
    distribution, Maxwell-Boltzmann velocities), keeping only transversally
    bound atoms so it satisfies the recapture precondition."""
    nu = transverse_trap_frequency(trap, mass_kg)
    if nu <= 0:
        raise ValidationError("need a nonzero trap depth")
    omega = 2.0 * math.pi * nu
    x_std = math.sqrt(K_B * temperature_k / mass_kg) / omega
    v_std = math.sqrt(K_B * temperature_k / mass_kg)
    w0 = trap.geometry.waist_m
    u0 = trap.trap_depth_j
    z0 = trap.geometry.tip_z_m - depth_below_tip_m
    rng = np.random.default_rng(seed)
    pos = np.empty((n, 3))
    vel = np.empty((n, 3))
    filled = 0
    while filled < n:
        m = 2 * (n - filled) + 16
        p = rng.standard_normal((m, 2)) * x_std
        v = rng.standard_normal((m, 3)) * v_std
        r2 = p[:, 0] ** 2 + p[:, 1] ** 2
        eperp = 0.5 * mass_kg * (v[:, 0] ** 2 + v[:, 1] ** 2) - u0 * np.exp(
            -2.0 * r2 / (w0 * w0)
        )
        good = np.nonzero(eperp < 0.0)[0][: n - filled]
        k = good.size
        pos[filled : filled + k, 0:2] = p[good]
        pos[filled : filled + k, 2] = z0
        vel[filled : filled + k] = v[good]
        filled += k
    return Ensemble(positions=pos, velocities=vel, seed=int(seed))


def simulate_recapture(
    captured: Ensemble,
    trap: TrapConfig,
    sequence: ProbeSequenceConfig,
    mass_kg: float,
    step_policy: StepPolicy | None = None,
    backend: str | None = None,
) -> RecaptureResult:
    """Alternate free flight (FORT off, off-window) and trapped evolution
    (FORT on, rest of the modulation period) for n_gates cycles. An atom
    survives a cycle if it is recaptured with bound transverse energy and
    stays off the core wall."""
    policy = step_policy or StepPolicy()
    kernel = _backend.get_backend(backend)
    geom = trap.geometry
    n0 = len(captured)
    x = captured.positions.copy()
    v = captured.velocities.copy()
    alive = np.ones(n0, dtype=bool)
    g = trap.gravity_m_s2
    tau = sequence.off_window_s
    t_on = sequence.on_window_s
    u0 = trap.trap_depth_j
    w0 = geom.waist_m
    core2 = geom.core_radius_m**2

    # trap-on phase: no capture plane, no escape box; only the wall terminates
    on_term = TerminationRules(
        capture_depth_m=2.0 * geom.fiber_length_m,
        max_time_s=t_on,
        escape_radius_m=1.0,
        escape_top_m=geom.tip_z_m + 1.0,
    )
    args = _kernel_args(trap, mass_kg, policy, on_term, on_term.escape_top_m)

    per_cycle = np.empty(sequence.n_gates)
    cumulative = np.empty(sequence.n_gates)
    for cycle in range(sequence.n_gates):
        n_before = int(np.count_nonzero(alive))
        if n_before == 0:
            per_cycle[cycle] = 1.0
            cumulative[cycle] = 0.0
            continue
        idx = np.nonzero(alive)[0]
        # free flight with the FORT off
        if tau > 0.0:
            x[idx, 0] += v[idx, 0] * tau
            x[idx, 1] += v[idx, 1] * tau
            x[idx, 2] += v[idx, 2] * tau - 0.5 * g * tau * tau
            v[idx, 2] -= g * tau
            # recapture test: bound transverse energy, off the wall
            r2 = x[idx, 0] ** 2 + x[idx, 1] ** 2
            eperp = 0.5 * mass_kg * (
                v[idx, 0] ** 2 + v[idx, 1] ** 2
            ) - u0 * np.exp(-2.0 * r2 / (w0 * w0))
            ok = (eperp < 0.0) & (r2 < core2)
            alive[idx[~ok]] = False
            idx = idx[ok]
        # trapped evolution with the FORT on
        if t_on > 0.0 and idx.size:
            pos = np.ascontiguousarray(x[idx])
            vel = np.ascontiguousarray(v[idx])
            fate, _, _, _ = _integrate_arrays(pos, vel, kernel, args)
            x[idx] = pos
            v[idx] = vel
            survived = fate == FATE_TIMEOUT_CODE
            alive[idx[~survived]] = False
        n_after = int(np.count_nonzero(alive))
        per_cycle[cycle] = n_after / n_before
        cumulative[cycle] = n_after / n0

    return RecaptureResult(
        n_initial=n0,
        n_cycles=sequence.n_gates,
        per_cycle_survival=per_cycle,
        cumulative_survival=cumulative,
        n_final=int(np.count_nonzero(alive)),
    )
