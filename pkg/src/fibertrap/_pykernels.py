"""Pure-numpy trajectory kernels: import-time fallback for the compiled core.

Vectorized over atoms; each atom keeps its own clock and position-dependent
step size. Arithmetic expressions are grouped exactly as in the compiled
kernel so both backends agree to rounding level.

Fate codes (shared with the compiled kernel):
  1 captured, 2 wall loss, 3 facet loss, 4 escaped, 5 timeout.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

FATE_CAPTURED = 1
FATE_WALL = 2
FATE_FACET = 3
FATE_ESCAPED = 4
FATE_TIMEOUT = 5


def _accel(x, y, z, w0w0, z_eff, z_tip, u0, mass, gravity):
    """Acceleration and dipole potential of the trap + gravity field.

    Returns (r2, s, U_dip, ax, ay, az); s = (w(z)/w0)^2.
    """
    r2 = x * x + y * y
    above = z > z_tip
    uu = np.where(above, (z - z_tip) / z_eff, 0.0)
    s = 1.0 + uu * uu
    w2 = w0w0 * s
    q = np.exp((-2.0 * r2) / w2)
    c0 = (u0 * q) / s
    ft = (-4.0 * c0) / w2
    ax = (ft * x) / mass
    ay = (ft * y) / mass
    fz = ((-2.0 * c0) * (1.0 - (2.0 * r2) / w2)) * uu / (z_eff * s)
    az = (fz / mass) - gravity
    return r2, s, -c0, ax, ay, az


def integrate_batch(
    pos,
    vel,
    fate,
    t_out,
    capz,
    drift,
    w0,
    z_eff,
    z_tip,
    core_radius,
    u0,
    mass,
    gravity,
    dt_base,
    dt_max,
    capture_depth,
    max_time,
    escape_radius,
    escape_top,
):
    """Velocity-Verlet integration of independent atoms until termination.

    pos/vel are (n, 3) float64 arrays updated in place with final states;
    fate (int8), t_out, capz (nan unless captured) and drift (max relative
    energy deviation) are filled per atom.
    """
    n = pos.shape[0]
    if n == 0:
        return
    w0w0 = w0 * w0
    core2 = core_radius * core_radius
    esc2 = escape_radius * escape_radius
    z_cap = z_tip - capture_depth
    mg = mass * gravity

    x = pos[:, 0].copy()
    y = pos[:, 1].copy()
    z = pos[:, 2].copy()
    vx = vel[:, 0].copy()
    vy = vel[:, 1].copy()
    vz = vel[:, 2].copy()

    capz[:] = np.nan
    t_out[:] = 0.0
    drift[:] = 0.0
    fate[:] = 0

    r2, s, u, ax, ay, az = _accel(x, y, z, w0w0, z_eff, z_tip, u0, mass, gravity)
    e0 = 0.5 * mass * (vx * vx + vy * vy + vz * vz) + u + mg * z
    escale = np.maximum(np.abs(e0), u0)
    escale[escale < 1e-300] = 1.0

    # classify states that terminate before any step
    below = z < z_tip
    glass = below & (r2 >= core2)
    eperp = 0.5 * mass * (vx * vx + vy * vy) + u
    cap0 = below & ~glass & (z <= z_cap) & (eperp < 0.0)
    esc0 = ~below & ((r2 > esc2) | (z > escape_top))
    fate[glass] = FATE_FACET
    fate[cap0] = FATE_CAPTURED
    capz[cap0] = z_tip - z[cap0]
    fate[esc0] = FATE_ESCAPED

    run = fate == 0
    idx = np.nonzero(run)[0]
    x, y, z = x[run], y[run], z[run]
    vx, vy, vz = vx[run], vy[run], vz[run]
    ax, ay, az = ax[run], ay[run], az[run]
    s, u = s[run], u[run]
    e0, escale = e0[run], escale[run]
    t = np.zeros(idx.size)
    md = np.zeros(idx.size)

    while idx.size:
        dt = np.minimum(dt_base * s, dt_max)
        dt2 = (0.5 * dt) * dt
        zprev = z
        x = x + dt * vx + dt2 * ax
        y = y + dt * vy + dt2 * ay
        z = z + dt * vz + dt2 * az
        r2, s, u, axn, ayn, azn = _accel(
            x, y, z, w0w0, z_eff, z_tip, u0, mass, gravity
        )
        hdt = 0.5 * dt
        vx = vx + hdt * (ax + axn)
        vy = vy + hdt * (ay + ayn)
        vz = vz + hdt * (az + azn)
        t = t + dt
        ax, ay, az = axn, ayn, azn

        e = 0.5 * mass * (vx * vx + vy * vy + vz * vz) + u + mg * z
        md = np.maximum(md, np.abs(e - e0) / escale)

        below = z < z_tip
        hit = below & (r2 >= core2)
        facet = hit & (zprev >= z_tip)
        zone = below & ~hit & (z <= z_cap)
        eperp = 0.5 * mass * (vx * vx + vy * vy) + u
        cap = zone & (eperp < 0.0)
        esc = ~below & ((r2 > esc2) | (z > escape_top))
        done = hit | cap | esc
        tmo = ~done & (t >= max_time)
        done = done | tmo

        if done.any():
            code = np.zeros(idx.size, dtype=np.int8)
            code[tmo] = FATE_TIMEOUT
            code[esc] = FATE_ESCAPED
            code[cap] = FATE_CAPTURED
            code[hit] = FATE_WALL
            code[facet] = FATE_FACET
            di = idx[done]
            fate[di] = code[done]
            pos[di, 0] = x[done]
            pos[di, 1] = y[done]
            pos[di, 2] = z[done]
            vel[di, 0] = vx[done]
            vel[di, 1] = vy[done]
            vel[di, 2] = vz[done]
            t_out[di] = t[done]
            drift[di] = md[done]
            ci = idx[cap]
            capz[ci] = z_tip - z[cap]

            keep = ~done
            idx = idx[keep]
            x, y, z = x[keep], y[keep], z[keep]
            vx, vy, vz = vx[keep], vy[keep], vz[keep]
            ax, ay, az = ax[keep], ay[keep], az[keep]
            s, u = s[keep], u[keep]
            e0, escale = e0[keep], escale[keep]
            t, md = t[keep], md[keep]
