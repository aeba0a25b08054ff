# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trajectory kernels (hot loop of the loading simulation).

Same contract and floating-point expression grouping as _pykernels; see
that module for the reference semantics and fate codes.
"""

from libc.math cimport exp, fabs

import numpy as np

BACKEND_NAME = "compiled"

FATE_CAPTURED = 1
FATE_WALL = 2
FATE_FACET = 3
FATE_ESCAPED = 4
FATE_TIMEOUT = 5

cdef:
    signed char C_CAPTURED = 1
    signed char C_WALL = 2
    signed char C_FACET = 3
    signed char C_ESCAPED = 4
    signed char C_TIMEOUT = 5


cdef struct Accel:
    double r2
    double s
    double u
    double ax
    double ay
    double az


cdef inline Accel _accel(double x, double y, double z,
                         double w0w0, double z_eff, double z_tip,
                         double u0, double mass, double gravity) noexcept nogil:
    cdef Accel o
    cdef double r2, uu, s, w2, q, c0, ft, fz
    r2 = x * x + y * y
    if z > z_tip:
        uu = (z - z_tip) / z_eff
    else:
        uu = 0.0
    s = 1.0 + uu * uu
    w2 = w0w0 * s
    q = exp((-2.0 * r2) / w2)
    c0 = (u0 * q) / s
    ft = (-4.0 * c0) / w2
    o.r2 = r2
    o.s = s
    o.u = -c0
    o.ax = (ft * x) / mass
    o.ay = (ft * y) / mass
    fz = ((-2.0 * c0) * (1.0 - (2.0 * r2) / w2)) * uu / (z_eff * s)
    o.az = (fz / mass) - gravity
    return o


def integrate_batch(double[:, ::1] pos, double[:, ::1] vel,
                    signed char[::1] fate, double[::1] t_out,
                    double[::1] capz, double[::1] drift,
                    double w0, double z_eff, double z_tip, double core_radius,
                    double u0, double mass, double gravity,
                    double dt_base, double dt_max,
                    double capture_depth, double max_time,
                    double escape_radius, double escape_top):
    """See _pykernels.integrate_batch."""
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i
    cdef double w0w0 = w0 * w0
    cdef double core2 = core_radius * core_radius
    cdef double esc2 = escape_radius * escape_radius
    cdef double z_cap = z_tip - capture_depth
    cdef double mg = mass * gravity
    cdef double nan = float("nan")
    cdef double x, y, z, vx, vy, vz, ax, ay, az, s, u, r2
    cdef double e0, escale, t, md, dt, dt2, hdt, zprev, e, eperp, d, cz
    cdef signed char f
    cdef Accel a

    if n == 0:
        return

    with nogil:
        for i in range(n):
            x = pos[i, 0]
            y = pos[i, 1]
            z = pos[i, 2]
            vx = vel[i, 0]
            vy = vel[i, 1]
            vz = vel[i, 2]
            a = _accel(x, y, z, w0w0, z_eff, z_tip, u0, mass, gravity)
            r2 = a.r2
            s = a.s
            u = a.u
            ax = a.ax
            ay = a.ay
            az = a.az
            e0 = 0.5 * mass * (vx * vx + vy * vy + vz * vz) + u + mg * z
            escale = fabs(e0)
            if u0 > escale:
                escale = u0
            if escale < 1e-300:
                escale = 1.0
            t = 0.0
            md = 0.0
            f = 0
            cz = nan

            # states that terminate before any step
            if z < z_tip:
                if r2 >= core2:
                    f = C_FACET
                elif z <= z_cap:
                    eperp = 0.5 * mass * (vx * vx + vy * vy) + u
                    if eperp < 0.0:
                        f = C_CAPTURED
                        cz = z_tip - z
            else:
                if r2 > esc2 or z > escape_top:
                    f = C_ESCAPED

            while f == 0:
                dt = dt_base * s
                if dt > dt_max:
                    dt = dt_max
                dt2 = (0.5 * dt) * dt
                zprev = z
                x = x + dt * vx + dt2 * ax
                y = y + dt * vy + dt2 * ay
                z = z + dt * vz + dt2 * az
                a = _accel(x, y, z, w0w0, z_eff, z_tip, u0, mass, gravity)
                r2 = a.r2
                s = a.s
                u = a.u
                hdt = 0.5 * dt
                vx = vx + hdt * (ax + a.ax)
                vy = vy + hdt * (ay + a.ay)
                vz = vz + hdt * (az + a.az)
                t = t + dt
                ax = a.ax
                ay = a.ay
                az = a.az

                e = 0.5 * mass * (vx * vx + vy * vy + vz * vz) + u + mg * z
                d = fabs(e - e0) / escale
                if d > md:
                    md = d

                if z < z_tip:
                    if r2 >= core2:
                        if zprev >= z_tip:
                            f = C_FACET
                        else:
                            f = C_WALL
                    elif z <= z_cap:
                        eperp = 0.5 * mass * (vx * vx + vy * vy) + u
                        if eperp < 0.0:
                            f = C_CAPTURED
                            cz = z_tip - z
                else:
                    if r2 > esc2 or z > escape_top:
                        f = C_ESCAPED
                if f == 0 and t >= max_time:
                    f = C_TIMEOUT

            pos[i, 0] = x
            pos[i, 1] = y
            pos[i, 2] = z
            vel[i, 0] = vx
            vel[i, 1] = vy
            vel[i, 2] = vz
            fate[i] = f
            t_out[i] = t
            capz[i] = cz
            drift[i] = md
