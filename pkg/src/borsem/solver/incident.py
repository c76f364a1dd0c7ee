"""Plane-wave excitation and its azimuthal harmonics on the body surface.

The wave arrives from the direction ``(sin th, 0, cos th)`` and propagates
towards the origin.  Theta polarisation puts E along the spherical theta
unit vector of the arrival direction (x for axial incidence), phi
polarisation along y.  The field at a point r is
``e * P(t + (r - r_c) . d)`` with r_c the body centre on the axis, so the
pulse peak crosses the centre at ``pulse.t_peak``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..excitation import GaussianPulse, truncated_pulse_value

POLARIZATIONS = ("theta", "phi")


@dataclass(frozen=True)
class PlaneWaveExcitation:
    pulse: GaussianPulse
    incidence_theta: float = 0.0
    polarization: str = "theta"

    def __post_init__(self):
        if not 0.0 <= self.incidence_theta <= math.pi:
            raise ValueError("incidence_theta must lie in [0, pi]")
        if self.polarization not in POLARIZATIONS:
            raise ValueError(f"polarization must be one of {POLARIZATIONS}")

    @property
    def arrival_direction(self) -> np.ndarray:
        th = self.incidence_theta
        return np.array([math.sin(th), 0.0, math.cos(th)])

    @property
    def e_vector(self) -> np.ndarray:
        th = self.incidence_theta
        if self.polarization == "theta":
            return np.array([math.cos(th), 0.0, -math.sin(th)])
        return np.array([0.0, 1.0, 0.0])

    @property
    def parity(self) -> str:
        """Azimuthal parity of the excited currents: ``even`` (t ~ cos m phi) or ``odd``."""
        return "even" if self.polarization == "theta" else "odd"

    def with_pulse(self, pulse: GaussianPulse) -> "PlaneWaveExcitation":
        return PlaneWaveExcitation(pulse, self.incidence_theta, self.polarization)


def incident_field(exc: PlaneWaveExcitation, xyz, t, z_center: float = 0.0):
    """Full 3-D incident electric field; ``xyz`` has a trailing axis of length 3."""
    xyz = np.asarray(xyz, dtype=float)
    d = exc.arrival_direction
    arg = t + xyz[..., 0] * d[0] + xyz[..., 1] * d[1] + (xyz[..., 2] - z_center) * d[2]
    return truncated_pulse_value(exc.pulse, arg)[..., None] * exc.e_vector


def _n_azimuth(rho_max: float, exc: PlaneWaveExcitation, m_max: int) -> int:
    b = rho_max * math.sin(exc.incidence_theta) / exc.pulse.width
    need = 8.0 * (b * b + 4.0 * b + m_max + 4.0)
    return max(64, 1 << math.ceil(math.log2(need)))


def tangential_on_ring(exc, rho, z, t_rho, t_z, t, phi, z_center=0.0):
    """Tangential (t, phi) incident components on rings, sampled at azimuths ``phi``.

    ``rho, z, t_rho, t_z`` broadcast against ``t``; ``phi`` is appended as
    the last axis.
    """
    d = exc.arrival_direction
    e = exc.e_vector
    rho, z, t_rho, t_z, t = (np.asarray(v, dtype=float)[..., None] for v in (rho, z, t_rho, t_z, t))
    c, s = np.cos(phi), np.sin(phi)
    arg = t + rho * d[0] * c + (z - z_center) * d[2]
    p = truncated_pulse_value(exc.pulse, arg)
    e_t = p * (t_rho * (e[0] * c + e[1] * s) + t_z * e[2])
    e_phi = p * (-e[0] * s + e[1] * c)
    return e_t, e_phi


def incident_harmonic(exc: PlaneWaveExcitation, m: int, point, t, tangent=None,
                      z_center: float = 0.0):
    """m-th azimuthal Fourier coefficient of the tangential incident field.

    Returns complex ``(E_t^m, E_phi^m)`` with
    ``E^m = (1/2pi) * integral E(phi) exp(-i m phi) dphi`` at the surface point
    ``point = (rho, z)`` whose generatrix tangent is ``tangent = (drho/ds, dz/ds)``
    (defaults to the axial direction).
    """
    if m < 0:
        raise ValueError("harmonic index must be non-negative")
    rho, z = point
    t_rho, t_z = tangent if tangent is not None else (0.0, 1.0)
    n = _n_azimuth(abs(rho), exc, m)
    phi = 2.0 * math.pi * np.arange(n) / n
    e_t, e_phi = tangential_on_ring(exc, rho, z, t_rho, t_z, t, phi, z_center)
    ft = np.fft.fft(e_t, axis=-1)[..., m] / n
    fp = np.fft.fft(e_phi, axis=-1)[..., m] / n
    return ft, fp


def harmonic_projections(exc, m, rho, z, t_rho, t_z, times, z_center=0.0, chunk=64):
    """Galerkin projections of the tangential incident field onto harmonic ``m``.

    Returns arrays (n_times, n_points) of ``integral ang_t(phi) E_t dphi`` and
    ``integral ang_phi(phi) E_phi dphi`` where the angular functions follow
    the excitation parity (even: cos for t, sin for phi; odd: swapped).
    """
    rho = np.asarray(rho, dtype=float)
    n = _n_azimuth(float(np.max(np.abs(rho))) if rho.size else 0.0, exc, m)
    phi = 2.0 * math.pi * np.arange(n) / n
    if exc.parity == "even":
        ang_t, ang_p = np.cos(m * phi), np.sin(m * phi)
    else:
        ang_t, ang_p = np.sin(m * phi), np.cos(m * phi)
    dphi = 2.0 * math.pi / n
    times = np.asarray(times, dtype=float)
    out_t = np.zeros((len(times), len(rho)))
    out_p = np.zeros_like(out_t)
    if rho.size == 0:
        return out_t, out_p
    # the field on the surface can only be nonzero while some ring point sees the pulse
    d = exc.arrival_direction
    proj = np.asarray(z, dtype=float) - z_center
    lo = exc.pulse.wavefront - float(np.max(np.abs(rho) * abs(d[0]) + proj * d[2]))
    hi = exc.pulse.tail - float(np.min(-np.abs(rho) * abs(d[0]) + proj * d[2]))
    active = np.flatnonzero((times >= lo) & (times <= hi))
    if len(active) == 0:
        return out_t, out_p
    for i0 in range(active[0], active[-1] + 1, chunk):
        tt = times[i0:min(i0 + chunk, active[-1] + 1), None]
        e_t, e_p = tangential_on_ring(exc, rho[None], z[None], t_rho[None], t_z[None], tt, phi, z_center)
        out_t[i0:i0 + len(tt)] = (e_t @ ang_t) * dphi
        out_p[i0:i0 + len(tt)] = (e_p @ ang_p) * dphi
    return out_t, out_p
