"""Independent reference computations used only by the tests.

Nothing here calls into the package's numerical code, so agreement with
the package is a genuine cross-check.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import spherical_jn, spherical_yn


def synthesize(poles, amplitudes, dt, n, t0=0.0):
    """Real samples of sum A exp(g t) + conj, for poles given with Im > 0.

    Real poles (Im == 0) contribute A exp(g t) once.
    """
    t = t0 + dt * np.arange(n)
    x = np.zeros(n)
    for g, a in zip(poles, amplitudes):
        g, a = complex(g), complex(a)
        term = a * np.exp(g * t)
        x += term.real if g.imag == 0 else 2.0 * term.real
    return x


def matrix_pencil(x, dt, order, pencil=None):
    """Matrix-pencil pole estimate, rank truncated to ``order``."""
    x = np.asarray(x, dtype=float)
    N = len(x)
    L = pencil or N // 3
    Y = np.array([x[i:i + L + 1] for i in range(N - L)])
    _, _, Vh = np.linalg.svd(Y, full_matrices=False)
    V = Vh[:order].T
    V1, V2 = V[:-1], V[1:]
    z = np.linalg.eigvals(np.linalg.pinv(V1) @ V2)
    return np.log(z.astype(complex)) / dt


def mie_backscatter(ka, radius=1.0):
    """|r E_s / E_0| in the backscatter direction of a PEC sphere at size parameter ``ka``."""
    x = float(ka)
    nmax = int(x + 4.0 * x ** (1.0 / 3.0) + 10)
    n = np.arange(1, nmax + 1)
    j, y = spherical_jn(n, x), spherical_yn(n, x)
    jd, yd = spherical_jn(n, x, True), spherical_yn(n, x, True)
    h, hd = j + 1j * y, jd + 1j * yd
    a = (j + x * jd) / (h + x * hd)
    b = j / h
    return radius * abs(np.sum((-1.0) ** n * (2 * n + 1) * (a - b))) / (2.0 * x)


def gaussian_spectrum(omega, width):
    """|Fourier transform| of exp(-(t/width)^2)."""
    return math.sqrt(math.pi) * width * math.exp(-(omega * width) ** 2 / 4.0)


def sphere_pole():
    """Root of s^2 + s + 1 with positive imaginary part, from the quadratic formula."""
    return (-1.0 + 1j * math.sqrt(3.0)) / 2.0


def azimuthal_coefficient(field, m, n=256):
    """(1/2pi) integral field(phi) exp(-i m phi) dphi by an n-point rectangle rule."""
    phi = 2.0 * math.pi * np.arange(n) / n
    vals = np.array([field(p) for p in phi])
    return np.sum(vals * np.exp(-1j * m * phi)) / n


def plane_wave_tangential(amplitude, width, t_peak, theta_inc, polarization, rho, z, t_rho, t_z, t, phi):
    """Tangential (t, phi) components of a Gaussian plane wave, written out from scratch."""
    d = np.array([math.sin(theta_inc), 0.0, math.cos(theta_inc)])
    if polarization == "theta":
        e = np.array([math.cos(theta_inc), 0.0, -math.sin(theta_inc)])
    else:
        e = np.array([0.0, 1.0, 0.0])
    r = np.array([rho * math.cos(phi), rho * math.sin(phi), z])
    arg = t + r @ d
    if arg < t_peak - 4.0 * width or arg > t_peak + 8.0 * width:
        p = 0.0
    else:
        p = amplitude * math.exp(-((arg - t_peak) / width) ** 2)
    t_hat = np.array([t_rho * math.cos(phi), t_rho * math.sin(phi), t_z])
    phi_hat = np.array([-math.sin(phi), math.cos(phi), 0.0])
    return p * (e @ t_hat), p * (e @ phi_hat)
