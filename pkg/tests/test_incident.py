import math

import numpy as np
import pytest

from borsem.excitation import GaussianPulse
from borsem.solver.incident import PlaneWaveExcitation, incident_field, incident_harmonic
from oracles import azimuthal_coefficient, plane_wave_tangential

PULSE = GaussianPulse(0.3, 1.0, 1.0)


@pytest.mark.parametrize("m", [0, 2, 3])
@pytest.mark.parametrize("pol", ["theta", "phi"])
def test_axial_incidence_only_m1(m, pol):
    exc = PlaneWaveExcitation(PULSE, 0.0, pol)
    t = np.linspace(-1.0, 4.0, 60)
    for point, tangent in [((0.4, 0.2), (0.6, -0.8)), ((0.5, -0.7), (0.0, -1.0))]:
        ft, fp = incident_harmonic(exc, m, point, t, tangent)
        assert np.max(np.abs(ft)) <= 1e-15 and np.max(np.abs(fp)) <= 1e-15


def test_axial_incidence_m1_nonzero():
    exc = PlaneWaveExcitation(PULSE, 0.0)
    ft, fp = incident_harmonic(exc, 1, (0.4, 0.2), np.array([0.8]), (0.6, -0.8))
    assert abs(ft[0]) > 0.1 and abs(fp[0]) > 0.1


@pytest.mark.parametrize("m", [0, 1, 2, 3])
@pytest.mark.parametrize("pol", ["theta", "phi"])
def test_oblique_matches_azimuthal_quadrature(m, pol):
    theta = math.radians(45.0)
    exc = PlaneWaveExcitation(PULSE, theta, pol)
    rho, z, tr, tz = 0.45, 0.3, 0.6, -0.8
    for t in (0.6, 0.9, 1.2, 1.5):
        ft, fp = incident_harmonic(exc, m, (rho, z), t, (tr, tz))
        ref_t = azimuthal_coefficient(
            lambda ph: plane_wave_tangential(1.0, 0.3, 1.0, theta, pol, rho, z, tr, tz, t, ph)[0], m)
        ref_p = azimuthal_coefficient(
            lambda ph: plane_wave_tangential(1.0, 0.3, 1.0, theta, pol, rho, z, tr, tz, t, ph)[1], m)
        assert abs(ft - ref_t) <= 1e-10
        assert abs(fp - ref_p) <= 1e-10


def test_negative_harmonic_rejected():
    with pytest.raises(ValueError):
        incident_harmonic(PlaneWaveExcitation(PULSE), -1, (0.1, 0.0), 0.0)


def test_incidence_range_checked():
    with pytest.raises(ValueError):
        PlaneWaveExcitation(PULSE, 4.0)
    with pytest.raises(ValueError):
        PlaneWaveExcitation(PULSE, 0.0, "circular")


def test_incident_field_transverse():
    for th in (0.0, 0.7, math.pi / 2):
        for pol in ("theta", "phi"):
            exc = PlaneWaveExcitation(PULSE, th, pol)
            assert abs(np.dot(exc.e_vector, exc.arrival_direction)) < 1e-15
            e = incident_field(exc, np.array([0.1, 0.2, 0.3]), 1.0)
            assert abs(np.dot(e, exc.arrival_direction)) < 1e-15
