"""Far-zone field radiated by a current harmonic."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..excitation import TimeSeries
from .mot import SurfaceCurrentHistory

# samples by which a record can lead the true first arrival: the cubic
# interpolation reaches two nodes (plus the fractional offset) past the
# retarded time and the centred second difference one more
ARRIVAL_SMEAR = 4


@dataclass(frozen=True, eq=False)
class HarmonicResponse:
    """Range-normalised far-zone scattered field of one harmonic.

    ``field`` holds ``r E`` (co-polarised component) against retarded time,
    with t = 0 the instant the incident peak crosses the body centre.
    """

    m: int
    incidence_theta: float
    observation_theta: float
    observation_phi: float
    field: TimeSeries
    polarization: str = "theta"


def _lagrange4(x):
    """Centered cubic weights for nodes -1, 0, 1, 2 at offset x in [0, 1)."""
    return np.stack([
        -x * (x - 1.0) * (x - 2.0) / 6.0,
        (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
        -(x + 1.0) * x * (x - 2.0) / 2.0,
        (x + 1.0) * x * (x - 1.0) / 6.0,
    ], axis=-1)


def radiation_kernel(cur: SurfaceCurrentHistory, observation_theta: float, observation_phi: float,
                     component: str | None = None, n_phi: int | None = None):
    """Shift-indexed weights ``G[o, j]`` with ``sum_o G[o] . Q(t_n + (o + o_min) dt)``.

    The sum gives the radiation integral of Q projected on the observed
    component; the far field is minus its second time derivative over 4 pi.
    """
    layout = cur.layout
    op = cur.operator
    tp = op.test
    dt = cur.grid.dt
    g = layout.mesh.geometry
    component = component or cur.excitation.polarization
    th, ph = observation_theta, observation_phi
    if component == "theta":
        e_obs = np.array([math.cos(th) * math.cos(ph), math.cos(th) * math.sin(ph), -math.sin(th)])
    else:
        e_obs = np.array([-math.sin(ph), math.cos(ph), 0.0])
    o_hat = np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
    if n_phi is None:
        n_phi = max(32, 4 * layout.m + 8, int(math.ceil(2.0 * math.pi * float(np.max(tp.rho)) / dt)))
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    c, s = np.cos(phi), np.sin(phi)
    ang_t, ang_p = layout.angular(phi)

    # (point, phi) grids
    rho = tp.rho[:, None]
    proj_t = (tp.t_rho[:, None] * (c * e_obs[0] + s * e_obs[1]) + tp.t_z[:, None] * e_obs[2]) * ang_t
    proj_p = (-s * e_obs[0] + c * e_obs[1]) * ang_p
    proj_p = np.broadcast_to(proj_p, proj_t.shape)
    base = (tp.w * tp.rho)[:, None] * (2.0 * math.pi / n_phi)
    shift = (rho * (c * o_hat[0] + s * o_hat[1]) + (tp.z[:, None] - g.z_center) * o_hat[2]) / dt
    kk = np.floor(shift).astype(np.int64)
    lw = _lagrange4(shift - kk)  # (P, n_phi, 4)
    o_min = int(kk.min()) - 1
    n_off = int(kk.max()) + 2 - o_min + 1
    N = layout.size
    G = np.zeros((n_off, N))
    for slot in range(3):
        idx = tp.idx[:, slot]
        ok = idx >= 0
        if not np.any(ok):
            continue
        pr = proj_t if slot < 2 else proj_p
        coef = base[ok] * tp.val[ok, slot][:, None] * pr[ok]  # (P', n_phi)
        for l in range(4):
            off = kk[ok] - 1 + l - o_min
            jj = np.broadcast_to(idx[ok][:, None], off.shape)
            np.add.at(G, (off.ravel(), jj.ravel()), (coef * lw[ok, :, l]).ravel())
    return G, o_min


def record_margin(cur: SurfaceCurrentHistory) -> int:
    """Samples by which the far-field record leads the solver grid.

    Scattered signal can reach the observer up to one body radius (in light
    time) before the current at the body centre starts; the margin covers
    that plus the interpolation stencil.
    """
    tp = cur.operator.test
    zc = cur.layout.mesh.geometry.z_center
    radius = float(np.max(np.hypot(tp.rho, tp.z - zc)))
    return int(math.floor(radius / cur.grid.dt)) + 3


def far_field(cur: SurfaceCurrentHistory, observation_theta: float, observation_phi: float = 0.0,
              component: str | None = None) -> HarmonicResponse:
    """Far-zone co-polarised field of the current harmonic ``cur``.

    The record has as many samples as the current history and starts
    ``record_margin`` steps before it, the same for every angle, so all
    responses of one march share a time grid.
    """
    if not 0.0 <= observation_theta <= math.pi:
        raise ValueError("observation_theta must lie in [0, pi]")
    if not np.all(np.isfinite(cur.charge)):
        raise ValueError("current history contains non-finite values")
    G, o_min = radiation_kernel(cur, observation_theta, observation_phi, component)
    Q = cur.charge
    n = len(Q)
    lead = record_margin(cur)
    assert o_min >= -lead and o_min + len(G) - 1 <= lead
    # output sample i sits at solver step i - lead and needs Q at i - lead + o_min + o;
    # Q vanishes before the record and the last samples stay inside it
    S = np.zeros(n)
    for o in range(len(G)):
        lo = o + o_min - lead
        i0 = max(0, -lo)
        i1 = min(n, n - lo)
        if i1 > i0:
            S[i0:i1] += Q[i0 + lo:i1 + lo] @ G[o]
    dt = cur.grid.dt
    E = np.zeros_like(S)
    E[1:-1] = -(S[2:] - 2.0 * S[1:-1] + S[:-2]) / (4.0 * math.pi * dt * dt)
    t0 = cur.grid.t0 - lead * dt - cur.excitation.pulse.t_peak
    ts = TimeSeries(E, t0, dt, {"m": cur.m, "component": component or cur.excitation.polarization})
    return HarmonicResponse(cur.m, cur.excitation.incidence_theta, observation_theta, observation_phi,
                            ts, component or cur.excitation.polarization)


def solve_response(geometry, exc, m: int, observations, cfg, auto_place: bool = True) -> list[HarmonicResponse]:
    """Discretize, march once and radiate to every ``(theta, phi)`` observation.

    With ``auto_place`` the pulse is delayed so its truncated wavefront
    reaches the body at solver time 0.
    """
    from ..geometry import discretize
    from .mot import march_on_in_time, place_pulse

    mesh = discretize(geometry, cfg.density)
    if auto_place:
        exc = place_pulse(mesh, exc)
    cur = march_on_in_time(mesh, exc, m, cfg)
    return [far_field(cur, th, ph) for th, ph in observations]
