"""Marching-on-in-time solution of the harmonic EFIE."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..excitation import TimeGrid
from ..geometry import BorMesh
from .incident import PlaneWaveExcitation, harmonic_projections
from .operator import BasisLayout, MotOperator, assemble, excitation_vector

log = logging.getLogger(__name__)


class InstabilityError(RuntimeError):
    """Raised when the marching scheme diverges or its self-term matrix is singular."""


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings of the transient solver.

    Parameters
    ----------
    density : float
        Generatrix segments per body size ``a``.
    courant : float
        ``c dt / h_min``.
    n_steps : int, optional
        Number of time steps; by default sized from ``duration``.
    duration : float
        Far-field record kept after the incident peak crosses the body
        centre, in units of ``a/c``.
    late_time_guard : float
        Light transits of the body skipped after the incident pulse has
        passed before the late-time window opens.
    stabilization : bool
        Apply the three-point averaging filter after every step.
    filter_weights : tuple of float
        Weights applied to (Q[n-2], Q[n-1], Q[n]) to replace Q[n-1].
    instability_factor : float
        Growth of the late-time current maximum, relative to its running
        minimum over light-transit windows, that aborts the march.
    """

    density: float = 32.0
    courant: float = 0.8
    n_steps: int | None = None
    duration: float = 30.0
    late_time_guard: float = 1.0
    stabilization: bool = True
    filter_weights: tuple = (0.25, 0.5, 0.25)
    instability_factor: float = 10.0
    n_test: int = 3
    n_far: int = 3
    n_near: int = 8
    near_factor: float = 1.5
    symmetrize: bool = True

    def __post_init__(self):
        if not 0.0 < self.courant <= 1.0:
            raise ValueError(f"courant must lie in (0, 1], got {self.courant}")
        if self.density < 8:
            raise ValueError("density must be at least 8 segments per a")
        if self.n_steps is not None and self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")
        if self.duration <= 0 or self.late_time_guard < 0:
            raise ValueError("duration must be positive and late_time_guard non-negative")
        if len(self.filter_weights) != 3 or not math.isclose(sum(self.filter_weights), 1.0):
            raise ValueError("filter_weights must be three numbers summing to one")
        if self.instability_factor <= 1:
            raise ValueError("instability_factor must exceed 1")
        object.__setattr__(self, "filter_weights", tuple(float(w) for w in self.filter_weights))

    def with_(self, **kw) -> "SolverConfig":
        d = dict(self.__dict__)
        d.update(kw)
        return SolverConfig(**d)


@dataclass(frozen=True, eq=False)
class SurfaceCurrentHistory:
    """Time history of one current harmonic.

    ``charge[n, j]`` is the time integral of expansion coefficient ``j`` at
    step ``n``; ``coefficients`` gives the current itself.  The basis layout
    (``layout.t_index`` / ``layout.phi_index``) maps coefficients to
    generatrix nodes (t-directed) and segments (phi-directed).
    """

    m: int
    layout: BasisLayout
    grid: TimeGrid
    charge: np.ndarray
    excitation: PlaneWaveExcitation
    operator: MotOperator | None = field(default=None, repr=False)

    @property
    def mesh(self) -> BorMesh:
        return self.layout.mesh

    @property
    def coefficients(self) -> np.ndarray:
        return np.gradient(self.charge, self.grid.dt, axis=0)

    def t_component(self) -> np.ndarray:
        """Current on generatrix nodes, shape (n_steps, n_nodes); zero where no basis lives."""
        out = np.zeros((self.grid.n_steps, self.mesh.n_segments + 1))
        sel = self.layout.t_index >= 0
        out[:, sel] = self.coefficients[:, self.layout.t_index[sel]]
        return out

    def phi_component(self) -> np.ndarray:
        out = np.zeros((self.grid.n_steps, self.mesh.n_segments))
        sel = self.layout.phi_index >= 0
        out[:, sel] = self.coefficients[:, self.layout.phi_index[sel]]
        return out

    def first_nonzero_step(self) -> int | None:
        nz = np.flatnonzero(np.any(self.charge != 0, axis=1))
        return int(nz[0]) if len(nz) else None


def time_step(mesh: BorMesh, cfg: SolverConfig) -> float:
    return cfg.courant * mesh.h_min


def march(op: MotOperator, rhs: np.ndarray, cfg: SolverConfig, check_from: int | None = None,
          window: int | None = None) -> np.ndarray:
    """March ``Z0 Q_n = b_n - sum_k Z_k Q_{n-k}`` for one or several right-hand sides.

    ``rhs`` has shape (n_steps, N) or (n_steps, N, r).  Returns Q with the
    same shape.  Late-time growth is monitored from step ``check_from`` in
    windows of ``window`` steps.
    """
    squeeze = rhs.ndim == 2
    if squeeze:
        rhs = rhs[:, :, None]
    n_steps, N, r = rhs.shape
    K = op.n_delays
    try:
        with warnings.catch_warnings():
            # singularity is judged below from the pivots
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(op.Z[0], check_finite=True)
    except (ValueError, scipy.linalg.LinAlgError) as exc:  # pragma: no cover - defensive
        raise InstabilityError(f"self-term matrix factorisation failed: {exc}") from exc
    diag = np.abs(np.diag(lu[0]))
    if diag.min() <= 1e-13 * diag.max():
        raise InstabilityError("self-term interaction matrix is singular")
    hist_op = np.concatenate([op.Z[k] for k in range(K - 1, 0, -1)], axis=1) if K > 1 else None
    pad = K - 1
    Q = np.zeros((pad + n_steps, N, r))
    w0, w1, w2 = cfg.filter_weights
    window = window or max(1, n_steps // 20)
    check_from = n_steps if check_from is None else check_from
    peak = 0.0
    running_min = math.inf
    for n in range(n_steps):
        b = rhs[n]
        if hist_op is not None:
            b = b - hist_op @ Q[n:n + pad].reshape(pad * N, r)
        Q[pad + n] = scipy.linalg.lu_solve(lu, b, check_finite=False)
        if cfg.stabilization and n >= 1:
            Q[pad + n - 1] = w0 * Q[pad + n - 2] + w1 * Q[pad + n - 1] + w2 * Q[pad + n]
        if (n + 1) % window == 0:
            seg = Q[pad + n + 1 - window:pad + n + 1]
            cur = float(np.max(np.abs(np.diff(seg, axis=0)))) if window > 1 else 0.0
            if not np.isfinite(cur):
                raise InstabilityError(f"non-finite current at step {n}")
            if n < check_from:
                peak = max(peak, cur)
                continue
            floor = 1e-8 * peak
            running_min = min(running_min, max(cur, floor))
            if cur > floor and cur > cfg.instability_factor * running_min:
                raise InstabilityError(
                    f"late-time current grew by {cur / running_min:.3g}x at step {n} "
                    f"(factor {cfg.instability_factor})"
                )
    out = Q[pad:]
    if not np.all(np.isfinite(out)):
        raise InstabilityError("non-finite current values")
    return out[:, :, 0] if squeeze else out


def _record_steps(mesh: BorMesh, excs, cfg: SolverConfig, dt: float) -> int:
    if cfg.n_steps is not None:
        return cfg.n_steps
    g = mesh.geometry
    t_peak = max(e.pulse.t_peak for e in excs)
    t_end = t_peak + cfg.duration * g.a + g.transit + 4.0 * dt
    return int(math.ceil(t_end / dt)) + 1


def march_on_in_time_multi(mesh: BorMesh, excs, m: int, cfg: SolverConfig,
                           op: MotOperator | None = None) -> list[SurfaceCurrentHistory]:
    """Solve several excitations of equal parity sharing one operator.

    Time 0 of the solver grid is the instant the earliest wavefront may
    touch the body; pulses are expected to be placed with
    ``place_pulse`` (or later).
    """
    excs = list(excs)
    parity = excs[0].parity
    if any(e.parity != parity for e in excs):
        raise ValueError("excitations marched together must share a polarization")
    dt = time_step(mesh, cfg) if op is None else op.dt
    if op is None:
        layout = BasisLayout(mesh, m, parity)
        op = assemble(layout, dt, cfg.n_test, cfg.n_far, cfg.n_near, cfg.near_factor, cfg.symmetrize)
    layout = op.layout
    n_steps = _record_steps(mesh, excs, cfg, dt)
    grid = TimeGrid(0.0, dt, n_steps)
    times = grid.times()
    tp = op.test
    zc = mesh.geometry.z_center
    rhs = np.empty((n_steps, op.size, len(excs)))
    for c, exc in enumerate(excs):
        pt, pp = harmonic_projections(exc, m, tp.rho, tp.z, tp.t_rho, tp.t_z, times, zc)
        rhs[:, :, c] = excitation_vector(op, pt, pp)
    g = mesh.geometry
    window = max(2, int(math.ceil(g.transit / dt)))
    pulse_end = max(e.pulse.t_peak + 4.0 * e.pulse.width for e in excs)
    check_from = int(math.ceil((pulse_end + 2.0 * g.transit) / dt))
    Q = march(op, rhs, cfg, check_from=check_from, window=window)
    return [SurfaceCurrentHistory(m, layout, grid, Q[:, :, c], exc, op) for c, exc in enumerate(excs)]


def march_on_in_time(mesh: BorMesh, exc: PlaneWaveExcitation, m: int, cfg: SolverConfig,
                     op: MotOperator | None = None) -> SurfaceCurrentHistory:
    return march_on_in_time_multi(mesh, [exc], m, cfg, op)[0]


def place_pulse(mesh: BorMesh, exc: PlaneWaveExcitation) -> PlaneWaveExcitation:
    """Shift the pulse so its truncated wavefront reaches the body at t = 0."""
    from ..excitation import TRUNCATION_WIDTHS, GaussianPulse

    g = mesh.geometry
    d = exc.arrival_direction
    u = np.linspace(0.0, 1.0, 4097)
    reach = -math.inf
    for piece in g.pieces:
        rho, z = piece.point(u)
        reach = max(reach, float(np.max(np.abs(rho) * abs(d[0]) + (z - g.z_center) * d[2])))
    p = exc.pulse
    return exc.with_pulse(GaussianPulse(p.width, p.amplitude, TRUNCATION_WIDTHS * p.width + reach))
