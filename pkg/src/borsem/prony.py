"""Least-squares Prony analysis of late-time responses.

A window ``x[n]``, n = 0..N-1, is modelled as ``sum_i A_i exp(gamma_i t_n)``
with ``t_n = n dt`` measured from the window start.  Poles come from the
roots of the forward linear-prediction polynomial, amplitudes from a
least-squares Vandermonde solve.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .excitation import TimeGrid, TimeSeries

log = logging.getLogger(__name__)

#: Roots within this angle of the negative real axis are flagged as aliased.
ALIAS_TOL = 1e-6
#: Relative singular-value cut for the prediction system rank.
RANK_TOL = 1e-12


@dataclass(frozen=True)
class ResidueTerm:
    """One exponential ``amplitude * exp(gamma t)``; ``gamma`` in 1/time units."""

    gamma: complex
    amplitude: complex
    aliased: bool = False

    def __post_init__(self):
        object.__setattr__(self, "gamma", complex(self.gamma))
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        if not (np.isfinite(self.gamma) and np.isfinite(self.amplitude)):
            raise ValueError("residue terms must be finite")


@dataclass(frozen=True)
class PronyFit:
    """Exponential model of one window.

    Amplitudes refer to the window start ``t_ref``: the model at time t is
    ``sum A_i exp(gamma_i (t - t_ref))``.
    """

    terms: tuple
    window: tuple
    dt: float
    residual_rms: float
    t_ref: float = 0.0
    refined: bool | None = None
    warnings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "window", tuple(int(v) for v in self.window))
        if self.residual_rms < 0:
            raise ValueError("residual_rms must be non-negative")

    @property
    def order(self) -> int:
        return len(self.terms)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([t.gamma for t in self.terms], dtype=complex)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([t.amplitude for t in self.terms], dtype=complex)

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "dt": self.dt,
            "t_ref": self.t_ref,
            "order": self.order,
            "terms": [
                {"re_gamma": t.gamma.real, "im_gamma": t.gamma.imag,
                 "re_A": t.amplitude.real, "im_A": t.amplitude.imag, "aliased": t.aliased}
                for t in self.terms
            ],
            "residual_rms": self.residual_rms,
            "refined": self.refined,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PronyFit":
        terms = [
            ResidueTerm(complex(t["re_gamma"], t["im_gamma"]), complex(t["re_A"], t["im_A"]),
                        bool(t.get("aliased", False)))
            for t in d["terms"]
        ]
        if d.get("order", len(terms)) != len(terms):
            raise ValueError("fit order does not match its term count")
        return cls(tuple(terms), tuple(d["window"]), float(d["dt"]), float(d["residual_rms"]),
                   float(d.get("t_ref", 0.0)), d.get("refined"))


@dataclass(frozen=True)
class LateTimeWindow:
    start_index: int
    length: int
    rationale_metric: float

    @property
    def stop_index(self) -> int:
        return self.start_index + self.length


@dataclass(frozen=True)
class WindowPolicy:
    """How the late-time window is placed.

    Parameters
    ----------
    guard : float
        Body light transits waited after the forced part has passed.
    max_order : int
        Largest model order the window must support (length >= 4 max_order).
    duration : float, optional
        Window length in time units; default runs to the end of the record.
    forced_energy : float
        With a forced waveform given, the window opens only once this
        fraction of its energy remains.
    """

    guard: float = 1.0
    max_order: int = 10
    duration: float | None = None
    forced_energy: float = 1e-4

    def __post_init__(self):
        if self.guard < 0 or self.max_order < 1:
            raise ValueError("guard must be >= 0 and max_order >= 1")
        if self.duration is not None and self.duration <= 0:
            raise ValueError("duration must be positive")
        if not 0 < self.forced_energy < 1:
            raise ValueError("forced_energy must lie in (0, 1)")


def energy_point(values, fraction: float) -> int:
    """First index after which at most ``fraction`` of the total energy remains."""
    e = np.asarray(values, dtype=float) ** 2
    total = e.sum()
    if total == 0:
        return 0
    tail = np.cumsum(e[::-1])[::-1] / total  # energy from index n on
    after = np.flatnonzero(tail <= fraction)
    return int(after[0]) if len(after) else len(e)


def select_late_window(resp: TimeSeries, body_transit: float, policy: WindowPolicy = WindowPolicy(),
                       pulse_exit: float | None = None, forced: TimeSeries | None = None) -> LateTimeWindow:
    """Place the late-time analysis window.

    The window opens ``policy.guard`` transits after ``pulse_exit`` (the
    time the incident pulse has fully left the body).  Without ``pulse_exit``
    the first nonzero sample is used, which suits pure free responses.  When
    the forced waveform is known (``forced``, sampled on the same grid), the
    start is additionally held back until its remaining energy drops to
    ``policy.forced_energy``.  ``rationale_metric`` reports that remaining
    energy fraction (of ``forced`` if given, else of ``resp``).
    """
    x = np.asarray(resp.values)
    n = len(x)
    if pulse_exit is None:
        nz = np.flatnonzero(x)
        if len(nz) == 0:
            raise ValueError("response is identically zero; nothing to analyse")
        pulse_exit = resp.t0 + nz[0] * resp.dt
    start = resp.grid.index_at(pulse_exit + policy.guard * body_transit)
    ref = x
    if forced is not None:
        if len(forced) != n or not math.isclose(forced.dt, resp.dt) or not math.isclose(forced.t0, resp.t0):
            raise ValueError("forced waveform must share the response grid")
        ref = np.asarray(forced.values)
        start = max(start, energy_point(ref, policy.forced_energy))
    length = n - start
    if policy.duration is not None:
        length = min(length, int(round(policy.duration / resp.dt)))
    need = 4 * policy.max_order
    if length < need:
        raise ValueError(
            f"late-time window has {max(length, 0)} samples but {need} are needed; "
            "increase n_steps (or the solver duration)"
        )
    e = np.abs(ref) ** 2
    metric = float(e[start:].sum() / e.sum()) if e.sum() > 0 else 0.0
    return LateTimeWindow(int(start), int(length), metric)


def _prediction_rank(A: np.ndarray) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > RANK_TOL * s[0]))


def _amplitudes(z: np.ndarray, x: np.ndarray):
    n = np.arange(len(x))
    V = z[None, :] ** n[:, None]
    amp = np.linalg.lstsq(V, x.astype(complex), rcond=None)[0]
    return amp, V


def _pair_conjugates(gam: np.ndarray, amp: np.ndarray):
    """Make a real-signal fit exactly conjugate-symmetric."""
    gam = gam.copy()
    amp = amp.copy()
    used = np.zeros(len(gam), dtype=bool)
    scale = max(1.0, float(np.max(np.abs(gam)))) if len(gam) else 1.0
    for i in np.argsort(-gam.imag):
        if used[i]:
            continue
        used[i] = True
        if abs(gam[i].imag) <= 1e-12 * scale:
            gam[i] = gam[i].real
            amp[i] = amp[i].real
            continue
        cand = [j for j in range(len(gam)) if not used[j]]
        if not cand:
            continue
        j = min(cand, key=lambda j: abs(gam[j] - np.conj(gam[i])))
        if abs(gam[j] - np.conj(gam[i])) <= 1e-6 * scale:
            used[j] = True
            g = 0.5 * (gam[i] + np.conj(gam[j]))
            a = 0.5 * (amp[i] + np.conj(amp[j]))
            gam[i], gam[j] = g, np.conj(g)
            amp[i], amp[j] = a, np.conj(a)
    return gam, amp


def _terms(gam, amp, aliased):
    order = np.lexsort((gam.real, gam.imag))
    return tuple(ResidueTerm(gam[i], amp[i], bool(aliased[i])) for i in order)


def _forward_roots(x: np.ndarray, p: int, warnings: list):
    """Exact-order least-squares forward prediction; returns (roots, order used)."""
    N = len(x)
    while p > 0:
        A = np.column_stack([x[p - k - 1:N - k - 1] for k in range(p)])  # x[n-1], ..., x[n-p]
        r = _prediction_rank(A)
        if r >= p:
            break
        msg = f"rank-deficient prediction system: order reduced from {p} to {r}"
        log.warning(msg)
        warnings.append(msg)
        p = r
    if p == 0:
        return np.zeros(0, dtype=complex)
    coef = np.linalg.lstsq(A, -x[p:], rcond=None)[0]
    return np.roots(np.concatenate([[1.0], coef])).astype(complex)


def _backward_roots(x: np.ndarray, p: int, L: int, warnings: list):
    """Overmodelled backward prediction truncated to rank ``p``.

    The prediction polynomial ``1 + sum_k b_k w**k`` has the signal poles as
    roots while the ``L - p`` extraneous roots settle outside the unit
    circle, so the ``p`` roots of smallest modulus are kept.
    """
    N = len(x)
    M = np.column_stack([x[k:N - L + k] for k in range(1, L + 1)])
    U, sv, Vh = np.linalg.svd(M, full_matrices=False)
    r = int(np.sum(sv > RANK_TOL * sv[0])) if sv[0] > 0 else 0
    if r < p:
        msg = f"rank-deficient prediction system: order reduced from {p} to {r}"
        log.warning(msg)
        warnings.append(msg)
        p = r
    if p == 0:
        return np.zeros(0, dtype=complex)
    b = Vh[:p].conj().T @ ((U[:, :p].conj().T @ -x[:N - L]) / sv[:p])
    w = np.roots(np.concatenate([b[::-1], [1.0]])).astype(complex)
    return w[np.argsort(np.abs(w), kind="stable")[:p]]


def prony_fit(samples: TimeSeries, order: int, prediction_order: int | None = None) -> PronyFit:
    """Least-squares Prony fit of ``order`` exponentials to a window.

    Parameters
    ----------
    samples : TimeSeries
        The analysis window.
    order : int
        Number of exponential terms.
    prediction_order : int, optional
        Length of the prediction filter.  By default equal to ``order``
        (plain least-squares Prony).  A longer filter, truncated to rank
        ``order``, is far less biased by noise.

    Returns
    -------
    PronyFit
        Poles with ``gamma = log(z) / dt`` on the principal branch, amplitudes
        referred to the window start.
    """
    x = np.asarray(samples.values)
    N = len(x)
    if order < 1:
        raise ValueError("order must be >= 1")
    if N < 2 * order:
        raise ValueError(f"window of {N} samples is too short for order {order}")
    L = order if prediction_order is None else int(prediction_order)
    if L < order or N - L < order:
        raise ValueError("prediction_order must lie in [order, len(window) - order]")
    dt = samples.dt
    warnings: list = []
    z = _forward_roots(x, order, warnings) if L == order else _backward_roots(x, order, L, warnings)
    start = int(samples.meta.get("window_start", 0))
    if len(z) == 0:
        rms = float(np.sqrt(np.mean(np.abs(x) ** 2)))
        return PronyFit((), (start, N), dt, rms, samples.t0, None, tuple(warnings))
    small = np.abs(z) <= 1e-12 * max(1.0, float(np.max(np.abs(z))))
    if np.any(small):
        msg = f"discarded {int(small.sum())} root(s) at z = 0"
        log.warning(msg)
        warnings.append(msg)
        z = z[~small]
    aliased = np.abs(np.abs(np.angle(z)) - math.pi) < ALIAS_TOL
    if np.any(aliased):
        msg = f"{int(aliased.sum())} root(s) on the negative real axis: poles may be aliased"
        log.warning(msg)
        warnings.append(msg)
    gam = np.log(z) / dt
    amp, V = _amplitudes(z, x)
    if not np.iscomplexobj(x):
        gam, amp = _pair_conjugates(gam, amp)
        V = np.exp(gam[None, :] * dt * np.arange(N)[:, None])
    rms = float(np.sqrt(np.mean(np.abs(x - V @ amp) ** 2)))
    return PronyFit(_terms(gam, amp, aliased), (start, N), dt, rms, samples.t0, None, tuple(warnings))


def hankel_singular_values(samples: TimeSeries, max_order: int) -> np.ndarray:
    x = np.asarray(samples.values)
    N = len(x)
    if N < 2 * max_order:
        raise ValueError(f"window of {N} samples is too short for max_order {max_order}")
    cols = max(max_order + 1, N // 3)
    cols = min(cols, N - max_order)
    H = np.lib.stride_tricks.sliding_window_view(x, cols)
    return np.linalg.svd(H, compute_uv=False)


def estimate_order(samples: TimeSeries, max_order: int, svd_threshold: float = 1e-8) -> int:
    """Numerical rank of the data Hankel matrix at a relative threshold, capped at ``max_order``."""
    s = hankel_singular_values(samples, max_order)
    if len(s) == 0 or s[0] == 0:
        return 0
    return int(min(max_order, np.sum(s > svd_threshold * s[0])))


def evaluate(fit: PronyFit, t) -> np.ndarray:
    t = np.asarray(t, dtype=float) - fit.t_ref
    out = np.zeros(t.shape, dtype=complex)
    for term in fit.terms:
        out += term.amplitude * np.exp(term.gamma * t)
    return out


def reconstruct(fit: PronyFit, grid: TimeGrid) -> TimeSeries:
    """Real series ``sum A_i exp(gamma_i (t - t_ref))`` on ``grid``."""
    if not all(np.isfinite(t.gamma) and np.isfinite(t.amplitude) for t in fit.terms):
        raise ValueError("fit contains non-finite terms")
    val = evaluate(fit, grid.times())
    mag = float(np.max(np.abs(val))) if val.size else 0.0
    if mag > 0 and float(np.max(np.abs(val.imag))) > 1e-9 * mag:
        raise ValueError("fit is not conjugate-symmetric: reconstruction has a large imaginary part")
    return TimeSeries(val.real, grid.t0, grid.dt)


def _pack(gam: np.ndarray, dt: float):
    """Real parameters (in units of 1/dt) for the upper-half-plane and real poles."""
    real = np.flatnonzero(gam.imag == 0)
    upper = np.flatnonzero(gam.imag > 0)
    p = np.concatenate([gam[upper].real, gam[upper].imag, gam[real].real]) * dt
    return p, len(upper), len(real)


def _unpack(p, n_up, n_re, dt):
    up = (p[:n_up] + 1j * p[n_up:2 * n_up]) / dt
    re = p[2 * n_up:2 * n_up + n_re] / dt
    return np.concatenate([up, np.conj(up), re.astype(complex)])


def refine_fit(fit: PronyFit, samples: TimeSeries) -> PronyFit:
    """Variable-projection polish of the poles of ``fit`` on ``samples``.

    Amplitudes are eliminated by a linear solve at every iterate.  The
    returned fit never has a larger residual than the input; when the
    optimiser fails the input comes back with ``refined=False``.
    """
    x = np.asarray(samples.values)
    if fit.order == 0:
        return fit
    gam = fit.gammas
    dt = samples.dt
    N = len(x)
    n = np.arange(N)
    real_input = not np.iscomplexobj(x)
    if real_input:
        if np.any(gam.imag < 0) and (np.sum(gam.imag > 0) != np.sum(gam.imag < 0)):
            return _flag(fit, False)
        p0, n_up, n_re = _pack(gam, dt)
        conv = lambda p: _unpack(p, n_up, n_re, dt)  # noqa: E731
    else:
        p0 = np.concatenate([gam.real, gam.imag]) * dt
        k = len(gam)
        conv = lambda p: (p[:k] + 1j * p[k:]) / dt  # noqa: E731

    xc = x.astype(complex)
    cache: dict = {}

    def project(p):
        # residual and Kaufman's Jacobian share one QR of the basis
        key = p.tobytes()
        if key not in cache:
            cache.clear()
            s = conv(p) * dt
            V = np.exp(np.outer(n, s))
            Q, R = np.linalg.qr(V)
            amp = np.linalg.lstsq(R, Q.conj().T @ xc, rcond=None)[0]
            r = xc - Q @ (Q.conj().T @ xc)
            cache[key] = (V, Q, R, amp, r)
        return cache[key]

    def stack(z):
        return z.real if real_input else np.concatenate([z.real, z.imag])

    def resid(p):
        return stack(project(p)[4])

    if real_input:
        k_up = np.eye(n_up)
        E = np.zeros((2 * n_up + n_re, 2 * n_up + n_re), dtype=complex)
        E[:n_up, :n_up] = k_up
        E[n_up:2 * n_up, :n_up] = k_up
        E[:n_up, n_up:2 * n_up] = 1j * k_up
        E[n_up:2 * n_up, n_up:2 * n_up] = -1j * k_up
        E[2 * n_up:, 2 * n_up:] = np.eye(n_re)
    else:
        E = np.hstack([np.eye(len(p0) // 2), 1j * np.eye(len(p0) // 2)])

    def jac(p):
        # exact variable-projection Jacobian; column k of E maps parameter k
        # onto the basis columns it moves
        V, Q, R, amp, r = project(p)
        W = n[:, None] * V
        D = W @ (E * amp[:, None])
        t1 = D - Q @ (Q.conj().T @ D)
        t2 = Q @ scipy.linalg.solve_triangular(R, np.conj(E) * (W.conj().T @ r)[:, None], trans=2)
        J = -(t1 + t2)
        return J.real if real_input else np.vstack([J.real, J.imag])

    r0 = resid(p0)
    if np.linalg.norm(r0) <= 1e-14 * np.linalg.norm(x):
        return _flag(fit, True)  # already exact to rounding: a stationary point
    try:
        sol = scipy.optimize.least_squares(resid, p0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                           max_nfev=200 * (len(p0) + 1))
    except (ValueError, np.linalg.LinAlgError, FloatingPointError):
        return _flag(fit, False)
    if not sol.success or not np.all(np.isfinite(sol.x)):
        return _flag(fit, False)
    g = conv(sol.x)
    amp, V = _amplitudes(np.exp(g * dt), x)
    if real_input:
        g, amp = _pair_conjugates(g, amp)
        V = np.exp(np.outer(n, g * dt))
    rms = float(np.sqrt(np.mean(np.abs(x - V @ amp) ** 2)))
    rms0 = float(np.sqrt(np.mean(r0 ** 2))) if real_input else fit.residual_rms
    if not np.isfinite(rms) or rms > max(rms0, fit.residual_rms):
        return _flag(fit, False)
    aliased = np.abs(np.abs(g.imag * dt) - math.pi) < ALIAS_TOL
    return PronyFit(_terms(g, amp, aliased), fit.window, dt, rms, fit.t_ref, True, fit.warnings)


def _flag(fit: PronyFit, refined: bool) -> PronyFit:
    return PronyFit(fit.terms, fit.window, fit.dt, fit.residual_rms, fit.t_ref, refined, fit.warnings)


def stable_poles(fit_a: PronyFit, fit_b: PronyFit, tolerance: float = 0.05) -> list[ResidueTerm]:
    """Terms of ``fit_a`` with a partner in ``fit_b`` within ``tolerance`` relative distance."""
    gb = fit_b.gammas
    keep = []
    for t in fit_a.terms:
        if len(gb) == 0:
            break
        d = np.min(np.abs(gb - t.gamma))
        if d <= tolerance * abs(t.gamma) or (t.gamma == 0 and d == 0):
            keep.append(t)
    return keep


def drop_growing(terms) -> list[ResidueTerm]:
    """Remove poles with a positive real part (logged)."""
    out = []
    for t in terms:
        if t.gamma.real > 0:
            log.info("discarding growing pole %s", t.gamma)
            continue
        out.append(t)
    return out
