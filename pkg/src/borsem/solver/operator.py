"""Space-time discretisation of the EFIE for one azimuthal harmonic.

Unknowns are the time integrals Q_j(t) of the surface-current expansion
coefficients (the current is dQ/dt).  With c = mu = eps = 1 the tested EFIE
reads

    sum_j  L_ij * Q_j''(t - R) + D_ij * Q_j(t - R)  =  <f_i, E_inc(t)>

where L collects f_i . f_j / (4 pi R) and D the product of surface
divergences.  A constant or linearly drifting solenoidal Q is in the
null space; it carries no radiated field since the far field follows Q''.

Spatial basis per harmonic m, with angular factors set by the parity
(even: cos m phi on t, sin m phi on phi; odd: swapped):

* t-directed triangles on interior generatrix nodes, plus half triangles
  on the on-axis end nodes when m == 1;
* phi-directed pulses on every segment, tapered linearly to zero at the
  axis when m != 1.  Odd parity flips the sign of the phi pulses so the
  even and odd systems share one formulation.

Time: Q is interpolated by causal cubic Lagrange polynomials through the
samples n-k, ..., n-k-3 for retarded times in (t_{n-k-1}, t_{n-k}].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import BorMesh
from .ring import ring_moments

# Q(t_{n-k} - f dt) = sum_l sum_e VALUE[l, e] f**e * Q_{n-k-l}
_CUBIC_VALUE = np.array([
    [1.0, -11.0 / 6.0, 1.0, -1.0 / 6.0],
    [0.0, 3.0, -2.5, 0.5],
    [0.0, -1.5, 2.0, -0.5],
    [0.0, 1.0 / 3.0, -0.5, 1.0 / 6.0],
])
# dt**2 * Q'' at the same point
_CUBIC_SECOND = np.array([
    [2.0, -1.0, 0.0, 0.0],
    [-5.0, 3.0, 0.0, 0.0],
    [4.0, -3.0, 0.0, 0.0],
    [-1.0, 1.0, 0.0, 0.0],
])
STENCIL = 4


def _gauss01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True, eq=False)
class BasisLayout:
    mesh: BorMesh
    m: int
    parity: str = "even"

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("harmonic index must be non-negative")
        if self.parity not in ("even", "odd"):
            raise ValueError("parity must be 'even' or 'odd'")
        if not all(self.mesh.geometry.closed_axis_ends):
            raise ValueError("solver needs a closed body touching the axis at both ends")
        n_seg = self.mesh.n_segments
        use_t = self.m > 0 or self.parity == "even"
        use_phi = self.m > 0 or self.parity == "odd"
        t_index = np.full(n_seg + 1, -1)
        nxt = 0
        if use_t:
            nodes = range(0, n_seg + 1) if self.m == 1 else range(1, n_seg)
            for node in nodes:
                t_index[node] = nxt
                nxt += 1
        n_t = nxt
        phi_index = np.full(n_seg, -1)
        if use_phi:
            phi_index[:] = np.arange(nxt, nxt + n_seg)
            nxt += n_seg
        object.__setattr__(self, "t_index", t_index)
        object.__setattr__(self, "phi_index", phi_index)
        object.__setattr__(self, "n_t", n_t)
        object.__setattr__(self, "size", nxt)

    @property
    def phi_sign(self) -> float:
        return 1.0 if self.parity == "even" else -1.0

    def angular(self, phi):
        """Angular factors (t, phi) of the basis functions."""
        if self.parity == "even":
            return np.cos(self.m * phi), np.sin(self.m * phi)
        return np.sin(self.m * phi), np.cos(self.m * phi)

    def slots(self, seg, x, rho):
        """Basis functions living on segment ``seg`` evaluated at local parameter ``x``.

        Returns ``(index, value, rho_div)`` each of shape ``x.shape + (3,)``:
        slot 0/1 are the triangles of the start/end node, slot 2 the phi pulse.
        ``rho_div`` is rho times the surface divergence (angular factor dropped).
        """
        seg = np.asarray(seg)
        x = np.asarray(x, dtype=float)
        rho = np.asarray(rho, dtype=float)
        ell = np.array([s.length for s in self.mesh.segments])[seg]
        nodes = self.mesh.nodes
        idx = np.stack([self.t_index[seg], self.t_index[seg + 1], self.phi_index[seg]], axis=-1)
        lam0, lam1 = 1.0 - x, x
        taper = np.ones_like(x)
        if self.m != 1:
            r0, r1 = nodes[seg, 0], nodes[seg + 1, 0]
            on_axis0, on_axis1 = r0 < 1e-14, r1 < 1e-14
            taper = np.where(on_axis0, rho / np.where(on_axis0, r1, 1.0), taper)
            taper = np.where(on_axis1, rho / np.where(on_axis1, r0, 1.0), taper)
        val = np.stack([lam0, lam1, self.phi_sign * taper], axis=-1)
        return idx, val, ell

    def rho_div(self, val, ell, rho, t_rho):
        d0 = t_rho * val[..., 0] - rho / ell
        d1 = t_rho * val[..., 1] + rho / ell
        # the odd phi function -phi_hat cos(m phi) has the same divergence as phi_hat sin(m phi)
        d2 = self.m * self.phi_sign * val[..., 2]
        return np.stack([d0, d1, d2], axis=-1)


@dataclass(frozen=True, eq=False)
class Points:
    """Quadrature points on the generatrix with their basis slots."""

    seg: np.ndarray
    x: np.ndarray
    w: np.ndarray
    rho: np.ndarray
    z: np.ndarray
    t_rho: np.ndarray
    t_z: np.ndarray
    idx: np.ndarray
    val: np.ndarray
    rdiv: np.ndarray

    def __len__(self):
        return len(self.seg)


def make_points(layout: BasisLayout, seg, x, w) -> Points:
    seg = np.asarray(seg, dtype=np.int64)
    x = np.asarray(x, dtype=float)
    rho, z, tr, tz = layout.mesh.sample(seg, x)
    idx, val, ell = layout.slots(seg, x, rho)
    rdiv = layout.rho_div(val, ell, rho, tr)
    return Points(seg, x, np.asarray(w, dtype=float), rho, z, tr, tz, idx, val, rdiv)



def test_points(layout: BasisLayout, n: int = 3) -> Points:
    mesh = layout.mesh
    gx, gw = _gauss01(n)
    n_seg = mesh.n_segments
    ell = np.array([s.length for s in mesh.segments])
    seg = np.repeat(np.arange(n_seg), n)
    x = np.tile(gx, n_seg)
    w = np.tile(gw, n_seg) * ell[seg]
    return make_points(layout, seg, x, w)


def _source_rules(mesh: BorMesh, tp: Points, n_far: int, n_near: int, near_factor: float):
    """Source quadrature for every test point: (test index, seg, x, w) arrays.

    Segments closer to the test point than ``near_factor`` segment lengths
    get a rule clustered (x = x* +- v**3) at the point of closest approach,
    which absorbs the logarithmic singularity of the ring integral.
    """
    nodes = mesh.nodes
    ell = np.array([s.length for s in mesh.segments])
    p0, p1 = nodes[:-1], nodes[1:]
    chord = p1 - p0
    # closest approach along each chord, for every (test point, segment)
    rel = np.stack([tp.rho, tp.z], axis=-1)[:, None, :] - p0[None]
    xs = np.clip(np.einsum("psk,sk->ps", rel, chord) / np.einsum("sk,sk->s", chord, chord), 0.0, 1.0)
    closest = p0[None] + xs[..., None] * chord[None]
    dist = np.linalg.norm(np.stack([tp.rho, tp.z], -1)[:, None, :] - closest, axis=-1)
    near = dist < near_factor * ell[None, :]
    own = tp.seg
    near[np.arange(len(tp)), own] = True
    xs[np.arange(len(tp)), own] = tp.x

    gx, gw = _gauss01(n_far)
    pi, si = np.nonzero(~near)
    far_p = np.repeat(pi, n_far)
    far_s = np.repeat(si, n_far)
    far_x = np.tile(gx, len(pi))
    far_w = np.tile(gw, len(pi)) * ell[far_s]

    vx, vw = _gauss01(n_near)
    pi, si = np.nonzero(near)
    xc = xs[pi, si]
    parts_p, parts_s, parts_x, parts_w = [], [], [], []
    for side in (+1.0, -1.0):
        span = (1.0 - xc) if side > 0 else xc
        keep = span > 1e-12
        p, s, c, sp = pi[keep], si[keep], xc[keep], span[keep]
        parts_p.append(np.repeat(p, n_near))
        parts_s.append(np.repeat(s, n_near))
        parts_x.append((c[:, None] + side * sp[:, None] * vx[None, :] ** 3).ravel())
        parts_w.append((3.0 * sp[:, None] * vx[None, :] ** 2 * vw[None, :] * ell[s][:, None]).ravel())
    return (
        np.concatenate([far_p] + parts_p),
        np.concatenate([far_s] + parts_s),
        np.concatenate([far_x] + parts_x),
        np.concatenate([far_w] + parts_w),
    )


@dataclass(frozen=True, eq=False)
class MotOperator:
    """Interaction matrices Z[k] (k = 0 acts on the current step)."""

    layout: BasisLayout
    dt: float
    Z: np.ndarray
    test: Points

    @property
    def size(self) -> int:
        return self.layout.size

    @property
    def n_delays(self) -> int:
        return self.Z.shape[0]


def assemble(layout: BasisLayout, dt: float, n_test: int = 3, n_far: int = 3, n_near: int = 8,
             near_factor: float = 1.5, symmetrize: bool = True, chunk: int = 20000) -> MotOperator:
    mesh = layout.mesh
    N = layout.size
    tp = test_points(layout, n_test)
    p_of, s_of, x_of, w_of = _source_rules(mesh, tp, n_far, n_near, near_factor)
    sp = make_points(layout, s_of, x_of, w_of)

    z_span = np.ptp(np.concatenate([tp.z, sp.z]))
    r_all = math.hypot(z_span, 2.0 * float(np.max(np.concatenate([tp.rho, sp.rho]))))
    K = int(math.floor(r_all / dt)) + STENCIL + 1
    fac = 1.0 if layout.m == 0 else 0.5  # N_m / (2 pi)
    inv_dt2 = 1.0 / (dt * dt)
    sign = np.array([1.0, 1.0, layout.phi_sign])
    flat = np.zeros(K * N * N)

    for c0 in range(0, len(p_of), chunk):
        sl = slice(c0, c0 + chunk)
        pp = p_of[sl]
        qq = np.arange(c0, min(c0 + chunk, len(p_of)))
        pair, k, mu = ring_moments(tp.rho[pp], tp.z[pp], sp.rho[qq], sp.z[qq], layout.m, dt)
        p = pp[pair]
        q = qq[pair]
        lw = np.einsum("le,nce->nlc", _CUBIC_SECOND, mu) * inv_dt2  # (n, 4, 3)
        dw = np.einsum("le,ne->nl", _CUBIC_VALUE, mu[:, 0, :])  # (n, 4)

        trp, tzp, trq, tzq = tp.t_rho[p], tp.t_z[p], sp.t_rho[q], sp.t_z[q]
        tt = trp[:, None] * trq[:, None] * lw[..., 1] + tzp[:, None] * tzq[:, None] * lw[..., 0]
        tph = -trp[:, None] * lw[..., 2]
        pht = -trq[:, None] * lw[..., 2]
        phph = lw[..., 1]
        geo = np.empty((len(p), 4, 3, 3))
        geo[:, :, :2, :2] = tt[:, :, None, None]
        geo[:, :, :2, 2] = tph[:, :, None]
        geo[:, :, 2, :2] = pht[:, :, None]
        geo[:, :, 2, 2] = phph

        # odd parity is the even system rotated by pi/2m; the operator is identical
        va, vb = tp.val[p] * sign, sp.val[q] * sign
        da, db = tp.rdiv[p], sp.rdiv[q]
        common = fac * tp.w[p] * sp.w[q]
        rr = tp.rho[p] * sp.rho[q]
        vals = common[:, None, None, None] * (
            (rr[:, None, None] * va[:, :, None] * vb[:, None, :])[:, None] * geo
            + (da[:, :, None] * db[:, None, :])[:, None] * dw[:, :, None, None]
        )
        ia, jb = tp.idx[p], sp.idx[q]
        ok = (ia[:, :, None] >= 0) & (jb[:, None, :] >= 0)
        kl = k[:, None] + np.arange(STENCIL)[None, :]
        lin = ((kl[:, :, None, None] * N + ia[:, None, :, None]) * N + jb[:, None, None, :])
        mask = np.broadcast_to(ok[:, None], lin.shape)
        flat += np.bincount(lin[mask], weights=vals[mask], minlength=K * N * N)

    Z = flat.reshape(K, N, N)
    if symmetrize:
        Z = 0.5 * (Z + Z.transpose(0, 2, 1))
    # trim trailing empty delays
    nz = np.flatnonzero(np.abs(Z).reshape(K, -1).max(axis=1) > 0)
    Z = Z[: nz[-1] + 1] if len(nz) else Z[:1]
    return MotOperator(layout, dt, np.ascontiguousarray(Z), tp)


def excitation_vector(op: MotOperator, proj_t: np.ndarray, proj_phi: np.ndarray) -> np.ndarray:
    """Tested incident field, shape (n_times, N), from per-test-point projections."""
    tp = op.test
    N = op.size
    out = np.zeros((proj_t.shape[0], N))
    weight = tp.w * tp.rho
    for slot in range(3):
        idx = tp.idx[:, slot]
        ok = idx >= 0
        src = proj_t if slot < 2 else proj_phi
        contrib = src[:, ok] * (weight[ok] * tp.val[ok, slot])[None, :]
        np.add.at(out.T, idx[ok], contrib.T)
    return out
