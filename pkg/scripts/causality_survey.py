"""Largest far-field sample ahead of the geometric first arrival.

Marches each body of a preset once per incidence and harmonic and reports,
for every observation angle, the largest |sample| / peak earlier than the
first possible arrival minus the interpolation stencil.

    python scripts/causality_survey.py --density 16 --m 0 1
"""
import argparse
import math

import numpy as np

from borsem.config import load_preset
from borsem.excitation import GaussianPulse
from borsem.geometry import discretize
from borsem.solver.farfield import ARRIVAL_SMEAR, far_field
from borsem.solver.incident import PlaneWaveExcitation
from borsem.solver.mot import march_on_in_time_multi, place_pulse


def first_arrival(geom, theta_inc, theta_obs, phi_obs, width):
    s = np.array([math.sin(theta_inc) + math.sin(theta_obs) * math.cos(phi_obs), math.sin(theta_obs) * math.sin(phi_obs),
                  math.cos(theta_inc) + math.cos(theta_obs)])
    u = np.linspace(0.0, 1.0, 2001)
    reach = max(float(np.max(np.abs(rho) * math.hypot(s[0], s[1]) + (z - geom.z_center) * s[2]))
                for rho, z in (p.point(u) for p in geom.pieces))
    return -4.0 * width - reach


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("preset", nargs="?", default="paper-bodies")
    ap.add_argument("--density", type=float)
    ap.add_argument("--m", type=int, nargs="+", default=[0, 1])
    args = ap.parse_args()

    cfg = load_preset(args.preset)
    solver = cfg.solver if args.density is None else type(cfg.solver)(**{**vars(cfg.solver), "density": args.density})
    width = cfg.pulse.width
    for body in cfg.bodies:
        geom = body.geometry()
        mesh = discretize(geom, solver.density)
        for m in args.m:
            excs = [place_pulse(mesh, PlaneWaveExcitation(GaussianPulse(width), t, cfg.polarization))
                    for t in cfg.incidence]
            t_peak = max(e.pulse.t_peak for e in excs)
            excs = [e.with_pulse(GaussianPulse(width, 1.0, t_peak)) for e in excs]
            for cur in march_on_in_time_multi(mesh, excs, m, solver):
                for obs, phi in cfg.observations:
                    f = far_field(cur, obs, phi).field
                    peak = np.max(np.abs(f.values))
                    if peak == 0:
                        continue
                    early = f.times() < first_arrival(geom, cur.excitation.incidence_theta, obs, phi, width) \
                        - ARRIVAL_SMEAR * f.dt
                    lead = np.max(np.abs(f.values[early]), initial=0.0) / peak
                    print(f"{body.name:16s} m={m}  inc {math.degrees(cur.excitation.incidence_theta):5.1f}  "
                          f"obs {math.degrees(obs):5.1f}  {lead:.1e}")


if __name__ == "__main__":
    main()
