"""Sweep orchestration: solve, extract, aggregate and persist."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .config import BodySpec, ExperimentConfig, ExtractionPolicy
from .excitation import TRUNCATION_WIDTHS, GaussianPulse, TimeSeries
from .geometry import discretize
from .prony import (LateTimeWindow, PronyFit, WindowPolicy, drop_growing, estimate_order, prony_fit,
                    refine_fit, select_late_window, stable_poles)
from .signatures import (BODY_ORDER, ROW_ORDER, PoleSignature, SignatureLibrary, cluster_and_average,
                         format_pole, normalize)
from .solver.farfield import far_field
from .solver.incident import PlaneWaveExcitation
from .solver.mot import InstabilityError, march_on_in_time_multi, place_pulse

log = logging.getLogger(__name__)

OUTPUT_ENV = "BORSEM_OUTPUT"


# ---------------------------------------------------------------- cells

@dataclass(frozen=True, order=True)
class CellKey:
    body: str
    m: object  # int or "sum"
    incidence: float
    obs_theta: float
    obs_phi: float

    @property
    def slug(self) -> str:
        deg = lambda x: f"{math.degrees(x):.6g}"  # noqa: E731
        return f"{self.body}_m{self.m}_inc{deg(self.incidence)}_obs{deg(self.obs_theta)}_{deg(self.obs_phi)}"

    def to_dict(self) -> dict:
        return {"body": self.body, "m": self.m, "incidence": self.incidence,
                "obs_theta": self.obs_theta, "obs_phi": self.obs_phi}


def excites(m: int, incidence: float) -> bool:
    """Axial incidence carries only the m = 1 harmonic."""
    on_axis = math.isclose(math.sin(incidence), 0.0, abs_tol=1e-12)
    return m == 1 or not on_axis


def radiates(m: int, obs_theta: float) -> bool:
    """On the axis only the m = 1 harmonic radiates."""
    return m == 1 or not math.isclose(math.sin(obs_theta), 0.0, abs_tol=1e-12)


# ---------------------------------------------------------------- extraction

@dataclass(frozen=True)
class Extraction:
    fit: PronyFit | None
    fit_alt: PronyFit | None
    poles: tuple
    window: LateTimeWindow | None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "fit": self.fit.to_dict() if self.fit else None,
            "fit_alt": self.fit_alt.to_dict() if self.fit_alt else None,
            "poles": [{"re_gamma": t.gamma.real, "im_gamma": t.gamma.imag,
                       "re_A": t.amplitude.real, "im_A": t.amplitude.imag} for t in self.poles],
            "window": None if self.window is None else {
                "start_index": self.window.start_index, "length": self.window.length,
                "rationale_metric": self.window.rationale_metric},
            "note": self.note,
        }


def pulse_exit_time(pulse_width: float, transit: float) -> float:
    """Time (peak at the body centre = 0) after which the pulse has crossed the body."""
    return TRUNCATION_WIDTHS * pulse_width + transit


def extract_poles(resp: TimeSeries, transit: float, pulse_width: float, policy: ExtractionPolicy,
                  a: float = 1.0) -> Extraction:
    """Late-time poles of one response.

    Fits at the estimated order and two above it; poles that move by less
    than ``policy.stability_tol`` between the two, are not nearly undamped
    (``policy.max_quality``) and carry at least
    ``policy.min_relative_amplitude`` of the largest amplitude are kept.
    """
    wpol = WindowPolicy(guard=policy.guard, max_order=policy.max_order,
                        duration=None if policy.window_duration is None else policy.window_duration * a)
    win = select_late_window(resp, transit, wpol, pulse_exit=pulse_exit_time(pulse_width, transit))
    q = max(1, int(round(policy.target_dt * a / resp.dt)))
    w = resp.window(win.start_index, win.length).decimated(q)
    if len(w) < 4 * policy.max_order:
        raise ValueError("late-time window too short after decimation; increase the solver duration")
    est = estimate_order(w, policy.max_order, policy.svd_threshold)
    if est == 0:
        return Extraction(None, None, (), win, "zero late-time signal")
    L = max(est + 2, int(len(w) * policy.prediction_fraction))
    fits = [refine_fit(prony_fit(w, p, prediction_order=max(L, p)), w) for p in (est, est + 2)]
    kept = stable_poles(fits[0], fits[1], policy.stability_tol)
    kept = drop_growing(kept)
    if policy.max_quality is not None:
        kept = [t for t in kept if abs(t.gamma.imag) <= policy.max_quality * abs(t.gamma.real)]
    if kept:
        amax = max(abs(t.amplitude) for t in kept)
        kept = [t for t in kept if abs(t.amplitude) >= policy.min_relative_amplitude * amax]
    return Extraction(fits[0], fits[1], tuple(kept), win)


# ---------------------------------------------------------------- solving

@dataclass
class JobResult:
    body: str
    m: int
    responses: dict = field(default_factory=dict)  # CellKey -> TimeSeries
    failures: dict = field(default_factory=dict)  # CellKey -> message
    skipped: list = field(default_factory=list)
    seconds: float = 0.0
    unstable: bool = False


def _job(cfg: ExperimentConfig, body: BodySpec, m: int) -> JobResult:
    t_start = time.perf_counter()
    res = JobResult(body.name, m)
    geom = body.geometry()
    mesh = discretize(geom, cfg.solver.density)
    pulse = GaussianPulse(cfg.pulse.width, cfg.pulse.amplitude)
    incs = [t for t in cfg.incidence if excites(m, t)]
    for t in cfg.incidence:
        if t not in incs:
            res.skipped.extend(CellKey(body.name, m, t, o[0], o[1]) for o in cfg.observations)
    if not incs:
        res.seconds = time.perf_counter() - t_start
        return res
    excs = [place_pulse(mesh, PlaneWaveExcitation(pulse, t, cfg.polarization)) for t in incs]
    try:
        curs = march_on_in_time_multi(mesh, excs, m, cfg.solver)
    except InstabilityError as exc:
        res.unstable = True
        for t in incs:
            for o in cfg.observations:
                res.failures[CellKey(body.name, m, t, o[0], o[1])] = f"instability: {exc}"
        res.seconds = time.perf_counter() - t_start
        return res
    for cur in curs:
        for o in cfg.observations:
            key = CellKey(body.name, m, cur.excitation.incidence_theta, o[0], o[1])
            if not radiates(m, o[0]):
                res.skipped.append(key)
                continue
            res.responses[key] = far_field(cur, o[0], o[1]).field
    res.seconds = time.perf_counter() - t_start
    return res


def _run_jobs(cfg: ExperimentConfig) -> list[JobResult]:
    jobs = [(b, m) for b in cfg.bodies for m in cfg.m_list]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futs = [pool.submit(_job, cfg, b, m) for b, m in jobs]
            return [f.result() for f in futs]
    return [_job(cfg, b, m) for b, m in jobs]


# ---------------------------------------------------------------- persistence

def write_series_csv(path: str, series: TimeSeries, header: dict) -> None:
    buf = io.StringIO()
    for k in sorted(header):
        buf.write(f"# {k}: {header[k]}\n")
    buf.write(f"# t0: {float(series.t0)!r}\n# dt: {float(series.dt)!r}\n")
    buf.write("t,field\n")
    for t, v in zip(series.times(), series.values):
        buf.write(f"{float(t)!r},{float(v)!r}\n")
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_series_csv(path: str) -> tuple[TimeSeries, dict]:
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                header[k.strip()] = v.strip()
            elif line.startswith("t,"):
                continue
            elif line.strip():
                rows.append(float(line.split(",")[1]))
    return TimeSeries(np.array(rows), float(header["t0"]), float(header["dt"])), header


def _dump(path: str, obj) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True))
        fh.write("\n")


@dataclass
class RunRecord:
    config_hash: str
    root: str
    responses: dict  # slug -> relative path
    fits: dict
    signatures: str
    failures: dict  # slug -> message
    skipped: list
    cells: dict  # slug -> CellKey dict

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "responses": self.responses, "fits": self.fits,
                "signatures": self.signatures, "failures": self.failures, "skipped": self.skipped,
                "cells": self.cells}

    @classmethod
    def load(cls, root: str) -> "RunRecord":
        with open(os.path.join(root, "record.json")) as fh:
            d = json.load(fh)
        return cls(d["config_hash"], root, d["responses"], d["fits"], d["signatures"], d["failures"],
                   d["skipped"], d["cells"])

    def path(self, rel: str) -> str:
        return os.path.join(self.root, rel)

    def config(self) -> ExperimentConfig:
        with open(self.path("config.json")) as fh:
            return ExperimentConfig.from_json(fh.read())

    def signature_library(self) -> SignatureLibrary:
        with open(self.path(self.signatures)) as fh:
            return SignatureLibrary.from_json(fh.read())

    def verify(self) -> None:
        """Check that every referenced file exists and the config hash matches."""
        if self.config().config_hash() != self.config_hash:
            raise ValueError("config hash does not match the stored config")
        for rel in list(self.responses.values()) + list(self.fits.values()) + [self.signatures]:
            if not os.path.exists(self.path(rel)):
                raise ValueError(f"missing artifact {rel}")


def resolve_output_dir(cfg: ExperimentConfig, override: str | None = None) -> str:
    """Output directory: explicit override, else the config path under ``$BORSEM_OUTPUT`` if set."""
    if override:
        return override
    root = os.environ.get(OUTPUT_ENV)
    if root and not os.path.isabs(cfg.output_dir):
        return os.path.join(root, cfg.output_dir)
    return cfg.output_dir


def _prepare_dir(root: str) -> None:
    try:
        os.makedirs(os.path.join(root, "responses"), exist_ok=True)
        os.makedirs(os.path.join(root, "fits"), exist_ok=True)
        probe = os.path.join(root, ".write-test")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise OSError(f"output directory {root!r} is not writable: {exc}") from exc


def _sum_responses(cfg, results):
    """Sum of harmonic responses per (body, incidence, observation); None if a harmonic failed."""
    by_cell: dict = {}
    failed = set()
    for r in results:
        for k in r.responses:
            by_cell.setdefault((k.body, k.incidence, k.obs_theta, k.obs_phi), []).append(r.responses[k])
        for k in r.failures:
            failed.add((k.body, k.incidence, k.obs_theta, k.obs_phi))
    out = {}
    for cell, series in sorted(by_cell.items()):
        key = CellKey(cell[0], "sum", *cell[1:])
        if cell in failed:
            out[key] = None
            continue
        n = min(len(s) for s in series)
        vals = np.sum([s.values[:n] for s in series], axis=0)
        out[key] = TimeSeries(vals, series[0].t0, series[0].dt, {"m": "sum"})
    return out


def run_experiment(cfg: ExperimentConfig, output_dir: str | None = None) -> RunRecord:
    """Solve every sweep cell, extract poles and aggregate signatures.

    Failed cells are recorded in the record and do not stop the sweep.
    """
    root = resolve_output_dir(cfg, output_dir)
    _prepare_dir(root)
    t0 = time.perf_counter()
    results = _run_jobs(cfg)
    timing = {"jobs": {f"{r.body}_m{r.m}": r.seconds for r in results}}

    responses: dict = {}
    failures: dict = {}
    skipped = []
    for r in results:
        responses.update(r.responses)
        failures.update({k: v for k, v in r.failures.items()})
        skipped.extend(r.skipped)
    if cfg.include_sum:
        for k, v in _sum_responses(cfg, results).items():
            if v is None:
                failures[k] = "a contributing harmonic failed"
            else:
                responses[k] = v

    bodies = {b.name: b for b in cfg.bodies}
    rec_resp, rec_fits, cells = {}, {}, {}
    runs: dict = {}
    for key in sorted(responses, key=_sort_key):
        series = responses[key]
        body = bodies[key.body]
        geom = body.geometry()
        a_len = cfg.norm_length(body)
        header = {**{k: v for k, v in key.to_dict().items()}, "quantity": "range-normalised co-polar far field"}
        rel = f"responses/{key.slug}.csv"
        write_series_csv(os.path.join(root, rel), series, header)
        rec_resp[key.slug] = rel
        cells[key.slug] = key.to_dict()
        try:
            ext = extract_poles(series, geom.transit, cfg.pulse.width, cfg.extraction, geom.a)
        except (ValueError, np.linalg.LinAlgError) as exc:
            failures[key] = f"extraction: {exc}"
            continue
        poles = normalize(ext.poles, a_len)
        out = ext.to_dict()
        out["cell"] = key.to_dict()
        out["normalized"] = [{"re": p.value.real, "im": p.value.imag} for p in poles]
        rel = f"fits/{key.slug}.json"
        _dump(os.path.join(root, rel), out)
        rec_fits[key.slug] = rel
        runs.setdefault((key.body, key.m), []).append(poles)

    entries = []
    for (body, m), pole_runs in sorted(runs.items(), key=lambda kv: (kv[0][0], _row_rank(kv[0][1]))):
        entries.append(PoleSignature(body, m, tuple(cluster_and_average(pole_runs, cfg.cluster_radius))))
    lib = SignatureLibrary(tuple(entries), f"run:{cfg.config_hash()}")
    with open(os.path.join(root, "signatures.json"), "w") as fh:
        fh.write(lib.to_json())
        fh.write("\n")
    with open(os.path.join(root, "config.json"), "w") as fh:
        fh.write(cfg.to_json())
        fh.write("\n")
    record = RunRecord(cfg.config_hash(), root, rec_resp, rec_fits, "signatures.json",
                       {k.slug: v for k, v in sorted(failures.items(), key=lambda kv: _sort_key(kv[0]))},
                       sorted(k.slug for k in skipped), cells)
    _dump(os.path.join(root, "record.json"), record.to_dict())
    timing["total"] = time.perf_counter() - t0
    _dump(os.path.join(root, "timing.json"), timing)
    return record


def _row_rank(m):
    return 99 if m == "sum" else int(m)


def _sort_key(k: CellKey):
    return (k.body, _row_rank(k.m), k.incidence, k.obs_theta, k.obs_phi)


def extract_record(record: RunRecord, policy: ExtractionPolicy | None = None) -> RunRecord:
    """Re-run pole extraction (and aggregation) on the stored responses."""
    cfg = record.config()
    policy = policy or cfg.extraction
    bodies = {b.name: b for b in cfg.bodies}
    runs: dict = {}
    fits = {}
    failures = dict(record.failures)
    for slug in sorted(record.responses):
        cell = record.cells[slug]
        body = bodies[cell["body"]]
        geom = body.geometry()
        series, _ = read_series_csv(record.path(record.responses[slug]))
        try:
            ext = extract_poles(series, geom.transit, cfg.pulse.width, policy, geom.a)
        except (ValueError, np.linalg.LinAlgError) as exc:
            failures[slug] = f"extraction: {exc}"
            continue
        failures.pop(slug, None)
        poles = normalize(ext.poles, cfg.norm_length(body))
        out = ext.to_dict()
        out["cell"] = cell
        out["normalized"] = [{"re": p.value.real, "im": p.value.imag} for p in poles]
        rel = f"fits/{slug}.json"
        _dump(record.path(rel), out)
        fits[slug] = rel
        runs.setdefault((cell["body"], cell["m"]), []).append(poles)
    record = RunRecord(record.config_hash, record.root, record.responses, fits, record.signatures, failures,
                       record.skipped, record.cells)
    aggregate(record, cfg.cluster_radius, runs)
    _dump(record.path("record.json"), record.to_dict())
    return record


def aggregate(record: RunRecord, radius: float | None = None, runs: dict | None = None) -> SignatureLibrary:
    """Cluster the per-cell normalised poles into signatures and store them."""
    cfg = record.config()
    radius = cfg.cluster_radius if radius is None else radius
    if runs is None:
        runs = {}
        for slug, rel in sorted(record.fits.items()):
            with open(record.path(rel)) as fh:
                d = json.load(fh)
            poles = [complex(p["re"], p["im"]) for p in d["normalized"]]
            runs.setdefault((d["cell"]["body"], d["cell"]["m"]), []).append(poles)
    entries = [PoleSignature(body, m, tuple(cluster_and_average(r, radius)))
               for (body, m), r in sorted(runs.items(), key=lambda kv: (kv[0][0], _row_rank(kv[0][1])))]
    lib = SignatureLibrary(tuple(entries), f"run:{record.config_hash}")
    with open(record.path(record.signatures), "w") as fh:
        fh.write(lib.to_json())
        fh.write("\n")
    return lib


# ---------------------------------------------------------------- tables and plots

def format_table(lib: SignatureLibrary, bodies=None, rows=ROW_ORDER, decimals: int = 2):
    """Eigenfrequency text table and a full-precision CSV of a signature library."""
    bodies = list(bodies) if bodies is not None else (
        [b for b in BODY_ORDER if b in lib.bodies] + [b for b in lib.bodies if b not in BODY_ORDER])
    cells = {}
    for r in rows:
        for b in bodies:
            try:
                cells[(r, b)] = [p.value for p in lib.get(b, r).poles]
            except KeyError:
                cells[(r, b)] = []
    width = max([len(b) for b in bodies] + [16])
    head = "m".ljust(6) + "".join(b.ljust(width + 2) for b in bodies)
    lines = [head.rstrip(), "-" * len(head.rstrip())]
    for r in rows:
        label = "sum" if r == "sum" else str(r)
        depth = max(1, max(len(cells[(r, b)]) for b in bodies))
        for i in range(depth):
            parts = []
            for b in bodies:
                vals = cells[(r, b)]
                if not vals:
                    txt = "—" if i == 0 else ""
                else:
                    txt = format_pole(vals[i], decimals) if i < len(vals) else ""
                parts.append(txt.ljust(width + 2))
            lines.append(((label if i == 0 else "").ljust(6) + "".join(parts)).rstrip())
    text = "\n".join(lines) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "body", "rank", "re", "im", "spread_re", "spread_im", "support", "text"])
    for r in rows:
        for b in bodies:
            try:
                poles = lib.get(b, r).poles
            except KeyError:
                poles = ()
            if not poles:
                w.writerow([r, b, "", "", "", "", "", "", "—"])
            for i, p in enumerate(poles):
                w.writerow([r, b, i + 1, repr(p.value.real), repr(p.value.imag), repr(p.spread.real),
                            repr(p.spread.imag), p.support, format_pole(p.value, decimals)])
    return text, buf.getvalue()


def emit_table(record: RunRecord, rows=None):
    cfg = record.config()
    rows = rows or tuple(list(cfg.m_list) + (["sum"] if cfg.include_sum else []))
    text, table_csv = format_table(record.signature_library(), [b.name for b in cfg.bodies], rows)
    with open(record.path("table.txt"), "w") as fh:
        fh.write(text)
    with open(record.path("table.csv"), "w") as fh:
        fh.write(table_csv)
    return text, table_csv


def log_envelope(series: TimeSeries) -> np.ndarray:
    """Natural log of the analytic-signal envelope (-inf where it vanishes)."""
    env = np.abs(scipy.signal.hilbert(np.asarray(series.values, dtype=float)))
    with np.errstate(divide="ignore"):
        return np.log(env)


def noise_floor(series: TimeSeries, tail_fraction: float = 0.25) -> float:
    """RMS of the final ``tail_fraction`` of the record."""
    x = np.asarray(series.values, dtype=float)
    k = max(1, int(len(x) * tail_fraction))
    return float(np.sqrt(np.mean(x[-k:] ** 2)))


def envelope_slope(series: TimeSeries, t_start: float, t_stop: float | None = None,
                   floor_factor: float = 10.0) -> tuple[float, float]:
    """Least-squares slope of the log envelope, and the fit end time.

    Without ``t_stop`` the fit runs until the envelope first drops below
    ``floor_factor`` times the record's tail RMS, so the residual floor does
    not flatten the estimate.
    """
    t = series.times()
    le = log_envelope(series)
    if t_stop is None:
        level = math.log(floor_factor * noise_floor(series)) if noise_floor(series) > 0 else -math.inf
        below = np.flatnonzero((t >= t_start) & (le < level))
        t_stop = float(t[below[0]]) if len(below) else float(t[-1])
    sel = (t >= t_start) & (t <= t_stop) & np.isfinite(le)
    if sel.sum() < 2:
        raise ValueError("envelope window holds fewer than two samples")
    return float(np.polyfit(t[sel], le[sel], 1)[0]), t_stop


def emit_plot_data(record: RunRecord) -> dict:
    """Time-trace, log-envelope and pole-scatter CSVs under ``plots/``."""
    base = record.path("plots")
    os.makedirs(os.path.join(base, "traces"), exist_ok=True)
    os.makedirs(os.path.join(base, "envelopes"), exist_ok=True)
    written = {"traces": [], "envelopes": [], "scatter": "plots/pole_scatter.csv",
               "slopes": "plots/envelope_slopes.csv"}
    cfg = record.config()
    bodies = {b.name: b for b in cfg.bodies}
    slopes = ["response,t_start,t_stop,slope,slope_normalized"]
    for slug in sorted(record.responses):
        series, _ = read_series_csv(record.path(record.responses[slug]))
        t = series.times()
        le = log_envelope(series)
        rel = f"plots/traces/{slug}.csv"
        with open(record.path(rel), "w") as fh:
            fh.write("t,field\n")
            fh.writelines(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(t, series.values))
        written["traces"].append(rel)
        rel = f"plots/envelopes/{slug}.csv"
        with open(record.path(rel), "w") as fh:
            fh.write("t,log_envelope\n")
            fh.writelines(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(t, le))
        written["envelopes"].append(rel)
        body = bodies[record.cells[slug]["body"]]
        t_start = pulse_exit_time(cfg.pulse.width, body.geometry().transit)
        try:
            k, t_stop = envelope_slope(series, t_start)
        except ValueError:
            continue
        a_len = cfg.norm_length(body)
        slopes.append(f"{slug},{float(t_start)!r},{float(t_stop)!r},{k!r},{k * a_len!r}")
    with open(record.path(written["slopes"]), "w") as fh:
        fh.write("\n".join(slopes) + "\n")
    lib = record.signature_library()
    with open(record.path(written["scatter"]), "w") as fh:
        fh.write("body,m,re,im,spread_re,spread_im,support\n")
        for e in lib.entries:
            for p in e.poles:
                fh.write(f"{e.body_label},{e.m},{p.value.real!r},{p.value.imag!r},"
                         f"{p.spread.real!r},{p.spread.imag!r},{p.support}\n")
    return written


# ---------------------------------------------------------------- sphere check

SPHERE_POLE = complex(-0.5, math.sqrt(3.0) / 2.0)  # root of s^2 + s + 1, units c/radius


def dominant_poles(record: RunRecord) -> dict:
    """Normalised pole of largest amplitude per fitted cell."""
    cfg = record.config()
    bodies = {b.name: b for b in cfg.bodies}
    out = {}
    for slug, rel in sorted(record.fits.items()):
        with open(record.path(rel)) as fh:
            d = json.load(fh)
        if not d["poles"]:
            continue
        best = max(d["poles"], key=lambda p: abs(complex(p["re_A"], p["im_A"])))
        g = complex(best["re_gamma"], abs(best["im_gamma"])) * cfg.norm_length(bodies[d["cell"]["body"]])
        out[slug] = g
    return out


def sphere_check(record: RunRecord, tolerance: float = 0.10) -> tuple[bool, dict]:
    """Relative error of each cell's dominant pole against the exact sphere pole."""
    errs = {slug: abs(g - SPHERE_POLE) / abs(SPHERE_POLE) for slug, g in dominant_poles(record).items()}
    return bool(errs) and all(e <= tolerance for e in errs.values()), errs
