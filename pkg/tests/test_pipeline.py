import csv
import filecmp
import io
import json
import math
import os
from decimal import Decimal
from importlib import resources

import numpy as np
import pytest

from borsem import pipeline
from borsem.config import apply_overrides, load_preset
from borsem.excitation import TimeSeries
from borsem.pipeline import (CellKey, RunRecord, emit_plot_data, emit_table, excites, extract_record, format_table,
                             radiates, read_series_csv, resolve_output_dir, run_experiment, write_series_csv)
from borsem.signatures import PoleSignature, SignatureLibrary, reference_library
from borsem.solver.mot import InstabilityError

TINY = apply_overrides(load_preset("sphere-oracle"), ["solver.density=12", "solver.duration=20"])
THREE = apply_overrides(load_preset("paper-bodies"), [
    "solver.density=12", "solver.duration=20", "m_list=[0,1]", f"incidence=[{math.pi / 6}]",
    f"observations=[[{math.pi / 3},0]]",
])


@pytest.fixture(scope="module")
def tiny_record(tmp_path_factory):
    return run_experiment(TINY, str(tmp_path_factory.mktemp("tiny")))


@pytest.fixture(scope="module")
def three_record(tmp_path_factory):
    return run_experiment(THREE, str(tmp_path_factory.mktemp("three")))


def tree(root):
    """Relative paths of every file under ``root``."""
    out = []
    for d, _, files in os.walk(root):
        out.extend(os.path.relpath(os.path.join(d, f), root) for f in files)
    return sorted(out)


def assert_same_artifacts(a, b, skip=("timing.json",)):
    assert tree(a) == tree(b)
    for rel in tree(a):
        if rel in skip:
            continue
        assert filecmp.cmp(os.path.join(a, rel), os.path.join(b, rel), shallow=False), rel


# ---------------------------------------------------------------- sweep

def test_single_cell_record(tiny_record):
    assert len(tiny_record.responses) == 1 and len(tiny_record.fits) == 1
    assert not tiny_record.failures and not tiny_record.skipped
    tiny_record.verify()
    loaded = RunRecord.load(tiny_record.root)
    assert loaded.to_dict() == tiny_record.to_dict()
    assert loaded.config() == TINY
    assert json.load(open(loaded.path("timing.json")))["total"] > 0


def test_single_cell_finds_sphere_pole(tiny_record):
    ok, errs = pipeline.sphere_check(tiny_record)
    assert ok, errs


def test_sum_row_is_sum_of_harmonics(three_record):
    for body in ("cone", "truncated_cone", "cylinder"):
        slugs = {m: CellKey(body, m, math.pi / 6, math.pi / 3, 0.0).slug for m in (0, 1, "sum")}
        series = {m: read_series_csv(three_record.path(three_record.responses[s]))[0] for m, s in slugs.items()}
        np.testing.assert_array_equal(series["sum"].values, series[0].values + series[1].values)
        assert series["sum"].t0 == series[0].t0 == series[1].t0


def test_repeat_runs_are_byte_identical(three_record, tmp_path):
    again = run_experiment(THREE, str(tmp_path / "again"))
    assert_same_artifacts(three_record.root, again.root)


def test_worker_pool_gives_identical_artifacts(three_record, tmp_path):
    par = run_experiment(apply_overrides(THREE, ["workers=2"]), str(tmp_path / "par"))
    # the stored config records the worker count; its hash does not
    assert_same_artifacts(three_record.root, par.root, skip=("timing.json", "config.json"))


def test_failed_cell_leaves_others_untouched(three_record, tmp_path, monkeypatch):
    real = pipeline.march_on_in_time_multi

    def flaky(mesh, excs, m, cfg, **kw):
        if mesh.geometry.kind == "cylinder" and m == 1:
            raise InstabilityError("forced")
        return real(mesh, excs, m, cfg, **kw)

    monkeypatch.setattr(pipeline, "march_on_in_time_multi", flaky)
    rec = run_experiment(THREE, str(tmp_path / "flaky"))
    failed = set(rec.failures)
    assert CellKey("cylinder", 1, math.pi / 6, math.pi / 3, 0.0).slug in failed
    assert CellKey("cylinder", "sum", math.pi / 6, math.pi / 3, 0.0).slug in failed
    assert all(s.startswith("cylinder") for s in failed)
    for slug, rel in rec.responses.items():
        assert filecmp.cmp(rec.path(rel), three_record.path(three_record.responses[slug]), shallow=False)
    for slug, rel in rec.fits.items():
        assert filecmp.cmp(rec.path(rel), three_record.path(three_record.fits[slug]), shallow=False)


def test_selection_rules():
    assert excites(1, 0.0) and not excites(0, 0.0) and not excites(2, math.pi)
    assert excites(0, 0.3) and excites(3, math.pi / 2)
    assert radiates(1, 0.0) and not radiates(2, 0.0) and radiates(2, 1.0)


def test_skipped_cells_recorded(tmp_path):
    cfg = apply_overrides(TINY, ["m_list=[0,1]"])
    rec = run_experiment(cfg, str(tmp_path))
    assert rec.skipped == [CellKey("sphere", 0, 0.0, 0.0, 0.0).slug]
    assert len(rec.responses) == 1 and not rec.failures


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        run_experiment(TINY, str(blocker / "run"))


def test_output_root_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(pipeline.OUTPUT_ENV, str(tmp_path))
    assert resolve_output_dir(TINY) == os.path.join(str(tmp_path), TINY.output_dir)
    assert resolve_output_dir(TINY, "explicit") == "explicit"
    monkeypatch.delenv(pipeline.OUTPUT_ENV)
    assert resolve_output_dir(TINY) == TINY.output_dir


def test_series_csv_round_trip(tmp_path):
    s = TimeSeries(np.array([0.0, 1.0 / 3.0, -2.5e-17, 7.0]), -1.25, 0.1)
    p = str(tmp_path / "s.csv")
    write_series_csv(p, s, {"body": "cone", "m": 0})
    back, header = read_series_csv(p)
    np.testing.assert_array_equal(back.values, s.values)
    rows = [line for line in open(p) if not line.startswith("#")][1:]
    t = np.array([float(line.split(",")[0]) for line in rows])
    np.testing.assert_array_equal(t, s.times())
    assert (back.t0, back.dt) == (s.t0, s.dt)
    assert header["body"] == "cone" and header["m"] == "0"


def test_reextraction_is_idempotent(three_record, tmp_path):
    import shutil

    root = str(tmp_path / "copy")
    shutil.copytree(three_record.root, root)
    extract_record(RunRecord.load(root))
    assert_same_artifacts(three_record.root, root)


def test_slug_is_readable():
    assert CellKey("cone", "sum", 0.0, math.pi / 2, 0.0).slug == "cone_msum_inc0_obs90_0"


# ---------------------------------------------------------------- tables

def library_record(root, lib=None):
    """A run directory whose signatures are ``lib`` (default: the bundled table)."""
    lib = lib or reference_library()
    cfg = load_preset("paper-bodies")
    os.makedirs(root, exist_ok=True)
    with open(os.path.join(root, "config.json"), "w") as fh:
        fh.write(cfg.to_json())
    with open(os.path.join(root, "signatures.json"), "w") as fh:
        fh.write(lib.to_json())
    return RunRecord(cfg.config_hash(), root, {}, {}, "signatures.json", {}, [], {})


def table_cells(text):
    """Parse the text table back into {(row, body): [cell strings]}."""
    lines = text.splitlines()
    head = lines[0]
    bodies = head.split()[1:]
    starts = [head.index(b) for b in bodies] + [None]
    cells, row = {}, None
    for line in lines[2:]:
        if line[:6].strip():
            row = line[:6].strip()
        for b, lo, hi in zip(bodies, starts, starts[1:]):
            txt = line[lo:hi].strip()
            if txt:
                cells.setdefault((row, b), []).append(txt)
    return cells


def expected_text(re, im):
    """Table entry from the stored decimal strings, padded to two places."""
    q = Decimal("0.01")
    return f"−{abs(Decimal(re)).quantize(q)} ± i{Decimal(im).quantize(q)}"


def test_table_round_trips_bundled_values(tmp_path):
    raw = json.loads(resources.files("borsem.data").joinpath("reference_table.json").read_text())["bodies"]
    text, table_csv = emit_table(library_record(str(tmp_path)))
    cells = table_cells(text)
    rows = list(csv.DictReader(io.StringIO(table_csv)))
    for body, by_m in raw.items():
        for m, poles in by_m.items():
            assert cells[(m, body)] == [expected_text(re, im) for re, im in poles]
            got = [(float(r["re"]), float(r["im"])) for r in rows if r["body"] == body and r["m"] == m]
            assert got == [(float(re), float(im)) for re, im in poles]
    assert open(tmp_path / "table.txt").read() == text


def test_table_marks_gaps(tmp_path):
    lib = SignatureLibrary((PoleSignature.from_values("cylinder", 0, [complex(-0.333, 0.618)]),
                            PoleSignature("cone", 0, ())))
    text, table_csv = format_table(lib, ["cone", "cylinder"], rows=(0, 1))
    cells = table_cells(text)
    assert cells[("0", "cylinder")] == ["−0.33 ± i0.62"]
    assert cells[("0", "cone")] == ["—"] and cells[("1", "cylinder")] == ["—"]
    assert "1,cone,,,,,,,—" in table_csv


# ---------------------------------------------------------------- plot data

def test_plot_data_traces(tiny_record):
    written = emit_plot_data(tiny_record)
    (slug,) = tiny_record.responses
    series, _ = read_series_csv(tiny_record.path(tiny_record.responses[slug]))
    trace = np.loadtxt(tiny_record.path(written["traces"][0]), delimiter=",", skiprows=1)
    assert trace.shape == (len(series), 2)
    np.testing.assert_array_equal(trace[:, 1], series.values)
    env = np.loadtxt(tiny_record.path(written["envelopes"][0]), delimiter=",", skiprows=1)
    assert env.shape == (len(series), 2)


def test_pole_scatter_has_three_groups(tmp_path):
    rec = library_record(str(tmp_path))
    written = emit_plot_data(rec)
    rows = list(csv.DictReader(open(rec.path(written["scatter"]))))
    assert {r["body"] for r in rows} == {"cone", "truncated_cone", "cylinder"}
    assert len(rows) == sum(len(e) for e in reference_library().entries)


@pytest.mark.slow
def test_sphere_envelope_slope(sphere_record):
    written = emit_plot_data(sphere_record)
    rows = list(csv.DictReader(open(sphere_record.path(written["slopes"]))))
    (row,) = rows
    assert float(row["slope_normalized"]) == pytest.approx(-0.5, rel=0.15)
