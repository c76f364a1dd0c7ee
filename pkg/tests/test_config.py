import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from borsem.config import (PRESETS, BodySpec, ExperimentConfig, ExtractionPolicy, PulseSpec, apply_overrides,
                           load_config, load_preset)
from borsem.solver.mot import SolverConfig


def small_config(**kw):
    base = dict(bodies=(BodySpec("cylinder"),), pulse=PulseSpec(0.2), m_list=(0,), incidence=(0.5,),
                observations=((1.0, 0.0),))
    base.update(kw)
    return ExperimentConfig(**base)


angles = st.lists(st.floats(0, math.pi), min_size=1, max_size=4)


@given(
    st.sampled_from(["cone", "truncated_cone", "cylinder", "sphere"]),
    st.floats(0.5, 3.0),
    st.floats(0.05, 1.0),
    st.lists(st.integers(0, 5), min_size=1, max_size=4),
    angles,
    st.lists(st.tuples(st.floats(0, math.pi), st.floats(-math.pi, math.pi)), min_size=1, max_size=3),
    st.floats(8, 64),
    st.sampled_from(["a", "radius"]),
    st.booleans(),
)
def test_config_round_trip(kind, a, width, ms, incs, obs, density, norm, filt):
    cfg = ExperimentConfig(
        bodies=(BodySpec(kind, a),), pulse=PulseSpec(width), m_list=tuple(ms), incidence=tuple(incs),
        observations=tuple(obs), solver=SolverConfig(density=density, stabilization=filt), normalization=norm,
    )
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()


def test_hash_ignores_output_dir_and_workers():
    cfg = small_config()
    assert apply_overrides(cfg, ["output_dir=elsewhere", "workers=4"]).config_hash() == cfg.config_hash()
    assert apply_overrides(cfg, ["pulse.width=0.3"]).config_hash() != cfg.config_hash()


def test_overrides_dotted_and_indexed():
    cfg = small_config()
    out = apply_overrides(cfg, ["solver.density=16", "bodies.0.a=2", "m_list=[0,1]", "name=trial"])
    assert out.solver.density == 16
    assert out.bodies[0].a == 2
    assert out.m_list == (0, 1)
    assert out.name == "trial"


@pytest.mark.parametrize("item", ["solver.nope=1", "density=3", "no-equals-sign"])
def test_overrides_reject_unknown(item):
    with pytest.raises((ValueError, KeyError)):
        apply_overrides(small_config(), [item])


def test_overrides_validate_values():
    with pytest.raises(ValueError):
        apply_overrides(small_config(), ["solver.courant=1.5"])
    with pytest.raises(ValueError):
        apply_overrides(small_config(), ["pulse.width=-1"])


@pytest.mark.parametrize("kw", [
    dict(m_list=()), dict(incidence=()), dict(observations=()), dict(m_list=(-1,)),
    dict(incidence=(4.0,)), dict(observations=((4.0, 0.0),)), dict(polarization="x"),
    dict(normalization="diameter"), dict(cluster_radius=0.0), dict(workers=0),
    dict(bodies=(BodySpec("cone"), BodySpec("cone"))),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        small_config(**kw)


def test_unknown_keys_rejected():
    d = json.loads(small_config().to_json())
    d["colour"] = "blue"
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(d)


def test_extraction_policy_validation():
    for kw in (dict(guard=-1), dict(max_order=0), dict(svd_threshold=0), dict(target_dt=0),
               dict(prediction_fraction=0.6), dict(max_quality=0)):
        with pytest.raises(ValueError):
            ExtractionPolicy(**kw)


def test_body_spec_validation():
    with pytest.raises(ValueError):
        BodySpec("torus")
    with pytest.raises(ValueError):
        BodySpec("cylinder", a=-1)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load_and_round_trip(name):
    cfg = load_preset(name)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    assert load_config(name) == cfg


def test_bodies_preset_contents():
    cfg = load_preset("paper-bodies")
    assert [b.kind for b in cfg.bodies] == ["cone", "truncated_cone", "cylinder"]
    assert cfg.m_list == (0, 1, 2, 3) and cfg.include_sum
    assert [round(math.degrees(t)) for t in cfg.incidence] == [0, 30, 60, 90]
    assert cfg.solver.density == 32 and cfg.solver.courant == 0.8


def test_sphere_preset_contents():
    cfg = load_preset("sphere-oracle")
    assert cfg.bodies[0].kind == "sphere"
    assert cfg.m_list == (1,) and cfg.incidence == (0.0,) and cfg.observations == ((0.0, 0.0),)
    assert cfg.normalization == "radius"
    assert cfg.norm_length(cfg.bodies[0]) == pytest.approx(0.5 * cfg.bodies[0].a)


def test_load_config_from_file(tmp_path):
    cfg = small_config()
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    assert load_config(str(p)) == cfg
    with pytest.raises(ValueError):
        load_preset("nonexistent")
