"""Experiment configuration: dataclasses with a JSON round trip and dotted overrides."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources

from .geometry import DEFAULT_RATIOS, make_body
from .solver.mot import SolverConfig

NORMALIZATIONS = ("a", "radius")


@dataclass(frozen=True)
class BodySpec:
    kind: str
    a: float = 1.0
    ratio_aL: float | None = None
    flare_deg: float | None = None
    label: str | None = None

    def __post_init__(self):
        if self.kind != "sphere" and self.ratio_aL is None and self.flare_deg is None:
            if self.kind not in DEFAULT_RATIOS:
                raise ValueError(f"unknown body kind {self.kind!r}")
        self.geometry()  # validates

    @property
    def name(self) -> str:
        return self.label or self.kind

    def geometry(self):
        return make_body(self.kind, self.a, self.ratio_aL, self.flare_deg)


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian pulse width T (1/e half-width, time units of length/c) and amplitude."""

    width: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("pulse width must be positive")


@dataclass(frozen=True)
class ExtractionPolicy:
    """Late-time Prony settings.

    Parameters
    ----------
    guard : float
        Body transits waited after the pulse has left the body.
    max_order : int
        Upper bound for the Hankel-rank order estimate.
    svd_threshold : float
        Relative singular-value threshold of the order estimate.
    target_dt : float
        Sample spacing (in units of a/c) the window is decimated to.
    window_duration : float, optional
        Window length in units of a/c; default to the end of the record.
    prediction_fraction : float
        Prediction filter length as a fraction of the window length.
    stability_tol : float
        Relative pole movement tolerated between the two fitted orders.
    min_relative_amplitude : float
        Poles whose amplitude at the window start is below this fraction of
        the largest one are not reported.
    max_quality : float, optional
        Poles with |Im| / |Re| above this are not reported.  Interior
        cavity resonances of the closed body are undamped in the exact
        integral equation and surface with a small numerical damping; this
        cut removes them.  ``None`` keeps everything.
    """

    guard: float = 1.0
    max_order: int = 20
    svd_threshold: float = 1e-3
    target_dt: float = 0.1
    window_duration: float | None = None
    prediction_fraction: float = 1.0 / 3.0
    stability_tol: float = 0.05
    min_relative_amplitude: float = 0.01
    max_quality: float | None = 25.0

    def __post_init__(self):
        if self.guard < 0 or self.max_order < 1 or not 0 < self.svd_threshold < 1:
            raise ValueError("invalid extraction policy")
        if not self.target_dt > 0 or not 0 < self.prediction_fraction < 0.5:
            raise ValueError("invalid extraction policy")
        if self.max_quality is not None and not self.max_quality > 0:
            raise ValueError("max_quality must be positive")


def _angles(values):
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep over bodies, harmonics, incidence and observation angles.

    Angles are in radians; observations are (theta, phi) pairs.  Poles are
    normalised by the body size ``a`` or, with ``normalization="radius"``,
    by a/2.
    """

    bodies: tuple
    pulse: PulseSpec
    solver: SolverConfig = SolverConfig()
    m_list: tuple = (0, 1, 2, 3)
    include_sum: bool = True
    incidence: tuple = (0.0,)
    observations: tuple = ((0.0, 0.0),)
    polarization: str = "theta"
    extraction: ExtractionPolicy = ExtractionPolicy()
    cluster_radius: float = 0.25
    normalization: str = "a"
    output_dir: str = "runs/default"
    seed: int = 0
    workers: int = 1
    name: str = "experiment"

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(self, "m_list", tuple(int(m) for m in self.m_list))
        object.__setattr__(self, "incidence", _angles(self.incidence))
        object.__setattr__(self, "observations", tuple(tuple(float(v) for v in o) for o in self.observations))
        if not self.bodies or not self.m_list or not self.incidence or not self.observations:
            raise ValueError("bodies, m_list, incidence and observations must be non-empty")
        if any(m < 0 for m in self.m_list):
            raise ValueError("harmonic indices must be non-negative")
        if any(not 0 <= t <= math.pi for t in self.incidence):
            raise ValueError("incidence angles must lie in [0, pi]")
        if any(len(o) != 2 or not 0 <= o[0] <= math.pi for o in self.observations):
            raise ValueError("observations must be (theta, phi) pairs with theta in [0, pi]")
        if self.polarization not in ("theta", "phi"):
            raise ValueError("polarization must be 'theta' or 'phi'")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.cluster_radius <= 0 or self.workers < 1:
            raise ValueError("cluster_radius must be positive and workers >= 1")
        names = [b.name for b in self.bodies]
        if len(set(names)) != len(names):
            raise ValueError("body labels must be unique")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["bodies"] = tuple(BodySpec(**b) for b in d["bodies"])
        d["pulse"] = PulseSpec(**d["pulse"])
        if "solver" in d:
            s = dict(d["solver"])
            if "filter_weights" in s:
                s["filter_weights"] = tuple(s["filter_weights"])
            d["solver"] = SolverConfig(**s)
        if "extraction" in d:
            d["extraction"] = ExtractionPolicy(**d["extraction"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON, ignoring where outputs go and the worker count."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def norm_length(self, body: BodySpec) -> float:
        a = body.geometry().a
        return a if self.normalization == "a" else 0.5 * a


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply ``dotted.path=value`` overrides; values parse as JSON when possible.

    List entries are addressed by index, e.g. ``bodies.0.a=2``.
    """
    d = json.loads(cfg.to_json())
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form path=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node = d
        for k in keys[:-1]:
            node = node[int(k)] if isinstance(node, list) else node[k]
        last = keys[-1]
        if isinstance(node, list):
            node[int(last)] = _coerce(raw)
        else:
            if last not in node:
                raise ValueError(f"unknown config field {path!r}")
            node[last] = _coerce(raw)
    return ExperimentConfig.from_dict(d)


PRESETS = ("paper-bodies", "sphere-oracle")


def load_preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("borsem.presets").joinpath(f"{name}.json").read_text()
    return ExperimentConfig.from_json(text)


def load_config(source: str) -> ExperimentConfig:
    """A preset name or a path to a JSON config."""
    if source in PRESETS:
        return load_preset(source)
    with open(source) as fh:
        return ExperimentConfig.from_json(fh.read())
