"""Normalised pole signatures: averaging over angle sweeps and classification."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.optimize import linear_sum_assignment

log = logging.getLogger(__name__)

BODY_ORDER = ("cone", "truncated_cone", "cylinder")
ROW_ORDER = (0, 1, 2, 3, "sum")


@dataclass(frozen=True)
class NormalizedPole:
    """Pole in units of c/a, stored with Im >= 0 (the conjugate is implicit)."""

    value: complex
    spread: complex = 0j
    support: int = 1

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))
        object.__setattr__(self, "spread", complex(self.spread))
        if self.value.imag < 0:
            raise ValueError("normalised poles are stored with Im >= 0")


def _row_key(m):
    return "sum" if m == "sum" else int(m)


@dataclass(frozen=True)
class PoleSignature:
    body_label: str
    m: object
    poles: tuple

    def __post_init__(self):
        object.__setattr__(self, "m", _row_key(self.m))
        poles = tuple(sorted(self.poles, key=lambda p: (p.value.imag, p.value.real)))
        object.__setattr__(self, "poles", poles)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.poles], dtype=complex)

    def __len__(self):
        return len(self.poles)

    @classmethod
    def from_values(cls, label, m, values) -> "PoleSignature":
        return cls(label, m, tuple(NormalizedPole(complex(v)) for v in values))

    def to_dict(self) -> dict:
        return {
            "body": self.body_label,
            "m": self.m,
            "poles": [
                {"re": p.value.real, "im": p.value.imag, "spread_re": p.spread.real,
                 "spread_im": p.spread.imag, "support": p.support}
                for p in self.poles
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoleSignature":
        poles = tuple(
            NormalizedPole(complex(p["re"], p["im"]), complex(p.get("spread_re", 0.0), p.get("spread_im", 0.0)),
                           int(p.get("support", 1)))
            for p in d["poles"]
        )
        return cls(d["body"], d["m"], poles)


@dataclass(frozen=True)
class SignatureLibrary:
    entries: tuple
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        keys = [(e.body_label, e.m) for e in self.entries]
        if len(set(keys)) != len(keys):
            raise ValueError("library labels must be unique per (body, m)")

    def get(self, body: str, m) -> PoleSignature:
        m = _row_key(m)
        for e in self.entries:
            if e.body_label == body and e.m == m:
                return e
        raise KeyError((body, m))

    def for_m(self, m) -> list[PoleSignature]:
        m = _row_key(m)
        return [e for e in self.entries if e.m == m]

    @property
    def bodies(self) -> list[str]:
        seen = []
        for e in self.entries:
            if e.body_label not in seen:
                seen.append(e.body_label)
        return seen

    def to_json(self) -> str:
        return json.dumps({"provenance": self.provenance, "entries": [e.to_dict() for e in self.entries]},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SignatureLibrary":
        d = json.loads(text)
        if "bodies" in d:
            return _from_table(d)
        return cls(tuple(PoleSignature.from_dict(e) for e in d["entries"]), d.get("provenance", ""))


def _from_table(d: dict) -> SignatureLibrary:
    entries = []
    for body, rows in d["bodies"].items():
        for m, poles in rows.items():
            entries.append(PoleSignature.from_values(body, m, [complex(float(re), float(im)) for re, im in poles]))
    return SignatureLibrary(tuple(entries), d.get("provenance", ""))


def reference_library() -> SignatureLibrary:
    """The bundled reference table (provenance ``paper_table``)."""
    text = resources.files("borsem.data").joinpath("reference_table.json").read_text()
    return SignatureLibrary.from_json(text)


def normalize(terms, a: float, c: float = 1.0) -> list[NormalizedPole]:
    """Scale poles to ``gamma a / c``, one entry per conjugate pair.

    Growing poles (Re > 0) are logged and dropped; so are undamped ones,
    which cannot be normalised resonances of an open exterior problem.
    """
    if not (a > 0 and c > 0):
        raise ValueError("a and c must be positive")
    vals = []
    for t in terms:
        g = complex(getattr(t, "gamma", t)) * a / c
        if g.real >= 0:
            log.info("dropping non-decaying pole %s", g)
            continue
        vals.append(g)
    out: list[complex] = []
    lower = [v for v in vals if v.imag < 0]
    for v in vals:
        if v.imag >= 0:
            out.append(v)
    for v in lower:
        # a lower-half pole without an upper partner still names a resonance
        if not any(abs(u - v.conjugate()) <= 1e-9 * max(1.0, abs(v)) for u in out):
            out.append(v.conjugate())
    out.sort(key=lambda v: (v.imag, v.real))
    return [NormalizedPole(v) for v in out]


def cluster_and_average(runs, radius: float = 0.25, min_support: int | None = None) -> list[NormalizedPole]:
    """Greedy agglomerative clustering of pole sets from several runs.

    The two clusters with the closest centroids merge while that distance is
    at most ``radius``.  Every cluster reports its mean, componentwise
    population standard deviation and the number of runs contributing.
    Clusters supported by fewer than ``min_support`` runs (default: half the
    runs, rounded up) are dropped.
    """
    runs = [list(r) for r in runs]
    if not runs:
        raise ValueError("need at least one run")
    if min_support is None:
        min_support = math.ceil(len(runs) / 2)
    pts, owner = [], []
    for i, r in enumerate(runs):
        for p in r:
            pts.append(complex(getattr(p, "value", p)))
            owner.append(i)
    if not pts:
        return []
    # canonical order makes the result independent of run and pole order
    order = sorted(range(len(pts)), key=lambda k: (pts[k].imag, pts[k].real, owner[k]))
    members = [[k] for k in order]
    cents = [pts[k] for k in order]
    while len(members) > 1:
        c = np.array(cents)
        d = np.abs(c[:, None] - c[None, :])
        np.fill_diagonal(d, np.inf)
        i, j = np.unravel_index(np.argmin(d), d.shape)
        if d[i, j] > radius:
            break
        i, j = min(i, j), max(i, j)
        members[i] = members[i] + members[j]
        cents[i] = complex(np.mean([pts[k] for k in members[i]]))
        del members[j], cents[j]
    out = []
    for mem, cen in zip(members, cents):
        support = len({owner[k] for k in mem})
        if support < min_support:
            continue
        v = np.array([pts[k] for k in mem])
        out.append(NormalizedPole(complex(cen.real, max(cen.imag, 0.0)),
                                  complex(float(np.std(v.real)), float(np.std(v.imag))), support))
    out.sort(key=lambda p: (p.value.imag, p.value.real))
    return out


@dataclass(frozen=True)
class DistanceWeights:
    """Weights of the signature distance.

    ``im_by_rank`` overrides the Im weight for the pole at that position
    (0-based, in increasing Im) of either signature; a matched pair uses
    the mean of its two poles' weights.
    """

    re: float = 1.0
    im: float = 4.0
    unmatched: float = 1.0
    im_by_rank: dict = field(default_factory=dict)

    def im_weight(self, rank: int) -> float:
        return float(self.im_by_rank.get(rank, self.im))

    def without_ranks(self, ranks) -> "DistanceWeights":
        d = dict(self.im_by_rank)
        d.update({int(r): 0.0 for r in ranks})
        return DistanceWeights(self.re, self.im, self.unmatched, d)


def _pair_terms(v1, v2, w: DistanceWeights):
    """Matching of v2 onto v1 by nearest Im; per-pair components."""
    cost = np.abs(v1.imag[:, None] - v2.imag[None, :]) + 1e-9 * np.abs(v1.real[:, None] - v2.real[None, :])
    rows, cols = linear_sum_assignment(cost)
    terms = []
    for i, j in zip(rows, cols):
        wi = 0.5 * (w.im_weight(i) + w.im_weight(j))
        terms.append((i, j, w.re * abs(v1[i].real - v2[j].real), wi * abs(v1[i].imag - v2[j].imag)))
    return terms


def distance_components(s1: PoleSignature, s2: PoleSignature, weights: DistanceWeights = DistanceWeights()):
    """Per-pair (rank1, rank2, re_part, im_part) contributions and the unmatched count."""
    v1, v2 = s1.values, s2.values
    if len(v1) == 0 or len(v2) == 0:
        raise ValueError("signatures must be non-empty")
    terms = _pair_terms(v1, v2, weights)
    return terms, abs(len(v1) - len(v2))


def _distance(s1, s2, w):
    terms, unmatched = distance_components(s1, s2, w)
    norm = w.re + w.im
    total = sum(r + i for _, _, r, i in terms) / norm + w.unmatched * unmatched
    return total / max(len(s1), len(s2))


def signature_distance(s1: PoleSignature, s2: PoleSignature,
                       weights: DistanceWeights = DistanceWeights()) -> float:
    """Matching distance between two signatures.

    Poles are paired one-to-one by nearest Im (Hungarian assignment); each
    pair contributes ``(w_re |dRe| + w_im |dIm|) / (w_re + w_im)`` and every
    unpaired pole a fixed penalty; the sum is divided by the larger pole
    count.  Symmetric with d(s, s) = 0; the triangle inequality is not
    guaranteed.
    """
    return min(_distance(s1, s2, weights), _distance(s2, s1, weights))


def classify(query: PoleSignature, lib: SignatureLibrary, weights: DistanceWeights = DistanceWeights()):
    """Library entries with the query's m, ranked by ascending distance (ties by label)."""
    cands = lib.for_m(query.m) or list(lib.entries)
    if not cands:
        raise ValueError("library is empty")
    scored = [(signature_distance(query, e, weights), e.body_label) for e in cands]
    scored.sort(key=lambda t: (t[0], t[1]))
    return [(label, score) for score, label in scored]


def jittered(sig: PoleSignature, sigma: float, rng: np.random.Generator) -> PoleSignature:
    """Copy of ``sig`` with independent Gaussian noise on Re and Im of every pole."""
    v = sig.values
    noise = rng.normal(0.0, sigma, size=(len(v), 2))
    out = v + noise[:, 0] + 1j * noise[:, 1]
    out = out.real + 1j * np.abs(out.imag)
    return PoleSignature.from_values(sig.body_label, sig.m, out)


def format_pole(v: complex, decimals: int = 2) -> str:
    """``-0.33 ± i0.62`` with a true minus sign."""
    re = f"{v.real:.{decimals}f}".replace("-", "−")
    return f"{re} ± i{abs(v.imag):.{decimals}f}"
