"""Second-order-section files for controllers and plants.

Layout (JSON)::

    {
      "format": "ykshaping-sos",
      "kind": "controller" | "plant",
      "sample_rate_hz": 40000.0,
      "gain": "1.0000000000000000e+00",
      "sections": [{"b0": "...", "b1": "...", "b2": "...",
                    "a0": "...", "a1": "...", "a2": "..."}, ...],
      "notch_targets_hz": [...], "notch_bandwidths_hz": [...],
      "config_hash": "...", "tool_version": "...", "aborted": false
    }

Coefficients are decimal text with 17 significant digits, which round-trips
every double exactly.  Importing then exporting a file reproduces it byte
for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .lti import RationalTF, StateSpace, System, as_ss, sos_to_ss, ss_zpk, zpk_to_sos

__all__ = ["SOSSystem", "to_sos", "write_sos", "read_sos", "config_hash", "atomic_write",
           "SOS_SCHEMA"]

_COEF = {"type": "string", "pattern": r"^[-+]?[0-9]\.[0-9]{16}e[-+][0-9]{2,3}$"}

SOS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["format", "kind", "sample_rate_hz", "gain", "sections"],
    "properties": {
        "format": {"const": "ykshaping-sos"},
        "kind": {"enum": ["controller", "plant"]},
        "sample_rate_hz": {"type": "number", "exclusiveMinimum": 0},
        "gain": _COEF,
        "sections": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["b0", "b1", "b2", "a0", "a1", "a2"],
                "properties": {k: _COEF for k in ("b0", "b1", "b2", "a0", "a1", "a2")},
            },
        },
        "notch_targets_hz": {"type": "array", "items": {"type": "number"}},
        "notch_bandwidths_hz": {"type": "array", "items": {"type": "number"}},
        "config_hash": {"type": "string"},
        "tool_version": {"type": "string"},
        "aborted": {"type": "boolean"},
        "order": {"type": "integer"},
    },
}


def _fmt(x: float) -> str:
    return format(float(x), ".16e")


@dataclass(frozen=True, eq=False)
class SOSSystem:
    """Cascade of biquads ``gain * prod (b0 + b1 z^-1 + b2 z^-2)/(a0 + a1 z^-1 + a2 z^-2)``."""

    sections: np.ndarray
    gain: float
    sample_rate: float
    kind: str = "controller"
    notch_targets_hz: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.sections, dtype=float))
        if s.shape[1] != 6:
            raise ValueError("sections must have six columns")
        if np.any(s[:, 3] == 0.0):
            raise ValueError("a0 must be nonzero in every section")
        s.setflags(write=False)
        object.__setattr__(self, "sections", s)

    def __eq__(self, other):
        if not isinstance(other, SOSSystem):
            return NotImplemented
        return (np.array_equal(self.sections, other.sections) and self.gain == other.gain
                and self.sample_rate == other.sample_rate and self.kind == other.kind
                and self.notch_targets_hz == other.notch_targets_hz)

    __hash__ = None

    def to_ss(self) -> StateSpace:
        sos = self.sections.copy()
        sos[0, :3] *= self.gain
        return sos_to_ss(sos, self.sample_rate)

    def evaluate(self, w) -> np.ndarray:
        """Section-by-section response (no state-space round trip)."""
        zi = np.exp(-1j * np.asarray(w, dtype=float))
        out = np.full(zi.shape, self.gain, dtype=complex)
        for b0, b1, b2, a0, a1, a2 in self.sections:
            out *= (b0 + zi * (b1 + zi * b2)) / (a0 + zi * (a1 + zi * a2))
        return out

    @property
    def order(self) -> int:
        # a section contributes its highest nonzero delay power
        n = 0
        for row in self.sections:
            deg_a = 2 if row[5] != 0 else (1 if row[4] != 0 else 0)
            deg_b = 2 if row[2] != 0 else (1 if row[1] != 0 else 0)
            n += max(deg_a, deg_b)
        return n

    def to_dict(self) -> dict:
        doc = {
            "format": "ykshaping-sos",
            "kind": self.kind,
            "sample_rate_hz": float(self.sample_rate),
            "gain": _fmt(self.gain),
            "sections": [dict(zip(("b0", "b1", "b2", "a0", "a1", "a2"), map(_fmt, row)))
                         for row in self.sections],
            "notch_targets_hz": [float(f) for f in self.notch_targets_hz],
            "order": self.order,
        }
        doc.update(self.meta)
        return doc


def to_sos(g: System, kind: str = "controller", notch_targets_hz=(), **meta) -> SOSSystem:
    """Factor ``g`` into unity-gain biquads plus one overall gain."""
    fs = g.sample_rate
    if isinstance(g, RationalTF) and g.order == 0:
        k = float(g.num.coeffs[0] / g.den.coeffs[0])
        return SOSSystem(np.array([[1.0, 0, 0, 1.0, 0, 0]]), k, fs, kind, tuple(notch_targets_hz), meta)
    s = as_ss(g)
    if s.order == 0:
        return SOSSystem(np.array([[1.0, 0, 0, 1.0, 0, 0]]), float(s.D), fs, kind,
                         tuple(notch_targets_hz), meta)
    z, p, k, d = ss_zpk(s)
    sos = zpk_to_sos(z, p, 1.0, d)
    return SOSSystem(sos, float(k), fs, kind, tuple(notch_targets_hz), meta)


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def atomic_write(path, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_sos(path, sys_: SOSSystem) -> None:
    atomic_write(path, json.dumps(sys_.to_dict(), indent=2, sort_keys=True) + "\n")


def read_sos(path) -> SOSSystem:
    """Load and schema-check an SOS file.

    Raises
    ------
    OSError
        File missing or unreadable.
    jsonschema.ValidationError, json.JSONDecodeError
        Malformed content.
    """
    with open(path) as fh:
        doc = json.load(fh)
    jsonschema.validate(doc, SOS_SCHEMA)
    rows = [[float(s[k]) for k in ("b0", "b1", "b2", "a0", "a1", "a2")] for s in doc["sections"]]
    meta = {k: doc[k] for k in ("config_hash", "tool_version", "aborted", "notch_bandwidths_hz") if k in doc}
    return SOSSystem(np.array(rows), float(doc["gain"]), float(doc["sample_rate_hz"]),
                     doc["kind"], tuple(doc.get("notch_targets_hz", ())), meta)
