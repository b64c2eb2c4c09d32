"""Pole migration of single-shot multi-band shaping filters.

A direct design expands ``A_alpha = prod_i (1 - 2 alpha cos w_i z^-1 + alpha^2 z^-2)``
into monomial coefficients.  With all roots packed just inside the unit
circle, rounding those coefficients to a few significant digits moves the
roots by far more than the rounding itself, and past a handful of bands some
leave the circle.

Realised roots are computed with ``mpmath.polyroots`` at 50 digits.  A
double-precision companion-matrix solve is itself perturbed by about
``eps**(1/k)`` on a k-fold root cluster, which here is larger than the
effect being measured.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np
from scipy.optimize import linear_sum_assignment

from . import fixture_constants as K
from .lti import FrequencyResponse, _check_freqs
from .polynomial import Polynomial, RootSet, quantize_coeffs
from .qdesign import NotchSpec, QFilter, build_q_from_polys, char_poly

__all__ = [
    "DEFAULT_SAMPLE_RATE",
    "MigrationReport",
    "realized_roots",
    "match_roots",
    "direct_multiband_shaping",
    "migration_sweep",
    "shaping_frequency_report",
    "reports_to_csv",
    "reports_to_json",
]

DEFAULT_SAMPLE_RATE = K.CONDITIONING_SAMPLE_RATE
ROOT_DPS = 50


@dataclass(frozen=True)
class MigrationReport:
    """Where the roots of the quantised ``A_alpha`` ended up.

    ``sig_digits`` is ``None`` for the unrounded double-precision design.
    The ``zero_*`` fields give the same measurement for ``A_beta``.
    """

    band_count: int
    sig_digits: int | None
    sample_rate: float
    freqs_hz: tuple
    design_roots: RootSet
    realized_roots: RootSet
    max_modulus: float
    max_displacement: float
    stable: bool
    zero_max_modulus: float = float("nan")
    zero_max_displacement: float = float("nan")
    coefficients: tuple = field(default=(), repr=False)

    def row(self) -> dict:
        return {
            "band_count": self.band_count,
            "sig_digits": "double" if self.sig_digits is None else self.sig_digits,
            "max_modulus": self.max_modulus,
            "max_displacement": self.max_displacement,
            "stable": self.stable,
        }


def realized_roots(p: Polynomial, dps: int = ROOT_DPS) -> np.ndarray:
    """Roots of ``p`` (as given, exact binary coefficients) in extended precision."""
    c = p.coeffs
    if p.degree < 1:
        return np.zeros(0, complex)
    with mpmath.workdps(dps):
        r = mpmath.polyroots([mpmath.mpf(float(x)) for x in c], maxsteps=400 + 40 * p.degree,
                             extraprec=4 * dps + 20 * p.degree)
        return np.array([complex(x) for x in r], dtype=complex)


def match_roots(design: np.ndarray, realized: np.ndarray) -> np.ndarray:
    """Distances of an optimal one-to-one matching (Hungarian assignment)."""
    d = np.abs(np.asarray(design)[:, None] - np.asarray(realized)[None, :])
    i, j = linear_sum_assignment(d)
    return d[i, j]


def _design_roots(specs, fs, radius) -> np.ndarray:
    out = []
    for s, r in zip(specs, radius):
        w = s.omega(fs)
        out += [r * np.exp(1j * w), r * np.exp(-1j * w)]
    return np.array(out, dtype=complex)


def _migration(poly: Polynomial, design: np.ndarray):
    r = realized_roots(poly)
    return r, float(np.max(np.abs(r))), float(np.max(match_roots(design, r)))


def direct_multiband_shaping(specs: Sequence[NotchSpec], m: int = 2,
                             sig_digits: int | None = 7,
                             sample_rate: float = DEFAULT_SAMPLE_RATE):
    """One-shot shaping filter for every band at once, with coefficient rounding.

    Returns ``(qfilter, report)``.  The filter is built from the rounded
    polynomials and may be unstable; it is returned for inspection only.
    """
    specs = sorted(specs, key=lambda s: s.freq_hz)
    if not specs:
        raise ValueError("need at least one NotchSpec")
    fs = float(sample_rate)
    w = [s.omega(fs) for s in specs]
    alphas = [s.alpha(fs) for s in specs]
    betas = [s.beta for s in specs]
    a_alpha = char_poly(w, alphas)
    a_beta = char_poly(w, betas)
    if sig_digits is not None:
        a_alpha = quantize_coeffs(a_alpha, sig_digits)
        a_beta = quantize_coeffs(a_beta, sig_digits)
    gs = {s.depth_g for s in specs}
    g = gs.pop() if len(gs) == 1 else 1.0
    qf = build_q_from_polys(a_alpha, a_beta, m, fs, g, tuple(s.freq_hz for s in specs))

    d_alpha = _design_roots(specs, fs, alphas)
    r, mod, disp = _migration(a_alpha, d_alpha)
    _, zmod, zdisp = _migration(a_beta, _design_roots(specs, fs, betas))
    rep = MigrationReport(
        band_count=len(specs), sig_digits=sig_digits, sample_rate=fs,
        freqs_hz=tuple(s.freq_hz for s in specs),
        design_roots=RootSet(d_alpha), realized_roots=RootSet(r),
        max_modulus=mod, max_displacement=disp, stable=bool(mod < 1.0),
        zero_max_modulus=zmod, zero_max_displacement=zdisp,
        coefficients=tuple(float(c) for c in a_alpha.coeffs))
    return qf, rep


def migration_sweep(freq_pool: Sequence[float] = K.CONDITIONING_FREQS_HZ,
                    bandwidth_hz: float = K.CONDITIONING_BANDWIDTH_HZ,
                    digit_levels: Sequence[int | None] = (7, 15, 17),
                    max_bands: int | None = None, m: int = 2,
                    sample_rate: float = DEFAULT_SAMPLE_RATE) -> list:
    """Reports for ``band_count = 1 .. max_bands`` at every digit level.

    Band count ``k`` uses the first ``k`` pool frequencies.  Ordered by band
    count, then by digit level as given.
    """
    pool = list(freq_pool)
    if max_bands is None:
        max_bands = len(pool)
    if max_bands < 1 or len(pool) < max_bands:
        raise ValueError("pool must hold at least max_bands >= 1 frequencies")
    out = []
    for k in range(1, max_bands + 1):
        specs = [NotchSpec(f, bandwidth_hz) for f in pool[:k]]
        for d in digit_levels:
            out.append(direct_multiband_shaping(specs, m, d, sample_rate)[1])
    return out


def shaping_frequency_report(qf: QFilter, grid) -> FrequencyResponse:
    """``1 - g z^-m Q`` on ``grid`` (Hz); unstable filters are evaluated as-is."""
    f = _check_freqs(grid, qf.sample_rate)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        v = qf.shaping_evaluate(2 * np.pi * f / qf.sample_rate)
    return FrequencyResponse(f, v, qf.sample_rate)


_COLUMNS = ["band_count", "sig_digits", "max_modulus", "max_displacement", "stable"]


def reports_to_csv(reports: Sequence[MigrationReport], path=None) -> str | None:
    """``band_count,sig_digits,max_modulus,max_displacement,stable`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_COLUMNS)
    for r in reports:
        row = r.row()
        w.writerow([row["band_count"], row["sig_digits"], f"{row['max_modulus']:.17g}",
                    f"{row['max_displacement']:.17g}", str(row["stable"]).lower()])
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return None


def reports_to_json(reports: Sequence[MigrationReport]) -> dict:
    """JSON-ready document; every row carries its sample rate and frequencies."""
    rows = []
    for r in reports:
        row = r.row()
        row.update({
            "sample_rate_hz": r.sample_rate,
            "freqs_hz": list(r.freqs_hz),
            "zero_max_modulus": r.zero_max_modulus,
            "zero_max_displacement": r.zero_max_displacement,
            "realized_roots": [[z.real, z.imag] for z in r.realized_roots.roots],
        })
        rows.append(row)
    return {"reports": rows}


def _dump(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
