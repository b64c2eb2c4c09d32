"""Q-filter synthesis for narrow-band sensitivity notches.

The shaping term is ``1 - z^-m Q = (A_beta / A_alpha) K`` where ``A_zeta``
has roots ``zeta * exp(+-j w_i)`` at every target frequency and ``K`` is the
degree ``m-1`` polynomial that makes ``z^-m Q`` causal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .lti import FrequencyResponse, RationalTF, _check_freqs, zpk_evaluate
from .polynomial import Polynomial, power_series_div, quantize_coeffs

__all__ = [
    "NotchSpec",
    "QFilter",
    "char_poly",
    "bandwidth_to_radius",
    "solve_k",
    "build_q",
    "build_q_from_polys",
    "scale_depth",
    "shaping_response",
]


def bandwidth_to_radius(bandwidth_rad: float) -> float:
    """Pole radius for a 3-dB attenuation bandwidth ``B`` (rad/sample).

    ``alpha = (1 - tan(B/2)) / (1 + tan(B/2))``.
    """
    if not 0.0 <= bandwidth_rad < np.pi:
        raise ValueError("bandwidth must lie in [0, pi)")
    t = np.tan(bandwidth_rad / 2)
    a = float((1.0 - t) / (1.0 + t))
    # tan(pi/4) rounds just below 1, so test the radius, not t
    if a <= 1e-12:
        raise ValueError("bandwidth too wide: pole radius would be <= 0")
    return a


@dataclass(frozen=True)
class NotchSpec:
    """One target band: center, 3-dB width, depth scale ``g`` and zero radius ``beta``."""

    freq_hz: float
    bandwidth_hz: float = 20.0
    depth_g: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not self.freq_hz > 0:
            raise ValueError("freq_hz must be positive")
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth_hz must be positive")
        if not 0.0 <= self.depth_g <= 1.0:
            raise ValueError("depth_g must lie in [0, 1]")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")

    def omega(self, sample_rate: float) -> float:
        if self.freq_hz >= sample_rate / 2:
            raise ValueError(f"{self.freq_hz} Hz is not below Nyquist")
        return 2 * np.pi * self.freq_hz / sample_rate

    def alpha(self, sample_rate: float) -> float:
        a = bandwidth_to_radius(2 * np.pi * self.bandwidth_hz / sample_rate)
        if not 0.0 < a < self.beta:
            raise ValueError(f"pole radius {a} is not below beta={self.beta}")
        return a


def _section(w: float, zeta: float) -> np.ndarray:
    return np.array([1.0, -2.0 * zeta * np.cos(w), zeta * zeta])


def char_poly(freqs_rad: Sequence[float], zeta) -> Polynomial:
    """``prod_i (1 - 2 zeta_i cos(w_i) z^-1 + zeta_i^2 z^-2)``.

    ``zeta`` may be a scalar or one radius per frequency.
    """
    w = np.asarray(freqs_rad, dtype=float).ravel()
    z = np.broadcast_to(np.asarray(zeta, dtype=float), w.shape)
    if np.any((z <= 0) | (z > 1)):
        raise ValueError("radius must lie in (0, 1]")
    if np.any((w <= 0) | (w >= np.pi)):
        raise ValueError("frequencies must lie in (0, pi)")
    if len(np.unique(w)) != len(w):
        raise ValueError("frequencies must be distinct")
    c = np.array([1.0])
    for wi, zi in zip(w, z):
        c = np.convolve(c, _section(wi, zi))
    return Polynomial(c)


def solve_k(a_beta: Polynomial, a_alpha: Polynomial, m: int) -> Polynomial:
    """``K`` of degree ``m-1`` with ``(A_beta/A_alpha) K = 1 + O(z^-m)``.

    Forward substitution on the lower-triangular Toeplitz system built from
    the series of ``A_beta/A_alpha``, followed by one refinement step.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if a_alpha.coeffs[0] != 1.0:
        raise ValueError("A_alpha must be monic")
    h = power_series_div(a_beta, a_alpha, m)
    assert h[0] != 0.0, "leading series coefficient vanished"
    T = np.zeros((m, m))
    for i in range(m):
        T[i, : i + 1] = h[i::-1]
    e = np.zeros(m)
    e[0] = 1.0

    def fwd(rhs):
        x = np.zeros(m)
        for i in range(m):
            x[i] = (rhs[i] - T[i, :i] @ x[:i]) / T[i, i]
        return x

    k = fwd(e)
    r = e - T @ k
    if np.max(np.abs(r)) > 1e-12:
        k = k + fwd(r)
    return Polynomial(k)


@dataclass(frozen=True)
class QFilter:
    """Youla parameter ``Q`` with its construction data.

    ``q`` is the undepth-scaled filter; the depth scale ``g`` is applied on
    top wherever ``Q`` is used, so ``scale_depth`` is loss-free.
    """

    q: RationalTF
    m: int
    a_alpha: Polynomial
    a_beta: Polynomial
    k: Polynomial
    g: float = 1.0
    freqs_hz: tuple = ()
    # design roots of A_alpha and A_beta; empty when the polynomials were quantized
    alpha_roots: tuple = field(default=(), compare=False)
    beta_roots: tuple = field(default=(), compare=False)

    @property
    def sample_rate(self) -> float:
        return self.q.sample_rate

    @property
    def scaled(self) -> RationalTF:
        """``g * Q``."""
        return RationalTF(self.q.num * self.g, self.q.den, self.q.sample_rate)

    @property
    def order(self) -> int:
        return self.a_alpha.degree

    def is_zero(self) -> bool:
        return self.q.num.is_zero() or self.g == 0.0

    def poles(self) -> np.ndarray:
        return self.q.poles()

    def shaping_evaluate(self, w):
        """``1 - g e^{-jmw} Q(e^{jw})`` at normalised frequencies.

        With design roots available this is evaluated as
        ``1 - g + g (A_beta/A_alpha) K`` in factored form, so the response is
        exactly zero at a ``beta = 1`` target.
        """
        w = np.asarray(w, dtype=float)
        if self.beta_roots:
            h = zpk_evaluate(self.beta_roots, self.alpha_roots, 1.0, 0, w)
            return (1.0 - self.g) + self.g * h * self.k.on_unit_circle(w)
        return 1.0 - self.g * np.exp(-1j * self.m * w) * self.q.evaluate(w)


def build_q_from_polys(a_alpha: Polynomial, a_beta: Polynomial, m: int,
                       sample_rate: float, g: float = 1.0,
                       freqs_hz: tuple = ()) -> QFilter:
    """Assemble ``Q = z^m (1 - (A_beta/A_alpha) K)`` over denominator ``A_alpha``."""
    k = solve_k(a_beta, a_alpha, m)
    n = (a_alpha - a_beta * k).coeffs
    n = np.concatenate([n, np.zeros(max(0, m + 1 - len(n)))])
    scale = max(1.0, np.abs(a_alpha.coeffs).max())
    if np.max(np.abs(n[:m])) > 1e-10 * scale:
        raise AssertionError("z^-m Q is not causal: leading coefficients did not cancel")
    q = RationalTF(Polynomial(n[m:]), a_alpha, sample_rate)
    return QFilter(q, m, a_alpha, a_beta, k, g, tuple(freqs_hz))


def build_q(specs: Sequence[NotchSpec], m: int, sample_rate: float,
            sig_digits: int | None = None) -> QFilter:
    """Q filter placing a notch at every spec.

    Each band gets its own pole radius from its bandwidth.  ``g`` is taken
    from the specs (they must agree).  With ``sig_digits`` the expanded
    ``A_alpha`` and ``A_beta`` are rounded to that many significant digits
    before ``K`` is solved, which models a fixed-precision implementation.
    """
    specs = sorted(specs, key=lambda s: s.freq_hz)
    if not specs:
        one = Polynomial([1.0])
        return QFilter(RationalTF([0.0], [1.0], sample_rate), m, one, one, solve_k(one, one, m), 1.0, ())
    gs = {s.depth_g for s in specs}
    if len(gs) != 1:
        raise ValueError("all bands of one Q filter must share depth_g")
    w = [s.omega(sample_rate) for s in specs]
    a_alpha = char_poly(w, [s.alpha(sample_rate) for s in specs])
    a_beta = char_poly(w, [s.beta for s in specs])
    if sig_digits is not None:
        a_alpha = quantize_coeffs(a_alpha, sig_digits)
        a_beta = quantize_coeffs(a_beta, sig_digits)
    qf = build_q_from_polys(a_alpha, a_beta, m, sample_rate, gs.pop(),
                            tuple(s.freq_hz for s in specs))
    if sig_digits is None:
        ws = np.array(w)
        rad_a = np.array([s.alpha(sample_rate) for s in specs])
        rad_b = np.array([s.beta for s in specs])
        qf = replace(qf, alpha_roots=_conj_roots(rad_a, ws), beta_roots=_conj_roots(rad_b, ws))
    return qf


def _conj_roots(radius, w) -> tuple:
    r = radius * np.exp(1j * w)
    return tuple(np.concatenate([r, r.conj()]))


def scale_depth(q: QFilter, g: float) -> QFilter:
    """Return ``q`` with depth scale ``g`` (``Q~ = g Q``)."""
    if not 0.0 <= g <= 1.0:
        raise ValueError("g must lie in [0, 1]")
    return replace(q, g=float(g))


def shaping_response(q: QFilter, freqs_hz) -> FrequencyResponse:
    """Pointwise ``1 - g e^{-jmw} Q(e^{jw})``."""
    f = _check_freqs(freqs_hz, q.sample_rate)
    return FrequencyResponse(f, q.shaping_evaluate(2 * np.pi * f / q.sample_rate),
                             q.sample_rate)
