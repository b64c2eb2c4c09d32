"""Deterministic benchmark loops.

Constants live in :mod:`ykshaping.fixture_constants`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.signal import cont2discrete

from . import fixture_constants as K
from .lti import RationalTF, StateSpace, series, zpk_to_ss
from .polynomial import roots

__all__ = ["DualStageFixture", "make_minimum_phase_fixture", "make_dual_stage_fixture",
           "dual_stage_plan"]


def _gain_at(g: RationalTF, f_hz: float) -> float:
    return float(abs(g.evaluate(np.array([2 * np.pi * f_hz / g.sample_rate]))[0]))


def make_minimum_phase_fixture(sample_rate: float = K.MP_SAMPLE_RATE) -> RationalTF:
    """Stable, minimum-phase, relative-degree-2 loop with an integrator."""
    p = np.exp(-2 * np.pi * K.MP_POLE_HZ / sample_rate)
    L = RationalTF([0.0, 0.0, 1.0, -K.MP_ZERO], [1.0, -1.0 - p, p], sample_rate)
    return L * (1.0 / _gain_at(L, K.MP_CROSSOVER_HZ))


def _exact_poles(fs: float) -> np.ndarray:
    # z = exp(sT) of every continuous pole, plus the two discrete baseline poles
    T = 1.0 / fs
    s = [0.0, 0.0]
    for f, z in list(zip(K.VCM_RESONANCES_HZ, K.VCM_DAMPING)) + [(K.MA_RESONANCE_HZ, K.MA_DAMPING)]:
        w = 2 * np.pi * f
        wd = w * np.sqrt(1 - z * z)
        s += [complex(-z * w, wd), complex(-z * w, -wd)]
    p = list(np.exp(np.array(s, dtype=complex) * T))
    p.append(np.exp(-2 * np.pi * K.HANDOFF_HZ * K.LEAD_RATIO * T))
    return np.array(p, dtype=complex)


def _zoh(num, den, fs) -> RationalTF:
    b, a, _ = cont2discrete((num, den), 1.0 / fs, method="zoh")
    return RationalTF(np.ravel(b), np.ravel(a), fs)


def _resonance(f_hz, zeta):
    w = 2 * np.pi * f_hz
    return [w * w], [1.0, 2 * zeta * w, w * w]


def _strip_integrators(den: np.ndarray, n: int) -> np.ndarray:
    # exact division by (1 - z^-1)^n; the remainder is rounding only
    q, r = np.polydiv(den, np.poly(np.ones(n)))
    assert np.max(np.abs(r)) < 1e-9 * np.max(np.abs(den))
    return q


def _shared_integrator_sum(p1, c1, p2, c2) -> RationalTF:
    """``p1 c1 + p2 c2`` with the integrator factors combined, not duplicated.

    Plain polynomial addition would give ``(1 - z^-1)^3`` in the denominator
    and a cancelling zero at ``z = 1``, which root finders split apart.
    """
    fs = p1.sample_rate
    d1 = _strip_integrators(p1.den.coeffs, 2)
    d2 = _strip_integrators(c2.den.coeffs, 1)
    n1 = np.convolve(p1.num.coeffs, c1.num.coeffs)
    n2 = np.convolve(np.convolve(p2.num.coeffs, c2.num.coeffs), [1.0, -1.0])
    rest1 = np.convolve(d1, c1.den.coeffs)
    rest2 = np.convolve(p2.den.coeffs, d2)
    num = np.polyadd(np.convolve(n1, rest2)[::-1], np.convolve(n2, rest1)[::-1])[::-1]
    den = np.convolve(np.poly(np.ones(2)), np.convolve(rest1, rest2))
    return RationalTF(num, den, fs)


@dataclass(frozen=True)
class DualStageFixture:
    """Dual-actuator loop reduced to the scalar ``l = p1 c1 + p2 c2``."""

    p1: RationalTF
    c1: RationalTF
    p2: RationalTF
    c2: RationalTF
    l: RationalTF
    sample_rate: float
    minimum_phase: bool

    @cached_property
    def l_ss(self) -> StateSpace:
        """Second-order-section realisation of ``l``.

        Poles are the exact discretised values and zeros come from the
        numerator, so the double integrator stays a clean ``(1 - z^-1)^2``
        section.  Evaluating the expanded ``l`` near DC loses several digits;
        use this realisation for accuracy-sensitive work.
        """
        z, d = self._zeros_delay
        gain = float(self.l.num.coeffs[d] / self.l.den.coeffs[0])
        return zpk_to_ss(z, self._poles, gain, d, self.sample_rate)

    @cached_property
    def _zeros_delay(self):
        rs = roots(self.l.num)
        return rs.roots, rs.delay

    @property
    def _poles(self) -> np.ndarray:
        return _exact_poles(self.sample_rate)

def make_dual_stage_fixture(sample_rate: float = K.DS_SAMPLE_RATE) -> DualStageFixture:
    """Synthetic VCM + micro-actuator loop with lead and integral baselines."""
    fs = sample_rate
    delay = RationalTF.delay(K.DS_DELAY, fs)
    b = -K.SENSOR_ZERO
    delay = series(delay, RationalTF([1.0, b], [1.0 + b], fs))

    num, den = [K.VCM_GAIN], [1.0, 0.0, 0.0]
    for f, z in zip(K.VCM_RESONANCES_HZ, K.VCM_DAMPING):
        rn, rd = _resonance(f, z)
        num, den = np.polymul(num, rn), np.polymul(den, rd)
    p1 = series(_zoh(num, den, fs), delay)

    rn, rd = _resonance(K.MA_RESONANCE_HZ, K.MA_DAMPING)
    p2 = series(_zoh(np.polymul([K.MA_GAIN], rn), rd, fs), delay)

    c2 = RationalTF([1.0], [1.0, -1.0], fs)
    c2 = c2 * (1.0 / _gain_at(series(p2, c2), K.MA_CROSSOVER_HZ))

    a = np.exp(-2 * np.pi * K.HANDOFF_HZ / K.LEAD_RATIO / fs)
    b = np.exp(-2 * np.pi * K.HANDOFF_HZ * K.LEAD_RATIO / fs)
    c1 = RationalTF([1.0, -a], [1.0, -b], fs)
    c1 = c1 * (_gain_at(series(p2, c2), K.HANDOFF_HZ) / _gain_at(series(p1, c1), K.HANDOFF_HZ))

    l = _shared_integrator_sum(p1, c1, p2, c2)
    mp = bool(np.all(np.abs(l.zeros()) < 1.0))
    return DualStageFixture(p1, c1, p2, c2, l, fs, mp)


def dual_stage_plan(reduction_order: int | None = None, **kwargs):
    """The 12-notch, 6-group plan for :func:`make_dual_stage_fixture` (``g = beta = 1``)."""
    from .qdesign import NotchSpec
    from .ykloop import DesignPlan

    groups = [[NotchSpec(f, K.DS_NOTCH_BANDWIDTH_HZ) for f in g] for g in K.DS_TARGET_GROUPS_HZ]
    kwargs.setdefault("cancel_radius", K.DS_CANCEL_RADIUS)
    return DesignPlan(groups=groups, reduction_order=reduction_order, **kwargs)
