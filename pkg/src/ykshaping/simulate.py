"""Time-domain check of the frequency-domain sensitivity.

A sum of sinusoids is injected at the plant output, the error ``e = S d``
is simulated from rest, and the steady-state amplitude at each frequency is
read off the tail of the record.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .lti import RationalTF, StateSpace, System, as_ss, closed_loop_sensitivity, series

__all__ = ["SimResult", "lsim", "closed_loop_disturbance_sim", "transient_length",
           "MIN_PERIODS"]

#: the steady-state window must hold this many periods of the lowest frequency
MIN_PERIODS = 50


@dataclass(frozen=True)
class SimResult:
    """Simulated error and the steady-state amplitude per injected frequency.

    ``window_samples`` is the length of the trailing fit window; it is the
    longest one that fits and spans a whole number of periods of the lowest
    injected frequency (to the nearest sample).
    """

    e: np.ndarray
    freqs_hz: tuple
    input_amplitudes: tuple
    steady_state_amplitude: tuple
    transient_samples: int
    window_samples: int
    max_pole_modulus: float
    sample_rate: float

    @property
    def ratios(self) -> np.ndarray:
        a = np.asarray(self.input_amplitudes, dtype=float)
        return np.asarray(self.steady_state_amplitude) / np.where(a == 0, np.nan, a)

    def to_csv(self, path=None) -> str | None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "e"])
        for k, v in enumerate(self.e):
            w.writerow([k, f"{v:.17g}"])
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return None


def lsim(g: System, u: Sequence[float]) -> np.ndarray:
    """Response of ``g`` to ``u`` from zero initial conditions."""
    u = np.asarray(u, dtype=float)
    if isinstance(g, RationalTF):
        return lfilter(g.num.coeffs, g.den.coeffs, u)
    s = as_ss(g)
    if s.order == 0:
        return s.D * u
    A, B, C = s.A, s.B[:, 0], s.C[0]
    x = np.zeros(s.order)
    y = np.empty_like(u)
    for k, uk in enumerate(u):
        y[k] = C @ x + s.D * uk
        x = A @ x + B * uk
    return y


def transient_length(max_pole_modulus: float, n_samples: int) -> int:
    """``10 / (1 - rho)`` samples, capped at half the record."""
    if max_pole_modulus >= 1.0:
        raise ValueError("closed loop is not stable")
    t = 10.0 / (1.0 - max_pole_modulus) if max_pole_modulus > 0 else 10.0
    # ceil with a little slack so 10 / (1 - 0.9) = 100.00000000000001 stays 100
    return int(min(math.ceil(t - 1e-9), n_samples // 2))


def _amplitudes(e: np.ndarray, freqs_hz, fs: float) -> np.ndarray:
    # joint least-squares fit of sin/cos pairs; exact for a pure steady state
    # and free of the leakage a single-bin correlation has for non-integer
    # periods or closely spaced tones
    k = np.arange(e.size)
    cols = []
    for f in freqs_hz:
        w = 2 * np.pi * f / fs
        cols += [np.cos(w * k), np.sin(w * k)]
    M = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(M, e, rcond=None)
    return np.hypot(coef[0::2], coef[1::2])


def closed_loop_disturbance_sim(l: System, c: System, dist_freqs_hz: Sequence[float],
                                amplitudes: Sequence[float], n_samples: int,
                                injection: str = "output", plant: System | None = None,
                                transient: int | None = None) -> SimResult:
    """Simulate ``e = S d`` for ``d[k] = sum_i A_i sin(w_i k)``.

    Parameters
    ----------
    injection : {"output", "input"}
        Output disturbances see ``S``; input disturbances see ``-P S`` and
        need ``plant``.
    transient : int, optional
        Samples to discard; defaults to :func:`transient_length`.

    Raises
    ------
    ValueError
        Unstable closed loop, or too few samples for the steady-state window.
    """
    fs = l.sample_rate
    f = [float(x) for x in dist_freqs_hz]
    a = [float(x) for x in amplitudes]
    if len(f) != len(a):
        raise ValueError("one amplitude per frequency")
    if any(not 0.0 < x < fs / 2 for x in f):
        raise ValueError("disturbance frequencies must lie in (0, Nyquist)")
    S = closed_loop_sensitivity(l, c)
    rho = float(np.max(np.abs(np.linalg.eigvals(S.A)))) if S.order else 0.0
    if rho >= 1.0:
        raise ValueError(f"closed loop is unstable (max |p| = {rho:.9g})")
    if injection == "input":
        if plant is None:
            raise ValueError("input injection needs the plant")
        S = series(as_ss(plant), S)
        S = StateSpace(S.A, S.B, -S.C, -S.D, fs)
    elif injection != "output":
        raise ValueError("injection must be 'output' or 'input'")

    n_tr = transient_length(rho, n_samples) if transient is None else int(transient)
    if f:
        period = fs / min(f)
        need = n_tr + MIN_PERIODS * period
        if n_samples < need:
            raise ValueError(f"need at least {math.ceil(need)} samples, got {n_samples}")
        n_per = math.floor((n_samples - n_tr) / period)
        win = int(round(n_per * period))
    else:
        win = n_samples - n_tr

    k = np.arange(n_samples)
    d = np.zeros(n_samples)
    for fi, ai in zip(f, a):
        d += ai * np.sin(2 * np.pi * fi / fs * k)
    e = lsim(S, d)
    amp = _amplitudes(e[-win:], f, fs) if f else np.zeros(0)
    return SimResult(e, tuple(f), tuple(a), tuple(float(x) for x in amp), n_tr, win, rho, fs)
