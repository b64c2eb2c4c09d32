"""ZPETC stable approximate inversion of a loop gain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lti import (RationalTF, StateSpace, System, cluster_mean, relative_degree, ss_zpk,
                  zpk_evaluate, zpk_to_ss)
from .polynomial import Polynomial, RootSet, from_roots, roots

__all__ = ["StableInverse", "InversionError", "zpetc_inverse", "DEFAULT_CANCEL_RADIUS"]

DEFAULT_CANCEL_RADIUS = 0.95


class InversionError(ValueError):
    """Raised when the zero-phase inverse cannot be normalised (``B_u(1) = 0``)."""


@dataclass(frozen=True)
class StableInverse:
    """Stable inverse ``Linv`` of a loop gain, stored in delayed form.

    ``Linv`` itself is improper; ``delayed = z^-m Linv`` is the realisable
    system that actually gets implemented, and is what this class stores.

    Attributes
    ----------
    delayed : RationalTF or StateSpace
        ``z^-m Linv``.
    m : int
        Delay that makes the inverse causal: relative degree of ``L`` plus
        the number of uncancelled zeros.
    cancelled_zeros, kept_zeros : RootSet
        Zeros of ``L`` cancelled by the inverse and the uncancellable
        remainder ``B_u`` (monic).
    gain : float
        Leading numerator coefficient of ``L`` (absorbed in the cancelled part).
    zpk : tuple
        ``(zeros, poles, gain)`` of ``delayed``; :meth:`evaluate` uses this
        factored form because it stays accurate where the realisation does not
        (clusters of zeros near ``z = 1`` at low frequency).
    """

    delayed: RationalTF | StateSpace
    m: int
    cancelled_zeros: RootSet
    kept_zeros: RootSet
    loop_delay: int
    gain: float
    cancel_radius: float
    zpk: tuple

    @property
    def sample_rate(self) -> float:
        return self.delayed.sample_rate

    @property
    def exact(self) -> bool:
        return len(self.kept_zeros) == 0

    def evaluate(self, w):
        """Frequency response of ``Linv`` (the undelayed inverse)."""
        w = np.asarray(w, dtype=float)
        z, p, k = self.zpk
        return zpk_evaluate(z, p, k, 0, w) * np.exp(1j * self.m * w)

    def compensated(self, w):
        """``F = L * Linv`` from the factored form, ``|B_u|^2 / B_u(1)^2``.

        Exact at DC even when ``L`` has integrators, where the product of the
        two separately evaluated responses is ``inf * 0``.
        """
        w = np.asarray(w, dtype=float)
        bu = from_roots(self.kept_zeros)
        val = np.abs(bu.on_unit_circle(w)) ** 2
        return val / bu.eval_inv(1.0) ** 2


def _split(zeros: np.ndarray, radius: float):
    z = np.asarray(zeros, dtype=complex)
    keep = np.abs(z) > radius
    return z[~keep], z[keep]


def zpetc_inverse(L: System, cancel_radius: float = DEFAULT_CANCEL_RADIUS) -> StableInverse:
    """Zero-phase-error stable inverse of ``L``.

    With ``L = z^-d B / A`` and ``B = B_s B_u`` (``B_s`` holds the zeros of
    modulus ``<= cancel_radius`` and the leading gain, ``B_u`` is monic)::

        z^-m Linv = A * flip(B_u) / (B_s * B_u(1)^2),    m = d + deg B_u

    where ``flip`` reverses coefficients.  Then ``L Linv = |B_u|^2/B_u(1)^2``
    on the unit circle: real, nonnegative, and exactly 1 at DC.

    Raises
    ------
    InversionError
        If a kept zero sits at ``z = 1``.
    """
    if isinstance(L, RationalTF):
        if L.num.is_zero():
            raise ValueError("cannot invert the zero system")
        d = relative_degree(L)
        b = Polynomial(L.num.coeffs[d:])
        gain = float(b.coeffs[0])
        z = roots(b).roots if b.degree >= 1 else np.zeros(0, complex)
        zs, zu = _split(z, cancel_radius)
        bu = from_roots(RootSet(zu))
        bu1 = float(bu.eval_inv(1.0))
        if abs(bu1) < 1e-12 * max(1.0, np.abs(bu.coeffs).sum()):
            raise InversionError("kept zero at z = 1: B_u(1) = 0")
        bs = from_roots(RootSet(zs, gain))
        delayed = RationalTF(L.den * bu.reversed(), bs * (bu1 ** 2), L.sample_rate)
        p = cluster_mean(roots(L.den).roots) if L.den.degree >= 1 else np.zeros(0, complex)
        scale = float(L.den.coeffs[0])
    elif isinstance(L, StateSpace):
        z, p, gain, d = ss_zpk(L)
        if gain == 0.0:
            raise ValueError("cannot invert the zero system")
        zs, zu = _split(z, cancel_radius)
        bu = from_roots(RootSet(zu))
        bu1 = float(bu.eval_inv(1.0))
        if abs(bu1) < 1e-12 * max(1.0, np.abs(bu.coeffs).sum()):
            raise InversionError("kept zero at z = 1: B_u(1) = 0")
        # flip(B_u) = prod(-u) * prod(1 - z^-1/u); kept zeros are nonzero
        lead = float(np.real(np.prod(-zu))) if zu.size else 1.0
        delayed = zpk_to_ss(np.concatenate([p, 1.0 / zu]), zs,
                            lead / (gain * bu1 ** 2), 0, L.sample_rate)
        scale = 1.0
    else:
        raise TypeError(f"expected RationalTF or StateSpace, got {type(L).__name__}")
    lead = float(np.real(np.prod(-zu))) if zu.size else 1.0
    zpk = (np.concatenate([p, 1.0 / zu]), zs, scale * lead / (gain * bu1 ** 2))
    return StableInverse(delayed=delayed, m=int(d + len(zu)),
                         cancelled_zeros=RootSet(zs, gain), kept_zeros=RootSet(zu),
                         loop_delay=int(d), gain=gain, cancel_radius=cancel_radius,
                         zpk=zpk)
