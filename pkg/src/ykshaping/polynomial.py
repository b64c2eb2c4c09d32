"""Real polynomials in the delay variable ``z^-1``.

Coefficients are stored in ascending powers of ``z^-1``: ``coeffs[i]``
multiplies ``z^-i``.  A polynomial ``p`` of degree ``n`` therefore
corresponds to the positive-power polynomial ``z^n p(z^-1)`` whose
descending coefficients are exactly ``coeffs``; its roots are the values
of ``z`` at which ``p`` vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Context, Decimal
from typing import Iterable, Sequence

import mpmath
import numpy as np

__all__ = [
    "Polynomial",
    "RootSet",
    "poly_mul",
    "poly_add",
    "poly_sub",
    "power_series_div",
    "roots",
    "from_roots",
    "quantize_coeffs",
    "TRIM_EPS",
]

#: absolute threshold for dropping trailing coefficients after arithmetic
TRIM_EPS = 1e-14

#: first-order root error estimate above which roots are recomputed in
#: extended precision
ROOT_TOL = 1e-12
ROOT_DPS = 50


def _trim(c: np.ndarray, eps: float) -> np.ndarray:
    n = len(c)
    while n > 1 and abs(c[n - 1]) <= eps:
        n -= 1
    return c[:n]


class Polynomial:
    """Immutable real polynomial ``sum_i coeffs[i] * z^-i``.

    Parameters
    ----------
    coeffs : sequence of float
        Coefficients in ascending powers of ``z^-1``.  Exact trailing zeros
        are removed; an empty sequence is the zero polynomial.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs: Iterable[float] | float = (0.0,)):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float)).ravel().copy()
        if c.size == 0:
            c = np.zeros(1)
        if not np.all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        c = _trim(c, 0.0)
        c.setflags(write=False)
        self._c = c

    @classmethod
    def _from_arith(cls, c: np.ndarray) -> "Polynomial":
        return cls(_trim(np.asarray(c, dtype=float), TRIM_EPS))

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def degree(self) -> int:
        return len(self._c) - 1

    def is_zero(self) -> bool:
        return self.degree == 0 and self._c[0] == 0.0

    def __len__(self) -> int:
        return len(self._c)

    def __getitem__(self, i):
        return self._c[i]

    def __call__(self, z):
        """Evaluate at ``z`` (not at ``z^-1``).  Vectorised over ``z``."""
        z = np.asarray(z)
        return self.eval_inv(1.0 / z)

    def eval_inv(self, zinv):
        """Evaluate with ``zinv`` substituted for ``z^-1`` (Horner)."""
        zinv = np.asarray(zinv)
        acc = np.zeros(zinv.shape, dtype=np.result_type(zinv, float)) + self._c[-1]
        for c in self._c[-2::-1]:
            acc = acc * zinv + c
        return acc

    def on_unit_circle(self, w):
        """Evaluate at ``z = exp(jw)`` for normalised frequencies ``w``."""
        return self.eval_inv(np.exp(-1j * np.asarray(w, dtype=float)))

    def __mul__(self, other):
        if np.isscalar(other):
            return Polynomial._from_arith(self._c * float(other))
        return poly_mul(self, other)

    __rmul__ = __mul__

    def __add__(self, other):
        if np.isscalar(other):
            other = Polynomial([other])
        return poly_add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            other = Polynomial([other])
        return poly_sub(self, other)

    def __rsub__(self, other):
        return Polynomial([other]) - self

    def __neg__(self):
        return Polynomial(-self._c)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return np.array_equal(self._c, other._c)

    def __hash__(self):
        return hash(self._c.tobytes())

    def shift(self, k: int) -> "Polynomial":
        """Multiply by ``z^-k`` (``k >= 0``) or drop ``-k`` leading terms."""
        if k >= 0:
            return Polynomial(np.concatenate([np.zeros(k), self._c]))
        return Polynomial(self._c[-k:])

    def reversed(self) -> "Polynomial":
        """Coefficient reversal, ``z^-n p(z)``."""
        return Polynomial(self._c[::-1])

    def leading_zeros(self, eps: float = 0.0) -> int:
        """Number of low-order coefficients with ``|c| <= eps`` (delay count)."""
        nz = np.flatnonzero(np.abs(self._c) > eps)
        return int(nz[0]) if nz.size else len(self._c)

    def __repr__(self):
        return f"Polynomial({np.array2string(self._c, precision=17, separator=', ')})"


@dataclass(frozen=True)
class RootSet:
    """Factored form ``gain * z^-delay * prod_i (1 - roots[i] z^-1)``."""

    roots: np.ndarray
    gain: float = 1.0
    delay: int = 0

    def __post_init__(self):
        r = np.asarray(self.roots, dtype=complex).ravel()
        object.__setattr__(self, "roots", r)

    def __len__(self):
        return len(self.roots)


def poly_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    """Product of two polynomials (coefficient convolution)."""
    return Polynomial._from_arith(np.convolve(a.coeffs, b.coeffs))


def _padded(a: Polynomial, b: Polynomial):
    n = max(len(a), len(b))
    x = np.zeros(n)
    y = np.zeros(n)
    x[: len(a)] = a.coeffs
    y[: len(b)] = b.coeffs
    return x, y


def poly_add(a: Polynomial, b: Polynomial) -> Polynomial:
    x, y = _padded(a, b)
    return Polynomial._from_arith(x + y)


def poly_sub(a: Polynomial, b: Polynomial) -> Polynomial:
    x, y = _padded(a, b)
    return Polynomial._from_arith(x - y)


def power_series_div(num: Polynomial, den: Polynomial, n_terms: int) -> np.ndarray:
    """First ``n_terms`` coefficients of the expansion of ``num/den`` in ``z^-1``.

    Raises
    ------
    ValueError
        If ``den`` has a zero constant coefficient.
    """
    d = den.coeffs
    if d[0] == 0.0:
        raise ValueError("power series division needs den.coeffs[0] != 0")
    n = num.coeffs
    out = np.zeros(n_terms)
    for k in range(n_terms):
        acc = n[k] if k < len(n) else 0.0
        jmax = min(k, len(d) - 1)
        for j in range(1, jmax + 1):
            acc -= d[j] * out[k - j]
        out[k] = acc / d[0]
    return out


def _polish(c: np.ndarray, r: np.ndarray, iters: int = 3) -> np.ndarray:
    # Newton steps on z^n p(z^-1); keep a step only if it lowers the residual
    dc = np.polyder(c)
    out = r.copy()
    for i, z in enumerate(r):
        f = np.polyval(c, z)
        for _ in range(iters):
            fp = np.polyval(dc, z)
            if fp == 0:
                break
            z_new = z - f / fp
            f_new = np.polyval(c, z_new)
            if abs(f_new) >= abs(f):
                break
            z, f = z_new, f_new
        out[i] = z
    return out


def _error_estimate(c: np.ndarray, r: np.ndarray) -> np.ndarray:
    # first-order forward error of each root under relative coefficient
    # perturbations of one unit roundoff
    dc = np.polyder(c)
    absc = np.abs(c)
    with np.errstate(divide="ignore"):
        return np.finfo(float).eps * np.polyval(absc, np.abs(r)) / np.abs(np.polyval(dc, r))


def _extended_roots(c: np.ndarray) -> np.ndarray | None:
    n = len(c) - 1
    try:
        with mpmath.workdps(ROOT_DPS):
            r = mpmath.polyroots([mpmath.mpf(float(x)) for x in c], maxsteps=200 + 40 * n,
                                 extraprec=4 * ROOT_DPS + 20 * n)
    except mpmath.libmp.NoConvergence:
        return None
    return np.array([complex(x) for x in r], dtype=complex)


def roots(p: Polynomial) -> RootSet:
    """Roots in ``z`` of ``p`` (the exact roots of its binary coefficients).

    Companion-matrix eigenvalues are polished by Newton steps.  When the
    first-order error estimate of any root exceeds ``ROOT_TOL`` (clustered
    roots), all roots are recomputed with ``mpmath.polyroots`` at
    ``ROOT_DPS`` digits.  Leading zero coefficients are reported as
    ``delay`` (roots at infinity), so ``from_roots(roots(p))`` reproduces
    ``p``.
    """
    if p.degree < 1:
        raise ValueError("roots() needs a polynomial of degree >= 1")
    d = p.leading_zeros()
    c = p.coeffs[d:]
    if len(c) == 1:
        r = np.zeros(0, dtype=complex)
    else:
        r = np.roots(c).astype(complex)
        r = _polish(c, r)
        if len(c) > 3 and np.max(_error_estimate(c, r)) > ROOT_TOL:
            x = _extended_roots(c)
            if x is not None:
                r = x
        r = _conjugate_symmetrize(r)
    return RootSet(r, gain=float(c[0]), delay=d)


def _conjugate_symmetrize(r: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    # real polynomial: snap near-real roots and make complex roots exact pairs
    r = r.copy()
    used = np.zeros(len(r), dtype=bool)
    for i in range(len(r)):
        if used[i]:
            continue
        used[i] = True
        if abs(r[i].imag) <= tol * max(1.0, abs(r[i])):
            r[i] = r[i].real
            continue
        cand = [j for j in range(len(r)) if not used[j]]
        if not cand:
            continue
        j = min(cand, key=lambda j: abs(r[j] - np.conj(r[i])))
        mid = 0.5 * (r[i] + np.conj(r[j]))
        r[i], r[j] = mid, np.conj(mid)
        used[j] = True
    return r


def _pair_roots(r: np.ndarray, tol: float):
    """Split roots into real values and one representative per conjugate pair."""
    real = []
    pairs = []
    rest = list(r)
    while rest:
        x = rest.pop(0)
        if abs(x.imag) <= tol * max(1.0, abs(x)):
            real.append(x.real)
            continue
        j = int(np.argmin([abs(y - np.conj(x)) for y in rest])) if rest else -1
        if j < 0 or abs(rest[j] - np.conj(x)) > tol * max(1.0, abs(x)) * 1e3:
            raise ValueError(f"complex root {x} has no conjugate partner")
        y = rest.pop(j)
        pairs.append(0.5 * (x + np.conj(y)))
    return real, pairs


def from_roots(rs: RootSet) -> Polynomial:
    """Expand ``gain * z^-delay * prod (1 - r z^-1)`` into a real polynomial."""
    real, pairs = _pair_roots(np.asarray(rs.roots, dtype=complex), 1e-12)
    c = np.array([1.0])
    for x in real:
        c = np.convolve(c, [1.0, -x])
    for x in pairs:
        c = np.convolve(c, [1.0, -2.0 * x.real, abs(x) ** 2])
    c = np.concatenate([np.zeros(rs.delay), rs.gain * c])
    return Polynomial(c)


def _round_sig(x: float, digits: int) -> float:
    if x == 0.0 or not np.isfinite(x):
        return x
    d = Decimal(x)
    ctx = Context(prec=digits, rounding=ROUND_HALF_EVEN)
    return float(ctx.plus(d))


def quantize_coeffs(p: Polynomial, sig_digits: int) -> Polynomial:
    """Round every coefficient to ``sig_digits`` significant decimal digits.

    Rounding is half-to-even on the exact binary value of each coefficient.
    """
    if sig_digits < 1:
        raise ValueError("sig_digits must be >= 1")
    return Polynomial([_round_sig(float(c), sig_digits) for c in p.coeffs])


def as_polynomial(x: Polynomial | Sequence[float] | float) -> Polynomial:
    return x if isinstance(x, Polynomial) else Polynomial(x)
