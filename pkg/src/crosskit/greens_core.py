"""Bare one-dimensional Green's functions G0(x, x0; w) = <x|(w - H)^-1|x0>.

Units are hbar = 1 and H = -1/(2m) d^2/dx^2 + V(x).  With this sign
convention the retarded kernel has a derivative jump of +2m across x = x0
and a coincident-point value -i m / k on an open constant channel.

Three evaluators are provided:

* ``ConstantGreen``  closed form for V = v0
* ``LinearGreen``    Airy-function form for V = v0 + slope * x
* ``NumericGreen``   two-sided integration of a sampled potential,
  normalised by the Wronskian

plus ``green_spectral`` for eigenfunction expansions.
"""

from __future__ import annotations

import bisect
import contextlib
import contextvars
import enum
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.special import airye

from crosskit._numerics import NeumaierSum, as_complex, clean_zero_imag
from crosskit.errors import (
    BranchPointError,
    ConventionError,
    DegenerateSlope,
    DomainError,
    InvalidPotential,
    PoleError,
    WronskianDegenerate,
)

__all__ = [
    "GreenConvention",
    "RETARDED",
    "PAPER_LITERAL",
    "EnergyPoint",
    "PotentialSpec",
    "wavenumber",
    "green_constant",
    "green_linear",
    "green_numeric",
    "green_spectral",
    "ConstantGreen",
    "LinearGreen",
    "NumericGreen",
    "green_evaluator",
    "analytic_continuation",
]

_continuation = contextvars.ContextVar("crosskit_continuation", default=False)


@contextlib.contextmanager
def analytic_continuation():
    """Allow Im(w) < 0 inside the block (used by pole searches only)."""
    token = _continuation.set(True)
    try:
        yield
    finally:
        _continuation.reset(token)


class GreenConvention(enum.Enum):
    RETARDED = "retarded"
    PAPER_LITERAL = "paper_literal"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"retarded": cls.RETARDED, "paperliteral": cls.PAPER_LITERAL,
                   "paper_literal": cls.PAPER_LITERAL, "literal": cls.PAPER_LITERAL}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown Green convention {value!r}") from None


RETARDED = GreenConvention.RETARDED
PAPER_LITERAL = GreenConvention.PAPER_LITERAL


@dataclass(frozen=True)
class EnergyPoint:
    """Complex frequency w = re + i*im."""

    re: float
    im: float = 0.0

    @property
    def z(self):
        return complex(self.re, self.im)

    def __complex__(self):
        return self.z


def _check_omega(omega):
    z = as_complex(omega)
    if z.imag < 0 and not _continuation.get():
        raise ValueError(f"Im(w) = {z.imag} < 0 is only allowed during pole search")
    return z


@dataclass(frozen=True)
class PotentialSpec:
    """A diabatic curve.  ``kind`` is 'constant', 'linear' or 'sampled'."""

    kind: str
    v0: float = 0.0
    slope: float = 0.0
    samples: tuple = ()
    mass: float = 1.0
    _spline: object = field(default=None, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "sampled"):
            raise InvalidPotential(f"unknown potential kind {self.kind!r}")
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise InvalidPotential(f"mass must be positive, got {self.mass}")
        if self.kind == "sampled":
            xs = np.array([p[0] for p in self.samples], dtype=float)
            vs = np.array([p[1] for p in self.samples], dtype=float)
            if xs.size < 3:
                raise InvalidPotential("sampled potential needs at least 3 points")
            if np.any(np.diff(xs) <= 0):
                raise InvalidPotential("sampled positions must be strictly increasing")
            object.__setattr__(self, "_spline", CubicSpline(xs, vs))

    @classmethod
    def constant(cls, v0=0.0, mass=1.0):
        return cls("constant", v0=float(v0), mass=float(mass))

    @classmethod
    def linear(cls, v0=0.0, slope=1.0, mass=1.0):
        return cls("linear", v0=float(v0), slope=float(slope), mass=float(mass))

    @classmethod
    def sampled(cls, xs, vs, mass=1.0):
        pts = tuple((float(a), float(b)) for a, b in zip(xs, vs))
        return cls("sampled", samples=pts, mass=float(mass))

    @property
    def domain(self):
        if self.kind == "sampled":
            return self.samples[0][0], self.samples[-1][0]
        return -math.inf, math.inf

    def value(self, x, nu=0):
        """Potential (or its ``nu``-th derivative) at ``x``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.v0 if nu == 0 else 0.0)
        if self.kind == "linear":
            if nu == 0:
                return self.v0 + self.slope * x
            return np.full_like(x, self.slope if nu == 1 else 0.0)
        return self._spline(x, nu)

    def asymptotes(self):
        """(left, right) asymptotic values, or None where the curve is not flat."""
        if self.kind == "constant":
            return self.v0, self.v0
        if self.kind == "linear":
            return (None, None) if self.slope != 0 else (self.v0, self.v0)
        return None, None

    def with_mass(self, mass):
        if self.kind == "sampled":
            xs, vs = zip(*self.samples)
            return PotentialSpec.sampled(xs, vs, mass)
        return PotentialSpec(self.kind, self.v0, self.slope, (), float(mass))


def wavenumber(omega, v0, mass):
    """k = sqrt(2m(w - v0)) on the branch Im k >= 0 (for Im w >= 0).

    For Im w < 0 the principal root continues k through the open-channel
    axis onto the resonance sheet.
    """
    z = clean_zero_imag(2.0 * mass * (np.asarray(omega, dtype=complex) - v0))
    return np.sqrt(z)


def green_constant(x, x0, omega, pot, conv=RETARDED):
    """Green's function of a constant potential; broadcasts over x, x0 and w.

    Retarded: (m / (i k)) exp(i k |x - x0|).  PaperLiteral: the printed
    coincident value sqrt(m / (2 (w - v0))) times the same propagation phase.
    """
    if pot.kind != "constant":
        raise InvalidPotential(f"green_constant needs a constant potential, got {pot.kind}")
    conv = GreenConvention.parse(conv)
    z = np.asarray(omega, dtype=complex)
    if np.ndim(z) == 0:
        z = np.asarray(_check_omega(complex(z)))
    elif np.any(z.imag < 0) and not _continuation.get():
        raise ValueError("Im(w) < 0 is only allowed during pole search")
    delta = z - pot.v0
    if np.any(delta == 0):
        raise BranchPointError(f"w = v0 = {pot.v0} is a branch point")
    m = pot.mass
    k = wavenumber(z, pot.v0, m)
    phase = np.exp(1j * k * np.abs(np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)))
    if conv is RETARDED:
        amp = m / (1j * k)
    else:
        amp = np.sqrt(clean_zero_imag(m / (2.0 * delta)))
    out = amp * phase
    return complex(out) if np.ndim(out) == 0 else out


def _airy_linear(x, x0, z, v0, slope, m):
    if slope < 0:
        return _airy_linear(-np.asarray(x), -np.asarray(x0), z, v0, -slope, m)
    alpha = (2.0 * m * slope) ** (1.0 / 3.0)
    turning = (z - v0) / slope
    lo = alpha * (np.minimum(x, x0) - turning) + 0j
    hi = alpha * (np.maximum(x, x0) - turning) + 0j
    # u_minus = Ai - i Bi = 2 exp(-i pi/3) Ai(xi exp(2 i pi/3)) is outgoing to the
    # left; u_plus = Ai decays to the right.  Scaled Airy functions avoid overflow.
    rot = lo * np.exp(2j * np.pi / 3)
    e_lo = airye(rot)[0]
    e_hi = airye(hi)[0]
    expo = -(2.0 / 3.0) * (rot ** 1.5 + hi ** 1.5)
    wronskian = alpha * 1j / np.pi
    return 2.0 * m * 2.0 * np.exp(-1j * np.pi / 3) * e_lo * e_hi * np.exp(expo) / wronskian


def green_linear(x, x0, omega, pot):
    """Retarded Green's function of V = v0 + slope * x built from Airy functions."""
    if pot.kind != "linear":
        raise InvalidPotential(f"green_linear needs a linear potential, got {pot.kind}")
    if pot.slope == 0:
        raise DegenerateSlope("slope = 0; use green_constant")
    z = _check_omega(omega)
    out = _airy_linear(np.asarray(x, dtype=float), np.asarray(x0, dtype=float),
                       z, pot.v0, pot.slope, pot.mass)
    return complex(out) if np.ndim(out) == 0 else out


class _TwoSidedSolution:
    """Left-outgoing and right-outgoing solutions for one frequency."""

    def __init__(self, pot, z, max_step):
        self.pot = pot
        self.z = z
        m = pot.mass
        xl, xr = pot.domain

        spline = pot._spline
        breaks = spline.x.tolist()
        coeffs = spline.c.T.tolist()
        last = len(breaks) - 2

        def rhs(x, y):
            i = min(max(bisect.bisect_right(breaks, x) - 1, 0), last)
            c3, c2, c1, c0 = coeffs[i]
            d = x - breaks[i]
            q = 2.0 * m * (z - (((c3 * d + c2) * d + c1) * d + c0))
            return [y[1], -q * y[0]]

        opts = dict(method="DOP853", rtol=1e-12, atol=1e-30, dense_output=True)
        if max_step is not None:
            opts["max_step"] = max_step
        self.left = solve_ivp(rhs, (xl, xr), [1.0 + 0j, self._boundary_logderiv(xl, -1)], **opts)
        self.right = solve_ivp(rhs, (xr, xl), [1.0 + 0j, self._boundary_logderiv(xr, +1)], **opts)
        if not (self.left.success and self.right.success):
            raise WronskianDegenerate("integration of the boundary solutions failed")
        probes = np.linspace(xl, xr, 17)[1:-1]
        w = np.array([self.wronskian(p) for p in probes])
        self.wronskian_value = w[len(w) // 2]
        self.wronskian_spread = float(np.max(np.abs(w - self.wronskian_value)) /
                                      abs(self.wronskian_value)) if self.wronskian_value else math.inf
        scale = np.abs(self.left.sol(probes[len(w) // 2])) @ np.abs(self.right.sol(probes[len(w) // 2])[::-1])
        if abs(self.wronskian_value) <= 1e-10 * scale:
            raise WronskianDegenerate(f"|W| = {abs(self.wronskian_value):.3e}: w is at a bound state")

    def _boundary_logderiv(self, xb, side):
        # Asymptotic solution of the Riccati equation L' + L^2 + Q = 0,
        # outgoing (open) or decaying (closed) away from the domain.
        m = self.pot.mass
        q = 2.0 * m * (self.z - float(self.pot.value(xb)))
        dq = -2.0 * m * float(self.pot.value(xb, 1))
        d2q = -2.0 * m * float(self.pot.value(xb, 2))
        if abs(q) < 1e-12:
            raise DomainError(f"domain edge x = {xb} sits on a turning point")
        k = complex(wavenumber(self.z, self.z - q / (2.0 * m), m))
        l0 = side * 1j * k
        l1 = -dq / (4.0 * q)
        l2 = (d2q / (4.0 * q) - 5.0 * dq * dq / (16.0 * q * q)) / (2.0 * l0)
        return l0 + l1 + l2

    def wronskian(self, x):
        um, dum = self.left.sol(x)
        up, dup = self.right.sol(x)
        return um * dup - dum * up

    def __call__(self, x, x0):
        lo, hi = min(x, x0), max(x, x0)
        return 2.0 * self.pot.mass * self.left.sol(lo)[0] * self.right.sol(hi)[0] / self.wronskian_value


def green_numeric(x, x0, omega, pot, grid=None):
    """Retarded Green's function of a sampled potential by two-sided integration.

    ``grid`` caps the integrator step; the boundary data at each domain edge
    is outgoing or decaying according to the local w - V.
    """
    return NumericGreen(pot, max_step=grid)(x, x0, omega)


def green_spectral(eigenpairs, omega, tail=None, rel_cutoff=1e-10):
    """Spectral sum sum_n phi_n(x) conj(phi_n(x0)) / (w - E_n).

    ``eigenpairs`` yields ``(E_n, phi_n(x), phi_n(x0))``.  ``tail``, if given,
    is a callable ``tail(n, w) -> (estimate, bound)`` for the remainder after
    the first ``n`` terms; summation stops once the bound drops below
    ``rel_cutoff`` times the accumulated sum and the estimate is added.
    """
    z = complex(getattr(omega, "z", omega))
    acc = NeumaierSum()
    n = 0
    checkpoint = 1
    for energy, phi_x, phi_x0 in eigenpairs:
        denom = z - energy
        if abs(denom) <= 1e-14 * max(1.0, abs(energy)):
            raise PoleError(f"w coincides with eigenvalue E = {energy}", module="greens_core")
        acc.add(phi_x * np.conj(phi_x0) / denom)
        n += 1
        if tail is not None and n == checkpoint:
            checkpoint *= 2
            est, bound = tail(n, z)
            if bound <= rel_cutoff * abs(acc.value):
                acc.add(est)
                return acc.value
    if n == 0:
        raise ValueError("green_spectral needs at least one eigenpair")
    if tail is not None:
        est, _ = tail(n, z)
        acc.add(est)
    return acc.value


class ConstantGreen:
    method = "ClosedFormConstant"

    def __init__(self, pot, convention=RETARDED):
        if pot.kind != "constant":
            raise InvalidPotential("ConstantGreen needs a constant potential")
        self.potential = pot
        self.convention = GreenConvention.parse(convention)

    def __call__(self, x, x0, omega):
        return green_constant(x, x0, omega, self.potential, self.convention)

    def coincident(self, x, omega):
        return self(x, x, omega)


class LinearGreen:
    method = "AiryLinear"

    def __init__(self, pot, convention=RETARDED):
        if GreenConvention.parse(convention) is not RETARDED:
            raise ConventionError("PaperLiteral is defined for constant potentials only")
        self.potential = pot
        self.convention = RETARDED
        if pot.slope == 0:
            raise DegenerateSlope("slope = 0; use ConstantGreen")

    def __call__(self, x, x0, omega):
        return green_linear(x, x0, omega, self.potential)

    def coincident(self, x, omega):
        return self(x, x, omega)


class NumericGreen:
    method = "NumericWronskian"

    def __init__(self, pot, convention=RETARDED, max_step=None):
        if pot.kind != "sampled":
            raise InvalidPotential("NumericGreen needs a sampled potential")
        if GreenConvention.parse(convention) is not RETARDED:
            raise ConventionError("PaperLiteral is defined for constant potentials only")
        self.potential = pot
        self.convention = RETARDED
        self.max_step = max_step
        self._cache = {}
        self._lock = threading.Lock()

    def solution(self, omega):
        z = _check_omega(omega)
        with self._lock:
            sol = self._cache.get(z)
        if sol is None:
            sol = _TwoSidedSolution(self.potential, z, self.max_step)
            with self._lock:
                if len(self._cache) > 64:
                    self._cache.clear()
                self._cache[z] = sol
        return sol

    def __call__(self, x, x0, omega):
        xl, xr = self.potential.domain
        for p in (x, x0):
            if not (xl <= p <= xr):
                raise DomainError(f"position {p} outside sampled domain [{xl}, {xr}]")
        return complex(self.solution(omega)(float(x), float(x0)))

    def coincident(self, x, omega):
        return self(x, x, omega)


def green_evaluator(pot, convention=RETARDED, max_step=None):
    """Pick the evaluator matching the potential kind."""
    if pot.kind == "constant" or (pot.kind == "linear" and pot.slope == 0):
        if pot.kind == "linear":
            pot = PotentialSpec.constant(pot.v0, pot.mass)
        return ConstantGreen(pot, convention)
    if pot.kind == "linear":
        return LinearGreen(pot, convention)
    return NumericGreen(pot, convention, max_step=max_step)
