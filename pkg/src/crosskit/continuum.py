"""A continuum of side channels attached at a single point.

Integrating out the continuum gives the driver a frequency-dependent point
potential V(w) = int_0^inf k(e)^2 G0(a, a; w, e) de.  For the exponential
kernel k(e)^2 G0 = amplitude * exp(-e / w) the integral is amplitude * w.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from crosskit.errors import (
    NonIntegrable,
    PoleError,
    QuadratureFailure,
    TailTooHeavy,
)
from crosskit.greens_core import (
    RETARDED,
    GreenConvention,
    PotentialSpec,
    green_constant,
    green_evaluator,
)
from crosskit.multichannel import ChannelSpec, MultiChannelSystem

ABS_TOL = 1e-10
REL_TOL = 1e-8
POLE_THRESHOLD = 1e-14


@dataclass(frozen=True)
class CouplingKernel:
    """Squared coupling k(e)^2 to the continuum.

    ``paper_exponential``: k(e)^2 = amplitude * exp(-e / w) / G0(a, a; w, e),
    the reciprocal of the channel Green's factor, so the product with G0 is
    amplitude * exp(-e / w) on either branch convention.
    ``tabulated``: amplitude times a piecewise-linear table of (e, k^2);
    ``parameters['tail_bound']`` bounds the integral beyond the last entry.
    """

    form: str
    amplitude: float = 1.0
    parameters: dict = field(default_factory=dict, hash=False)
    table: tuple = ()

    def __post_init__(self):
        if self.form not in ("paper_exponential", "tabulated"):
            raise ValueError(f"unknown kernel form {self.form!r}")
        if not (self.amplitude >= 0 and math.isfinite(self.amplitude)):
            raise ValueError("kernel amplitude must be finite and non-negative")
        if self.form == "tabulated":
            eps = np.array([row[0] for row in self.table], dtype=float)
            if eps.size < 2 or np.any(np.diff(eps) <= 0):
                raise ValueError("tabulated kernel needs >= 2 strictly increasing energies")

    @classmethod
    def paper_exponential(cls, amplitude):
        return cls("paper_exponential", float(amplitude))

    @classmethod
    def tabulated(cls, energies, values, amplitude=1.0, tail_bound=0.0):
        rows = tuple((float(e), float(v)) for e, v in zip(energies, values))
        return cls("tabulated", float(amplitude), {"tail_bound": float(tail_bound)}, rows)

    @classmethod
    def from_file(cls, path, amplitude=1.0, tail_bound=0.0):
        """Load two whitespace-separated columns (e, k^2); '#' starts a comment."""
        data = np.loadtxt(path, comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns, found {data.shape[1]}")
        return cls.tabulated(data[:, 0], data[:, 1], amplitude, tail_bound)

    @property
    def energy_range(self):
        if self.form == "tabulated":
            return self.table[0][0], self.table[-1][0]
        return 0.0, math.inf

    def squared(self, eps, omega, family_value):
        """k(e)^2 at ``eps``; ``family_value`` is G0(a, a; w, e) there."""
        eps = np.asarray(eps, dtype=float)
        if self.form == "paper_exponential":
            return self.amplitude * np.exp(-eps / omega) / family_value
        e = [row[0] for row in self.table]
        v = [row[1] for row in self.table]
        return self.amplitude * np.interp(eps, e, v, left=0.0, right=0.0)

    def tail_bound(self, eps_max, omega):
        """Upper bound on |int_{eps_max}^inf k^2 G0 de|."""
        if self.form == "tabulated":
            if eps_max < self.table[-1][0]:
                return math.inf
            return float(self.parameters.get("tail_bound", 0.0))
        if self.amplitude == 0:
            return 0.0
        rate = (1.0 / complex(omega)).real
        if rate <= 0:
            raise NonIntegrable(f"exp(-e / w) does not decay for w = {omega}")
        return self.amplitude * math.exp(-eps_max * rate) / rate


@dataclass(frozen=True)
class ContinuumSystem:
    """Driver plus a continuum of channels all attached at ``attach_point``.

    ``channel_family(e, w)`` returns G0(a, a; w, e); by default it is the
    free channel at constant level e in the system convention.
    """

    driver: PotentialSpec
    attach_point: float
    kernel: CouplingKernel
    channel_family: Optional[Callable] = None
    convention: GreenConvention = RETARDED

    def __post_init__(self):
        object.__setattr__(self, "convention", GreenConvention.parse(self.convention))
        if not math.isfinite(self.attach_point):
            raise ValueError("attach point must be finite")

    def family(self, eps, omega):
        if self.channel_family is not None:
            return self.channel_family(eps, omega)
        a = self.attach_point
        eps = np.asarray(eps, dtype=float)
        m = self.driver.mass
        # Constant channels at level e: same formula for every e, vectorised.
        out = np.empty(eps.shape, dtype=complex)
        for idx, e in np.ndenumerate(eps):
            out[idx] = green_constant(a, a, omega, PotentialSpec.constant(e, m), self.convention)
        return out if out.ndim else complex(out)

    def integrand(self, eps, omega):
        g = self.family(eps, omega)
        return self.kernel.squared(eps, omega, g) * g


def _quad(func, lo, hi, budget):
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, err = quad(func, lo, hi, epsabs=ABS_TOL / 8, epsrel=REL_TOL / 8,
                            limit=budget, complex_func=True)
        except IntegrationWarning as exc:
            raise QuadratureFailure(str(exc).splitlines()[0]) from None
    # complex_func reports the real and imaginary error estimates as one complex number
    return val, abs(complex(err).real) + abs(complex(err).imag)


def effective_potential(omega, sys, eps_max=None, budget=200):
    """V(w) = int_0^inf k(e)^2 G0(a, a; w, e) de by adaptive quadrature.

    Near the channel threshold e = Re w the integrand behaves like
    sqrt(w - e); the substitutions e = w -+ u^2 make it smooth.
    """
    omega = complex(omega)
    kern = sys.kernel
    if kern.amplitude == 0:
        return 0j
    lo, hi = kern.energy_range
    if eps_max is None:
        if kern.form == "paper_exponential":
            rate = (1.0 / omega).real
            if rate <= 0:
                raise NonIntegrable(f"exp(-e / w) does not decay for w = {omega}")
            eps_max = max(math.log(max(kern.amplitude, 1e-300) / (rate * ABS_TOL * 1e-3)) / rate,
                          2.0 * omega.real)
        else:
            eps_max = hi
    tail = kern.tail_bound(eps_max, omega)
    if not math.isfinite(tail):
        raise NonIntegrable(f"tail beyond e = {eps_max} is unbounded")

    def f(e):
        return complex(sys.integrand(e, omega))

    thr = omega.real
    pieces = []
    if lo < thr < eps_max:
        left = math.sqrt(thr - lo)
        right_end = min(eps_max, thr + max(1.0, abs(thr)))
        right = math.sqrt(right_end - thr)
        pieces.append(_quad(lambda u: 2.0 * u * f(thr - u * u), 0.0, left, budget))
        pieces.append(_quad(lambda u: 2.0 * u * f(thr + u * u), 0.0, right, budget))
        if right_end < eps_max:
            pieces.append(_quad(f, right_end, eps_max, budget))
    else:
        pieces.append(_quad(f, lo, eps_max, budget))
    value = math.fsum(p[0].real for p in pieces) + 1j * math.fsum(p[0].imag for p in pieces)
    err = sum(p[1] for p in pieces) + tail
    if err > max(ABS_TOL, REL_TOL * abs(value)):
        raise QuadratureFailure(f"error estimate {err:.2e} above tolerance at w = {omega}")
    return complex(value)


def analytic_special_value(omega, amplitude):
    """Closed form amplitude * w of the exponential-kernel integral."""
    omega = complex(omega)
    if omega.real <= 0:
        raise ValueError("the exponential kernel needs Re(w) > 0")
    return amplitude * omega


def dressed_continuum_green(x, x0, omega, sys, potential=None):
    """Driver Green's function dressed by the point potential V(w) at the attach point.

    ``potential`` replaces V(w) when given (a number, or a callable of w).
    """
    if potential is None:
        v = effective_potential(omega, sys)
    elif callable(potential):
        v = complex(potential(omega))
    else:
        v = complex(potential)
    g = green_evaluator(sys.driver, sys.convention)
    a = sys.attach_point
    d = 1.0 - v * g(a, a, omega)
    if abs(d) <= POLE_THRESHOLD:
        raise PoleError(f"|1 - V G1(a, a)| = {abs(d):.2e} at w = {omega}", module="continuum")
    return complex(g(x, x0, omega) + v * g(x, a, omega) * g(a, x0, omega) / d)


def discretize_continuum(sys, n, eps_max, omega):
    """Replace the continuum by ``n`` constant channels on a midpoint grid over [0, eps_max].

    Channel j sits at level e_j with strength sqrt(k(e_j)^2 de) so its
    effective weight is k(e_j)^2 G0(a, a; w, e_j) de.  The exponential kernel
    depends on w, so the result is valid at that frequency only.
    """
    if n < 1:
        raise ValueError("need at least one channel")
    if sys.channel_family is not None:
        raise ValueError("discretization builds constant channels; use the default family")
    lo, _ = sys.kernel.energy_range
    omega = complex(omega)
    tail = sys.kernel.tail_bound(eps_max, omega)
    scale = abs(sys.kernel.amplitude * omega) if sys.kernel.form == "paper_exponential" \
        else abs(effective_potential(omega, sys))
    if tail > 1e-6 * max(scale, 1e-300):
        raise TailTooHeavy(f"tail beyond e = {eps_max} is {tail:.2e}, above 1e-6 of |V|")
    width = (eps_max - lo) / n
    eps = lo + width * (np.arange(n) + 0.5)
    k2 = sys.kernel.squared(eps, omega, sys.family(eps, omega)) * width
    m = sys.driver.mass
    chans = tuple(
        ChannelSpec(PotentialSpec.constant(e, m), complex(np.sqrt(complex(s))), sys.attach_point)
        for e, s in zip(eps, k2)
    )
    return MultiChannelSystem(sys.driver, chans, sys.convention)
