"""Two diabatic curves coupled by K0 * delta(x - xc): exact dressed Green's functions.

The coupled 2x2 resolvent reduces to closed forms in the bare channel Green's
functions G1, G2 and the denominator D = 1 - K0^2 G1(xc,xc) G2(xc,xc).
Scattering amplitudes are read off the asymptotics of the dressed blocks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from crosskit._numerics import as_complex, complex_newton
from crosskit.errors import (
    ClosedEntranceChannel,
    NoConvergence,
    NonConstantAsymptotics,
    PoleError,
)
from crosskit.greens_core import (
    RETARDED,
    GreenConvention,
    PotentialSpec,
    analytic_continuation,
    green_evaluator,
    wavenumber,
)
from crosskit.scatter import ScatterResult

POLE_THRESHOLD = 1e-14
BLOCKS = ("G11", "G12", "G21", "G22")


@dataclass(frozen=True)
class DeltaCoupling:
    strength: float
    location: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.strength):
            raise ValueError("coupling strength must be finite")


@dataclass(frozen=True)
class TwoChannelSystem:
    channel1: PotentialSpec
    channel2: PotentialSpec
    coupling: DeltaCoupling
    convention: GreenConvention = RETARDED
    _evals: tuple = field(default=None, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.channel1.mass != self.channel2.mass:
            raise ValueError("both channels must share the same mass")
        object.__setattr__(self, "convention", GreenConvention.parse(self.convention))

    @property
    def mass(self):
        return self.channel1.mass

    @property
    def evaluators(self):
        if self._evals is None:
            object.__setattr__(self, "_evals", (
                green_evaluator(self.channel1, self.convention),
                green_evaluator(self.channel2, self.convention),
            ))
        return self._evals


def denominator(omega, sys):
    """D(w) = 1 - K0^2 G1(xc, xc; w) G2(xc, xc; w)."""
    k0 = sys.coupling.strength
    if k0 == 0:
        return 1.0 + 0j
    xc = sys.coupling.location
    g1, g2 = sys.evaluators
    return 1.0 - k0 * k0 * g1(xc, xc, omega) * g2(xc, xc, omega)


def dressed_green(block, x, x0, omega, sys):
    """Dressed block ``G11``, ``G12``, ``G21`` or ``G22`` at (x, x0; w)."""
    if block not in BLOCKS:
        raise ValueError(f"block must be one of {BLOCKS}, got {block!r}")
    k0 = sys.coupling.strength
    xc = sys.coupling.location
    ga, gb = sys.evaluators
    if block in ("G22", "G21"):
        ga, gb = gb, ga
    if k0 == 0:
        return ga(x, x0, omega) if block in ("G11", "G22") else 0j
    d = denominator(omega, sys)
    if abs(d) <= POLE_THRESHOLD:
        raise PoleError(f"|D(w)| = {abs(d):.2e} at w = {omega}: dressed pole")
    if block in ("G11", "G22"):
        return ga(x, x0, omega) + k0 * k0 * ga(x, xc, omega) * gb(xc, xc, omega) * ga(xc, x0, omega) / d
    return k0 * ga(x, xc, omega) * gb(xc, x0, omega) / d


def _flat_level(pot, which):
    left, right = pot.asymptotes()
    if left is None or right is None:
        raise NonConstantAsymptotics(f"{which} has no flat asymptotes; scattering is undefined")
    return left


def scatter_two(energy, sys, incidence="left"):
    """Reflection, transmission and transfer for a wave incident on channel 1.

    Amplitudes come from the dressed retarded blocks evaluated one unit to
    either side of the coupling point; for constant channels the plane-wave
    form holds exactly there.
    """
    v1 = _flat_level(sys.channel1, "channel 1")
    v2 = _flat_level(sys.channel2, "channel 2")
    energy = float(energy)
    if energy <= v1:
        raise ClosedEntranceChannel(f"E = {energy} <= v1 = {v1}")
    if sys.convention is not RETARDED:
        sys = replace(sys, convention=RETARDED, _evals=None)
    m = sys.mass
    xc = sys.coupling.location
    k1 = float(np.sqrt(2.0 * m * (energy - v1)))
    k2 = complex(wavenumber(energy, v2, m))
    xl, xr = xc - 1.0, xc + 1.0
    g1 = sys.evaluators[0]
    if incidence == "left":
        src, far, sgn = xl, xr, 1.0
    elif incidence == "right":
        src, far, sgn = xr, xl, -1.0
    else:
        raise ValueError("incidence must be 'left' or 'right'")
    # Source at `src` emits (m / i k1) exp(i k1 |x - src|); divide that out.
    norm = (1j * k1 / m) * np.exp(1j * sgn * k1 * src)
    t = dressed_green("G11", far, src, energy, sys) * norm * np.exp(-1j * sgn * k1 * far)
    scattered = dressed_green("G11", src, src, energy, sys) - g1(src, src, energy)
    r = scattered * norm * np.exp(1j * sgn * k1 * src)
    b = dressed_green("G21", xl, src, energy, sys) * norm * np.exp(1j * k2 * (xl - xc))
    c = dressed_green("G21", xr, src, energy, sys) * norm * np.exp(-1j * k2 * (xr - xc))
    is_open = energy > v2
    transfer = (k2.real / k1) * (abs(b) ** 2 + abs(c) ** 2) if is_open else 0.0
    return ScatterResult(
        energy=energy, r=complex(r), t=complex(t), amplitudes=((complex(b), complex(c)),),
        R=float(abs(r) ** 2), T=float(abs(t) ** 2), transfer=(float(transfer),),
        open_channels=(bool(is_open),), incidence=incidence,
    )


@dataclass(frozen=True)
class PoleCandidate:
    omega: complex
    residue: complex
    abs_denominator: float
    converged: bool
    iterations: int


def resonance_scan(region, sys, steps=(32, 32), tol=1e-10, maxiter=50):
    """Zeros of D(w) inside ``region = (re_min, re_max, im_min, im_max)``.

    Local minima of |D| on a ``steps`` grid seed Newton iterations on D.
    ``residue`` is the residue of 1/D at the refined point.  Candidates whose
    refinement fails are returned with ``converged=False``.
    """
    re_min, re_max, im_min, im_max = map(float, region)
    nx, ny = steps
    if nx < 8 or ny < 8:
        raise ValueError("resonance_scan needs at least 8 grid points per side")
    if not (re_max > re_min and im_max > im_min):
        raise ValueError("region must have positive extent")
    if sys.coupling.strength == 0:
        return []
    res = np.linspace(re_min, re_max, nx)
    ims = np.linspace(im_min, im_max, ny)
    with analytic_continuation():
        mod = np.empty((ny, nx))
        for j, im in enumerate(ims):
            for i, re in enumerate(res):
                try:
                    mod[j, i] = abs(denominator(complex(re, im), sys))
                except (ArithmeticError, ValueError):
                    mod[j, i] = math.inf
        seeds = []
        # Border minima usually mean the zero lies outside the region.
        for j in range(1, ny - 1):
            for i in range(1, nx - 1):
                v = mod[j, i]
                nb = mod[max(j - 1, 0):j + 2, max(i - 1, 0):i + 2]
                if np.isfinite(v) and v == nb.min() and v < nb.max():
                    seeds.append(complex(res[i], ims[j]))
        found = []
        for seed in seeds:
            z, fz, dfz, ok, it = complex_newton(lambda w: denominator(w, sys), seed, tol=tol,
                                                maxiter=maxiter)
            inside = re_min <= z.real <= re_max and im_min <= z.imag <= im_max
            if not ok or not inside:
                warnings.warn(f"pole candidate near {seed} did not converge", NoConvergence)
                found.append(PoleCandidate(seed, complex("nan+nanj"), float(abs(denominator(seed, sys))),
                                           False, it))
                continue
            if any(c.converged and abs(c.omega - z) < 1e-8 for c in found):
                continue
            residue = 1.0 / dfz if dfz != 0 else complex("inf")
            found.append(PoleCandidate(z, residue, float(abs(fz)), True, it))
    return found


def co_scan(energies, sys):
    """|D(E)| together with T(E) and transfer(E) on a real energy grid."""
    energies = np.asarray(energies, dtype=float)
    d = np.array([abs(denominator(e, sys)) for e in energies])
    results = [scatter_two(e, sys) for e in energies]
    return d, np.array([r.T for r in results]), np.array([r.total_transfer for r in results])
