"""Reference solutions that share no code with the Green's-function routes.

``matching_solve`` glues piecewise plane waves across the delta couplings.
``split_operator_propagate`` integrates the time-dependent equations on a
grid with each delta replaced by a narrow normalized Gaussian, and
``delta_width_extrapolate`` removes the width dependence afterwards.
Systems are read by attribute only, so this module never imports the
dressing code.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from crosskit.errors import (
    ClosedEntranceChannel,
    NonConstantAsymptotics,
    NonMonotone,
    SingularSystem,
    StabilityViolation,
)
from crosskit.scatter import ScatterResult
from crosskit.wavepacket import GaussianPacket, WaveField


def _star(sys):
    """(driver, [(potential, strength, point), ...]) from either system type."""
    if hasattr(sys, "driver"):
        return sys.driver, [(c.potential, complex(c.strength), float(c.point)) for c in sys.channels]
    return sys.channel1, [(sys.channel2, complex(sys.coupling.strength), float(sys.coupling.location))]


def _level(pot, label):
    if pot.kind == "constant" or (pot.kind == "linear" and pot.slope == 0):
        return pot.v0
    raise NonConstantAsymptotics(f"{label} must be flat for plane-wave matching")


def matching_solve(sys, energy, incidence="left"):
    """Exact stationary scattering by plane-wave matching at every coupling point.

    Driver: exp(ikx) + r exp(-ikx) on the far left, t exp(ikx) on the far
    right and free left/right movers in between.  Channel e: c_e
    exp(iq|x - x_e|), outgoing (or decaying) on both sides.  At each point
    psi_1 is continuous with psi_1' jumping by 2m sum k_e psi_e(x_e), and
    psi_e' jumps by 2m k_e psi_1(x_e).
    """
    driver, chans = _star(sys)
    m = driver.mass
    energy = float(energy)
    v1 = _level(driver, "driver")
    if energy <= v1:
        raise ClosedEntranceChannel(f"E = {energy} <= driver level {v1}")
    if incidence not in ("left", "right"):
        raise ValueError("incidence must be 'left' or 'right'")
    flip = -1.0 if incidence == "right" else 1.0
    k = math.sqrt(2.0 * m * (energy - v1))
    levels = [_level(p, f"channel {i + 2}") for i, (p, _, _) in enumerate(chans)]
    qs = [complex(np.sqrt(complex(2.0 * m * (energy - v)))) for v in levels]
    qs = [q if q.imag >= 0 else -q for q in qs]
    active = [i for i, c in enumerate(chans) if c[1] != 0]
    pts = sorted({flip * chans[i][2] for i in active})
    n, nc = len(pts), len(active)
    if n == 0:
        r, t, amps = 0j, 1.0 + 0j, {}
    else:
        # Unknowns: r, (A_j, B_j) for the n - 1 inner regions, t, then c_e.
        size = 2 * n + nc
        a = np.zeros((size, size), dtype=complex)
        rhs = np.zeros(size, dtype=complex)

        def region_cols(j):
            # Column indices of (right mover, left mover) in region j; None = fixed/zero.
            if j == 0:
                return None, 0
            if j == n:
                return 2 * n - 1, None
            return 2 * j - 1, 2 * j

        for j, p in enumerate(pts):
            row_c, row_d = 2 * j, 2 * j + 1
            ep, em = np.exp(1j * k * p), np.exp(-1j * k * p)
            for sign, reg in ((-1.0, j), (1.0, j + 1)):
                cr, cl = region_cols(reg)
                # continuity: right-side minus left-side = 0
                if cr is None:
                    rhs[row_c] -= sign * ep
                    rhs[row_d] -= sign * 1j * k * ep
                else:
                    a[row_c, cr] += sign * ep
                    a[row_d, cr] += sign * 1j * k * ep
                if cl is not None:
                    a[row_c, cl] += sign * em
                    a[row_d, cl] += sign * (-1j * k) * em
            for col, i in enumerate(active):
                if flip * chans[i][2] == p:
                    a[row_d, 2 * n + col] -= 2.0 * m * chans[i][1]
        for col, i in enumerate(active):
            row = 2 * n + col
            p = flip * chans[i][2]
            j = pts.index(p)
            # psi_1 at the point, read from the region on its right
            cr, cl = region_cols(j + 1)
            a[row, 2 * n + col] = 2j * qs[i]
            if cr is not None:
                a[row, cr] -= 2.0 * m * chans[i][1] * np.exp(1j * k * p)
            if cl is not None:
                a[row, cl] -= 2.0 * m * chans[i][1] * np.exp(-1j * k * p)
        cond = np.linalg.cond(a)
        if not np.isfinite(cond) or cond * np.finfo(float).eps >= 1.0:
            raise SingularSystem(f"matching system singular at E = {energy}")
        sol = np.linalg.solve(a, rhs)
        r, t = sol[0], sol[2 * n - 1]
        amps = {i: sol[2 * n + col] for col, i in enumerate(active)}
    amplitudes, transfer, opened = [], [], []
    for i, q in enumerate(qs):
        c = complex(amps.get(i, 0j))
        is_open = energy > levels[i]
        amplitudes.append((c, c))
        transfer.append(float(2.0 * q.real / k * abs(c) ** 2) if is_open else 0.0)
        opened.append(bool(is_open))
    return ScatterResult(
        energy=energy, r=complex(r), t=complex(t), amplitudes=tuple(amplitudes),
        R=float(abs(r) ** 2), T=float(abs(t) ** 2), transfer=tuple(transfer),
        open_channels=tuple(opened), incidence=incidence,
    )


@dataclass(frozen=True)
class RegularizedCoupling:
    """Normalized Gaussian of width ``width`` standing in for strength * delta(x - location)."""

    strength: complex
    location: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("regularization width must be positive")

    def profile(self, x):
        d = (np.asarray(x, dtype=float) - self.location) / self.width
        return self.strength * np.exp(-0.5 * d * d) / (math.sqrt(2.0 * math.pi) * self.width)


def regularize(sys, width):
    """One RegularizedCoupling per side channel, in channel order."""
    _, chans = _star(sys)
    return [RegularizedCoupling(s, p, width) for _, s, p in chans]


@dataclass(frozen=True)
class PropagationConfig:
    x_min: float
    x_max: float
    spacing: float
    time_step: float
    total_time: float
    output_interval: float
    absorber_width: float = 10.0
    absorber_strength: float = 1.0
    norm_tolerance: float = 1e-10

    @property
    def grid(self):
        n = int(round((self.x_max - self.x_min) / self.spacing))
        return self.x_min + self.spacing * np.arange(n)

    def check(self, mass, p_max):
        """Raise StabilityViolation unless the grid resolves p_max and dt fits the kinetic spectrum."""
        if 2.0 * math.pi / p_max < 8.0 * self.spacing:
            raise StabilityViolation(
                f"spacing {self.spacing} resolves wavelength {2 * math.pi / p_max:.3g} "
                "with fewer than 8 points")
        k_nyq = math.pi / self.spacing
        if self.time_step * k_nyq ** 2 / (2.0 * mass) > math.pi:
            raise StabilityViolation(f"time step {self.time_step} exceeds the kinetic bound "
                                     f"{2 * math.pi * mass / k_nyq ** 2:.3g}")
        steps = self.total_time / self.time_step
        every = self.output_interval / self.time_step
        if abs(steps - round(steps)) > 1e-9 * steps or abs(every - round(every)) > 1e-9 * every:
            raise ValueError("total_time and output_interval must be multiples of time_step")


@dataclass(frozen=True)
class PropagationResult:
    times: np.ndarray
    populations: np.ndarray
    survival: np.ndarray
    fields: tuple
    norm_drift: float

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"population_{c + 1}" for c in range(self.populations.shape[1])]
                       + ["survival"])
            for t, pops, s in zip(self.times, self.populations, self.survival):
                w.writerow([format(t, ".15g")] + [format(p, ".15g") for p in pops]
                           + [format(s, ".15g")])


def _mask(x, cfg):
    d = np.maximum(np.maximum(cfg.x_min + cfg.absorber_width - x, x - (cfg.x_max - cfg.absorber_width)), 0.0)
    ramp = np.sin(0.5 * math.pi * np.minimum(d / cfg.absorber_width, 1.0)) ** 2
    return 1.0 - cfg.absorber_strength * ramp


def _potential_on_grid(pot, x):
    if pot.kind == "sampled":
        lo, hi = pot.domain
        return np.asarray(pot.value(np.clip(x, lo, hi)), dtype=float)
    return np.asarray(pot.value(x), dtype=float)


def split_operator_propagate(sys, couplings, psi0, cfg, keep_fields=False):
    """Strang-split propagation of the star-coupled channels on a uniform grid.

    ``couplings`` replaces the side-channel deltas of ``sys`` (one entry per
    channel).  ``psi0`` is a GaussianPacket or a driver WaveField already on
    ``cfg.grid``.  Returns populations per channel and the survival
    probability |<psi0|psi_1(t)>|^2 at every output time.
    """
    driver, chans = _star(sys)
    m = driver.mass
    x = cfg.grid
    nx = x.size
    if len(couplings) != len(chans):
        raise ValueError("need one regularized coupling per side channel")
    for c in couplings:
        if c.width < 4.0 * cfg.spacing * (1.0 - 1e-12):
            raise ValueError(f"coupling width {c.width} below 4 grid spacings")
    if isinstance(psi0, GaussianPacket):
        start = psi0.values(x)
        p_max = psi0.momentum_extent()
    else:
        start = np.asarray(psi0.values, dtype=complex)
        if start.shape != x.shape:
            raise ValueError("initial field must live on the propagation grid")
        spec = np.abs(np.fft.fft(start)) ** 2
        kk = np.abs(2.0 * np.pi * np.fft.fftfreq(nx, cfg.spacing))
        p_max = float(np.max(kk[spec > 1e-12 * spec.max()]))
    pots = [driver] + [p for p, _, _ in chans]
    vgrid = np.array([_potential_on_grid(p, x) for p in pots])
    e_top = p_max ** 2 / (2.0 * m) + float(vgrid[0].max())
    q_top = math.sqrt(max(2.0 * m * (e_top - vgrid.min()), p_max ** 2))
    cfg.check(m, q_top)

    nch = len(pots)
    h = np.zeros((nx, nch, nch), dtype=complex)
    for c in range(nch):
        h[:, c, c] = vgrid[c]
    for c, coup in enumerate(couplings, start=1):
        prof = coup.profile(x)
        h[:, 0, c] = prof
        h[:, c, 0] = np.conj(prof)
    evals, evecs = np.linalg.eigh(h)
    half = np.einsum("xij,xj,xkj->xik", evecs, np.exp(-0.5j * cfg.time_step * evals), evecs.conj())
    kgrid = 2.0 * np.pi * np.fft.fftfreq(nx, cfg.spacing)
    kinetic = np.exp(-1j * cfg.time_step * kgrid ** 2 / (2.0 * m))
    mask = _mask(x, cfg)

    psi = np.zeros((nch, nx), dtype=complex)
    psi[0] = start
    ref = start.conj() * cfg.spacing
    steps = int(round(cfg.total_time / cfg.time_step))
    every = int(round(cfg.output_interval / cfg.time_step))
    times, pops, surv, fields = [], [], [], []
    drift = 0.0

    def record(step):
        times.append(step * cfg.time_step)
        pops.append(np.sum(np.abs(psi) ** 2, axis=1) * cfg.spacing)
        surv.append(abs(np.dot(ref, psi[0])) ** 2)
        if keep_fields:
            t = step * cfg.time_step
            fields.append(tuple(WaveField(c + 1, x, psi[c].copy(), time=t) for c in range(nch)))

    record(0)
    for step in range(1, steps + 1):
        before = np.sum(np.abs(psi) ** 2)
        psi = np.einsum("xij,jx->ix", half, psi)
        psi = np.fft.ifft(kinetic * np.fft.fft(psi, axis=1), axis=1)
        psi = np.einsum("xij,jx->ix", half, psi)
        after = np.sum(np.abs(psi) ** 2)
        if before > 0:
            drift += abs(after / before - 1.0)
        psi *= mask
        if step % every == 0:
            record(step)
    bound = cfg.norm_tolerance * max(1.0, steps / 1e4)
    if drift > bound:
        raise StabilityViolation(f"unitary norm drift {drift:.2e} exceeds {bound:.2e}")
    return PropagationResult(np.array(times), np.array(pops), np.array(surv),
                             tuple(fields), float(drift))


@dataclass(frozen=True)
class Extrapolation:
    value: np.ndarray
    error: np.ndarray


def delta_width_extrapolate(widths, values, variable="sigma"):
    """Richardson extrapolation of width-dependent observables to zero width.

    Near-zone observables such as the survival amplitude pick up a term
    linear in s from the cusp of the channel Green's functions, so by default
    a quadratic in s is fitted through the three results.  Asymptotic
    scattering probabilities change only at order s**2; use
    ``variable='sigma2'`` for those.  The error estimate
    is the change between the two-point and three-point extrapolants.
    """
    widths = np.asarray(widths, dtype=float)
    values = np.asarray(values)
    if widths.size != 3 or not (widths[0] > widths[1] > widths[2] > 0):
        raise ValueError("need three strictly decreasing positive widths")
    if variable not in ("sigma", "sigma2"):
        raise ValueError("variable must be 'sigma' or 'sigma2'")
    s = widths if variable == "sigma" else widths ** 2

    def lagrange_at_zero(nodes):
        w = []
        for i, si in enumerate(nodes):
            others = [sj for j, sj in enumerate(nodes) if j != i]
            w.append(math.prod(-sj / (si - sj) for sj in others))
        return w

    w3 = lagrange_at_zero(s)
    three = sum(wi * values[i] for i, wi in enumerate(w3))
    w2 = lagrange_at_zero(s[1:])
    two = sum(wi * values[i + 1] for i, wi in enumerate(w2))
    d_far = float(np.max(np.abs(values[1] - values[0])))
    d_near = float(np.max(np.abs(values[2] - values[1])))
    if d_near > d_far * (1.0 + 1e-12) + 1e-15:
        warnings.warn("width sequence is not converging monotonically", NonMonotone)
    return Extrapolation(np.asarray(three), np.abs(np.asarray(three) - np.asarray(two)))
