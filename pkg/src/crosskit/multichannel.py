"""Driver channel coupled by point interactions to any number of side channels.

Eliminating the side channels leaves the driver with an energy-dependent
effective Hamiltonian H11 + sum_e k_e^2 G_e(x_e, x_e; w) delta(x - x_e).
Its Green's function is built either one channel at a time
(``dress_sequential``) or in a single linear solve (``dress_direct``).
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from crosskit._numerics import compensated_sum
from crosskit.errors import (
    ClosedEntranceChannel,
    GridTooCoarse,
    IllConditioned,
    InvalidPotential,
    NonConstantAsymptotics,
    PoleError,
    SingularSystem,
)
from crosskit.greens_core import (
    RETARDED,
    GreenConvention,
    PotentialSpec,
    green_constant,
    green_evaluator,
    green_linear,
    wavenumber,
)
from crosskit.scatter import ScatterResult
from crosskit.wavepacket import (
    GaussianPacket,
    WaveField,
    packet_green_expectation,
    packet_green_overlap,
)

POLE_THRESHOLD = 1e-14
ILL_CONDITIONED = 1e12


@dataclass(frozen=True)
class ChannelSpec:
    """Side channel: its potential, coupling strength k_e and coupling point x_e.

    Only k_e^2 enters the dressing, so a complex strength is accepted (the
    discretised continuum produces them).
    """

    potential: PotentialSpec
    strength: complex = 0.0
    point: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.strength):
            raise ValueError("channel strength must be finite")


@dataclass(frozen=True)
class MultiChannelSystem:
    driver: PotentialSpec
    channels: tuple = ()
    convention: GreenConvention = RETARDED
    _evals: tuple = field(default=None, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "convention", GreenConvention.parse(self.convention))
        for ch in self.channels:
            if ch.potential.mass != self.driver.mass:
                raise ValueError("all potentials must share one mass")

    @property
    def mass(self):
        return self.driver.mass

    @property
    def evaluators(self):
        """(driver evaluator, [channel evaluators]) built once per system."""
        if self._evals is None:
            cache = {}

            def get(pot):
                if pot not in cache:
                    cache[pot] = green_evaluator(pot, self.convention)
                return cache[pot]

            object.__setattr__(self, "_evals", (get(self.driver),
                                                tuple(get(c.potential) for c in self.channels)))
        return self._evals

    def retarded(self):
        if self.convention is RETARDED:
            return self
        return MultiChannelSystem(self.driver, self.channels, RETARDED)

    def permuted(self, order):
        return MultiChannelSystem(self.driver, tuple(self.channels[i] for i in order),
                                  self.convention)


@dataclass(frozen=True)
class EffectiveWeight:
    index: int
    weight: complex


def effective_weights(omega, sys):
    """k_e^2 G_e(x_e, x_e; w) for every channel, in input order."""
    _, chans = sys.evaluators
    out = []
    for i, (ch, g) in enumerate(zip(sys.channels, chans)):
        if ch.strength == 0:
            out.append(EffectiveWeight(i, 0j))
            continue
        out.append(EffectiveWeight(i, complex(ch.strength) ** 2 * g(ch.point, ch.point, omega)))
    return out


def _merged_points(points, weights):
    """Unique coupling points with the weights of coincident channels summed."""
    groups = {}
    for p, w in zip(points, weights):
        groups.setdefault(float(p), []).append(complex(w))
    pts = sorted(groups)
    merged = [complex(math.fsum(v.real for v in groups[p]), math.fsum(v.imag for v in groups[p]))
              for p in pts]
    return np.array(pts, dtype=float), np.array(merged, dtype=complex)


class DressedGreen:
    """Driver Green's function at a fixed frequency after eliminating all side channels."""

    def __init__(self, base, omega, method):
        self.base = base
        self.omega = omega
        self.method = method

    def bare(self, x, x0):
        return self.base(x, x0, self.omega)

    def coincident(self, x):
        return self(x, x)


class _SequentialGreen(DressedGreen):
    def __init__(self, base, omega, points, weights):
        super().__init__(base, omega, "sequential")
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=complex)
        n = len(self.points)
        p = np.array([[base(a, b, omega) for b in self.points] for a in self.points],
                     dtype=complex).reshape(n, n)
        self.stages = []
        for s in range(n):
            w = self.weights[s]
            if w == 0:
                continue
            d = 1.0 - w * p[s, s]
            if abs(d) <= POLE_THRESHOLD:
                raise PoleError(f"stage {s + 1} denominator vanished (|d| = {abs(d):.2e})",
                                stage=s + 1, module="multichannel")
            coef = w / d
            col, row = p[:, s].copy(), p[s, :].copy()
            self.stages.append((s, coef, col, row))
            p = p + coef * np.outer(col, row)
        self.point_matrix = p

    def __call__(self, x, x0):
        g = self.base(x, x0, self.omega)
        if not self.stages:
            return complex(g)
        a = np.array([self.base(x, q, self.omega) for q in self.points], dtype=complex)
        b = np.array([self.base(q, x0, self.omega) for q in self.points], dtype=complex)
        for s, coef, col, row in self.stages:
            an, bn = a[s], b[s]
            g = g + coef * an * bn
            a = a + coef * an * row
            b = b + coef * col * bn
        return complex(g)


def _conditioning(mat):
    # Condition of I - A measured against max(1, |A|), so a 1x1 system near zero counts as singular.
    sv = np.linalg.svd(mat, compute_uv=False)
    scale = max(1.0, float(np.linalg.norm(np.eye(len(mat)) - mat, 2)))
    return scale / sv[-1] if sv[-1] > 0 else np.inf


class _DirectGreen(DressedGreen):
    def __init__(self, base, omega, points, weights):
        super().__init__(base, omega, "direct")
        self.points, self.weights = _merged_points(points, weights)
        n = len(self.points)
        if n == 0:
            self.tmatrix = np.zeros((0, 0), dtype=complex)
            self.condition = 1.0
            return
        g = np.array([[base(a, b, omega) for b in self.points] for a in self.points],
                     dtype=complex).reshape(n, n)
        m = np.eye(n) - self.weights[:, None] * g
        cond = _conditioning(m)
        if not np.isfinite(cond) or cond * np.finfo(float).eps >= 1.0:
            raise SingularSystem(f"dressing matrix is singular at w = {omega}")
        if cond > ILL_CONDITIONED:
            warnings.warn(f"dressing matrix condition number {cond:.2e}", IllConditioned)
        self.condition = float(cond)
        self.tmatrix = np.linalg.solve(m, np.diag(self.weights))

    def __call__(self, x, x0):
        g = self.base(x, x0, self.omega)
        if len(self.points) == 0:
            return complex(g)
        a = np.array([self.base(x, q, self.omega) for q in self.points], dtype=complex)
        b = np.array([self.base(q, x0, self.omega) for q in self.points], dtype=complex)
        return complex(g + a @ self.tmatrix @ b)


def dress_sequential(sys, omega):
    """Add the side channels one by one, in input order (Dyson recursion)."""
    base, _ = sys.evaluators
    w = [e.weight for e in effective_weights(omega, sys)]
    return _SequentialGreen(base, omega, [c.point for c in sys.channels], w)


def dress_direct(sys, omega):
    """Resum all point interactions at once; coincident points are merged first.

    G''(x, x0) = G1(x, x0) + sum_ij G1(x, x_i) T_ij G1(x_j, x0) with
    T = (I - W G)^-1 W, W = diag(weights), G_ij = G1(x_i, x_j).
    """
    base, _ = sys.evaluators
    w = [e.weight for e in effective_weights(omega, sys)]
    return _DirectGreen(base, omega, [c.point for c in sys.channels], w)


def dressing_determinant(omega, sys):
    """det(I - W G) over the merged coupling points; the two-state denominator for N = 1."""
    base, _ = sys.evaluators
    w = [e.weight for e in effective_weights(omega, sys)]
    pts, wts = _merged_points([c.point for c in sys.channels], w)
    n = len(pts)
    if n == 0:
        return 1.0 + 0j
    g = np.array([[base(a, b, omega) for b in pts] for a in pts], dtype=complex).reshape(n, n)
    return complex(np.linalg.det(np.eye(n) - wts[:, None] * g))


def channel_amplitude(index, x, omega, sys, psi1_at_point):
    """psi_e(x, w) = k_e G_e(x, x_e; w) psi_1(x_e, w)."""
    ch = sys.channels[index]
    if ch.strength == 0:
        return 0j
    g = sys.evaluators[1][index]
    return complex(ch.strength) * g(x, ch.point, omega) * psi1_at_point


def _flat(pot, label):
    left, right = pot.asymptotes()
    if left is None or right is None:
        raise NonConstantAsymptotics(f"{label} has no flat asymptotes", )
    return left


def scatter_multi(energy, sys, incidence="left"):
    """Scattering off the eliminated-channel point interactions on the driver.

    Solves psi1(x_i) = psi_in(x_i) + sum_j G1(x_i, x_j) W_j psi1(x_j) on the
    coupling points, then reads r, t from the driver asymptotics and the
    side-channel amplitudes from ``channel_amplitude``.
    """
    energy = float(energy)
    v1 = _flat(sys.driver, "driver")
    levels = [_flat(c.potential, f"channel {i + 2}") for i, c in enumerate(sys.channels)]
    if energy <= v1:
        raise ClosedEntranceChannel(f"E = {energy} <= driver asymptote {v1}")
    if incidence not in ("left", "right"):
        raise ValueError("incidence must be 'left' or 'right'")
    sys = sys.retarded()
    m = sys.mass
    k1 = math.sqrt(2.0 * m * (energy - v1))
    sgn = 1.0 if incidence == "left" else -1.0
    base, _ = sys.evaluators
    w = [e.weight for e in effective_weights(energy, sys)]
    pts, wts = _merged_points([c.point for c in sys.channels], w)
    n = len(pts)
    if n:
        g = np.array([[base(a, b, energy) for b in pts] for a in pts], dtype=complex).reshape(n, n)
        mat = np.eye(n) - g * wts[None, :]
        rhs = np.exp(1j * sgn * k1 * pts)
        try:
            cond = _conditioning(mat)
            if not np.isfinite(cond) or cond * np.finfo(float).eps >= 1.0:
                raise np.linalg.LinAlgError
            psi = np.linalg.solve(mat, rhs)
        except np.linalg.LinAlgError:
            raise SingularSystem(f"matching system singular at E = {energy}") from None
        src = wts * psi * (m / (1j * k1))
        t = 1.0 + np.sum(src * np.exp(-1j * sgn * k1 * pts))
        r = np.sum(src * np.exp(1j * sgn * k1 * pts))
        at_point = dict(zip(pts.tolist(), psi))
    else:
        t, r, at_point = 1.0 + 0j, 0j, {}
    amps, transfer, opened = [], [], []
    for i, (ch, lev) in enumerate(zip(sys.channels, levels)):
        q = complex(wavenumber(energy, lev, m))
        is_open = energy > lev
        if ch.strength == 0:
            amp = 0j
        else:
            amp = channel_amplitude(i, ch.point, energy, sys, at_point[float(ch.point)])
        amps.append((complex(amp), complex(amp)))
        transfer.append(float(2.0 * q.real / k1 * abs(amp) ** 2) if is_open else 0.0)
        opened.append(bool(is_open))
    return ScatterResult(
        energy=energy, r=complex(r), t=complex(t), amplitudes=tuple(amps),
        R=float(abs(r) ** 2), T=float(abs(t) ** 2), transfer=tuple(transfer),
        open_channels=tuple(opened), incidence=incidence,
    )


@dataclass(frozen=True)
class TimeReconstruction:
    times: np.ndarray
    amplitude: np.ndarray
    survival: np.ndarray
    fields: tuple
    eta: float
    omega_step: float
    omega_range: tuple


def _channel_coincident(pot, point, z, mass):
    if pot.kind == "constant" or (pot.kind == "linear" and pot.slope == 0):
        return green_constant(point, point, z, PotentialSpec.constant(pot.v0, mass))
    if pot.kind == "linear":
        return green_linear(point, point, z, pot)
    raise InvalidPotential("time_reconstruct supports constant and linear side channels only")


def _spectral_window(sys, packet):
    m = sys.mass
    v1 = sys.driver.v0
    levels = [v1]
    for ch in sys.channels:
        lo, _ = ch.potential.asymptotes()
        if lo is not None:
            levels.append(lo)
    e_hi = v1 + packet.momentum_extent() ** 2 / (2.0 * m)
    e_lo = min(levels)
    return e_lo, max(e_hi, e_lo + 1.0)


def time_reconstruct(sys, packet, times, eta=None, omega_step=None, omega_range=None,
                     field_x=None, threads=None, chunk=1 << 15):
    """Driver-channel dynamics from the dressed Green's function.

    psi1bar(x, z) = i int G''(x, x0; z) psi0(x0) dx0 on the line z = w + i eta,
    then psi1(x, t) = (1/2pi) int exp(-i z t) psi1bar(x, z) dw by the
    trapezoidal rule.  The 1/z tail i psi0 / (z - <H>) is subtracted and
    restored analytically, so the sum converges absolutely and t = 0 is exact.

    Returns survival probabilities |<psi0|psi1(t)>|^2 and, when ``field_x``
    is given, the driver component on that grid at every time.
    """
    if sys.driver.kind != "constant":
        raise InvalidPotential("time_reconstruct needs a constant driver potential")
    if not isinstance(packet, GaussianPacket):
        raise TypeError("initial state must be a GaussianPacket on the driver channel")
    sys = sys.retarded()
    m = sys.mass
    v1 = sys.driver.v0
    times = np.asarray(times, dtype=float)
    e_lo, e_hi = _spectral_window(sys, packet)
    width = e_hi - e_lo
    if eta is None:
        eta = 1e-3 * width
    if eta <= 0:
        raise ValueError("contour height eta must be positive")
    if omega_step is None:
        omega_step = eta / 4.0
    if omega_range is None:
        reach = 1000.0 * max(1.0, width)
        omega_range = (e_lo - reach, e_hi + reach)
    t_max = float(np.max(np.abs(times))) if times.size else 0.0
    period = 2.0 * np.pi / omega_step
    if omega_step > eta / 2.0 or np.exp(-eta * (period - t_max)) > 1e-8 or t_max >= period:
        raise GridTooCoarse(f"frequency step {omega_step:.3e} too coarse for eta = {eta:.3e} "
                            f"and t_max = {t_max:.3e}")
    n_omega = int(math.ceil((omega_range[1] - omega_range[0]) / omega_step)) + 1
    e_mean = packet.mean_energy(v1, m)

    points = [float(c.point) for c in sys.channels if c.strength != 0]
    upts = sorted(set(points))
    field_x = None if field_x is None else np.asarray(field_x, dtype=float)
    psi0_x = None if field_x is None else packet.values(field_x)

    def block(start):
        idx = np.arange(start, min(start + chunk, n_omega))
        w = omega_range[0] + idx * omega_step
        z = w + 1j * eta
        k = wavenumber(z, v1, m)
        expect = packet_green_expectation(k, m, packet)
        out_field = None
        if upts:
            n = len(upts)
            wts = np.zeros((z.size, n), dtype=complex)
            for ch in sys.channels:
                if ch.strength == 0:
                    continue
                j = upts.index(float(ch.point))
                wts[:, j] += complex(ch.strength) ** 2 * _channel_coincident(ch.potential, ch.point, z, m)
            pa = np.array(upts)
            gpp = (m / (1j * k))[:, None, None] * np.exp(1j * k[:, None, None] * np.abs(pa[None, :, None] - pa[None, None, :]))
            mat = np.eye(n)[None] - wts[:, :, None] * gpp
            tm = np.linalg.solve(mat, wts[:, :, None] * np.eye(n)[None])
            phi = np.stack([packet_green_overlap(p, k, m, packet) for p in upts], axis=1)
            phit = np.stack([packet_green_overlap(p, k, m, packet, conjugate=True) for p in upts], axis=1)
            tphi = np.einsum("wij,wj->wi", tm, phi)
            expect = expect + np.einsum("wi,wi->w", phit, tphi)
        remainder = 1j * expect - 1j / (z - e_mean)
        if field_x is not None:
            jx = packet_green_overlap(field_x[None, :], k[:, None], m, packet)
            if upts:
                gx = (m / (1j * k))[:, None, None] * np.exp(1j * k[:, None, None] * np.abs(field_x[None, :, None] - np.array(upts)[None, None, :]))
                jx = jx + np.einsum("wxi,wi->wx", gx, tphi)
            out_field = 1j * jx - 1j * psi0_x[None, :] / (z - e_mean)[:, None]
        phase = np.exp(-1j * np.outer(w, times))
        part_a = remainder @ phase
        part_f = None if out_field is None else np.einsum("wx,wt->tx", out_field, phase)
        return part_a, part_f

    starts = list(range(0, n_omega, chunk))
    workers = _thread_count(threads)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(s) for s in starts]
    # Fixed-order compensated reduction over chunks keeps results thread-count independent.
    amp_parts = np.array([p[0] for p in parts])
    growth = np.exp(eta * times) * omega_step / (2.0 * np.pi)
    amplitude = np.exp(-1j * e_mean * times) + growth * compensated_sum(amp_parts, axis=0)
    fields = ()
    if field_x is not None:
        field_sum = compensated_sum(np.array([p[1] for p in parts]), axis=0)
        values = psi0_x[None, :] * np.exp(-1j * e_mean * times)[:, None] + growth[:, None] * field_sum
        fields = tuple(WaveField(1, field_x, values[i], time=float(t)) for i, t in enumerate(times))
    return TimeReconstruction(times, amplitude, np.abs(amplitude) ** 2, fields, float(eta),
                              float(omega_step), tuple(omega_range))


def _thread_count(threads):
    if threads is None:
        threads = int(os.environ.get("CROSSKIT_THREADS", "1") or 1)
    return max(1, int(threads))
