"""Gaussian wave packets and their closed-form overlaps with free Green's functions.

The packet is psi(x) = (2 pi s^2)^(-1/4) exp(-(x - c)^2 / (4 s^2) + i p (x - c)).
All overlaps are written with scaled error functions so they stay finite for
the large |k| met on wide frequency grids.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, wofz


@dataclass(frozen=True)
class WaveField:
    """Values of one channel component on a position grid."""

    component: int
    x: np.ndarray
    values: np.ndarray
    time: float = None
    frequency: complex = None

    def norm(self):
        dx = np.diff(self.x)
        return float(np.sum(np.abs(self.values[:-1]) ** 2 * dx))


@dataclass(frozen=True)
class GaussianPacket:
    center: float = 0.0
    momentum: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("packet width must be positive")

    @property
    def amplitude(self):
        return (2.0 * np.pi * self.width ** 2) ** -0.25

    def values(self, x):
        x = np.asarray(x, dtype=float)
        d = x - self.center
        return self.amplitude * np.exp(-d * d / (4.0 * self.width ** 2) + 1j * self.momentum * d)

    def field(self, x, component=1):
        x = np.asarray(x, dtype=float)
        return WaveField(component, x, self.values(x), time=0.0)

    def mean_energy(self, v0, mass):
        return v0 + self.momentum ** 2 / (2.0 * mass) + 1.0 / (8.0 * mass * self.width ** 2)

    def momentum_extent(self, nsigma=6.0):
        return abs(self.momentum) + nsigma / (2.0 * self.width)

    def free_survival_amplitude(self, t, v0, mass):
        """<psi(0)| exp(-i H t) |psi(0)> for H = p^2 / 2m + v0."""
        t = np.asarray(t, dtype=float)
        tau = 1.0 + 1j * t / (4.0 * mass * self.width ** 2)
        return np.exp(-1j * v0 * t) * np.exp(-1j * self.momentum ** 2 * t / (2.0 * mass) / tau) / np.sqrt(tau)


def _half_line(a, beta, k, alpha):
    # exp(-i k a) * int_a^inf exp(-alpha u^2 + i (beta + k) u) du
    sa = np.sqrt(alpha)
    q = beta + k
    z = sa * a - 1j * q / (2.0 * sa)
    pref = np.sqrt(np.pi) / (2.0 * sa)
    gauss = np.exp(-alpha * a * a + 1j * beta * a)
    pos = z.real >= 0
    out = np.empty(np.broadcast(z, gauss).shape, dtype=complex)
    zz = np.broadcast_to(z, out.shape)
    gg = np.broadcast_to(gauss, out.shape)
    qq = np.broadcast_to(q, out.shape)
    aa = np.broadcast_to(a, out.shape)
    kk = np.broadcast_to(k, out.shape)
    out[pos] = pref * erfcx(zz[pos]) * gg[pos]
    neg = ~pos
    if np.any(neg):
        lead = np.exp(-qq[neg] ** 2 / (4.0 * alpha) - 1j * kk[neg] * aa[neg])
        out[neg] = pref * (2.0 * lead - erfcx(-zz[neg]) * gg[neg])
    return out


def packet_green_overlap(y, k, mass, packet, conjugate=False):
    """int g(x) (m / i k) exp(i k |x - y|) dx with g = psi or conj(psi).

    ``y`` and ``k`` broadcast; Im k > 0 is required for convergence at large |x|.
    """
    y = np.asarray(y, dtype=float)
    k = np.asarray(k, dtype=complex)
    alpha = 1.0 / (4.0 * packet.width ** 2)
    beta = -packet.momentum if conjugate else packet.momentum
    a = y - packet.center
    total = _half_line(a, beta, k, alpha) + _half_line(-a, -beta, k, alpha)
    return packet.amplitude * (mass / (1j * k)) * total


def packet_green_expectation(k, mass, packet):
    """<psi| G0 |psi> for a constant potential, via the Faddeeva function."""
    k = np.asarray(k, dtype=complex)
    s = np.sqrt(2.0) * packet.width
    p = packet.momentum
    return -1j * np.sqrt(2.0 * np.pi) * packet.width * (mass / k) * (wofz(s * (k - p)) + wofz(s * (k + p)))
