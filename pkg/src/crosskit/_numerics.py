"""Small numerical helpers shared across modules."""

import math
import warnings

import numpy as np
from scipy.optimize import newton


def as_complex(omega):
    """Return ``omega`` as a Python complex (accepts EnergyPoint-likes)."""
    z = getattr(omega, "z", omega)
    return complex(z)


def clean_zero_imag(z):
    """Turn a signed ``-0.0`` imaginary part into ``+0.0``.

    numpy's principal square root of ``-a - 0j`` lies on the negative
    imaginary axis; the retarded branch needs the upper one.
    """
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    out.real = z.real
    out.imag = z.imag + 0.0
    return out


class NeumaierSum:
    """Compensated accumulator for complex values (real and imaginary parts kept apart)."""

    __slots__ = ("_re", "_im", "_cre", "_cim")

    def __init__(self):
        self._re = self._im = self._cre = self._cim = 0.0

    @staticmethod
    def _step(s, c, x):
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        return t, c

    def add(self, value):
        value = complex(value)
        self._re, self._cre = self._step(self._re, self._cre, value.real)
        self._im, self._cim = self._step(self._im, self._cim, value.imag)

    @property
    def value(self):
        return complex(self._re + self._cre, self._im + self._cim)


def compensated_sum(values, axis=0):
    """Exactly rounded sum of a complex array along ``axis`` via ``math.fsum``."""
    values = np.moveaxis(np.asarray(values, dtype=complex), axis, 0)
    flat = values.reshape(values.shape[0], -1)
    out = np.empty(flat.shape[1], dtype=complex)
    for j in range(flat.shape[1]):
        out[j] = complex(math.fsum(flat[:, j].real), math.fsum(flat[:, j].imag))
    return out.reshape(values.shape[1:])


def complex_newton(func, z0, tol=1e-10, maxiter=50, h=None):
    """Newton refinement of a zero of an analytic function (scipy.optimize.newton).

    The derivative is a complex central difference.  Converged means the step
    settled and |f(z)| <= tol.  Returns ``(z, f(z), f'(z), converged, iterations)``.
    """
    def deriv(z):
        step = h if h is not None else 1e-6 * max(1.0, abs(z))
        return (complex(func(z + step)) - complex(func(z - step))) / (2 * step)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            z, info = newton(lambda w: complex(func(w)), complex(z0), fprime=deriv, tol=1e-14,
                             rtol=1e-13, maxiter=maxiter, full_output=True, disp=False)
        except (ArithmeticError, ValueError):
            return complex(z0), complex("nan+nanj"), 0j, False, maxiter
    z = complex(z)
    fz = complex(func(z))
    ok = bool(info.converged) and abs(fz) <= tol
    return z, fz, deriv(z), ok, int(info.iterations)
