"""Scattering result container shared by the Green-function and oracle routes."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScatterResult:
    """Amplitudes and flux-normalised probabilities at one energy.

    ``r`` and ``t`` refer to the driver channel with plane-wave phases taken
    from the origin.  ``amplitudes[j] = (b, c)`` are the left- and
    right-going amplitudes on coupled channel ``j`` with phases taken from
    its coupling point.  ``transfer[j]`` is zero for closed channels.
    """

    energy: float
    r: complex
    t: complex
    amplitudes: tuple
    R: float
    T: float
    transfer: tuple
    open_channels: tuple
    incidence: str = "left"

    @property
    def flux_sum(self):
        return self.R + self.T + float(np.sum(self.transfer))

    @property
    def total_transfer(self):
        return float(np.sum(self.transfer))

    def probabilities(self):
        return np.array([self.R, self.T, *self.transfer])
