"""Microring weight loading: bias detuning <-> signed weight lookup.

The ring's through-port intensity is modeled as a Lorentzian notch. Driving
the high-speed port with a logic 1 red-shifts the resonance by
``modulation_shift_nm``; the weight is the on/off transmission difference
divided by ``full_scale``. Biasing the resonance on the red side of the
laser gives positive weights, on the blue side negative ones (logic 0 and 1
swap).

Detuning is ``resonance - laser`` in nm, in the off state.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError, RangeError


@dataclass(frozen=True)
class RingModel:
    extinction_db: float = 20.0
    linewidth_nm: float = 0.08
    modulation_shift_nm: float = 0.08
    full_scale: float = 0.7  # transmission difference that maps to |w| = 1

    def transmission(self, offset_nm):
        depth = 1.0 - 10.0 ** (-self.extinction_db / 10.0)
        x = 2.0 * np.asarray(offset_nm, dtype=float) / self.linewidth_nm
        return 1.0 - depth / (1.0 + x * x)

    @property
    def symmetry_point(self):
        return -0.5 * self.modulation_shift_nm

    def raw_weight(self, detuning):
        return (self.transmission(detuning + self.modulation_shift_nm)
                - self.transmission(detuning)) / self.full_scale

    @cached_property
    def tuning_range(self):
        """Detunings of the weight minimum and maximum; the lookup is
        monotone between them."""
        c = self.symmetry_point
        span = 4.0 * (self.linewidth_nm + self.modulation_shift_nm)
        hi = minimize_scalar(lambda d: -self.raw_weight(d), bounds=(c, c + span),
                             method="bounded", options={"xatol": 1e-13}).x
        lo = c - (hi - c)  # weight is odd about the symmetry point
        return float(lo), float(hi)

    @property
    def weight_range(self):
        lo, hi = self.tuning_range
        return float(self.raw_weight(lo)), float(self.raw_weight(hi))


def mrm_weight_lookup(detuning, model=RingModel()):
    lo, hi = model.tuning_range
    d = np.asarray(detuning, dtype=float)
    if np.any(d < lo - 1e-12) or np.any(d > hi + 1e-12):
        raise DomainError(f"detuning outside the tuning range [{lo:.6g}, {hi:.6g}] nm")
    w = model.raw_weight(d)
    return float(w) if w.ndim == 0 else w


def mrm_bias_for_weight(weight, model=RingModel(), tol=1e-12):
    """Detuning that loads ``weight``; red-side branch for w > 0, blue for w < 0."""
    w_min, w_max = model.weight_range
    if not w_min <= weight <= w_max:
        raise RangeError(f"weight {weight} not achievable", w_min, w_max)
    c = model.symmetry_point
    if weight == 0:
        return c
    lo, hi = model.tuning_range
    a, b = (c, hi) if weight > 0 else (lo, c)
    f = lambda d: model.raw_weight(d) - weight
    if f(a) == 0:
        return a
    if f(b) == 0:
        return b
    return brentq(f, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
