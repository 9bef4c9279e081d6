"""Blend profiles shared by cutoffs, extensions and spectral filters."""

import numpy as np


def s5(t):
    """C^2 smoothstep: 0 for t<=0, 1 for t>=1."""
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def ds5(t):
    tc = np.clip(t, 0.0, 1.0)
    return np.where((t > 0) & (t < 1), 30.0 * tc ** 2 * (1.0 - tc) ** 2, 0.0)


def s5_int(t):
    """Antiderivative of s5 with s5_int(0)=0, s5_int(1)=1/2."""
    t = np.clip(t, 0.0, 1.0)
    return t ** 4 * (2.5 - 3.0 * t + t * t)


def plateau(r, inner, outer):
    """1 for |r|<=inner, 0 for |r|>=outer, quintic in between."""
    return 1.0 - s5((np.abs(r) - inner) / (outer - inner))


def tensor_cutoff(X, Y, x0, y0, inner=0.5, outer=0.75):
    return plateau(X / x0, inner, outer) * plateau(Y / y0, inner, outer)


def bump(r):
    """exp(-1/(1-r^2)) on |r|<1, normalised to 1 at r=0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    m = np.abs(r) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - r[m] ** 2))
    return out


def _flat(t):
    t = np.asarray(t, float)
    return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    a, b = _flat(t), _flat(1.0 - np.asarray(t, float))
    return a / (a + b)
