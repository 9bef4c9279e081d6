"""Spectral mollifiers S_gamma on rectangles: reflection-and-taper extension, then a compact low-pass."""

from dataclasses import dataclass

import numpy as np

from .grid import Grid2D, ScalarField, norms
from .profiles import smooth_step

MARGIN = 0.25


class SmoothingError(ValueError):
    pass


def hat(r):
    """Radial spectral profile: 1 for r <= 1, 0 for r >= 2, C-infinity blend between."""
    return 1.0 - smooth_step(np.asarray(r, float) - 1.0)


def _pad(n, margin):
    m = int(round(margin * (n - 1)))
    if not 2 <= m <= n - 1:
        raise SmoothingError(f"margin {margin} gives an unusable pad of {m} nodes for n={n}")
    return m


def _mirror_index(n, m):
    i = np.arange(-m, n + m)
    i = np.where(i < 0, -i, i)
    return np.where(i > n - 1, 2 * (n - 1) - i, i)


def _point_reflect(v, m, axis):
    """Odd reflection f(e - t) -> 2 f(e) - f(e + t) across both ends; keeps affine data affine."""
    v = np.moveaxis(v, axis, 0)
    n = v.shape[0]
    i = _mirror_index(n, m)
    edge = np.where(np.arange(-m, n + m) < 0, 0, n - 1)
    out = v[i].copy()
    outside = (np.arange(-m, n + m) < 0) | (np.arange(-m, n + m) > n - 1)
    out[outside] = 2 * v[edge[outside]] - v[i[outside]]
    return np.moveaxis(out, 0, axis)


def _taper(n, m):
    """1 inside and on the inner half of the margin, 0 at the outer edge."""
    i = np.arange(-m, n + m)
    out = np.maximum(np.maximum(-i, i - (n - 1)), 0) / m
    return 1.0 - smooth_step((out - 0.5) / 0.5)


@dataclass(frozen=True)
class Extension:
    field: ScalarField
    mx: int
    my: int

    def restrict(self, values=None):
        v = self.field.values if values is None else values
        nx = v.shape[0] - 2 * self.mx
        ny = v.shape[1] - 2 * self.my
        return v[self.mx:self.mx + nx, self.my:self.my + ny]


def extension(field, margin=MARGIN):
    g = field.grid
    mx, my = _pad(g.nx, margin), _pad(g.ny, margin)
    v = _point_reflect(_point_reflect(field.values, mx, 0), my, 1)
    # taper toward the mean, so constants extend to constants
    mean = float(np.mean(field.values))
    chi = np.outer(_taper(g.nx, mx), _taper(g.ny, my))
    v = mean + (v - mean) * chi
    v[mx:mx + g.nx, my:my + g.ny] = field.values
    big = Grid2D(g.x_min - mx * g.hx, g.x_max + mx * g.hx, g.y_min - my * g.hy, g.y_max + my * g.hy,
                 g.nx + 2 * mx, g.ny + 2 * my)
    return Extension(ScalarField(big, v), mx, my)


def extend(field, margin=MARGIN):
    """Linear extension to the rectangle enlarged by margin on every side; exact on the original."""
    return extension(field, margin).field


def _lowpass(values, hx, hy, gamma):
    n1, n2 = values.shape
    kx = 2 * np.pi * np.fft.fftfreq(n1, hx)
    ky = 2 * np.pi * np.fft.rfftfreq(n2, hy)
    mult = hat(np.sqrt(kx[:, None] ** 2 + ky[None, :] ** 2) / gamma)
    return np.fft.irfft2(np.fft.rfft2(values) * mult, s=values.shape)


def mollify(field, gamma, margin=MARGIN, periodic=False):
    """S_gamma: multiply the Fourier transform by hat(|omega|/gamma), omega in radians per unit length.

    periodic=True treats the rectangle as a torus (last row/column duplicating the first)."""
    if gamma < 1:
        raise SmoothingError("gamma must be at least 1")
    g = field.grid
    if periodic:
        v = field.values
        core = _lowpass(v[:-1, :-1], g.hx, g.hy, gamma)
        out = np.empty_like(v)
        out[:-1, :-1] = core
        out[-1, :-1] = core[0]
        out[:, -1] = out[:, 0]
        return ScalarField(g, out)
    ext = extension(field, margin)
    smooth = _lowpass(ext.field.values, g.hx, g.hy, gamma)
    return ScalarField(g, ext.restrict(smooth))


def mollify_extended(field, gamma, margin=MARGIN):
    """S_gamma of the extension, kept on the whole enlarged rectangle."""
    if gamma < 1:
        raise SmoothingError("gamma must be at least 1")
    big = extend(field, margin)
    g = big.grid
    return ScalarField(g, _lowpass(big.values, g.hx, g.hy, gamma))


def extension_norms(field, margin=MARGIN):
    """||T f|| / ||f|| in H^0 and H^1."""
    big = extend(field, margin)
    a, b = norms(big, 1).sobolev, norms(field, 1).sobolev
    return {0: a[0] / b[0], 1: a[1] / b[1]}


def power_law_probe(grid, s, rng, envelope=0.7):
    """Random field whose spectrum decays like |omega|^-(1+s), cut off smoothly inside the rectangle.

    Such a field is just outside H^s, which makes the smoothing rates of order s sharp on it."""
    nx, ny = grid.shape
    kx = 2 * np.pi * np.fft.fftfreq(nx, grid.hx)
    ky = 2 * np.pi * np.fft.fftfreq(ny, grid.hy)
    k = np.sqrt(kx[:, None] ** 2 + ky[None, :] ** 2)
    amp = (1.0 + k ** 2) ** (-(1.0 + s) / 2)
    noise = rng.standard_normal((nx, ny)) + 1j * rng.standard_normal((nx, ny))
    f = np.real(np.fft.ifft2(amp * noise))
    X, Y = grid.mesh()
    r = np.sqrt(((X - (grid.x_min + grid.x_max) / 2) / (envelope * (grid.x_max - grid.x_min) / 2)) ** 2
                + ((Y - (grid.y_min + grid.y_max) / 2) / (envelope * (grid.y_max - grid.y_min) / 2)) ** 2)
    env = np.where(r < 1, np.exp(1 - 1 / np.maximum(1 - r ** 2, 1e-300)), 0.0)
    f = f * env
    return ScalarField(grid, f / np.abs(f).max())


@dataclass
class SmoothingReport:
    gammas: list
    constants: dict  # (a, b) -> list over gamma of max_probe ratio / gamma^max(b-a, 0)
    slopes: dict  # (a, b) -> log-log slope of the raw ratio against gamma
    decay: dict  # (a, b), b < a -> list over gamma of ||f - S f||_b / ||f||_a * gamma^(a-b)
    decay_slopes: dict
    spread: dict  # (a, b) -> max/min of constants

    @property
    def passed(self):
        return all(v < 2.0 for v in self.spread.values())


def _slope(gammas, vals):
    vals = np.asarray(vals, float)
    if np.any(vals <= 0):
        return float("nan")
    return float(np.polyfit(np.log(gammas), np.log(vals), 1)[0])


def smoothing_constants(gammas, probes, orders=(0, 1, 2), margin=MARGIN):
    gammas = [float(g) for g in gammas]
    probes = [p for p in probes if np.any(p.values)]
    raw = {(a, b): [] for a in orders for b in orders}
    dec = {(a, b): [] for a in orders for b in orders if b < a}
    top = max(orders)
    base = [norms(p, top).sobolev for p in probes]
    for gam in gammas:
        sm = [mollify(p, gam, margin) for p in probes]
        sn = [norms(q, top).sobolev for q in sm]
        rn = [norms(p - q, top).sobolev for p, q in zip(probes, sm)]
        for (a, b) in raw:
            raw[(a, b)].append(max((s[b] / n[a] for s, n in zip(sn, base)), default=0.0))
        for (a, b) in dec:
            dec[(a, b)].append(max((r[b] / n[a] for r, n in zip(rn, base)), default=0.0))
    consts = {k: [v / g ** max(k[1] - k[0], 0) for v, g in zip(vals, gammas)] for k, vals in raw.items()}
    dconsts = {k: [v * g ** (k[0] - k[1]) for v, g in zip(vals, gammas)] for k, vals in dec.items()}
    spread = {}
    for k, vals in list(consts.items()) + [(("decay",) + k, v) for k, v in dconsts.items()]:
        vals = np.asarray(vals)
        spread[k] = float(vals.max() / vals.min()) if vals.size and vals.min() > 0 else float("nan")
    return SmoothingReport(gammas, consts, {k: _slope(gammas, v) for k, v in raw.items()}, dconsts,
                           {k: _slope(gammas, v) for k, v in dec.items()}, spread)
