"""Characteristic coordinates xi(x,y), eta=y removing the mixed coefficient, and coefficient pushforward."""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .coeffs import CoefficientSet
from .grid import ScalarField

RK_TOL = 1e-10
A12_TOL = 1e-5


class CharError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DiffeoMap:
    xi: ScalarField
    xi_x: ScalarField
    xi_y: ScalarField
    inverse_x: ScalarField
    jacobian_min: float
    rk_error: float = 0.0

    @property
    def grid(self):
        return self.xi.grid

    @classmethod
    def identity(cls, grid):
        X, _ = grid.mesh()
        one = ScalarField(grid, np.ones(grid.shape))
        return cls(ScalarField(grid, X), one, ScalarField.zeros(grid), ScalarField(grid, X), 1.0)

    def second_derivatives(self):
        g = self.grid
        return tuple(ScalarField(g, d) for d in _spline_derivs(self.xi, ((2, 0), (1, 1), (0, 2))))


def _spline_derivs(field, orders):
    """Quintic tensor-spline derivatives; higher order than the grid stencils."""
    g = field.grid
    spl = RectBivariateSpline(g.x, g.y, field.values, kx=5, ky=5, s=0)
    return [spl(g.x, g.y, dx=a, dy=b) for a, b in orders]


def _rk4(rhs, x, y, dy, nsub):
    h = dy / nsub
    for _ in range(nsub):
        k1 = rhs(x, y)
        k2 = rhs(x + 0.5 * h * k1, y + 0.5 * h)
        k3 = rhs(x + 0.5 * h * k2, y + 0.5 * h)
        k4 = rhs(x + h * k3, y + h)
        x = x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        y = y + h
    return x


def _march(rhs, seeds, targets, max_step, tol):
    """Positions at each target height, step doubling until successive answers agree to tol."""
    out = np.empty((len(seeds), len(targets)))
    x, y, worst = seeds.copy(), 0.0, 0.0
    for k, yt in enumerate(targets):
        dy = yt - y
        if dy == 0:
            out[:, k] = x
            continue
        nsub = max(1, int(np.ceil(abs(dy) / max_step)))
        coarse = _rk4(rhs, x, y, dy, nsub)
        for _ in range(8):
            fine = _rk4(rhs, x, y, dy, 2 * nsub)
            err = float(np.abs(fine - coarse).max())
            if err <= tol:
                break
            coarse, nsub = fine, 2 * nsub
        worst = max(worst, err)
        x, y = fine, yt
        out[:, k] = x
    return out, worst


def build_characteristics(coeffs, tol=RK_TOL):
    """Integrate dx/dy = a12/a22 from each axis seed (s, 0); xi is the seed label."""
    g = coeffs.grid
    a22 = coeffs.a22.values
    if np.min(np.abs(a22)) < 1e-8:
        raise CharError("a22 vanishes; characteristics undefined")
    ratio = coeffs.a12.values / a22
    x, y = g.x, g.y
    if np.all(ratio == 0):
        return DiffeoMap.identity(g)
    spl = RectBivariateSpline(x, y, ratio, kx=3, ky=3, s=0)

    def rhs(xs, ys):
        return spl.ev(np.clip(xs, g.x_min, g.x_max), np.full_like(xs, ys))

    seeds = x.copy()
    up = np.where(y >= 0)[0]
    dn = np.where(y < 0)[0][::-1]
    pos = np.empty(g.shape)
    pu, e1 = _march(rhs, seeds, y[up], g.hy / 2, tol)
    pos[:, up] = pu
    e2 = 0.0
    if len(dn):
        pd, e2 = _march(rhs, seeds, y[dn], g.hy / 2, tol)
        pos[:, dn] = pd
    span = g.x_max - g.x_min
    if np.any(pos < g.x_min - 1e-12 * span) or np.any(pos > g.x_max + 1e-12 * span):
        raise CharError("a characteristic leaves the rectangle (epsilon too large)")
    pos[0, :], pos[-1, :] = g.x_min, g.x_max
    if np.any(np.diff(pos, axis=0) <= 0):
        raise CharError("characteristics cross (fold)")

    xi = np.empty(g.shape)
    for j in range(g.ny):
        xi[:, j] = CubicSpline(pos[:, j], seeds)(x)
    xi[0, :], xi[-1, :] = g.x_min, g.x_max
    xif = ScalarField(g, xi)
    xi_x, xi_y = (ScalarField(g, d) for d in _spline_derivs(xif, ((1, 0), (0, 1))))
    jmin = float(xi_x.values.min())
    if jmin <= 0:
        raise CharError(f"xi_x <= 0 detected (min {jmin:.3e})")
    return DiffeoMap(xif, xi_x, xi_y, ScalarField(g, pos), jmin, max(e1, e2))


def sample_rows(values, x, xq):
    """values[:, j] interpolated at xq[:, j] for every row j."""
    out = np.empty(xq.shape)
    for j in range(values.shape[1]):
        out[:, j] = CubicSpline(x, values[:, j])(xq[:, j])
    return out


def push_field(field, dmap):
    """f(x(xi, eta), eta) on the (xi, eta) grid."""
    g = field.grid
    return ScalarField(g, sample_rows(field.values, g.x, dmap.inverse_x.values))


def mixed_residual(coeffs, dmap):
    """a12 xi_x + a22 xi_y on the physical grid."""
    return ScalarField(coeffs.grid, coeffs.a12.values * dmap.xi_x.values
                       + coeffs.a22.values * dmap.xi_y.values)


def pushforward(coeffs, dmap, tol=A12_TOL):
    g = coeffs.grid
    c = coeffs.arrays()
    xx, xy, yy = (f.values for f in dmap.second_derivatives())
    px, py = dmap.xi_x.values, dmap.xi_y.values
    a12_bar = c["a12"] * px + c["a22"] * py
    res = float(np.abs(a12_bar).max())
    if res > tol:
        raise CharError(f"pushed mixed coefficient {res:.3e} exceeds {tol:.0e}")
    phys = dict(
        a11=c["a11"] * px ** 2 + 2 * c["a12"] * px * py + c["a22"] * py ** 2,
        a1=c["a11"] * xx + 2 * c["a12"] * xy + c["a22"] * yy + c["a1"] * px + c["a2"] * py,
        a22=c["a22"], a2=c["a2"], a=c["a"])
    inv = dmap.inverse_x.values
    out = {k: sample_rows(v, g.x, inv) for k, v in phys.items()}
    out["a12"] = np.zeros(g.shape)
    _, Y = g.mesh()
    eps_budget = float(np.abs(out["a11"] + Y ** 2).max() + np.abs(out["a22"] - 1).max()
                       + np.abs(out["a1"]).max() + np.abs(out["a2"]).max() + np.abs(out["a"]).max())
    return CoefficientSet.from_arrays(g, lambda_budget=eps_budget, **out)


def pullback_solution(u_xi_eta, dmap):
    """u(x, y) = v(xi(x, y), y)."""
    g = u_xi_eta.grid
    return ScalarField(g, sample_rows(u_xi_eta.values, g.x, dmap.xi.values))
