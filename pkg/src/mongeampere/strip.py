"""Coefficient extension from X to the truncated strip, multipliers, and the energy-inequality check."""

from dataclasses import dataclass

import numpy as np

from .coeffs import NAMES, CoefficientSet
from .grid import Grid2D, ScalarField, diff, inner, l2
from .profiles import plateau, s5, s5_int


class StripError(ValueError):
    pass


@dataclass(frozen=True)
class StripParams:
    y0: float = 1.0
    y1: float = 1.25
    y2: float = 1.5
    y3: float = 1.75
    Y: float = 2.75
    delta: float = 0.05
    theta: float = 1e-2
    cut_inner: float = 0.85  # perturbations cut off between these fractions of y0
    cut_outer: float = 0.97
    edge: float = 0.1  # width (fraction of x0) of the a11 boundary dip

    def __post_init__(self):
        if not (0 < self.y0 < self.y1 < self.y2 < self.y3 < self.Y):
            raise StripError("need 0 < y0 < y1 < y2 < y3 < Y")
        if self.delta <= 0 or self.theta <= 0:
            raise StripError("delta and theta must be positive")

    @property
    def plateau_value(self):
        return -((self.y1 + self.y2) / 2) ** 2


def strip_grid(g, p):
    """Same x nodes and y spacing as the rectangle grid, extended to |y| <= Y."""
    if abs(g.y_min + g.y_max) > 1e-12 * g.y_max or abs(g.y_max - p.y0) > 1e-12 * p.y0:
        raise StripError("rectangle grid must be symmetric with half-height y0")
    k = int(round((p.Y - p.y0) / g.hy))
    top = p.y0 + k * g.hy
    return Grid2D(g.x_min, g.x_max, -top, top, g.nx, g.ny + 2 * k), k


def a11_profile(ay, p):
    """-Yf(|y|)^2 with Yf = |y| up to y1, a quintic blend, then (y1+y2)/2."""
    w = p.y2 - p.y1
    t = (ay - p.y1) / w
    yf = np.where(ay <= p.y1, ay, p.y1 + w * (np.clip(t, 0, 1) - s5_int(t)))
    return -yf ** 2


def a2_profile(Y, p):
    w3 = p.y3 - p.y2
    ay = np.abs(Y)
    G = w3 * s5_int((ay - p.y2) / w3) + np.maximum(ay - p.y3, 0.0)
    return -p.delta * np.sign(Y) * G


def a_profile(ay, p):
    return s5((ay - p.y0) / (p.y1 - p.y0))


def extend_to_strip(coeffs, p, strict=False):
    """Rectangle coefficients (mixed term already removed) extended per the strip rules."""
    g = coeffs.grid
    S, k = strip_grid(g, p)
    X, Y = S.mesh()
    ay = np.abs(Y)
    inside = np.zeros(S.shape, bool)
    inside[:, k:k + g.ny] = True
    _, Yg = g.mesh()
    cut = plateau(Yg / p.y0, p.cut_inner, p.cut_outer)
    principal = {"a11": -Yg ** 2, "a22": 1.0}
    pert = {n: (coeffs.arrays()[n] - principal.get(n, 0.0)) * cut for n in NAMES}

    def embed(n, outside):
        out = np.array(outside, dtype=float)
        out = np.broadcast_to(out, S.shape).copy()
        out[:, k:k + g.ny] = principal.get(n, 0.0) + pert[n] if n in principal else pert[n]
        return out

    a11 = embed("a11", a11_profile(ay, p))
    a11 -= p.theta * s5((np.abs(X) / S.x_max - (1 - p.edge)) / p.edge)
    arr = dict(a11=a11, a12=np.zeros(S.shape), a22=embed("a22", 1.0), a1=embed("a1", 0.0),
               a2=embed("a2", a2_profile(Y, p)), a=embed("a", a_profile(ay, p)))
    out = CoefficientSet.from_arrays(S, lambda_budget=coeffs.lambda_budget, **arr)
    if strict:
        bad = [name for name, (_, ok) in strip_conditions(out, p).items() if not ok]
        if bad:
            raise StripError("strip conditions violated: " + ", ".join(bad))
    return out


def strip_conditions(c, p, tol=1e-12):
    """Each modification rule as (measured value, holds?) on the grid nodes."""
    S = c.grid
    X, Y = S.mesh()
    ay = np.abs(Y)
    a, a11, a2 = c.a.values, c.a11.values, c.a2.values
    hy = S.hy
    dya = diff(c.a, 0, 1).values
    dya11 = diff(c.a11, 0, 1).values
    dyya11 = diff(c.a11, 0, 2).values
    dya2 = diff(c.a2, 0, 1).values
    interior_x = np.abs(X) < S.x_max * (1 - p.edge)
    out = {}

    def record(name, value, ok):
        out[name] = (float(value), bool(ok))

    m = ay >= p.y1 - 1e-12
    record("a == 1 for |y|>=y1", np.abs(a[m] - 1).max(), np.abs(a[m] - 1).max() <= tol)
    m = ay >= p.y0
    record("a >= 0 for |y|>=y0", a[m].min(), a[m].min() >= -tol)
    m = (ay >= p.y0 + hy) & (np.abs(Y) < S.y_max - hy)
    s = np.sign(Y[m]) * dya[m]
    record("sign(y) d_y a >= 0 for |y|>=y0", s.min(), s.min() >= -1e-9)
    m = (ay >= p.y0 - 1e-12) & (ay <= p.y1 + 1e-12) & interior_x
    e = np.abs(a11[m] + Y[m] ** 2).max()
    record("a11 == -y^2 on y0<=|y|<=y1", e, e <= tol)
    m = (ay >= p.y2 - 1e-12) & interior_x
    e = np.abs(a11[m] - p.plateau_value).max()
    record("a11 == -((y1+y2)/2)^2 for |y|>=y2", e, e <= tol)
    m = (ay >= p.y0) & (ay < p.y2 - hy) & interior_x & (np.abs(Y) < S.y_max - hy)
    s = np.sign(Y[m]) * dya11[m]
    record("sign(y) d_y a11 < 0 on y0<=|y|<y2", s.max(), s.max() < 0)
    m = ay >= p.y0
    mx = dyya11[m].max()
    record("sup d_yy a11 <= delta", mx, mx <= p.delta)
    record("theta sup d_yy a11 <= y0^4/2", p.theta * mx, p.theta * mx <= p.y0 ** 4 / 2)
    edge = np.abs(np.abs(X) - S.x_max) < 1e-12
    record("a11 <= -theta on x=+-x0", a11[edge].max(), a11[edge].max() <= -p.theta + tol)
    m = (ay >= p.y0 - 1e-12) & (ay <= p.y2 + 1e-12)
    record("a2 == 0 on y0<=|y|<=y2", np.abs(a2[m]).max(), np.abs(a2[m]).max() <= tol)
    m = ay >= p.y3
    target = -p.delta * Y[m] + np.sign(Y[m]) * p.delta * (p.y2 + p.y3) / 2
    e = np.abs(a2[m] - target).max()
    record("a2 linear beyond y3", e, e <= 1e-12)
    m = ay >= p.y2
    s = (np.sign(Y[m]) * a2[m]).max()
    record("sign(y) a2 <= 0 for |y|>=y2", s, s <= tol)
    m = (ay >= p.y2) & (np.abs(Y) < S.y_max - hy)
    e = np.abs(dya2[m]).max()
    record("|d_y a2| <= delta for |y|>=y2", e, e <= p.delta * (1 + 1e-9))
    return out


# -- multipliers ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MultiplierSet:
    A: ScalarField
    B: ScalarField
    C: ScalarField
    D: ScalarField
    mu: float
    gamma: np.ndarray


def gamma_profile(x, x0):
    """1 on [-x0, x0/2], decreasing to 0 at x0."""
    return 1.0 - s5((x - x0 / 2) / (x0 / 2))


def build_multipliers(c, p, theta=None):
    theta = p.theta if theta is None else theta
    S = c.grid
    X, Y = S.mesh()
    a11 = c.a11.values
    mu = 1.1 * 4.0 * (1.0 - a11.min())
    dya11 = diff(c.a11, 0, 1).values
    C = np.where(np.abs(Y) < p.y0, mu * dya11, -2.0 * mu * Y)
    Cf = ScalarField(S, C)
    A = 0.5 * diff(Cf, 0, 1).values - a11
    gam = gamma_profile(S.x, S.x_max)
    B = -theta * np.broadcast_to(gam[:, None], S.shape)
    return MultiplierSet(ScalarField(S, A), ScalarField(S, B), Cf,
                         ScalarField(S, np.full(S.shape, theta)), mu, gam)


def apply_L_theta(c, theta, u):
    return c.apply(u) - theta * diff(u, 2, 2)


@dataclass
class EnergyReport:
    lhs: float
    rhs: float
    ratio: float
    passed: bool


def check_energy_inequality(c, mult, u, theta, c0=0.0, support_tol=1e-12):
    """(Au + Bu_x + Cu_y + Du_yy, L_theta u) against the bracket with E = 1."""
    v = u.values
    edge = max(np.abs(v[[0, 1, -2, -1], :]).max(), np.abs(v[:, [0, 1, -2, -1]]).max())
    if edge > support_tol * max(1.0, np.abs(v).max()):
        raise StripError("probe is not compactly supported in the strip interior")
    if not np.any(v):
        return EnergyReport(0.0, 0.0, float("nan"), True)
    d = lambda ax, ay: diff(u, ax, ay)
    Lu = apply_L_theta(c, theta, u)
    mult_u = mult.A * u + mult.B * d(1, 0) + mult.C * d(0, 1) + mult.D * d(0, 2)
    lhs = inner(mult_u, Lu)
    rhs = (l2(u) ** 2 + l2(d(0, 1)) ** 2
           + theta * (l2(d(1, 0)) ** 2 + l2(d(1, 1)) ** 2 + l2(d(0, 2)) ** 2
                      + theta * l2(d(1, 2)) ** 2))
    ratio = lhs / rhs
    return EnergyReport(lhs, rhs, ratio, ratio > c0)
