"""Uniform 2D grids, immutable scalar fields, finite differences and discrete norms."""

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from math import factorial

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RectBivariateSpline

MIN_NODES = 9
MAX_ORDER = 4


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid2D:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GridError("empty rectangle")
        if self.nx < MIN_NODES or self.ny < MIN_NODES:
            raise GridError(f"need at least {MIN_NODES} nodes per axis, got {self.nx}x{self.ny}")

    @property
    def hx(self):
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def hy(self):
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def y(self):
        return np.linspace(self.y_min, self.y_max, self.ny)

    @property
    def shape(self):
        return (self.nx, self.ny)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def scaled(self, c):
        """Rectangle scaled about the origin by c, node counts unchanged."""
        return Grid2D(c * self.x_min, c * self.x_max, c * self.y_min, c * self.y_max, self.nx, self.ny)

    def contains(self, other, tol=1e-12):
        return (other.x_min >= self.x_min - tol and other.x_max <= self.x_max + tol
                and other.y_min >= self.y_min - tol and other.y_max <= self.y_max + tol)

    @classmethod
    def box(cls, x0, y0, nx, ny):
        return cls(-x0, x0, -y0, y0, nx, ny)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid2D
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise GridError("field has non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, fn):
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(fn(X, Y), grid.shape))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    def with_values(self, values):
        return ScalarField(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, other):
        return self.with_values(self.values * _vals(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def sup(self):
        return float(np.abs(self.values).max())


def _vals(obj):
    return obj.values if isinstance(obj, ScalarField) else obj


@dataclass
class NormReport:
    l2: float
    sobolev: dict
    holder: dict


# -- finite differences ------------------------------------------------------

def fd_weights(offsets, k):
    """Weights w with sum_j w_j g(j) ~ g^(k)(0) for the integer offsets."""
    o = np.asarray(offsets, dtype=float)
    V = np.vander(o, len(o), increasing=True).T
    rhs = np.zeros(len(o))
    rhs[k] = factorial(k)
    return np.linalg.solve(V, rhs)


@lru_cache(maxsize=256)
def _diff_matrix(n, k, acc=2):
    """k-th derivative of accuracy acc (even) on n nodes, unit spacing; one-sided near the ends."""
    if k == 0:
        return sp.identity(n, format="csr")
    half = (k + 1) // 2 + (acc - 2) // 2
    width = 2 * half + 1
    if n < width + 1:
        raise GridError(f"stencil for order {k} does not fit {n} nodes")
    central = fd_weights(range(-half, half + 1), k)
    rows, cols, vals = [], [], []
    for i in range(n):
        if half <= i < n - half:
            offs = np.arange(-half, half + 1)
            w = central
        else:
            m = k + acc
            start = 0 if i < half else n - m
            offs = np.arange(start, start + m) - i
            w = fd_weights(offs, k)
        rows.extend([i] * len(offs))
        cols.extend(i + offs)
        vals.extend(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def diff_matrix(n, h, k, acc=2):
    if acc < 2 or acc % 2:
        raise GridError(f"accuracy must be a positive even integer, got {acc}")
    return _diff_matrix(n, k, acc) / h ** k


def diff_array(values, hx, hy, ax, ay, acc=2):
    nx, ny = values.shape
    out = values
    if ax:
        out = diff_matrix(nx, hx, ax, acc) @ out
    if ay:
        out = (diff_matrix(ny, hy, ay, acc) @ out.T).T
    return np.asarray(out)


def diff(field, ax, ay, acc=2):
    if ax < 0 or ay < 0 or ax + ay > MAX_ORDER:
        raise GridError(f"derivative order ({ax},{ay}) unsupported")
    g = field.grid
    return ScalarField(g, diff_array(field.values, g.hx, g.hy, ax, ay, acc))


# -- quadrature and norms ------------------------------------------------------

def trapezoid_weights(grid):
    wx = np.full(grid.nx, grid.hx)
    wx[[0, -1]] *= 0.5
    wy = np.full(grid.ny, grid.hy)
    wy[[0, -1]] *= 0.5
    return np.outer(wx, wy)


def integrate(grid, values):
    return float(np.sum(trapezoid_weights(grid) * values))


def inner(f, g):
    return integrate(f.grid, f.values * g.values)


def l2(field):
    return float(np.sqrt(integrate(field.grid, field.values ** 2)))


def multi_indices(s):
    return [(a, s - a) for a in range(s, -1, -1)]


def norms(field, s_max):
    if s_max > MAX_ORDER:
        raise GridError(f"s_max={s_max} exceeds the discrete budget {MAX_ORDER}")
    W = trapezoid_weights(field.grid)
    acc, sup = 0.0, 0.0
    sob, hol = {}, {}
    for s in range(s_max + 1):
        for ax, ay in multi_indices(s):
            d = diff(field, ax, ay).values
            acc += float(np.sum(W * d * d))
            sup = max(sup, float(np.abs(d).max()))
        sob[s] = float(np.sqrt(acc))
        hol[s] = sup
    return NormReport(l2=sob[0], sobolev=sob, holder=hol)


def sobolev(field, s):
    return norms(field, s).sobolev[s]


# -- transfer between grids ----------------------------------------------------

def _fractional_index(t, n):
    j = np.floor(t).astype(int)
    snap = np.abs(t - np.rint(t)) < 1e-9
    j = np.where(snap, np.rint(t).astype(int), j)
    j = np.clip(j, 0, n - 2)
    s = np.where(snap, np.rint(t) - j, t - j)
    return j, s


def restrict(field, sub):
    """Bilinear interpolation onto the nodes of a sub-rectangle."""
    g = field.grid
    if not g.contains(sub):
        raise GridError("sub-grid exceeds the parent rectangle")
    i, sx = _fractional_index((sub.x - g.x_min) / g.hx, g.nx)
    j, sy = _fractional_index((sub.y - g.y_min) / g.hy, g.ny)
    v = field.values
    I, J = np.meshgrid(i, j, indexing="ij")
    SX, SY = np.meshgrid(sx, sy, indexing="ij")
    out = ((1 - SX) * (1 - SY) * v[I, J] + SX * (1 - SY) * v[I + 1, J]
           + (1 - SX) * SY * v[I, J + 1] + SX * SY * v[I + 1, J + 1])
    return ScalarField(sub, out)


def resample(field, target, order=3, extrapolate=False):
    """Tensor spline transfer; used where bilinear accuracy is not enough."""
    g = field.grid
    if not extrapolate and not g.contains(target):
        raise GridError("target grid exceeds the source rectangle")
    spl = RectBivariateSpline(g.x, g.y, field.values, kx=order, ky=order, s=0)
    tx = np.clip(target.x, g.x_min, g.x_max)
    ty = np.clip(target.y, g.y_min, g.y_max)
    return ScalarField(target, spl(tx, ty))


# -- file format -----------------------------------------------------------------

def write_field(path, field, extra=None):
    g = field.grid
    with open(path, "w") as fh:
        fh.write(f"{g.nx} {g.ny} {g.x_min:.17g} {g.x_max:.17g} {g.y_min:.17g} {g.y_max:.17g}\n")
        fh.write("\n".join(f"{v:.17g}" for v in field.values.ravel()))
        fh.write("\n")
        if extra:
            fh.write("# " + " ".join(f"{k}={v:.17g}" for k, v in extra.items()) + "\n")


def read_field(path, with_extra=False):
    with open(path) as fh:
        head = fh.readline().split()
        nx, ny = int(head[0]), int(head[1])
        x_min, x_max, y_min, y_max = map(float, head[2:6])
        vals = []
        extra = {}
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    k, v = tok.split("=")
                    extra[k] = float(v)
                continue
            vals.append(float(line))
    if len(vals) != nx * ny:
        raise GridError(f"expected {nx * ny} values, found {len(vals)}")
    fld = ScalarField(Grid2D(x_min, x_max, y_min, y_max, nx, ny), np.array(vals).reshape(nx, ny))
    return (fld, extra) if with_extra else fld
