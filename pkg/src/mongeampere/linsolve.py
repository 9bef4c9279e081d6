"""Finite-difference discretisation of L_theta = -theta d_xxyy + L on the truncated strip, and its solution."""

from dataclasses import dataclass, field as dc_field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid2D, ScalarField, diff, l2, norms

RESIDUAL_TOL = 1e-10
BCS = ("dirichlet", "neumann_x")
CLOSURES = ("causal", "dirichlet")


class SolveError(RuntimeError):
    pass


def _d1(n, h):
    return sp.diags([-1.0, 1.0], [-1, 1], shape=(n, n)) / (2 * h)


def _d2(n, h):
    return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n)) / h ** 2


def operator_matrix(coeffs, theta):
    """Node-indexed (i*ny + j) matrix of L_theta; rows are meaningful at interior nodes only."""
    g = coeffs.grid
    Ix, Iy = sp.identity(g.nx), sp.identity(g.ny)
    Dx, Dxx = sp.kron(_d1(g.nx, g.hx), Iy), sp.kron(_d2(g.nx, g.hx), Iy)
    Dy, Dyy = sp.kron(Ix, _d1(g.ny, g.hy)), sp.kron(Ix, _d2(g.ny, g.hy))
    c = coeffs.arrays()
    dg = lambda a: sp.diags(a.ravel())
    M = (dg(c["a11"]) @ Dxx + dg(2 * c["a12"]) @ (Dx @ Dy) + dg(c["a22"]) @ Dyy
         + dg(c["a1"]) @ Dx + dg(c["a2"]) @ Dy + dg(c["a"]) - theta * (Dxx @ Dyy))
    return M.tocsr()


@dataclass(eq=False)
class LinearSystem:
    """Square system: equation rows plus boundary/closure rows.

    Closure "causal" uses the equation at (i, j) to determine the node (i, j+1), starting from two
    zero rows at y = -Y; "dirichlet" imposes u = 0 on both horizontal edges.
    """
    matrix: sp.csc_matrix
    operator: sp.csr_matrix
    eq_nodes: np.ndarray
    grid: object
    bc: str
    closure: str
    theta: float
    pinned: np.ndarray = None  # nodes fixed to zero by identity rows
    pinned_rows: np.ndarray = None
    rhs: np.ndarray = None
    _lu: object = dc_field(default=None, repr=False)
    fallbacks: int = 0

    def rhs_from(self, f):
        b = np.zeros(self.matrix.shape[0])
        b[: len(self.eq_nodes)] = f.values.ravel()[self.eq_nodes]
        return b

    def dump(self, path):
        """Coordinate text: row col value per line."""
        m = self.matrix.tocoo()
        with open(path, "w") as fh:
            for r, c, v in zip(m.row, m.col, m.data):
                fh.write(f"{r} {c} {v:.17g}\n")


def assemble(coeffs, theta, bc="dirichlet", closure="causal"):
    if not theta > 0:
        raise SolveError("theta must be positive")
    if bc not in BCS or closure not in CLOSURES:
        raise SolveError(f"unknown bc {bc!r} or closure {closure!r}")
    g = coeffs.grid
    nx, ny = g.shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    op = operator_matrix(coeffs, theta)
    eq = idx[1:-1, 1:-1].ravel()
    rows = [op[eq, :]]
    if closure == "causal":
        fixed_y = np.concatenate([idx[1:-1, 0], idx[1:-1, 1]])
        side_j = np.arange(ny)
    else:
        fixed_y = np.concatenate([idx[1:-1, 0], idx[1:-1, -1]])
        side_j = np.arange(ny)
    rows.append(sp.identity(nx * ny, format="csr")[fixed_y, :])
    pinned = fixed_y
    if bc == "dirichlet":
        side = np.concatenate([idx[0, side_j], idx[-1, side_j]])
        rows.append(sp.identity(nx * ny, format="csr")[side, :])
        pinned = np.concatenate([fixed_y, side])
    else:
        # one-sided second-order u_x = 0 on both vertical edges
        r, c, v = [], [], []
        for k, j in enumerate(side_j):
            for s, (i0, sgn) in enumerate(((0, 1), (nx - 1, -1))):
                row = 2 * k + s
                for off, wgt in zip((0, 1, 2), (-1.5, 2.0, -0.5)):
                    r.append(row)
                    c.append(idx[i0 + sgn * off, j])
                    v.append(sgn * wgt / g.hx)
        rows.append(sp.csr_matrix((v, (r, c)), shape=(2 * len(side_j), nx * ny)))
    A = sp.vstack(rows).tocsc()
    if A.shape[0] != A.shape[1]:
        raise SolveError(f"system is not square: {A.shape}")
    return LinearSystem(A, op, eq, g, bc, closure, theta, pinned, len(eq) + np.arange(len(pinned)))


@dataclass
class SolveInfo:
    residual: float
    fallback: bool


def _reduced(system):
    """The system with pinned unknowns and their identity rows eliminated."""
    n = system.matrix.shape[0]
    keep_r = np.setdiff1d(np.arange(n), system.pinned_rows)
    keep_c = np.setdiff1d(np.arange(n), system.pinned)
    return system.matrix[keep_r][:, keep_c].tocsc(), keep_r, keep_c


def solve_with_info(system, f):
    if f.grid.shape != system.grid.shape:
        raise SolveError("right-hand side lives on a different grid")
    b = system.rhs_from(f)
    bn = np.linalg.norm(b)
    if bn == 0:
        return ScalarField(system.grid, np.zeros(system.grid.shape)), SolveInfo(0.0, False)
    A = system.matrix
    Ar, keep_r, keep_c = _reduced(system)
    br = b[keep_r]
    x = np.zeros(A.shape[1])
    res = np.inf
    try:
        if system._lu is None:
            system._lu = spla.splu(Ar)
        x[keep_c] = system._lu.solve(br)
        res = np.linalg.norm(A @ x - b) / bn
    except RuntimeError:
        pass
    fallback = False
    if not np.all(np.isfinite(x)) or res > RESIDUAL_TOL:
        fallback = True
        system.fallbacks += 1
        try:
            xr = spla.spsolve((Ar.T @ Ar).tocsc(), Ar.T @ br)
        except RuntimeError as exc:
            raise SolveError(f"factorisation and least-squares fallback both failed: {exc}")
        if not np.all(np.isfinite(xr)):
            raise SolveError("least-squares fallback produced non-finite values")
        x[:] = 0.0
        x[keep_c] = xr
        res = np.linalg.norm(A @ x - b) / bn
    return ScalarField(system.grid, x.reshape(system.grid.shape)), SolveInfo(float(res), fallback)


def solve(system, f):
    return solve_with_info(system, f)[0]


def apply_operator(system, u):
    return ScalarField(u.grid, (system.operator @ u.values.ravel()).reshape(u.grid.shape))


def interior_mask(grid):
    m = np.zeros(grid.shape, bool)
    m[1:-1, 1:-1] = True
    return m


def basic_estimate_ratio(coeffs, theta, u):
    """(||u|| + ||u_y||) / ||L_theta u|| with the operator applied by grid differences."""
    Lu = coeffs.apply(u) - theta * diff(u, 2, 2)
    return (l2(u) + l2(diff(u, 0, 1))) / l2(Lu)


@dataclass
class TameReport:
    s: int
    u_norm: float
    f_norm: float
    f_norm2: float
    lam: float
    lam_order: int
    constant: float
    residual: float
    fallback: bool


def coefficient_budget(coeffs, order, baseline):
    """Sup over slots of the C^order norm of coeffs - baseline (the extended unperturbed model)."""
    worst = 0.0
    for name, fld in coeffs.items():
        worst = max(worst, norms(fld - getattr(baseline, name), order).holder[order])
    return worst


def model_baseline(grid, params):
    """The strip coefficients that an unperturbed rectangle problem extends to."""
    from .coeffs import CoefficientSet
    from .strip import extend_to_strip
    rows = np.where(np.abs(grid.y) <= params.y0 + 1e-12)[0]
    rect = Grid2D(grid.x_min, grid.x_max, -params.y0, params.y0, grid.nx, len(rows))
    return extend_to_strip(CoefficientSet.gallerstedt(rect), params)


def tame_diagnostic(coeffs, theta, f, s, params=None, lam_order=4, s_max=4, bc="dirichlet",
                    closure="causal"):
    from .strip import StripParams
    if s > s_max:
        raise SolveError(f"s={s} exceeds the discrete budget {s_max}")
    params = replace(params or StripParams(), theta=theta)
    system = assemble(coeffs, theta, bc, closure)
    u, info = solve_with_info(system, f)
    nu = norms(u, s).sobolev[s]
    nf = norms(f, max(s, 2)).sobolev
    lam = coefficient_budget(coeffs, lam_order, model_baseline(coeffs.grid, params))
    const = nu / (nf[s] + lam * nf[2])
    return TameReport(s, nu, nf[s], nf[2], lam, lam_order, const, info.residual, info.fallback)
