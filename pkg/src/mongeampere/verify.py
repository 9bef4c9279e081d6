"""Independent checks of a computed w: rebuild z, differentiate it afresh, evaluate the original equations.

Nothing here calls the scaled operator. Derivatives of z are fourth-order differences taken on the
(u, v) grid, so the model part u^2/2 - v^4/12 is differentiated exactly.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .grid import Grid2D, ScalarField, diff, l2

ACC = 4


class VerifyError(ValueError):
    pass


def uv_grid(g, eps):
    """The (u, v) image of an (x, y) grid under u = eps^4 x, v = eps^2 y."""
    return Grid2D(eps ** 4 * g.x_min, eps ** 4 * g.x_max, eps ** 2 * g.y_min, eps ** 2 * g.y_max, g.nx, g.ny)


def model_height(u, v):
    return u * u / 2 - v ** 4 / 12


def reconstruct_z(w, spec):
    """z = u^2/2 - v^4/12 + eps^9 w on the (u, v) image of w's grid (working frame, node for node)."""
    e = spec.epsilon
    G = uv_grid(w.grid, e)
    U, V = G.mesh()
    return ScalarField(G, model_height(U, V) + e ** 9 * w.values)


def recover_w(z, spec):
    """Inverse of reconstruct_z."""
    e = spec.epsilon
    g = z.grid
    xy = Grid2D(g.x_min / e ** 4, g.x_max / e ** 4, g.y_min / e ** 2, g.y_max / e ** 2, g.nx, g.ny)
    U, V = g.mesh()
    return ScalarField(xy, (z.values - model_height(U, V)) / e ** 9)


def jet(z, order=2):
    """Partial derivatives of z up to the given order, keyed by (ku, kv)."""
    out = {(0, 0): z.values}
    for k in range(1, order + 1):
        for a in range(k + 1):
            out[(k - a, a)] = diff(z, k - a, a, ACC).values
    return out


def _frame(d, A, dz):
    """Gradient and Hessian in the original chart U = A u', for the height d Z."""
    if A is None:
        return dz[(1, 0)], dz[(0, 1)], dz[(2, 0)], dz[(1, 1)], dz[(0, 2)]
    B = np.linalg.inv(np.asarray(A, float))  # dU'/dU
    g1 = d * (B[0, 0] * dz[(1, 0)] + B[1, 0] * dz[(0, 1)])
    g2 = d * (B[0, 1] * dz[(1, 0)] + B[1, 1] * dz[(0, 1)])
    H = [[dz[(2, 0)], dz[(1, 1)]], [dz[(1, 1)], dz[(0, 2)]]]
    h = [[d * sum(B[k, i] * H[k][l] * B[l, j] for k in range(2) for l in range(2)) for j in range(2)]
         for i in range(2)]
    return g1, g2, h[0][0], h[0][1], h[1][1]


def graph_curvature(z, A=None, d=1.0):
    """K = (z_uu z_vv - z_uv^2)/(1+|grad z|^2)^2 of the graph, optionally in the chart U = A u'."""
    zu, zv, zuu, zuv, zvv = _frame(d, A, jet(z))
    return ScalarField(z.grid, (zuu * zvv - zuv ** 2) / (1 + zu ** 2 + zv ** 2) ** 2)


def ma_residual(z, spec):
    """det(z_ij + a_ij) - K f at every node, with the problem data taken at the nodes of z's grid.

    The normal form rescales both sides by the same factor, so this equals the residual in the
    original chart at U = A u'."""
    U, V = z.grid.mesh()
    dz = jet(z)
    p, q1, q2 = dz[(0, 0)], dz[(1, 0)], dz[(0, 1)]
    a11, a12, a22 = spec.a(U, V, p, q1, q2)
    det = (dz[(2, 0)] + a11) * (dz[(0, 2)] + a22) - (dz[(1, 1)] + a12) ** 2
    return ScalarField(z.grid, det - spec.K(U, V) * spec.f(U, V, p, q1, q2))


def curvature_error(z, spec):
    """Graph curvature minus the prescribed curvature, both in the original chart."""
    if spec.mode != "curvature":
        raise VerifyError("curvature_error needs a curvature-mode problem")
    U, V = z.grid.mesh()
    A = None if np.allclose(spec.A, np.eye(2), rtol=0, atol=1e-14) else spec.A
    K = graph_curvature(z, A, spec.d).values
    Korig = spec.K_original or spec.K
    if A is not None:
        U, V = A[0, 0] * U + A[0, 1] * V, A[1, 0] * U + A[1, 1] * V
    return ScalarField(z.grid, K - Korig(U, V))


def _metric_minus_dz2(m, z):
    """E, F, G of g - dz^2 and the derivatives Brioschi needs, with the metric jets taken exactly."""
    U, V = z.grid.mesh()
    j = m.jets(U, V)
    E, F, G = j["E"], j["F"], j["G"]
    dz = jet(z, 3)
    zu, zv = dz[(1, 0)], dz[(0, 1)]
    zuu, zuv, zvv = dz[(2, 0)], dz[(1, 1)], dz[(0, 2)]
    zuuv, zuvv = dz[(2, 1)], dz[(1, 2)]
    h = dict(
        E=E.v - zu * zu, F=F.v - zu * zv, G=G.v - zv * zv,
        Eu=E.d[0] - 2 * zu * zuu, Ev=E.d[1] - 2 * zu * zuv,
        Fu=F.d[0] - zuu * zv - zu * zuv, Fv=F.d[1] - zuv * zv - zu * zvv,
        Gu=G.d[0] - 2 * zv * zuv, Gv=G.d[1] - 2 * zv * zvv,
        Evv=E.dd[1][1] - 2 * zuv ** 2 - 2 * zu * zuvv,
        Fuv=F.dd[0][1] - zuuv * zv - zuu * zvv - zuv ** 2 - zu * zuvv,
        Guu=G.dd[0][0] - 2 * zuv ** 2 - 2 * zv * zuuv,
    )
    det = h["E"] * h["G"] - h["F"] ** 2
    if np.any(h["E"] <= 0) or np.any(det <= 0):
        raise VerifyError("ds^2 - dz^2 is not positive definite: |grad z| is too large")
    return h


def flatness_residual(m, z):
    """Gauss curvature (Brioschi) of ds^2 - dz^2, with m and z in the same coordinates."""
    from .metric import brioschi
    h = _metric_minus_dz2(m, z)
    K = brioschi(h["E"], h["F"], h["G"], h["Eu"], h["Ev"], h["Fu"], h["Fv"], h["Gu"], h["Gv"],
                 h["Evv"], h["Fuv"], h["Guu"])
    return ScalarField(z.grid, np.asarray(K, float))


def flatness_equation_residual(m, z):
    """det(z_ij - Gamma^k_ij z_k) - K (det g - E z_v^2 - G z_u^2 + 2F z_u z_v)."""
    from .metric import christoffel
    U, V = z.grid.mesh()
    j = m.jets(U, V)
    E, F, G = j["E"], j["F"], j["G"]
    gam = christoffel(E.v, F.v, G.v, E.d[0], E.d[1], F.d[0], F.d[1], G.d[0], G.d[1])
    dz = jet(z)
    zu, zv = dz[(1, 0)], dz[(0, 1)]
    H = [[dz[(2, 0)], dz[(1, 1)]], [dz[(1, 1)], dz[(0, 2)]]]
    M = [[H[i][k] - gam[0][i][k] * zu - gam[1][i][k] * zv for k in range(2)] for i in range(2)]
    K = m.curvature(U, V)
    rhs = K * (E.v * G.v - F.v ** 2 - E.v * zv ** 2 - G.v * zu ** 2 + 2 * F.v * zu * zv)
    return ScalarField(z.grid, M[0][0] * M[1][1] - M[0][1] ** 2 - rhs)


# -- report ------------------------------------------------------------------------

@dataclass
class Stat:
    sup: float
    l2: float

    @classmethod
    def of(cls, field):
        return cls(float(np.abs(field.values).max()), l2(field))


@dataclass
class VerificationReport:
    ma_residual: Stat
    ma_residual_core: Stat  # restricted to the region where the cutoff psi is 1
    curvature_error: Stat = None
    flatness_residual: Stat = None
    flatness_equation: Stat = None
    grid: dict = None

    def to_dict(self):
        return {k: (asdict(v) if isinstance(v, Stat) else v) for k, v in asdict(self).items()}


def core_grid(g, spec):
    """Sub-grid of g (same spacing) inside the plateau of psi."""
    hx, hy = spec.psi_inner * spec.x0, spec.psi_inner * spec.y0
    ix = np.where(np.abs(g.x) <= hx + 1e-12)[0]
    iy = np.where(np.abs(g.y) <= hy + 1e-12)[0]
    return ix, iy


def _restrict(field, ix, iy, eps):
    g = field.grid
    sub = Grid2D(g.x[ix[0]], g.x[ix[-1]], g.y[iy[0]], g.y[iy[-1]], len(ix), len(iy))
    return ScalarField(sub, field.values[np.ix_(ix, iy)])


def verify(w, spec):
    """All residuals of the solution w (on X_infinity in (x, y) coordinates)."""
    from .metric import linear_chart
    z = reconstruct_z(w, spec)
    ix, iy = core_grid(w.grid, spec)
    if len(ix) < 9 or len(iy) < 9:
        raise VerifyError("grid too coarse to resolve the plateau of psi")
    r = ma_residual(z, spec)
    rep = VerificationReport(Stat.of(r), Stat.of(_restrict(r, ix, iy, spec.epsilon)))
    if spec.mode == "curvature":
        rep.curvature_error = Stat.of(curvature_error(z, spec))
    else:
        m = linear_chart(spec.metric, spec.A)
        zd = ScalarField(z.grid, spec.d * z.values)
        rep.flatness_residual = Stat.of(flatness_residual(m, zd))
        rep.flatness_equation = Stat.of(flatness_equation_residual(m, zd))
    g = w.grid
    rep.grid = {"nx": g.nx, "ny": g.ny, "hx": g.hx, "hy": g.hy,
                "xy_box": [g.x_min, g.x_max, g.y_min, g.y_max],
                "uv_box": [z.grid.x_min, z.grid.x_max, z.grid.y_min, z.grid.y_max],
                "core_nodes": [int(len(ix)), int(len(iy))]}
    return rep
