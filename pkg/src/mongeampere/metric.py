"""Riemannian metrics on a chart: symbolic base form, numeric 2-jets under quadratic coordinate maps."""

from dataclasses import dataclass, field as dc_field, replace
from functools import cached_property

import numpy as np
import sympy

U, V = sympy.symbols("u v", real=True)


class MetricError(ValueError):
    pass


def _lambdify(expr):
    fn = sympy.lambdify((U, V), expr, "numpy", cse=True)
    return lambda u, v: np.broadcast_to(np.asarray(fn(u, v), dtype=float),
                                        np.broadcast(u, v).shape).copy()


class Jet:
    """Value, gradient and Hessian of a scalar in two variables (arrays allowed)."""

    __slots__ = ("v", "d", "dd")

    def __init__(self, v, d, dd):
        self.v, self.d, self.dd = v, d, dd

    @classmethod
    def const(cls, c):
        return cls(c, [0.0, 0.0], [[0.0, 0.0], [0.0, 0.0]])

    def __add__(self, o):
        return Jet(self.v + o.v, [a + b for a, b in zip(self.d, o.d)],
                   [[self.dd[i][j] + o.dd[i][j] for j in range(2)] for i in range(2)])

    def __mul__(self, o):
        if not isinstance(o, Jet):
            return Jet(self.v * o, [a * o for a in self.d], [[x * o for x in r] for r in self.dd])
        return Jet(self.v * o.v, [self.d[i] * o.v + self.v * o.d[i] for i in range(2)],
                   [[self.dd[i][j] * o.v + self.d[i] * o.d[j] + self.d[j] * o.d[i] + self.v * o.dd[i][j]
                     for j in range(2)] for i in range(2)])

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """Base form E du^2 + 2F du dv + G dv^2 (sympy in u, v), seen through old = B x + C(x,x)/2."""
    E: sympy.Expr
    F: sympy.Expr
    G: sympy.Expr
    name: str = "metric"
    B: np.ndarray = dc_field(default_factory=lambda: np.eye(2))
    C: np.ndarray = dc_field(default_factory=lambda: np.zeros((2, 2, 2)))

    def __post_init__(self):
        j = self.jets(np.zeros(1), np.zeros(1))
        e, f, g = (j[n].v[0] for n in "EFG")
        if not (e > 0 and g > 0 and e * g - f * f > 0):
            raise MetricError(f"metric {self.name} is not positive definite at the origin")

    @cached_property
    def _base(self):
        out = {}
        for nm, e in (("E", self.E), ("F", self.F), ("G", self.G)):
            for ku in range(3):
                for kv in range(3 - ku):
                    d = sympy.diff(e, U, ku, V, kv) if (ku or kv) else e
                    out[(nm, ku, kv)] = _lambdify(d)
        return out

    def with_chart(self, B, C):
        return replace(self, B=np.asarray(B, float), C=np.asarray(C, float))

    def jets(self, x, y):
        """Jets of E, F, G in the chart coordinates at (x, y)."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        B, C = self.B, self.C
        X = (x, y)
        pos = [sum(B[c, i] * X[i] for i in range(2))
               + 0.5 * sum(C[c, i, j] * X[i] * X[j] for i in range(2) for j in range(2))
               for c in range(2)]
        J = [[B[c, i] + sum(C[c, i, k] * X[k] for k in range(2)) for i in range(2)] for c in range(2)]
        base = {k: fn(pos[0], pos[1]) for k, fn in self._base.items()}
        comp = {(0, 0): "E", (0, 1): "F", (1, 0): "F", (1, 1): "G"}

        def raw(a, b):
            nm = comp[(a, b)]
            g = base[(nm, 0, 0)]
            dg = [base[(nm, 1, 0)], base[(nm, 0, 1)]]
            ddg = [[base[(nm, 2, 0)], base[(nm, 1, 1)]], [base[(nm, 1, 1)], base[(nm, 0, 2)]]]
            d = [sum(dg[c] * J[c][i] for c in range(2)) for i in range(2)]
            dd = [[sum(ddg[c][e] * J[c][i] * J[e][j] for c in range(2) for e in range(2))
                   + sum(dg[c] * C[c, i, j] for c in range(2)) for j in range(2)] for i in range(2)]
            return Jet(g, d, dd)

        Gj = {(a, b): raw(a, b) for a in range(2) for b in range(2)}
        Jj = [[Jet(J[c][i], [C[c, i, 0], C[c, i, 1]], [[0.0, 0.0], [0.0, 0.0]]) for i in range(2)]
              for c in range(2)]

        def entry(i, j):
            acc = None
            for a in range(2):
                for b in range(2):
                    t = Jj[a][i] * Gj[(a, b)] * Jj[b][j]
                    acc = t if acc is None else acc + t
            return acc

        return {"E": entry(0, 0), "F": entry(0, 1), "G": entry(1, 1)}

    def christoffel(self, x, y):
        j = self.jets(x, y)
        return christoffel(*_first(j))

    def curvature(self, x, y):
        j = self.jets(x, y)
        return brioschi(*_first(j), j["E"].dd[1][1], j["F"].dd[0][1], j["G"].dd[0][0])

    def christoffel_at_origin(self):
        g = self.christoffel(np.zeros(1), np.zeros(1))
        return np.array([[[g[k][i][j][0] for j in range(2)] for i in range(2)] for k in range(2)])


def _first(j):
    E, F, G = j["E"], j["F"], j["G"]
    return E.v, F.v, G.v, E.d[0], E.d[1], F.d[0], F.d[1], G.d[0], G.d[1]


def brioschi(E, F, G, Eu, Ev, Fu, Fv, Gu, Gv, Evv, Fuv, Guu):
    """Gauss curvature from the first fundamental form."""
    def det3(m):
        return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
    m1 = [[-Evv / 2 + Fuv - Guu / 2, Eu / 2, Fu - Ev / 2],
          [Fv - Gu / 2, E, F],
          [Gv / 2, F, G]]
    m2 = [[0 * E, Ev / 2, Gu / 2],
          [Ev / 2, E, F],
          [Gu / 2, F, G]]
    return (det3(m1) - det3(m2)) / (E * G - F * F) ** 2


def christoffel(E, F, G, Eu, Ev, Fu, Fv, Gu, Gv):
    """Gamma[k][i][j] for coordinates (u, v)."""
    dg = {0: [[Eu, Fu], [Fu, Gu]], 1: [[Ev, Fv], [Fv, Gv]]}
    det = E * G - F * F
    ginv = [[G / det, -F / det], [-F / det, E / det]]
    gam = [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
    for k in range(2):
        for i in range(2):
            for j in range(2):
                gam[k][i][j] = sum(ginv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]) / 2
                                   for l in range(2))
    return gam


def symbolic_curvature(E, F, G):
    d = lambda e, a, b: sympy.diff(e, U, a, V, b)
    return brioschi(E, F, G, d(E, 1, 0), d(E, 0, 1), d(F, 1, 0), d(F, 0, 1), d(G, 1, 0),
                    d(G, 0, 1), d(E, 0, 2), d(F, 1, 1), d(G, 2, 0))


# -- built-ins ----------------------------------------------------------------------

def metric_flat():
    return MetricSpec(sympy.Integer(1), sympy.Integer(0), sympy.Integer(1), "flat")


def metric_warped():
    return MetricSpec(sympy.Integer(1), sympy.Integer(0), sympy.exp(2 * U), "warped")


def graph_height(terms):
    return sum(sympy.nsimplify(c) * U ** i * V ** j for c, i, j in terms)


def metric_graph(terms=((0.5, 2, 0), (-1.0 / 12.0, 0, 4))):
    """Induced metric of the graph of sum c u^i v^j."""
    h = graph_height(terms)
    hu, hv = sympy.diff(h, U), sympy.diff(h, V)
    return MetricSpec(1 + hu ** 2, hu * hv, 1 + hv ** 2, "graph")


def quadratic_chart(rows):
    """C tensor from [[c_uu, c_uv, c_vv], [d_uu, d_uv, d_vv]] meaning old = new + (c_uu u^2 + ...)."""
    C = np.zeros((2, 2, 2))
    for c, (quu, quv, qvv) in enumerate(rows):
        C[c] = [[2 * quu, quv], [quv, 2 * qvv]]
    return C


def metric_distorted(m, rows):
    return m.with_chart(m.B, m.C + np.einsum("ck,kij->cij", m.B, quadratic_chart(rows)))


def kill_christoffel(m):
    """Quadratic chart change with the same 2-jet as x -> x - Gamma(0)(x,x)/2, so Gamma(0)=0."""
    gam0 = m.christoffel_at_origin()
    return m.with_chart(m.B, m.C - np.einsum("ck,kij->cij", m.B, gam0))


def linear_chart(m, A):
    """Compose the chart with x = A x'."""
    A = np.asarray(A, float)
    return m.with_chart(m.B @ A, np.einsum("ckl,ki,lj->cij", m.C, A, A))
