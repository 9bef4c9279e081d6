"""Problem ingestion, normal form, and the scaled nonlinear operator Phi with its linearization.

Original equation: det(z_ij + a_ij(u,v,z,grad z)) = K(u,v) f(u,v,z,grad z).
Scaling: u = eps^4 x, v = eps^2 y, z = u^2/2 - v^4/12 + eps^9 w, residual multiplied by eps^-5.
"""

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .coeffs import CoefficientSet
from .grid import ScalarField, diff_array
from .metric import MetricSpec, kill_christoffel, metric_distorted, metric_flat, metric_graph, metric_warped
from .profiles import tensor_cutoff

HYP_TOL = 1e-8
SLOTS = ("w", "wx", "wy", "wxx", "wxy", "wyy")


class ProblemError(ValueError):
    pass


# -- built-in data --------------------------------------------------------------

def K_quadratic(c_uu, c_uv, c_vv):
    return lambda u, v: c_uu * u * u + c_uv * u * v + c_vv * v * v


def K_exact_model(u, v):
    """Curvature of the graph of u^2/2 - v^4/12."""
    return -v * v / (1.0 + u * u + v ** 6 / 9.0) ** 2


def f_graph(u, v, p, q1, q2):
    return (1.0 + q1 * q1 + q2 * q2) ** 2


def f_unit(u, v, p, q1, q2):
    return np.ones_like(np.asarray(u + q1, dtype=float))


def a_zero(u, v, p, q1, q2):
    z = np.zeros_like(np.asarray(u + q1, dtype=float))
    return z, z, z


# -- problem specification ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProblemSpec:
    mode: str
    K: object
    f: object
    a: object = a_zero
    epsilon: float = 0.05
    x0: float = 2.0
    y0: float = 1.0
    psi_inner: float = 0.5
    psi_outer: float = 0.75
    A: np.ndarray = dc_field(default_factory=lambda: np.eye(2))
    d: float = 1.0
    K_original: object = None
    metric: MetricSpec = None  # chart before the linear normalization A
    name: str = "problem"

    def __post_init__(self):
        if self.mode not in ("curvature", "embedding"):
            raise ProblemError(f"mode must be curvature or embedding, got {self.mode!r}")
        if not 0 < self.epsilon < 0.5:
            raise ProblemError(f"epsilon={self.epsilon} outside (0, 0.5)")
        if self.x0 <= 0 or self.y0 <= 0:
            raise ProblemError("x0 and y0 must be positive")
        if self.mode == "embedding" and self.metric is None:
            raise ProblemError("embedding mode needs a metric")

    def psi(self, X, Y):
        return tensor_cutoff(X, Y, self.x0, self.y0, self.psi_inner, self.psi_outer)


def check_vanishing(a, tol=HYP_TOL, h=1e-3):
    """a_ij(0,0,p,q)=0 and (u,v)-derivatives of order <=2 vanish at the origin."""
    rng = np.random.default_rng(0)
    worst = 0.0
    for p, q1, q2 in rng.uniform(-0.1, 0.1, size=(5, 3)):
        worst = max(worst, max(abs(float(c)) for c in a(0.0, 0.0, p, q1, q2)))
    zero = lambda u, v: np.array([np.asarray(c, float) for c in a(u, v, 0.0, 0.0, 0.0)])
    for du, dv in ((1, 0), (0, 1)):
        for s in (h, 2 * h):
            worst = max(worst, float(np.abs(zero(du * s, dv * s)).max()))
            worst = max(worst, float(np.abs(zero(-du * s, -dv * s)).max()))
    if worst > tol:
        raise ProblemError(f"a_ij do not vanish to second order at the origin (max {worst:.3e})")
    return worst


# -- hypotheses and normal form -------------------------------------------------------

def _hessian(fn, h=1e-3):
    """Fourth-order central differences at the origin."""
    c1 = np.array([1, -8, 8, -1]) / (12 * h)
    off = np.array([-2, -1, 1, 2]) * h
    val = float(fn(0.0, 0.0))
    gu = sum(c * fn(o, 0.0) for c, o in zip(c1, off))
    gv = sum(c * fn(0.0, o) for c, o in zip(c1, off))
    c2 = np.array([-1, 16, -30, 16, -1]) / (12 * h * h)
    off2 = np.array([-2, -1, 0, 1, 2]) * h
    huu = sum(c * fn(o, 0.0) for c, o in zip(c2, off2))
    hvv = sum(c * fn(0.0, o) for c, o in zip(c2, off2))
    huv = sum(ci * cj * fn(oi, oj) for ci, oi in zip(c1, off) for cj, oj in zip(c1, off))
    return val, np.array([gu, gv], float), np.array([[huu, huv], [huv, hvv]], float)


@dataclass
class Diagnosis:
    accepted: bool
    K0: float
    grad: tuple
    eigenvalues: tuple
    reason: str = ""


def check_hypotheses(K, tol=HYP_TOL):
    K0, g, H = _hessian(lambda u, v: float(K(u, v)))
    ev = tuple(float(e) for e in np.linalg.eigvalsh(H))
    diag = Diagnosis(True, K0, tuple(g), ev)
    if abs(K0) > tol:
        diag.accepted, diag.reason = False, f"K(0)={K0:.3e} is not zero"
    elif np.abs(g).max() > tol:
        diag.accepted, diag.reason = False, f"grad K(0)={tuple(g)} is not zero"
    elif min(ev) >= -tol:
        diag.accepted, diag.reason = False, f"Hess K(0) eigenvalues {ev} have no negative entry"
    return diag


@dataclass
class Normalization:
    """Working coordinates u' with original u = A u' and unknown z = d Z."""
    A: np.ndarray
    d: float
    hessian: np.ndarray

    def wrap(self, K, f, a):
        A, d = self.A, self.d
        AinvT = np.linalg.inv(A).T

        def K2(u, v):
            return K(A[0, 0] * u + A[0, 1] * v, A[1, 0] * u + A[1, 1] * v)

        def _args(u, v, p, q1, q2):
            uu = A[0, 0] * u + A[0, 1] * v
            vv = A[1, 0] * u + A[1, 1] * v
            Q1 = d * (AinvT[0, 0] * q1 + AinvT[0, 1] * q2)
            Q2 = d * (AinvT[1, 0] * q1 + AinvT[1, 1] * q2)
            return uu, vv, d * p, Q1, Q2

        def f2(u, v, p, q1, q2):
            return f(*_args(u, v, p, q1, q2))

        def a2(u, v, p, q1, q2):
            b11, b12, b22 = a(*_args(u, v, p, q1, q2))
            m = [[b11, b12], [b12, b22]]
            r = [[sum(A[k, i] * m[k][l] * A[l, j] for k in range(2) for l in range(2)) / d
                  for j in range(2)] for i in range(2)]
            return r[0][0], r[0][1], r[1][1]

        return K2, f2, a2

    @property
    def is_identity(self):
        return np.allclose(self.A, np.eye(2), atol=1e-14, rtol=0)


def normalize(K, f):
    """Rotate the negative curvature direction onto v and scale so the v^2 coefficient is -1."""
    kf = lambda u, v: float(K(u, v) * f(u, v, 0.0, 0.0, 0.0))
    _, _, H = _hessian(kf)
    H = np.where(np.abs(H) < HYP_TOL * np.abs(H).max(), 0.0, H)
    lam, vec = np.linalg.eigh(H)
    if np.abs(lam).max() < HYP_TOL:
        raise ProblemError("degenerate Hessian of K f at the origin")
    if lam[0] >= 0:
        raise ProblemError("K f has no negative Hessian direction")
    ev = vec[:, 0] * np.sign(vec[1, 0] or 1.0)
    eu = np.array([ev[1], -ev[0]])
    R = np.column_stack([eu, ev])
    R = np.where(np.abs(R) < 1e-14, 0.0, R)
    cu, cv = lam[1] / 2.0, lam[0] / 2.0
    su = 1.0 / np.sqrt(abs(cu)) if abs(cu) > HYP_TOL else 1.0
    sv = 1.0 / np.sqrt(-cv)
    A = R @ np.diag([su, sv])
    if np.allclose(A, np.eye(2), atol=1e-12, rtol=0):
        A = np.eye(2)
    d = abs(float(np.linalg.det(A)))
    K2, f2, _ = Normalization(A, d, H).wrap(K, f, a_zero)
    _, _, H2 = _hessian(lambda u, v: float(K2(u, v) * f2(u, v, 0.0, 0.0, 0.0)))
    return Normalization(A, d, H2)


def curvature_problem(K, f=f_graph, epsilon=0.05, x0=2.0, y0=1.0, name="curvature", **kw):
    diag = check_hypotheses(K)
    if not diag.accepted:
        raise ProblemError(f"hypotheses rejected: {diag.reason}")
    nrm = normalize(K, f)
    K2, f2, a2 = nrm.wrap(K, f, a_zero)
    return ProblemSpec("curvature", K2, f2, a2, epsilon, x0, y0, A=nrm.A, d=nrm.d,
                       K_original=K, name=name, **kw)


def metric_to_problem(m, epsilon=0.05, x0=2.0, y0=1.0, **kw):
    """Chart with Gamma(0)=0, then the flatness equation in Monge-Ampere form."""
    m2 = kill_christoffel(m)
    gam, Kfun = m2.christoffel, m2.curvature

    def a(u, v, p, q1, q2):
        gm = gam(u, v)
        out = [[-(gm[0][i][j] * q1 + gm[1][i][j] * q2) for j in range(2)] for i in range(2)]
        return out[0][0], out[0][1], out[1][1]

    def f(u, v, p, q1, q2):
        j = m2.jets(u, v)
        e, ff, g = j["E"].v, j["F"].v, j["G"].v
        return e * g - ff * ff - e * q2 * q2 - g * q1 * q1 + 2 * ff * q1 * q2

    check_vanishing(a)
    diag = check_hypotheses(Kfun)
    if not diag.accepted:
        raise ProblemError(f"hypotheses rejected: {diag.reason}")
    nrm = normalize(Kfun, f)
    K2, f2, a2 = nrm.wrap(Kfun, f, a)
    return ProblemSpec("embedding", K2, f2, a2, epsilon, x0, y0, A=nrm.A, d=nrm.d,
                       K_original=Kfun, metric=m2, name=m.name, **kw)


# -- scaled operator ------------------------------------------------------------------

def slot_arrays(w):
    g = w.grid
    v = w.values
    return {"w": v, "wx": diff_array(v, g.hx, g.hy, 1, 0), "wy": diff_array(v, g.hx, g.hy, 0, 1),
            "wxx": diff_array(v, g.hx, g.hy, 2, 0), "wxy": diff_array(v, g.hx, g.hy, 1, 1),
            "wyy": diff_array(v, g.hx, g.hy, 0, 2)}


@dataclass(frozen=True)
class ScaledOperator:
    spec: ProblemSpec
    grid: object
    remainder: bool = True

    def on(self, grid):
        return replace(self, grid=grid)

    def mesh(self):
        return self.grid.mesh()

    def psi(self):
        X, Y = self.mesh()
        return self.spec.psi(X, Y)

    def scaled_residual(self, X, Y, s):
        """eps^-5 (det(z_ij + a_ij) - K f) at the given slot values."""
        e = self.spec.epsilon
        u, v = e ** 4 * X, e ** 2 * Y
        p = u * u / 2 - v ** 4 / 12 + e ** 9 * s["w"]
        q1 = u + e ** 5 * s["wx"]
        q2 = -v ** 3 / 3 + e ** 7 * s["wy"]
        a11, a12, a22 = self.spec.a(u, v, p, q1, q2)
        m11 = 1.0 + e * s["wxx"] + a11
        m22 = -v * v + e ** 5 * s["wyy"] + a22
        m12 = e ** 3 * s["wxy"] + a12
        rhs = self.spec.K(u, v) * self.spec.f(u, v, p, q1, q2)
        return (m11 * m22 - m12 * m12 - rhs) / e ** 5

    def principal(self, Y, s):
        return -Y * Y * s["wxx"] + s["wyy"]

    def evaluate(self, s):
        X, Y = self.mesh()
        P = self.principal(Y, s)
        if not self.remainder:
            return P
        return P + self.spec.psi(X, Y) * (self.scaled_residual(X, Y, s) - P)

    def check_positive_f(self):
        X, Y = self.mesh()
        e = self.spec.epsilon
        u, v = e ** 4 * X, e ** 2 * Y
        fv = self.spec.f(u, v, u * u / 2 - v ** 4 / 12, u, -v ** 3 / 3)
        if np.min(fv) <= 0:
            raise ProblemError(f"f is not positive on the mapped box (epsilon={e} too large)")


def phi_apply(op, w):
    if w.grid != op.grid:
        raise ProblemError("w is not sampled on the operator grid")
    op.check_positive_f()
    return ScalarField(op.grid, op.evaluate(slot_arrays(w)))


def linearize(op, w, rel_step=1e-5):
    """Coefficients of the Frechet derivative by central differences in each derivative slot."""
    X, Y = op.mesh()
    g = op.grid
    base = CoefficientSet.gallerstedt(g)
    if not op.remainder:
        return base
    s = slot_arrays(w)
    h = rel_step * (1.0 + float(np.abs(w.values).max()))
    psi = op.spec.psi(X, Y)
    deriv = {}
    for k in SLOTS:
        sp_, sm = dict(s), dict(s)
        sp_[k] = s[k] + h
        sm[k] = s[k] - h
        deriv[k] = (op.scaled_residual(X, Y, sp_) - op.scaled_residual(X, Y, sm)) / (2 * h)
    if not all(np.all(np.isfinite(d)) for d in deriv.values()):
        raise ProblemError("non-finite Gateaux difference")
    b11 = deriv["wxx"] + Y * Y
    b22 = deriv["wyy"] - 1.0
    arr = dict(a11=-Y * Y + psi * b11, a12=0.5 * psi * deriv["wxy"], a22=1.0 + psi * b22,
               a1=psi * deriv["wx"], a2=psi * deriv["wy"], a=psi * deriv["w"])
    eps = op.spec.epsilon
    lam = sum(float(np.abs(psi * b).max()) for b in (b11, b22, deriv["wxy"], deriv["wx"],
                                                      deriv["wy"], deriv["w"])) / eps
    return CoefficientSet.from_arrays(g, lambda_budget=lam, **arr)


# -- registry used by the config layer -------------------------------------------------

def build_problem(cfg):
    """cfg keys: mode, K, coeffs, f, metric, heights, epsilon, x0, y0."""
    mode = cfg.get("mode", "curvature")
    eps = float(cfg.get("epsilon", 0.05))
    x0, y0 = float(cfg.get("x0", 2.0)), float(cfg.get("y0", 1.0))
    if mode == "curvature":
        kname = cfg.get("K", "quadratic")
        if kname == "quadratic":
            coeffs = cfg.get("coeffs", [1.0, 0.0, -1.0])
            if len(coeffs) != 3:
                raise ProblemError("coeffs must list three numbers [c_uu, c_uv, c_vv]")
            K = K_quadratic(*map(float, coeffs))
        elif kname == "exact_model":
            K = K_exact_model
        else:
            raise ProblemError(f"unknown K built-in {kname!r}")
        fname = cfg.get("f", "graph")
        f = {"graph": f_graph, "unit": f_unit}.get(fname)
        if f is None:
            raise ProblemError(f"unknown f built-in {fname!r}")
        return curvature_problem(K, f, eps, x0, y0, name=f"{kname}")
    if mode == "embedding":
        mname = cfg.get("metric", "graph")
        if mname == "graph":
            terms = cfg.get("heights", [[0.5, 2, 0], [-1.0 / 12.0, 0, 4]])
            m = metric_graph(tuple(tuple(t) for t in terms))
        elif mname == "warped":
            m = metric_warped()
        elif mname == "flat":
            m = metric_flat()
        else:
            raise ProblemError(f"unknown metric built-in {mname!r}")
        if "chart" in cfg:
            m = metric_distorted(m, cfg["chart"])
        return metric_to_problem(m, eps, x0, y0)
    raise ProblemError(f"unknown mode {mode!r}")
