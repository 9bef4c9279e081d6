"""Nash-Moser iteration on shrinking rectangles: schedules, cutoffs, the linearized step, trackers."""

import json
import math
from dataclasses import asdict, dataclass, field as dc_field, replace

import numpy as np

from .charcoords import CharError, build_characteristics, pullback_solution, push_field, pushforward
from .grid import Grid2D, ScalarField, l2, norms, resample
from .linsolve import SolveError, assemble, solve_with_info
from .problem import ProblemError, linearize, phi_apply
from .profiles import smooth_step
from .smoothing import mollify_extended
from .strip import StripError, StripParams, extend_to_strip


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    mu: float = 6.0
    tau: float = 1.6
    n0: int = 0
    theta0: float = 1e-2
    theta_decay: float = 0.5
    max_iter: int = 12
    tol: float = 1e-7
    s_star: int = 100
    s_track: int = 4
    stall_window: int = 3
    stall_ratio: float = 0.01

    def __post_init__(self):
        if not self.mu > 5:
            raise ScheduleError("mu must exceed 5")
        if not 1.5 < self.tau < 2:
            raise ScheduleError("tau must lie in (3/2, 2)")
        if self.n0 < 0 or self.max_iter < 0:
            raise ScheduleError("n0 and max_iter must be nonnegative")
        if not (self.theta0 > 0 and 0 < self.theta_decay < 1):
            raise ScheduleError("need theta0 > 0 and theta_decay in (0, 1)")

    @property
    def delta(self):
        return 16.0 / (self.tau - 1.0)

    def sigma(self, n):
        return n * (n + 1) * self.tau ** (-(n + 1 + self.n0))

    def mu_n(self, n):
        e = self.tau ** (n + self.n0) * math.log(self.mu)
        return math.inf if e > 700 else math.exp(e)

    def theta_n(self, n):
        return self.theta0 * self.theta_decay ** (n - 1)

    def scale(self, n):
        """X_n = scale(n) X."""
        return 1.0 - sum(self.mu ** (-i) for i in range(1, n))

    @property
    def scale_limit(self):
        return 1.0 - 1.0 / (self.mu - 1.0)

    def s_eval(self):
        """Tracked order at which the II/III exponents vanish."""
        return self.s_star - 18 - 2 * self.delta


def domain_sequence(sched, X, n):
    if n < 1:
        raise ScheduleError("domains are indexed from 1")
    return X.scaled(sched.scale(n))


def limit_domain(sched, X):
    return X.scaled(sched.scale_limit)


def cutoff_phi(n, Xn, Xn1, grid=None):
    """1 on X_{n+1}, 0 outside X_n, C-infinity tensor blend between; sampled on grid (default X_n)."""
    g = grid or Xn
    X, Y = g.mesh()

    def prof(t, inner, outer):
        return 1.0 - smooth_step((np.abs(t) - inner) / (outer - inner))

    return ScalarField(g, prof(X, Xn1.x_max, Xn.x_max) * prof(Y, Xn1.y_max, Xn.y_max))


# -- state and trackers ---------------------------------------------------------------

@dataclass
class Tracker:
    lhs: float
    rhs: float
    satisfied: bool
    order: int  # order actually measured
    nominal: float  # order the statement asks for


@dataclass
class TrackerReport:
    I: Tracker
    II: Tracker
    III: Tracker
    IV: Tracker


@dataclass(eq=False)
class IterationState:
    n: int
    domain: Grid2D
    w: ScalarField
    f: ScalarField
    theta_n: float
    mu_n: float
    trackers: TrackerReport = None
    fallbacks: int = 0
    u: ScalarField = None  # u_{n-1} on X_{n-1}
    norm_u0: float = 0.0
    q_norm: float = float("nan")
    su_norm: float = 0.0
    su_h2: float = 0.0
    su_h3: float = 0.0  # ||S_n u_n|| in H^3(X_n); Q_n is bounded by its square


@dataclass
class TrackerMemory:
    base: float = float("nan")
    C1: float = float("nan")
    C2: float = float("nan")
    C3: float = float("nan")


def _pow(b, e):
    x = e * math.log(b)
    return math.inf if x > 700 else math.exp(x)


def _norm(field, order, cap):
    k = min(int(math.floor(order)), cap) if order >= 0 else 0
    return norms(field, k).sobolev[k], k


def trackers(state, sched, mem, s=None):
    """Statements I-IV at the tracked order, norms capped at sched.s_track (diagnostics only)."""
    s = sched.s_eval() if s is None else s
    cap = sched.s_track
    j = state.n
    wj, fj = on_domain(state.w, state.domain), on_domain(state.f, state.domain)
    if not mem.base == mem.base:
        mem.base = _norm(fj, sched.s_star - 15, cap)[0]
        mem.C1 = mem.C2 = sched.mu_n(1)
    base = mem.base
    ex = (s - sched.s_star + 18 + 2 * sched.delta) / sched.tau
    lhs, k = _norm(wj, s + 15, cap)
    rhs = _pow(sched.mu_n(j), sched.sigma(j) * s + sched.delta) * base
    t1 = Tracker(lhs, rhs, lhs <= rhs, k, s + 15)
    if state.u is None:
        t2 = Tracker(0.0, 0.0, True, 0, s)
    else:
        lhs, k = _norm(state.u, s, cap)
        rhs = mem.C1 * _pow(sched.mu_n(j - 1), ex) * base
        t2 = Tracker(lhs, rhs, lhs <= rhs, k, s)
    lhs, k = _norm(fj, s, cap)
    rhs = mem.C2 * _pow(sched.mu_n(j), ex) * base
    t3 = Tracker(lhs, rhs, lhs <= rhs, k, s)
    lhs, k = _norm(wj, 14, cap)
    if not mem.C3 == mem.C3 and lhs > 0:
        mem.C3 = 2.0 * lhs
    c3 = mem.C3 if mem.C3 == mem.C3 else 0.0
    t4 = Tracker(lhs, c3, lhs <= c3, k, 14)
    return TrackerReport(t1, t2, t3, t4)


# -- one step -------------------------------------------------------------------------
#
# w_n is stored on the fixed base grid. X_n only decides where f_n counts (the cutoff phi_n),
# the rectangle on which u_n is smoothed, and where norms are taken. Every node of X_{n+1}
# is then an interior node of the base grid, so Phi and the linear solver see the same
# central stencils there.

class StepAbort(RuntimeError):
    pass


def on_domain(field, rect):
    """Spline transfer onto the re-gridded sub-rectangle rect."""
    return resample(field, rect)


def l2_on(field, rect):
    """||field|| over rect by nodal quadrature on the field's own grid."""
    g = field.grid
    X, Y = g.mesh()
    m = ((X >= rect.x_min - 1e-12) & (X <= rect.x_max + 1e-12)
         & (Y >= rect.y_min - 1e-12) & (Y <= rect.y_max + 1e-12))
    return float(np.sqrt(np.sum(field.values[m] ** 2) * g.hx * g.hy))


@dataclass
class StepOptions:
    bc: str = "dirichlet"
    closure: str = "causal"
    strip: StripParams = dc_field(default_factory=StripParams)
    strict_strip: bool = False


def linear_solve(coeffs, rhs, theta, opts):
    """Characteristic coordinates, strip extension, solve, pull back. Returns (u on X, info)."""
    dmap = build_characteristics(coeffs)
    pushed = pushforward(coeffs, dmap)
    p = replace(opts.strip, theta=theta)
    strip = extend_to_strip(pushed, p, strict=opts.strict_strip)
    S = strip.grid
    k = (S.ny - rhs.grid.ny) // 2
    big = np.zeros(S.shape)
    big[:, k:k + rhs.grid.ny] = push_field(rhs, dmap).values
    system = assemble(strip, theta, opts.bc, opts.closure)
    v, info = solve_with_info(system, ScalarField(S, big))
    v_rect = ScalarField(rhs.grid, v.values[:, k:k + rhs.grid.ny])
    return pullback_solution(v_rect, dmap), info


def residual(op, w, forcing=None):
    """f = g - Phi(w) on w's grid (g = 0 unless a forcing is given)."""
    r = -phi_apply(op.on(w.grid), w).values
    if forcing is not None:
        X, Y = w.grid.mesh()
        r = r + forcing(X, Y)
    return ScalarField(w.grid, r)


def step(state, sched, op, base, opts=None, forcing=None):
    opts = opts or StepOptions()
    n = state.n
    Xn, Xn1 = state.domain, domain_sequence(sched, base, n + 1)
    op = op.on(base)
    try:
        coeffs = linearize(op, state.w)
        phi = cutoff_phi(n, Xn, Xn1, grid=base)
        v, info = linear_solve(coeffs, phi * state.f, state.theta_n, opts)
    except (CharError, StripError, SolveError, ProblemError) as exc:
        raise StepAbort(str(exc)) from exc
    u = on_domain(v, Xn)
    mu_n = sched.mu_n(n)
    su = resample(mollify_extended(u, mu_n), base)
    w_next = state.w + su
    f_next = residual(op, w_next, forcing)
    # quadratic error of the update, measured on X_n
    q = phi_apply(op, w_next) - phi_apply(op, state.w) - coeffs.apply(su)
    sob = norms(on_domain(su, Xn), 3).sobolev
    return IterationState(n + 1, Xn1, w_next, f_next, sched.theta_n(n + 1), sched.mu_n(n + 1),
                          fallbacks=state.fallbacks + int(info.fallback), u=u, norm_u0=l2(u),
                          q_norm=l2_on(q, Xn), su_norm=l2_on(su, Xn), su_h2=sob[2], su_h3=sob[3])


def norm_on_next(state, sched, base):
    """||f_n|| on X_{n+1}."""
    return l2_on(state.f, domain_sequence(sched, base, state.n + 1))


def log_record(state, norm_f):
    d = state.domain
    return {"n": state.n, "theta_n": state.theta_n, "mu_n": state.mu_n,
            "domain": [d.x_min, d.x_max, d.y_min, d.y_max],
            "norm_f0": norm_f, "norm_u0": state.norm_u0,
            "trackers": asdict(state.trackers) if state.trackers else None,
            "fallback_flags": state.fallbacks, "q_norm": state.q_norm, "su_norm": state.su_norm,
            "su_h2": state.su_h2, "su_h3": state.su_h3}


@dataclass
class RunResult:
    w: ScalarField  # on X_infinity
    log: list
    status: str
    state: IterationState
    message: str = ""

    def jsonl(self):
        return "".join(json.dumps(r) + "\n" for r in self.log)


def run(op, sched, base, opts=None, forcing=None, w1=None):
    """Iterate until ||f_n|| on X_{n+1} <= tol, a stall, or max_iter steps."""
    mem = TrackerMemory()
    w = w1 if w1 is not None else ScalarField.zeros(base)
    op = op.on(base)
    state = IterationState(1, base, w, residual(op, w, forcing), sched.theta_n(1), sched.mu_n(1))
    log, history = [], []
    status, message = None, ""
    while True:
        state.trackers = trackers(state, sched, mem)
        nf = norm_on_next(state, sched, base)
        history.append(nf)
        log.append(log_record(state, nf))
        if not np.isfinite(nf):
            status, message = "aborted", "non-finite residual"
            break
        if nf <= sched.tol:
            status = "converged"
            break
        k = sched.stall_window
        if len(history) > k and history[-1] > (1 - sched.stall_ratio) * history[-1 - k]:
            status, message = "stalled", f"residual changed by less than {sched.stall_ratio:.0%} over {k} steps"
            break
        if state.n - 1 >= sched.max_iter:
            status, message = "stalled", "max_iter reached"
            break
        try:
            state = step(state, sched, op, base, opts, forcing)
        except StepAbort as exc:
            status, message = "aborted", str(exc)
            break
    w_inf = on_domain(state.w, limit_domain(sched, base))
    return RunResult(w_inf, log, status, state, message)
