import numpy as np
import pytest
import sympy

from mongeampere.grid import Grid2D, ScalarField, l2
from mongeampere.metric import (MetricError, MetricSpec, U, V, kill_christoffel, linear_chart,
                                metric_distorted, metric_flat, metric_graph, metric_warped,
                                symbolic_curvature)
from mongeampere.problem import (K_exact_model, K_quadratic, ProblemError, ScaledOperator,
                                 build_problem, check_hypotheses, check_vanishing, curvature_problem,
                                 f_graph, f_unit, linearize, metric_to_problem, normalize, phi_apply)


# -- hypotheses and normal form ----------------------------------------------------------

def test_saddle_accepted_with_eigenvalues():
    d = check_hypotheses(K_quadratic(1, 0, -1))
    assert d.accepted
    assert sorted(d.eigenvalues) == pytest.approx([-2.0, 2.0], abs=1e-6)


@pytest.mark.parametrize("K, word", [(K_quadratic(1, 0, 1), "negative"),
                                     (lambda u, v: v, "grad"),
                                     (lambda u, v: 1 + u * u - v * v, "K(0)")])
def test_rejections_name_the_quantity(K, word):
    d = check_hypotheses(K)
    assert not d.accepted and word in d.reason
    with pytest.raises(ProblemError, match=word.replace("(", r"\(").replace(")", r"\)")):
        curvature_problem(K)


def test_normalize_examples():
    assert np.array_equal(normalize(lambda u, v: -v * v, f_unit).A, np.eye(2))
    assert np.allclose(normalize(lambda u, v: -4 * v * v, f_unit).A, np.diag([1.0, 0.5]))
    n = normalize(lambda u, v: u * v, f_unit)
    A = n.A
    # columns at 45 degrees and the composed quadratic form is u'^2 - v'^2
    assert abs(abs(A[0, 0]) - abs(A[1, 0])) < 1e-12 and abs(abs(A[0, 1]) - abs(A[1, 1])) < 1e-12
    assert np.allclose(n.hessian, np.diag([2.0, -2.0]), atol=1e-5)
    with pytest.raises(ProblemError):
        normalize(lambda u, v: 0 * u, f_unit)


def test_wrapped_problem_matches_original_at_mapped_points():
    K = lambda u, v: u * v + u ** 3
    spec = curvature_problem(K, f_graph)
    A = spec.A
    u, v = 0.3, -0.2
    U0, V0 = A @ [u, v]
    assert spec.K(u, v) == pytest.approx(K(U0, V0), rel=1e-14)
    assert spec.f(u, v, 0.0, 0.0, 0.0) == pytest.approx(1.0)


# -- metrics -------------------------------------------------------------------------

def test_flat_metric():
    m = metric_flat()
    x = np.linspace(-0.1, 0.1, 5)
    assert np.all(np.asarray(m.curvature(x, x)) == 0)
    g = np.array(m.christoffel(x, x), dtype=float)
    assert np.all(g == 0)
    # K vanishes identically, so the hypotheses (negative Hessian direction) fail honestly
    with pytest.raises(ProblemError, match="negative"):
        metric_to_problem(m)


def test_warped_metric_curvature_is_minus_one():
    m = metric_warped()
    x = np.linspace(-0.3, 0.3, 7)
    assert np.allclose(m.curvature(x, -x), -1.0, atol=1e-12)
    assert sympy.simplify(symbolic_curvature(1, 0, sympy.exp(2 * U)) + 1) == 0


def test_non_positive_metric_rejected():
    with pytest.raises(MetricError):
        MetricSpec(sympy.Integer(1), sympy.Integer(2), sympy.Integer(1))


def test_kill_christoffel_and_vanishing():
    m = metric_distorted(metric_graph(((0.5, 2, 0), (-1 / 12, 0, 4), (0.3, 3, 0))), [[0.2, 0.1, 0.0], [0.0, 0.3, 0.1]])
    assert np.abs(m.christoffel_at_origin()).max() > 0.1
    m2 = kill_christoffel(m)
    assert np.abs(m2.christoffel_at_origin()).max() < 1e-12
    spec = metric_to_problem(m)
    assert check_vanishing(spec.a) <= 1e-8


def test_linear_chart_preserves_curvature():
    m = metric_graph(((0.5, 2, 0), (-1 / 12, 0, 4), (0.2, 2, 2)))
    A = np.array([[1.3, 0.2], [-0.1, 0.7]])
    m2 = linear_chart(m, A)
    u, v = 0.05, -0.08
    U0, V0 = A @ [u, v]
    assert m2.curvature(u, v) == pytest.approx(m.curvature(U0, V0), rel=1e-10)


def test_check_vanishing_rejects_linear_a():
    bad = lambda u, v, p, q1, q2: (u + 0 * q1, 0 * u, 0 * u)
    with pytest.raises(ProblemError):
        check_vanishing(bad)


# -- scaled operator -------------------------------------------------------------------

def test_exact_model_phi_zero(exact_spec, base):
    phi = phi_apply(ScaledOperator(exact_spec, base), ScalarField.zeros(base))
    assert l2(phi) <= 1e-8


def test_remainder_off_is_gallerstedt(saddle_spec, base, rng):
    X, Y = base.mesh()
    w = ScalarField(base, np.sin(X) * np.cos(2 * Y) + 0.1 * rng.standard_normal(base.shape))
    op = ScaledOperator(saddle_spec, base, remainder=False)
    from mongeampere.grid import diff
    expect = -Y ** 2 * diff(w, 2, 0).values + diff(w, 0, 2).values
    assert np.array_equal(phi_apply(op, w).values, expect)


def test_phi_zero_shrinks_with_epsilon():
    g = Grid2D.box(2, 1, 33, 33)
    vals = [l2(phi_apply(ScaledOperator(curvature_problem(K_quadratic(1, 0, -1), epsilon=e), g),
                         ScalarField.zeros(g))) for e in (0.1, 0.05, 0.025)]
    assert vals[0] > 2 * vals[1] > 4 * vals[2] > 0


def test_phi_respects_cutoff(saddle_spec, base):
    X, Y = base.mesh()
    w = ScalarField(base, 1e-2 * np.sin(X + Y))
    full = phi_apply(ScaledOperator(saddle_spec, base), w).values
    prin = phi_apply(ScaledOperator(saddle_spec, base, remainder=False), w).values
    off = (np.abs(X) >= 0.75 * 2.0) | (np.abs(Y) >= 0.75 * 1.0)
    assert np.array_equal(full[off], prin[off])
    assert np.abs(full - prin)[~off].max() > 0


def test_phi_rejects_foreign_grid(saddle_spec, base):
    with pytest.raises(ProblemError):
        phi_apply(ScaledOperator(saddle_spec, base), ScalarField.zeros(Grid2D.box(2, 1, 33, 33)))


def test_linearize_remainder_off(saddle_spec, base):
    c = linearize(ScaledOperator(saddle_spec, base, remainder=False), ScalarField.zeros(base))
    _, Y = base.mesh()
    assert np.array_equal(c.a11.values, -Y ** 2) and np.all(c.a22.values == 1)
    assert all(np.all(getattr(c, n).values == 0) for n in ("a12", "a1", "a2", "a"))


def test_linearize_outside_cutoff(saddle_spec, base):
    c = linearize(ScaledOperator(saddle_spec, base), ScalarField.zeros(base))
    X, Y = base.mesh()
    off = (np.abs(X) >= 1.5) | (np.abs(Y) >= 0.75)
    assert np.array_equal(c.a11.values[off], -Y[off] ** 2)
    assert np.all(c.a22.values[off] == 1)
    assert all(np.all(getattr(c, n).values[off] == 0) for n in ("a12", "a1", "a2", "a"))
    # budget of the b fields stays O(1)
    assert c.perturbation_sup() / saddle_spec.epsilon < 1.0


def _taylor_slope(op, w, v, hs=(1e-2, 1e-3)):
    c = linearize(op, w)
    p0 = phi_apply(op, w)
    r = [l2(phi_apply(op, w + v * h) - p0 - c.apply(v * h)) for h in hs]
    return np.log(r[0] / r[1]) / np.log(hs[0] / hs[1]), r


def test_taylor_remainder_is_quadratic(saddle_spec, base, rng):
    op = ScaledOperator(saddle_spec, base)
    X, Y = base.mesh()
    for _ in range(10):
        a, b, c_, d = rng.uniform(-1, 1, 4)
        w = ScalarField(base, np.sin(a * X + b) * np.cos(2 * Y + c_) * d)
        v = ScalarField(base, np.cos(3 * X + a) * np.sin(Y + 1 + b))
        slope, r = _taylor_slope(op, w, v)
        assert 1.8 <= slope <= 2.2, (slope, r)


def test_build_problem_registry():
    spec = build_problem({"K": "quadratic", "coeffs": [0, 1, 0]})
    assert spec.mode == "curvature" and not np.allclose(spec.A, np.eye(2))
    assert build_problem({"mode": "embedding"}).mode == "embedding"
    for bad in ({"K": "nope"}, {"coeffs": [1, 2]}, {"f": "odd"}, {"mode": "other"},
                {"mode": "embedding", "metric": "nope"}):
        with pytest.raises(ProblemError):
            build_problem(bad)


def test_spec_validation():
    with pytest.raises(ProblemError):
        curvature_problem(K_quadratic(1, 0, -1), epsilon=0.7)


def test_epsilon_too_large_for_positive_f():
    from mongeampere.problem import ProblemSpec
    f = lambda u, v, p, q1, q2: 1.0 - 1e5 * u * u + 0 * q1
    spec = ProblemSpec("curvature", K_quadratic(1, 0, -1), f, epsilon=0.3)
    g = Grid2D.box(2, 1, 17, 17)
    with pytest.raises(ProblemError, match="positive"):
        phi_apply(ScaledOperator(spec, g), ScalarField.zeros(g))
