import numpy as np
import pytest

from mongeampere.coeffs import CoefficientSet
from mongeampere.grid import Grid2D, ScalarField, diff
from mongeampere.linsolve import basic_estimate_ratio
from mongeampere.profiles import bump
from mongeampere.strip import (StripError, StripParams, a11_profile, build_multipliers,
                               check_energy_inequality, extend_to_strip, gamma_profile, strip_conditions,
                               strip_grid)

P = StripParams()
CONDITION_IV = "sup d_yy a11 <= delta"


@pytest.fixture(scope="module")
def model():
    g = Grid2D.box(2, 1, 65, 65)
    return extend_to_strip(CoefficientSet.gallerstedt(g), P)


def random_probes(S, n, rng):
    X, Y = S.mesh()
    out = []
    for _ in range(n):
        cx, cy = rng.uniform(-1, 1), rng.uniform(-1.5, 1.5)
        rx, ry, fr = rng.uniform(0.3, 0.8), rng.uniform(0.3, 0.9), rng.uniform(0, 3)
        r = np.sqrt(((X - cx) / rx) ** 2 + ((Y - cy) / ry) ** 2)
        out.append(ScalarField(S, bump(r) * np.cos(fr * X)))
    return out


def test_params_validation():
    with pytest.raises(StripError):
        StripParams(y1=0.9)
    with pytest.raises(StripError):
        StripParams(theta=0)


def test_strip_grid_keeps_spacing():
    g = Grid2D.box(2, 1, 65, 65)
    S, k = strip_grid(g, P)
    assert S.hy == pytest.approx(g.hy) and S.nx == g.nx
    assert S.y_max == pytest.approx(2.75) and S.ny == 65 + 2 * k
    with pytest.raises(StripError):
        strip_grid(Grid2D(-2, 2, 0, 1, 9, 9), P)


def test_a11_values_at_named_heights():
    y = (P.y0 + P.y1) / 2
    assert a11_profile(np.array(y), P) == -y ** 2
    assert np.all(a11_profile(np.array([1.5, 2.0, 2.75]), P) == -((P.y1 + P.y2) / 2) ** 2)


def test_extension_keeps_rectangle_values(model):
    g = Grid2D.box(2, 1, 65, 65)
    _, k = strip_grid(g, P)
    _, Y = g.mesh()
    inner = np.abs(g.x) < 2 * (1 - P.edge)
    assert np.array_equal(model.a11.values[inner, k:k + 65], -Y[inner] ** 2)
    assert np.all(model.a12.values == 0)


def test_strip_conditions_hold_except_iv(model):
    conds = strip_conditions(model, P)
    assert len(conds) == 13
    failing = [k for k, (_, ok) in conds.items() if not ok]
    assert failing == [CONDITION_IV]
    assert conds["theta sup d_yy a11 <= y0^4/2"][1]
    assert conds["|d_y a2| <= delta for |y|>=y2"][0] <= P.delta * (1 + 1e-9)


@pytest.mark.xfail(strict=True, reason="the curvature bound on the a11 blend is unattainable: "
                   "the blend must reach the plateau from slope -2y1 within y2 - y1")
def test_condition_iv_literal(model):
    value, ok = strip_conditions(model, P)[CONDITION_IV]
    print(f"sup d_yy a11 on |y|>=y0: {value:.3f} against delta {P.delta}")
    assert ok


def test_strict_mode_names_violation():
    g = Grid2D.box(2, 1, 33, 33)
    with pytest.raises(StripError, match="d_yy a11"):
        extend_to_strip(CoefficientSet.gallerstedt(g), P, strict=True)


def test_perturbations_cut_before_y0():
    g = Grid2D.box(2, 1, 33, 33)
    X, Y = g.mesh()
    c = CoefficientSet.from_arrays(g, a11=-Y ** 2 + 0.01, a22=1.0, a1=0.02)
    s = extend_to_strip(c, P)
    S = s.grid
    _, SY = S.mesh()
    band = np.abs(SY) >= P.cut_outer * P.y0
    assert np.all(s.a1.values[band] == 0)


def test_multiplier_invariants(model):
    m = build_multipliers(model, P)
    S = model.grid
    X, Y = S.mesh()
    assert np.all(m.mu / 4 + model.a11.values >= 1)
    assert np.all(m.D.values == P.theta)
    assert np.allclose(m.B.values, -P.theta * m.gamma[:, None])
    assert m.gamma[-1] == 0 and np.all(np.diff(m.gamma) <= 0)
    assert gamma_profile(np.array(S.x_max), S.x_max) == 0
    # C from both branches at |y| = y0
    j = np.argmin(np.abs(S.y - P.y0))
    inside = m.mu * diff(model.a11, 0, 1).values[:, j - 1]
    assert np.allclose(inside[5:-5], -2 * m.mu * S.y[j - 1], rtol=1e-9)
    assert np.allclose(m.C.values[5:-5, j], -2 * m.mu * P.y0, rtol=1e-12)
    # A follows its formula
    assert np.allclose(m.A.values, 0.5 * diff(m.C, 0, 1).values - model.a11.values)


def test_energy_zero_probe_is_vacuous(model):
    m = build_multipliers(model, P)
    rep = check_energy_inequality(model, m, ScalarField.zeros(model.grid), P.theta)
    assert rep.lhs == 0 and rep.rhs == 0 and rep.passed


def test_energy_rejects_unsupported_probe(model):
    m = build_multipliers(model, P)
    with pytest.raises(StripError):
        check_energy_inequality(model, m, ScalarField(model.grid, np.ones(model.grid.shape)), P.theta)


def test_energy_bump_theta_independent():
    g = Grid2D.box(2, 1, 65, 65)
    ratios = []
    for theta in (1e-3, 1e-4):
        p = StripParams(theta=theta)
        c = extend_to_strip(CoefficientSet.gallerstedt(g), p)
        X, Y = c.grid.mesh()
        u = ScalarField(c.grid, bump(np.hypot(X / 1.2, Y / 0.8)))
        rep = check_energy_inequality(c, build_multipliers(c, p), u, theta)
        assert rep.passed and rep.ratio > 0
        ratios.append(rep.ratio)
    assert abs(ratios[0] / ratios[1] - 1) < 0.5


def test_energy_random_probes_positive(model, rng):
    m = build_multipliers(model, P)
    for u in random_probes(model.grid, 20, rng):
        assert check_energy_inequality(model, m, u, P.theta).ratio > 0


def _min_energy_ratio(theta):
    g = Grid2D.box(2, 1, 65, 65)
    p = StripParams(theta=theta)
    c = extend_to_strip(CoefficientSet.gallerstedt(g), p)
    m = build_multipliers(c, p)
    probes = random_probes(c.grid, 20, np.random.default_rng(0))
    return min(check_energy_inequality(c, m, u, theta).ratio for u in probes)


@pytest.mark.xfail(strict=True, reason="the smallest energy ratio drops about 2.7x at theta=1e-2")
def test_energy_constant_stable_across_theta():
    c0 = [_min_energy_ratio(t) for t in (1e-2, 1e-3, 1e-4)]
    print("min energy ratio per theta:", c0)
    assert max(c0) / min(c0) < 2


def test_basic_estimate_ratio_finite(model, rng):
    for u in random_probes(model.grid, 3, rng):
        r = basic_estimate_ratio(model, P.theta, u)
        assert np.isfinite(r) and r > 0
