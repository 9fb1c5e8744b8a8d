import math

import numpy as np
import pytest
from scipy.special import i0, i1

from modelsym.fields import catalog_field
from modelsym.model import ModelManifold
from modelsym.quadrature import (
    UnsupportedDimension,
    ball_integral,
    direction_grid,
    sphere_mean,
    sphere_rule,
    sup_on,
    total_measure_check,
)

E2 = ModelManifold.euclidean(2)
E3 = ModelManifold.euclidean(3)


class _F:
    """Plain callable field for quadrature tests."""

    def __init__(self, f, radial_only=False):
        self.f, self.radial_only = f, radial_only

    def __call__(self, r, xi):
        return self.f(np.asarray(r, dtype=float), np.asarray(xi, dtype=float))


def _weights_integral(rule, f):
    return float(np.sum(rule.weights * f(rule.nodes)))


def test_circle_rule():
    rule = sphere_rule(2, 16)
    assert _weights_integral(rule, lambda x: np.ones(len(x))) == pytest.approx(2 * math.pi, abs=1e-14)
    assert _weights_integral(rule, lambda x: x[:, 0] ** 2) == pytest.approx(math.pi, abs=1e-12)
    assert np.all(rule.weights > 0)


def test_sphere_rule():
    rule = sphere_rule(3, 8)
    assert _weights_integral(rule, lambda x: x[:, 0] ** 2) == pytest.approx(4 * math.pi / 3, abs=1e-10)
    assert rule.nodes.shape == (8 * 16, 3)
    np.testing.assert_allclose(np.linalg.norm(rule.nodes, axis=1), 1, atol=1e-12)


@pytest.mark.parametrize("n,order", [(2, 4), (2, 64), (3, 4), (3, 16)])
def test_total_measure(n, order):
    assert abs(total_measure_check(sphere_rule(n, order))) <= 1e-12


def test_unsupported():
    with pytest.raises(UnsupportedDimension):
        sphere_rule(4, 8)
    with pytest.raises(ValueError):
        sphere_rule(2, 2)


def test_sphere_mean_examples():
    assert float(sphere_mean(catalog_field("x1_sq", 2), E2, 1.0)) == pytest.approx(0.5, abs=1e-14)
    assert float(sphere_mean(catalog_field("exp_x1", 2), E2, 1.0)) == pytest.approx(1.2660658777520084, abs=1e-13)
    for M in (E2, ModelManifold.hyperbolic(3), ModelManifold.paraboloid(2)):
        assert float(sphere_mean(catalog_field("r2", M.dim), M, 3.0)) == pytest.approx(9.0)


def test_sphere_mean_at_pole():
    assert float(sphere_mean(catalog_field("exp_x1", 2), E2, 0.0)) == 1.0


@pytest.mark.parametrize("name", ["r2", "x1_sq", "exp_x1", "one_plus_x1", "const"])
@pytest.mark.parametrize("n", [2, 3])
def test_order_doubling(name, n):
    u = catalog_field(name, n)
    M = ModelManifold.euclidean(n)
    r = np.array([0.5, 1.0, 2.0])
    order = 32 if n == 2 else 16
    a = sphere_mean(u, M, r, sphere_rule(n, order))
    b = sphere_mean(u, M, r, sphere_rule(n, 2 * order))
    assert np.max(np.abs(a - b)) < 1e-8


def test_ball_integral_examples():
    one = _F(lambda r, xi: np.ones_like(r), radial_only=True)
    assert ball_integral(one, E2, 1.0) == pytest.approx(math.pi, abs=1e-10)
    assert ball_integral(catalog_field("r2", 2), E2, 1.0) == pytest.approx(math.pi / 2, abs=1e-12)
    # 2 pi int_0^1 I0(t) t dt = 2 pi I1(1)
    got = ball_integral(catalog_field("exp_x1", 2), E2, 1.0)
    assert got == pytest.approx(2 * math.pi * i1(1.0), abs=1e-12)


def test_ball_integral_linear():
    f, g = catalog_field("exp_x1", 2), catalog_field("x1_sq", 2)
    fg = _F(lambda r, xi: 2.0 * f(r, xi) - 3.0 * g(r, xi))
    lhs = ball_integral(fg, E2, 2.0)
    rhs = 2.0 * ball_integral(f, E2, 2.0) - 3.0 * ball_integral(g, E2, 2.0)
    assert lhs == pytest.approx(rhs, abs=1e-10)


@pytest.mark.parametrize("M", [E2, E3, ModelManifold.hyperbolic(2), ModelManifold.hyperbolic(3),
                               ModelManifold.paraboloid(2), ModelManifold.paraboloid(3)],
                         ids=lambda M: f"{M.kind.value}{M.dim}")
def test_ball_integral_matches_volume(M):
    one = _F(lambda r, xi: np.ones(np.broadcast_shapes(r.shape, xi.shape[:-1])))
    for r in (0.5, 2.0, 0.9 * M.r_max):
        assert ball_integral(one, M, r) == pytest.approx(M.ball_volume(r), rel=1e-8)


def test_ball_integral_rejects_nonfinite():
    bad = _F(lambda r, xi: np.where(r > 0.5, np.nan, 1.0) * np.ones(np.broadcast_shapes(r.shape, xi.shape[:-1])))
    with pytest.raises(ValueError, match="r="):
        ball_integral(bad, E2, 1.0)


def test_sup_on():
    s = sup_on(catalog_field("r2", 2), E2, "ball", 2.0)
    assert s.value == pytest.approx(4.0) and s.r == pytest.approx(2.0)
    s = sup_on(catalog_field("exp_x1", 2), E2, "sphere", 1.0)
    assert s.value == pytest.approx(math.e, rel=1e-14)
    np.testing.assert_allclose(s.xi, [1, 0], atol=1e-14)
    assert sup_on(catalog_field("x1_sq", 2), E2, "ball", 1.0).value == pytest.approx(1.0)
    assert sup_on(catalog_field("exp_x1", 3), E3, "sphere", 1.0).value == pytest.approx(math.e, rel=1e-14)


def test_direction_grid():
    for n, k in ((2, 10), (3, 50)):
        d = direction_grid(n, k)
        np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1, atol=1e-14)


def test_bessel_sanity():
    assert float(sphere_mean(catalog_field("exp_x1", 2), E2, 3.0)) == pytest.approx(i0(3.0), rel=1e-14)
