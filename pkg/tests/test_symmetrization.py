import io
import math

import numpy as np
import pytest
from scipy.special import i0, i1

from modelsym.fields import ScaledField, catalog_field, is_subharmonic_on
from modelsym.model import ModelManifold
from modelsym.symmetrization import (
    CSV_COLUMNS,
    default_grid,
    laplacian_consistency,
    monotonicity,
    origin_limits,
    profile_subharmonicity,
    radial_laplacian,
    symmetrize,
)

E2 = ModelManifold.euclidean(2)
E3 = ModelManifold.euclidean(3)
ANALYTIC = ["r2", "x1_sq", "exp_x1", "one_plus_x1", "one_plus_x1_plus_r2", "const"]


class _Sum:
    """a u + b w as a plain field."""

    def __init__(self, a, u, b, w):
        self.a, self.u, self.b, self.w = a, u, b, w
        self.radial_only = False

    def __call__(self, r, xi):
        return self.a * self.u(r, xi) + self.b * self.w(r, xi)

    def radial_derivs(self, r, xi):
        du, dw = self.u.radial_derivs(r, xi), self.w.radial_derivs(r, xi)
        return tuple(self.a * x + self.b * y for x, y in zip(du, dw))


def test_x1_sq_profile():
    p = symmetrize(catalog_field("x1_sq", 2), E2, np.linspace(0.1, 5, 20))
    np.testing.assert_allclose(p.v, p.r**2 / 2, atol=1e-14)
    np.testing.assert_allclose(p.dv, p.r, atol=1e-14)
    np.testing.assert_allclose(p.ddv, 1, atol=1e-14)
    np.testing.assert_allclose(p.lap_v, 2, atol=1e-13)


def test_exp_profile_is_bessel():
    p = symmetrize(catalog_field("exp_x1", 2), E2, np.linspace(0.05, 4, 40))
    np.testing.assert_allclose(p.v, i0(p.r), rtol=1e-14)
    np.testing.assert_allclose(p.dv, i1(p.r), rtol=1e-13, atol=1e-15)
    assert float(p(1.0)) == pytest.approx(1.2660658777520084, abs=1e-6)


@pytest.mark.parametrize("M", [E2, ModelManifold.hyperbolic(3), ModelManifold.paraboloid(2)],
                         ids=lambda M: f"{M.kind.value}{M.dim}")
def test_radial_field_fixed(M):
    u = catalog_field("r2", M.dim)
    p = symmetrize(u, M)
    assert p.v[0] == 0.0
    assert np.max(np.abs(p.v - p.r**2)) <= 1e-10
    np.testing.assert_allclose(p.dv, 2 * p.r, atol=1e-12)


def test_radial_laplacian_examples():
    r = np.linspace(0.1, 3, 10)
    np.testing.assert_allclose(radial_laplacian(E3, r, 2 * r, 2.0), 6.0)
    p = symmetrize(catalog_field("const", 2), E2, r)
    np.testing.assert_array_equal(p.lap_v, 0.0)


def test_pole_row():
    u = catalog_field("exp_x1", 2)
    p = symmetrize(u, E2, np.array([0.5, 1.0]))
    assert p.r[0] == 0 and p.v[0] == 1.0
    assert p.lap_v[0] == pytest.approx(2 * p.ddv[0])


def test_grid_validation():
    with pytest.raises(ValueError):
        symmetrize(catalog_field("r2", 2), E2, np.array([1.0, 0.5]))
    with pytest.raises(ValueError):
        symmetrize(catalog_field("r2", 2), E2, np.array([1.0, 11.0]))


def test_default_grid():
    g = default_grid(E2)
    assert len(g) == 200 and g[0] == pytest.approx(1e-3) and g[-1] == pytest.approx(9.0)


@pytest.mark.parametrize("name", ANALYTIC)
@pytest.mark.parametrize("M", [E2, E3, ModelManifold.hyperbolic(2), ModelManifold.hyperbolic(3)],
                         ids=lambda M: f"{M.kind.value}{M.dim}")
def test_laplacian_consistency(name, M):
    u = catalog_field(name, M.dim)
    p = symmetrize(u, M, np.linspace(0.05, 0.9 * M.r_max, 40))
    worst, _ = laplacian_consistency(u, M, p)
    assert worst <= 1e-5


def test_consistency_examples():
    for name, M in (("x1_sq", E2), ("exp_x1", E2), ("r_power", E2)):
        params = {"alpha": 3.0} if name == "r_power" else None
        u = catalog_field(name, 2, params)
        p = symmetrize(u, M, np.linspace(0.1, 4, 20))
        assert laplacian_consistency(u, M, p)[0] <= 1e-8
    p = symmetrize(catalog_field("r_power", 2, {"alpha": 3.0}), E2, np.linspace(0.1, 4, 20))
    np.testing.assert_allclose(p.lap_v[1:], 9 * p.r[1:], rtol=1e-12)


def test_expression_field_consistency():
    from modelsym.fields import ExpressionField

    M = ModelManifold.hyperbolic(2)
    u = ExpressionField("exp(x1) + x2^2", 2)
    p = symmetrize(u, M, np.linspace(0.1, 4, 10))
    assert laplacian_consistency(u, M, p)[0] <= 1e-5


def test_linearity():
    u, w = catalog_field("exp_x1", 2), catalog_field("x1_sq", 2)
    grid = np.linspace(0.1, 5, 15)
    pu, pw = symmetrize(u, E2, grid, with_mean_lap=False), symmetrize(w, E2, grid, with_mean_lap=False)
    ps = symmetrize(_Sum(2.0, u, -0.5, w), E2, grid, with_mean_lap=False)
    for key in ("v", "dv", "ddv", "lap_v"):
        np.testing.assert_allclose(getattr(ps, key), 2.0 * getattr(pu, key) - 0.5 * getattr(pw, key), atol=1e-10)


def test_mean_value_property():
    p = symmetrize(catalog_field("one_plus_x1", 2), E2, np.linspace(0.1, 9, 30))
    assert np.max(np.abs(p.v - 1.0)) <= 1e-8
    assert profile_subharmonicity(p).ok
    assert np.max(np.abs(p.lap_v)) <= 1e-7


def test_origin_limits():
    lim = origin_limits(catalog_field("x1_sq", 2), E2)
    assert (lim.dv0, lim.ddv0, lim.lap_limit) == pytest.approx((0, 1, 2), abs=1e-10)
    assert lim.predicted == pytest.approx((0, 1, 2), abs=1e-6)
    lim = origin_limits(catalog_field("r2", 3), E3)
    assert lim.ddv0 == pytest.approx(2.0) and lim.lap_limit == pytest.approx(6.0)
    lim = origin_limits(catalog_field("const", 2), E2)
    assert (lim.dv0, lim.ddv0, lim.lap_limit) == (0, 0, 0)
    lim = origin_limits(catalog_field("exp_x1", 2), E2)
    assert max(lim.deviations) <= 1e-6


def test_monotonicity():
    grid = np.linspace(0.1, 5, 20)
    assert monotonicity(symmetrize(catalog_field("exp_x1", 2), E2, grid)).ok
    assert monotonicity(symmetrize(catalog_field("r2", 2), E2, grid)).ok
    v = monotonicity(symmetrize(catalog_field("neg_r2", 2), E2, grid))
    assert not v.ok and v.worst == pytest.approx(-10.0)


@pytest.mark.parametrize("name", sorted(["r2", "x1_sq", "exp_x1", "one_plus_x1", "one_plus_x1_plus_r2",
                                         "const", "zero", "neg_r2"]))
def test_subharmonic_preserved(name):
    M = ModelManifold.euclidean(2, r_max=6)
    u = catalog_field(name, 2)
    if not is_subharmonic_on(u, M, (1e-3, 5.0)).ok:
        assert name == "neg_r2"
        return
    p = symmetrize(u, M, np.linspace(0.01, 5, 50))
    assert profile_subharmonicity(p).ok
    assert monotonicity(p).ok


def test_squared_profile():
    u = catalog_field("r2", 2)
    p = symmetrize(ScaledField(u, square=True), E2, np.array([1.0, 2.0]))
    np.testing.assert_allclose(p.v[1:], [1.0, 16.0])


def test_csv(tmp_path):
    p = symmetrize(catalog_field("r2", 2), E2, np.linspace(0.5, 2, 4))
    buf = io.StringIO()
    p.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS) and len(lines) == 6
    path = tmp_path / "p.csv"
    p.to_csv(path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_allclose(rows[:, 1], rows[:, 0] ** 2, rtol=1e-15)
