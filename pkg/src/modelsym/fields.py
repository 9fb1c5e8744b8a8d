"""Scalar fields u(r, xi) on a model manifold and their differential operators.

Fields are evaluated with numpy broadcasting: ``r`` has a shape that broadcasts
against ``xi.shape[:-1]`` and ``xi`` holds unit vectors along its last axis.
The Cartesian-like variables are ``x = r * xi`` (geodesic normal coordinates at the pole).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import expr as _expr
from .model import ModelManifold
from .quadrature import direction_grid, sphere_mean, sphere_rule

RADIAL_STEP_MIN = 1e-5
RADIAL_STEP_REL = 5e-4
ANGULAR_STEP = 5e-4
POLE_INDEPENDENCE_TOL = 1e-8


class PoleError(ValueError):
    """Quantity not available at the pole for a non-radial field."""


@dataclass(frozen=True)
class PolarPoint:
    r: float
    xi: np.ndarray

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("radius must be nonnegative")
        xi = np.asarray(self.xi, dtype=float)
        object.__setattr__(self, "xi", xi / np.linalg.norm(xi))

    @classmethod
    def planar(cls, r: float, theta: float) -> "PolarPoint":
        theta = theta % (2.0 * np.pi)
        return cls(r, np.array([np.cos(theta), np.sin(theta)]))

    def cartesian(self) -> np.ndarray:
        return self.r * self.xi


def tangent_basis(xi: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space of the unit sphere at ``xi``.

    Returns shape ``xi.shape[:-1] + (n-1, n)``. Built from the Householder reflection
    sending e1 to -sign(xi_1) xi, which is stable for every xi.
    """
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[-1]
    s = np.where(xi[..., :1] >= 0, 1.0, -1.0)
    v = s * xi
    v[..., 0] += 1.0
    vv = np.sum(v * v, axis=-1)[..., None, None]
    eye = np.eye(n)
    H = eye - 2.0 * v[..., :, None] * v[..., None, :] / vv
    return np.swapaxes(H, -1, -2)[..., 1:, :]


def _signed(u, s, xi):
    """u at signed radius s: a negative radius means the antipodal direction."""
    s = np.asarray(s, dtype=float)
    neg = (s < 0)[..., None]
    return u(np.abs(s), np.where(neg, -xi, xi))


class ScalarField:
    """Base class; subclasses implement ``__call__`` and may supply analytic derivatives.

    The finite-difference fallbacks use a radial step max(1e-5, 5e-4 r) and an angular
    step of 5e-4 along n-1 orthogonal great circles through the point.
    """

    dim: int
    radial_only: bool = False
    analytic: bool = False
    nonnegative: bool = False
    subharmonic_claimed: bool = False
    convex_claimed: bool = False

    def __call__(self, r, xi):
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def flags(self) -> dict:
        return {
            "nonnegative": self.nonnegative,
            "subharmonic_claimed": self.subharmonic_claimed,
            "convex_claimed": self.convex_claimed,
            "radial_only": self.radial_only,
        }

    # finite-difference fallbacks
    def fd_radial_derivs(self, r, xi):
        r = np.asarray(r, dtype=float)
        xi = np.asarray(xi, dtype=float)
        d = np.maximum(RADIAL_STEP_MIN, RADIAL_STEP_REL * r)
        up = _signed(self, r + d, xi)
        mid = self(r, xi)
        dn = _signed(self, r - d, xi)
        return (up - dn) / (2.0 * d), (up - 2.0 * mid + dn) / (d * d)

    def _great_circle_samples(self, r, xi):
        xi = np.asarray(xi, dtype=float)
        r = np.asarray(r, dtype=float)
        E = tangent_basis(xi)  # (..., n-1, n)
        c, s = np.cos(ANGULAR_STEP), np.sin(ANGULAR_STEP)
        plus = c * xi[..., None, :] + s * E
        minus = c * xi[..., None, :] - s * E
        rr = r[..., None]
        return E, self(rr, plus), self(rr, minus)

    def fd_sphere_laplacian(self, r, xi):
        _, up, dn = self._great_circle_samples(r, xi)
        mid = np.asarray(self(r, xi), dtype=float)[..., None]
        return np.sum(up - 2.0 * mid + dn, axis=-1) / ANGULAR_STEP**2

    def fd_sphere_gradient(self, r, xi):
        E, up, dn = self._great_circle_samples(r, xi)
        return np.sum(((up - dn) / (2.0 * ANGULAR_STEP))[..., None] * E, axis=-2)

    # analytic hooks default to finite differences
    def radial_derivs(self, r, xi):
        return self.fd_radial_derivs(r, xi)

    def sphere_laplacian(self, r, xi):
        if self.radial_only:
            return np.zeros(np.broadcast_shapes(np.shape(r), np.shape(xi)[:-1]))
        return self.fd_sphere_laplacian(r, xi)

    def sphere_gradient(self, r, xi):
        if self.radial_only:
            return np.zeros(np.broadcast_shapes(np.shape(r), np.shape(xi)[:-1]) + (self.dim,))
        return self.fd_sphere_gradient(r, xi)

    def check_pole(self, count: int = 64):
        """Reject fields whose value at r = 0 depends on the direction."""
        if self.dim in (2, 3):
            dirs = direction_grid(self.dim, count)
        else:
            rng = np.random.default_rng(0)
            dirs = rng.standard_normal((count, self.dim))
            dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        vals = np.broadcast_to(np.asarray(self(np.zeros(len(dirs)), dirs), dtype=float), (len(dirs),))
        if not np.all(np.isfinite(vals)):
            raise ValueError("field is not finite at the pole")
        spread = float(vals.max() - vals.min())
        if spread > POLE_INDEPENDENCE_TOL * max(1.0, float(np.abs(vals).max())):
            raise ValueError(f"field value at the pole depends on direction (spread {spread:.3g})")


# --- catalog terms -----------------------------------------------------------
# Each term supplies value, radial derivatives, and the Laplacian/gradient of
# xi -> u(r, xi) on the unit sphere. For an ambient function F, the sphere
# Laplacian is Delta F - F_rho rho - (n-1) F_rho at |y| = 1.


def _e1_tangent(xi):
    e1 = np.zeros(xi.shape[-1])
    e1[0] = 1.0
    return e1 - xi[..., :1] * xi


@dataclass(frozen=True)
class Const:
    c: float = 1.0
    radial = True

    def parts(self, r, xi, n):
        z = np.zeros(np.broadcast_shapes(np.shape(r), np.shape(xi)[:-1]))
        return z + self.c, z, z, z, z[..., None] + np.zeros(n)


@dataclass(frozen=True)
class RPower:
    alpha: float
    coef: float = 1.0
    radial = True

    def parts(self, r, xi, n):
        a, k = self.alpha, self.coef
        r = np.broadcast_to(np.asarray(r, dtype=float), np.broadcast_shapes(np.shape(r), np.shape(xi)[:-1]))
        val = k * r**a
        d1 = k * a * r ** (a - 1)
        d2 = k * a * (a - 1) * r ** (a - 2) if a != 2 else np.full(r.shape, 2.0 * k)
        z = np.zeros(r.shape)
        return val, d1, d2, z, z[..., None] + np.zeros(n)


@dataclass(frozen=True)
class X1Sq:
    coef: float = 1.0
    radial = False

    def parts(self, r, xi, n):
        r = np.asarray(r, dtype=float)
        x = xi[..., 0]
        k = self.coef
        val = k * (r * x) ** 2
        return (
            val,
            k * 2.0 * r * x * x,
            k * 2.0 * x * x + 0.0 * r,
            k * r * r * (2.0 - 2.0 * n * x * x),
            k * (r * r * 2.0 * x)[..., None] * _e1_tangent(xi),
        )


@dataclass(frozen=True)
class ExpX1:
    coef: float = 1.0
    radial = False

    def parts(self, r, xi, n):
        r = np.asarray(r, dtype=float)
        x = xi[..., 0]
        F = self.coef * np.exp(r * x)
        return (
            F,
            x * F,
            x * x * F,
            F * (r * r * (1.0 - x * x) - (n - 1) * r * x),
            (r * F)[..., None] * _e1_tangent(xi),
        )


@dataclass(frozen=True)
class X1:
    coef: float = 1.0
    radial = False

    def parts(self, r, xi, n):
        r = np.asarray(r, dtype=float)
        x = xi[..., 0]
        k = self.coef
        return (
            k * r * x,
            k * x + 0.0 * r,
            np.zeros(np.broadcast_shapes(r.shape, x.shape)),
            -(n - 1) * k * r * x,
            (k * r + 0.0 * x)[..., None] * _e1_tangent(xi),
        )


class CatalogField(ScalarField):
    """Sum of catalog terms with analytic derivatives."""

    analytic = True

    def __init__(self, name: str, params: dict, terms, dim: int, nonnegative=False,
                 subharmonic_claimed=False, convex_claimed=False):
        self.name = name
        self.params = dict(params)
        self.terms = tuple(terms)
        self.dim = dim
        self.radial_only = all(t.radial for t in self.terms)
        self.nonnegative = nonnegative
        self.subharmonic_claimed = subharmonic_claimed
        self.convex_claimed = convex_claimed
        if dim >= 4 and not self.radial_only:
            raise ValueError(f"only radial fields are supported for n={dim}")

    def _sum(self, r, xi, k):
        xi = np.asarray(xi, dtype=float)
        out = None
        for t in self.terms:
            p = t.parts(r, xi, self.dim)[k]
            out = p if out is None else out + p
        return out

    def __call__(self, r, xi):
        return self._sum(r, xi, 0)

    def radial_derivs(self, r, xi):
        return self._sum(r, xi, 1), self._sum(r, xi, 2)

    def sphere_laplacian(self, r, xi):
        return self._sum(r, xi, 3)

    def sphere_gradient(self, r, xi):
        return self._sum(r, xi, 4)

    def describe(self) -> dict:
        return {"catalog": self.name, "params": self.params}

    def __repr__(self):
        return f"CatalogField({self.name!r}, {self.params!r})"


class ExpressionField(ScalarField):
    """Field parsed from the expression language; derivatives by finite differences only."""

    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.ast = _expr.parse(text, dim)
        self.radial_only = _expr.free_variables(self.ast) <= {"r"}
        if dim >= 4 and not self.radial_only:
            raise ValueError(f"only radial fields are supported for n={dim}")
        self.check_pole()

    def __call__(self, r, xi):
        r = np.asarray(r, dtype=float)
        xi = np.asarray(xi, dtype=float)
        shape = np.broadcast_shapes(r.shape, xi.shape[:-1])
        env = {"r": np.broadcast_to(r, shape)}
        for i in range(self.dim):
            env[f"x{i + 1}"] = r * xi[..., i]
        with np.errstate(all="ignore"):
            val = _expr.evaluate(self.ast, env)
        return np.broadcast_to(np.asarray(val, dtype=float), shape) * 1.0

    def describe(self) -> dict:
        return {"expr": self.text}

    def __repr__(self):
        return f"ExpressionField({self.text!r})"


def _affine(c, b):
    return [Const(c), X1(b)]


CATALOG = {
    "const": dict(
        params={"c": 1.0},
        build=lambda p: [Const(p["c"])],
        flags=lambda p: dict(nonnegative=p["c"] >= 0, subharmonic_claimed=True, convex_claimed=True),
        doc="constant c",
    ),
    "zero": dict(
        params={},
        build=lambda p: [Const(0.0)],
        flags=lambda p: dict(nonnegative=True, subharmonic_claimed=True, convex_claimed=True),
        doc="identically zero (degenerate control)",
    ),
    "r_power": dict(
        params={"alpha": 2.0, "coef": 1.0},
        build=lambda p: [RPower(p["alpha"], p["coef"])],
        flags=lambda p: dict(nonnegative=p["coef"] >= 0, subharmonic_claimed=p["coef"] >= 0,
                             convex_claimed=p["coef"] >= 0),
        doc="coef * r^alpha, alpha >= 2",
    ),
    "r2": dict(
        params={},
        build=lambda p: [RPower(2.0)],
        flags=lambda p: dict(nonnegative=True, subharmonic_claimed=True, convex_claimed=True),
        doc="r^2",
    ),
    "neg_r2": dict(
        params={},
        build=lambda p: [RPower(2.0, -1.0)],
        flags=lambda p: dict(),
        doc="-r^2 (negative control)",
    ),
    "x1_sq": dict(
        params={},
        build=lambda p: [X1Sq()],
        flags=lambda p: dict(nonnegative=True, subharmonic_claimed=True, convex_claimed=True),
        doc="x1^2",
    ),
    "exp_x1": dict(
        params={},
        build=lambda p: [ExpX1()],
        flags=lambda p: dict(nonnegative=True, subharmonic_claimed=True, convex_claimed=True),
        doc="exp(x1)",
    ),
    "one_plus_x1": dict(
        params={},
        build=lambda p: _affine(1.0, 1.0),
        flags=lambda p: dict(subharmonic_claimed=True, convex_claimed=True),
        doc="1 + x1 (harmonic in the plane)",
    ),
    "affine_x1": dict(
        params={"c": 1.0, "b": 1.0},
        build=lambda p: _affine(p["c"], p["b"]),
        flags=lambda p: dict(subharmonic_claimed=True, convex_claimed=True),
        doc="c + b * x1",
    ),
    "one_plus_x1_plus_r2": dict(
        params={},
        build=lambda p: _affine(1.0, 1.0) + [RPower(2.0)],
        flags=lambda p: dict(subharmonic_claimed=True, convex_claimed=True),
        doc="1 + x1 + r^2",
    ),
}


def catalog_field(name: str, dim: int, params: Optional[dict] = None) -> CatalogField:
    if name not in CATALOG:
        raise KeyError(f"unknown catalog field {name!r}")
    entry = CATALOG[name]
    merged = dict(entry["params"])
    for k, v in (params or {}).items():
        if k not in merged:
            raise KeyError(f"unknown parameter {k!r} for catalog field {name!r}")
        merged[k] = float(v)
    if name == "r_power" and merged["alpha"] < 2:
        raise ValueError("r_power needs alpha >= 2 for a C^2 field at the pole")
    return CatalogField(name, merged, entry["build"](merged), dim, **entry["flags"](merged))


def parse_field(text: str, n: int) -> _expr.Node:
    return _expr.parse(text, n)


class ScaledField(ScalarField):
    """``scale * u`` (or ``u**2`` with ``square=True``), keeping analytic derivatives."""

    def __init__(self, base: ScalarField, scale: float = 1.0, square: bool = False):
        self.base = base
        self.scale = scale
        self.square = square
        self.dim = base.dim
        self.radial_only = base.radial_only
        self.analytic = base.analytic
        self.nonnegative = square or (base.nonnegative and scale >= 0)

    def __call__(self, r, xi):
        v = self.base(r, xi)
        return self.scale * (v * v if self.square else v)

    def radial_derivs(self, r, xi):
        if not self.analytic:
            return self.fd_radial_derivs(r, xi)
        d1, d2 = self.base.radial_derivs(r, xi)
        if not self.square:
            return self.scale * d1, self.scale * d2
        v = self.base(r, xi)
        return self.scale * 2 * v * d1, self.scale * 2 * (d1 * d1 + v * d2)

    def sphere_laplacian(self, r, xi):
        if not self.analytic:
            return super().sphere_laplacian(r, xi)
        lap = self.base.sphere_laplacian(r, xi)
        if not self.square:
            return self.scale * lap
        v = self.base(r, xi)
        g = self.base.sphere_gradient(r, xi)
        return self.scale * 2 * (v * lap + np.sum(g * g, axis=-1))

    def sphere_gradient(self, r, xi):
        if not self.analytic:
            return super().sphere_gradient(r, xi)
        g = self.base.sphere_gradient(r, xi)
        if not self.square:
            return self.scale * g
        return self.scale * 2 * self.base(r, xi)[..., None] * g

    def describe(self) -> dict:
        return {"base": self.base.describe(), "scale": self.scale, "square": self.square}


# --- differential operators --------------------------------------------------


@dataclass(frozen=True)
class Gradient:
    radial: np.ndarray
    angular: np.ndarray  # ambient vector, orthonormal-frame length
    norm2: np.ndarray


def gradient(u: ScalarField, M: ModelManifold, r, xi) -> Gradient:
    """Gradient in polar form: |grad u|^2 = u_r^2 + h^-2 |grad_S u|^2."""
    r = np.asarray(r, dtype=float)
    xi = np.asarray(xi, dtype=float)
    at_pole = r == 0
    if np.any(at_pole) and not u.radial_only:
        raise PoleError("gradient of a non-radial field is not available at the pole")
    ur, _ = u.radial_derivs(r, xi)
    ur = np.asarray(ur, dtype=float)
    shape = np.broadcast_shapes(r.shape, xi.shape[:-1])
    if u.radial_only:
        ang = np.zeros(shape + (M.dim,))
    else:
        ang = u.sphere_gradient(r, xi) / M.h.eval(r)[..., None]
    ur = np.broadcast_to(ur, shape)
    return Gradient(ur, ang, ur * ur + np.sum(ang * ang, axis=-1))


def _pole_laplacian(u: ScalarField, M: ModelManifold):
    """Laplacian at the pole: n u''(0) for radial fields, else the small-sphere
    mean limit 2n (mean - u(0)) / eps^2 with one Richardson step."""
    n = M.dim
    e1 = np.zeros(n)
    e1[0] = 1.0
    if u.radial_only:
        _, d2 = u.radial_derivs(np.array(0.0), e1)
        return n * float(d2)
    u0 = float(u(np.array(0.0), e1))
    rule = sphere_rule(n)
    est = []
    for eps in (1e-2, 5e-3):
        m = float(sphere_mean(u, M, np.array(eps), rule))
        est.append(2.0 * n * (m - u0) / eps**2)
    return (4.0 * est[1] - est[0]) / 3.0


def laplace_beltrami(u: ScalarField, M: ModelManifold, r, xi):
    """u_rr + (n-1)(h'/h) u_r + h^-2 Laplacian_S u, with the pole handled separately."""
    r = np.asarray(r, dtype=float)
    xi = np.asarray(xi, dtype=float)
    shape = np.broadcast_shapes(r.shape, xi.shape[:-1])
    at_pole = np.broadcast_to(r == 0, shape)
    rs = np.where(r == 0, 1.0, r)  # placeholder radius at the pole, overwritten below
    d1, d2 = u.radial_derivs(rs, xi)
    h = M.h.eval(rs)
    lap = d2 + (M.dim - 1) * M.h.deriv1(rs) / h * d1
    if not u.radial_only:
        lap = lap + u.sphere_laplacian(rs, xi) / (h * h)
    lap = np.broadcast_to(lap, shape)
    if np.any(at_pole):
        lap = np.where(at_pole, _pole_laplacian(u, M), lap)
    return lap * 1.0


@dataclass(frozen=True)
class SubharmonicVerdict:
    ok: bool
    min_laplacian: float
    at_r: float
    at_xi: tuple


def is_subharmonic_on(u: ScalarField, M: ModelManifold, region=None, samples=(64, 64),
                      tol: float = 1e-7) -> SubharmonicVerdict:
    """Sample the Laplacian on a radii x directions grid; pass iff it is >= -tol everywhere."""
    lo, hi = region if region is not None else (1e-3, M.r_max)
    n_r, n_dir = samples
    radii = np.linspace(lo, hi, n_r)
    if u.radial_only or M.dim > 3:
        dirs = np.zeros((1, M.dim))
        dirs[0, 0] = 1.0
    else:
        dirs = direction_grid(M.dim, n_dir)
    lap = laplace_beltrami(u, M, radii[:, None], dirs[None, :, :])
    i, k = np.unravel_index(int(np.argmin(lap)), lap.shape)
    m = float(lap[i, k])
    return SubharmonicVerdict(bool(m >= -tol), m, float(radii[i]), tuple(float(x) for x in dirs[k]))


def is_nonnegative_on(u: ScalarField, M: ModelManifold, r_hi: float, density=(100, 64), tol: float = 1e-12):
    """Sampled minimum of u on B_{r_hi}; returns (ok, min, r, xi)."""
    from .quadrature import sup_on

    neg = sup_on(lambda r, xi: -np.asarray(u(r, xi)), M, "ball", r_hi, density)
    return neg.value <= tol, -neg.value, neg.r, neg.xi


@dataclass(frozen=True)
class ConvexityVerdict:
    ok: bool
    worst_second_difference: float
    worst_at: Optional[tuple]
    sampled: int
    skipped: int
    max_speed_drift: float
    max_clairaut_drift: float


@dataclass(frozen=True)
class GeodesicSampler:
    count: int = 24
    length: float = 2.0
    seed: int = 0
    start_radius: Optional[float] = None
    stride: int = 20


def is_convex_along_geodesics(u: ScalarField, M: ModelManifold, sampler: GeodesicSampler = GeodesicSampler(),
                              tol: float = 1e-6) -> ConvexityVerdict:
    """Centered second differences of u along sampled unit-speed geodesics must be >= -tol.

    Second differences are divided by the squared sample spacing, so ``tol`` bounds
    the discrete second derivative of u along the curve.
    """
    from .geodesic import sample_geodesics

    trajs = sample_geodesics(M, sampler.count, sampler.length, sampler.seed, start_radius=sampler.start_radius)
    worst = np.inf
    worst_at = None
    skipped = 0
    sampled = 0
    speed = 0.0
    clairaut = 0.0
    for g in trajs:
        if g.escaped:
            skipped += 1
            continue
        sampled += 1
        speed = max(speed, g.speed_drift)
        clairaut = max(clairaut, g.clairaut_drift)
        idx = slice(None, None, sampler.stride)
        s = g.s[idx]
        f = np.asarray(u(g.r[idx], g.xi[idx]), dtype=float)
        ds = s[1] - s[0]
        sd = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / ds**2
        j = int(np.argmin(sd))
        if sd[j] < worst:
            worst = float(sd[j])
            worst_at = (float(g.r[idx][j + 1]), tuple(float(x) for x in g.xi[idx][j + 1]))
    ok = sampled > 0 and worst >= -tol
    return ConvexityVerdict(ok, float(worst), worst_at, sampled, skipped, speed, clairaut)
