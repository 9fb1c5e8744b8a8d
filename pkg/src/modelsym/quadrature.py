"""Sphere and ball quadrature for model manifolds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import ModelManifold, unit_sphere_measure

DEFAULT_SPHERE_ORDER = {2: 64, 3: 16}
DEFAULT_RADIAL_ORDER = 64
DEFAULT_SUP_DENSITY = (200, 256)


class QuadratureError(ValueError):
    pass


class UnsupportedDimension(QuadratureError):
    """Angular quadrature requested for n >= 4; only radial fields are supported there."""


@dataclass(frozen=True, eq=False)
class SphereRule:
    dim: int
    nodes: np.ndarray  # (K, n) unit vectors
    weights: np.ndarray  # (K,), sum = |S^{n-1}|
    exactness: int

    @property
    def size(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def sphere_rule(n: int, order: int | None = None) -> SphereRule:
    """Trapezoid rule on the circle (n=2) or Gauss-Legendre x trapezoid product on S^2 (n=3)."""
    if n not in (2, 3):
        raise UnsupportedDimension(f"no sphere rule for n={n}")
    order = DEFAULT_SPHERE_ORDER[n] if order is None else int(order)
    if order < 4:
        raise QuadratureError("sphere rule order must be >= 4")
    if n == 2:
        theta = 2.0 * np.pi * np.arange(order) / order
        nodes = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        weights = np.full(order, 2.0 * np.pi / order)
        exact = order - 1
    else:
        z, wz = np.polynomial.legendre.leggauss(order)
        m = 2 * order
        phi = 2.0 * np.pi * np.arange(m) / m
        s = np.sqrt(1.0 - z * z)
        nodes = np.stack(
            [
                np.outer(s, np.cos(phi)).ravel(),
                np.outer(s, np.sin(phi)).ravel(),
                np.repeat(z, m),
            ],
            axis=-1,
        )
        weights = np.outer(wz, np.full(m, 2.0 * np.pi / m)).ravel()
        exact = 2 * order - 1
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return SphereRule(n, nodes, weights, exact)


@lru_cache(maxsize=None)
def direction_grid(n: int, count: int) -> np.ndarray:
    """Directions for sampling (not integration): equispaced circle, or a Fibonacci
    lattice on S^2 augmented with the six axis directions."""
    if n == 2:
        t = 2.0 * np.pi * np.arange(count) / count
        out = np.stack([np.cos(t), np.sin(t)], axis=-1)
    elif n == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        phi = math.pi * (3.0 - math.sqrt(5.0)) * k
        s = np.sqrt(1.0 - z * z)
        fib = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
        out = np.concatenate([np.vstack([np.eye(3), -np.eye(3)]), fib])
    else:
        raise UnsupportedDimension(f"no direction grid for n={n}")
    out.setflags(write=False)
    return out


def _first_axis(n: int) -> np.ndarray:
    e = np.zeros(n)
    e[0] = 1.0
    return e


def sphere_mean(u, M: ModelManifold, r, rule: SphereRule | None = None):
    """Average of ``u(r, xi)`` over the geodesic sphere of radius r (vectorized in r)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > M.r_max * (1 + 1e-12)):
        raise QuadratureError(f"sphere radius outside [0, {M.r_max}]")
    if getattr(u, "radial_only", False):
        xi = np.broadcast_to(_first_axis(M.dim), r.shape + (M.dim,))
        return np.asarray(u(r, xi), dtype=float) * 1.0
    if rule is None:
        rule = sphere_rule(M.dim)
    vals = np.asarray(u(r[..., None], rule.nodes), dtype=float)
    vals = np.broadcast_to(vals, r.shape + (rule.size,))
    if not np.all(np.isfinite(vals)):
        idx = np.argwhere(~np.isfinite(vals))[0]
        rr = float(np.broadcast_to(r[..., None], vals.shape)[tuple(idx)])
        raise QuadratureError(f"non-finite field value at r={rr}, direction={rule.nodes[idx[-1]].tolist()}")
    return vals @ rule.weights / rule.weights.sum()


@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def radial_nodes(r: float, radial_order: int = DEFAULT_RADIAL_ORDER):
    """Panelized Gauss-Legendre nodes on [0, r]: unit-length panels, ``radial_order`` nodes each."""
    panels = max(1, math.ceil(r - 1e-12))
    x, w = _gauss_legendre(radial_order)
    edges = np.linspace(0.0, r, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    t = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    wt = (0.5 * (b - a) * w).ravel()
    return t, wt


@dataclass(frozen=True, eq=False)
class BallNodes:
    """Tensor quadrature nodes on a geodesic ball: radii (R,), directions (K, n) and
    full weights (R, K) that include the volume element."""

    r: np.ndarray
    xi: np.ndarray
    weights: np.ndarray


def ball_nodes(M: ModelManifold, r: float, rule: SphereRule | None = None,
               radial_order: int = DEFAULT_RADIAL_ORDER) -> BallNodes:
    if not 0 < r <= M.r_max * (1 + 1e-12):
        raise QuadratureError(f"ball radius outside (0, {M.r_max}]")
    t, wt = radial_nodes(r, radial_order)
    if rule is None:
        rule = sphere_rule(M.dim)
    shell = M.h.eval(t) ** (M.dim - 1)
    return BallNodes(t, rule.nodes, (wt * shell)[:, None] * rule.weights[None, :])


def ball_integral(f, M: ModelManifold, r: float, rule: SphereRule | None = None,
                  radial_order: int = DEFAULT_RADIAL_ORDER) -> float:
    """Integral of ``f(r, xi)`` over the ball B_r by shells: GL in t of mean(f, t) * |dB_t|."""
    if not 0 < r <= M.r_max * (1 + 1e-12):
        raise QuadratureError(f"ball radius outside (0, {M.r_max}]")
    t, wt = radial_nodes(r, radial_order)
    means = sphere_mean(f, M, t, rule)
    return float(np.sum(wt * means * M.omega * M.h.eval(t) ** (M.dim - 1)))


@dataclass(frozen=True)
class SupEstimate:
    value: float
    r: float
    xi: tuple


def sup_on(u, M: ModelManifold, region: str, r: float, density=DEFAULT_SUP_DENSITY) -> SupEstimate:
    """Grid maximum of ``u`` over ``Ball(r)`` or ``Sphere(r)``; a lower estimate of the true sup."""
    n_r, n_dir = density
    if r > M.r_max * (1 + 1e-12):
        raise QuadratureError(f"radius {r} beyond r_max={M.r_max}")
    region = region.lower()
    if region == "ball":
        radii = np.linspace(0.0, r, n_r)
    elif region == "sphere":
        radii = np.array([float(r)])
    else:
        raise ValueError(f"unknown region {region!r}")
    if getattr(u, "radial_only", False):
        dirs = _first_axis(M.dim)[None, :]
    else:
        dirs = direction_grid(M.dim, n_dir)
    vals = np.broadcast_to(np.asarray(u(radii[:, None], dirs[None, :, :]), dtype=float), (len(radii), len(dirs)))
    i, k = np.unravel_index(int(np.argmax(vals)), vals.shape)
    return SupEstimate(float(vals[i, k]), float(radii[i]), tuple(float(x) for x in dirs[k]))


def total_measure_check(rule: SphereRule) -> float:
    return abs(rule.weights.sum() - unit_sphere_measure(rule.dim))
