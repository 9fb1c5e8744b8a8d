"""Rotationally symmetric manifolds with a pole, ``ds^2 = dr^2 + h(r)^2 dTheta^2``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import expr as _expr

POLE_PROBE = 1e-6
POLE_TOL = 1e-4
NEWTON_TOL = 1e-12


class DomainError(ValueError):
    """Radius outside the working range of a manifold."""


def unit_sphere_measure(n: int) -> float:
    """Total measure of the unit (n-1)-sphere in R^n, 2 pi^(n/2) / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def paraboloid_arclength(h):
    """Arc length along z = t^2/2 from the vertex to the circle of radius h."""
    h = np.asarray(h, dtype=float)
    return 0.5 * (h * np.sqrt(1.0 + h * h) + np.arcsinh(h))


def _paraboloid_table():
    # Newton from min(r, sqrt(2r)), which lies to the right of the root; s is convex
    # and increasing there, so the iterates decrease monotonically.
    r = np.linspace(0.0, 64.0, 2**16 + 1)
    h = np.minimum(r, np.sqrt(2.0 * r))
    for _ in range(100):
        h_new = h - (paraboloid_arclength(h) - r) / np.sqrt(1.0 + h * h)
        if np.all(np.abs(h_new - h) <= NEWTON_TOL * np.maximum(h_new, 1e-300)):
            return r, h_new
        h = h_new
    return r, h


_PARABOLOID_TABLE = _paraboloid_table()


def paraboloid_radius(r):
    """Invert ``paraboloid_arclength`` by safeguarded Newton iteration (tolerance 1e-12).

    Starts from a tabulated interpolant when r is in its range, else from
    min(r, sqrt(2r)) with iterates clipped to [0, r] since s(h) >= h.
    """
    r = np.asarray(r, dtype=float)
    tr, th = _PARABOLOID_TABLE
    if r.size and np.max(r) <= tr[-1] and np.min(r) >= 0:
        # interpolation error <= 1e-7 here, so one Newton step reaches rounding level
        h = np.interp(r, tr, th)
        return h - (paraboloid_arclength(h) - r) / np.sqrt(1.0 + h * h)
    h = np.minimum(r, np.sqrt(2.0 * np.abs(r)))
    for _ in range(100):
        step = (paraboloid_arclength(h) - r) / np.sqrt(1.0 + h * h)
        h_new = np.clip(h - step, 0.0, np.maximum(r, 0.0))
        done = np.all(np.abs(h_new - h) <= NEWTON_TOL * np.maximum(h_new, 1e-300))
        h = h_new
        if done:
            break
    return h


class WarpKind(str, Enum):
    EUCLIDEAN = "euclidean"
    HYPERBOLIC = "hyperbolic"
    PARABOLOID = "paraboloid"
    CUSTOM = "custom"


@dataclass(frozen=True)
class WarpingFunction:
    """Warping function h with its first two derivatives (all vectorized)."""

    kind: WarpKind
    eval: Callable = field(repr=False, compare=False)
    deriv1: Callable = field(repr=False, compare=False)
    deriv2: Callable = field(repr=False, compare=False)
    a: Optional[float] = None
    h_expr: Optional[str] = None
    with_deriv: Optional[Callable] = field(default=None, repr=False, compare=False)

    def values(self, r):
        """(h(r), h'(r)) in one call."""
        if self.with_deriv is not None:
            return self.with_deriv(r)
        return self.eval(r), self.deriv1(r)

    @classmethod
    def euclidean(cls) -> "WarpingFunction":
        return cls(
            WarpKind.EUCLIDEAN,
            lambda r: np.asarray(r, dtype=float) * 1.0,
            lambda r: np.ones_like(np.asarray(r, dtype=float)),
            lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        )

    @classmethod
    def hyperbolic(cls, a: float = 1.0) -> "WarpingFunction":
        """Constant curvature -a^2: h = sinh(a r) / a."""
        if not a > 0:
            raise ValueError("hyperbolic curvature scale a must be positive")
        return cls(
            WarpKind.HYPERBOLIC,
            lambda r: np.sinh(a * np.asarray(r, dtype=float)) / a,
            lambda r: np.cosh(a * np.asarray(r, dtype=float)),
            lambda r: a * np.sinh(a * np.asarray(r, dtype=float)),
            a=float(a),
        )

    @classmethod
    def paraboloid(cls) -> "WarpingFunction":
        """Surface of revolution of z = t^2/2 parameterized by arc length from the vertex."""

        def d1(r):
            h = paraboloid_radius(r)
            return 1.0 / np.sqrt(1.0 + h * h)

        def both(r):
            h = paraboloid_radius(r)
            return h, 1.0 / np.sqrt(1.0 + h * h)

        def d2(r):
            h = paraboloid_radius(r)
            return -h / (1.0 + h * h) ** 2

        return cls(WarpKind.PARABOLOID, paraboloid_radius, d1, d2, with_deriv=both)

    @classmethod
    def custom(cls, h_expr: str) -> "WarpingFunction":
        tree = _expr.parse(h_expr, None)

        def h(r):
            r = np.asarray(r, dtype=float)
            return np.broadcast_to(_expr.evaluate(tree, {"r": r}), r.shape) * 1.0

        def d1(r):
            r = np.asarray(r, dtype=float)
            d = 1e-5 * np.maximum(1.0, np.abs(r))
            return (h(r + d) - h(r - d)) / (2.0 * d)

        def d2(r):
            r = np.asarray(r, dtype=float)
            d = 1e-4 * np.maximum(1.0, np.abs(r))
            return (h(r + d) - 2.0 * h(r) + h(r - d)) / (d * d)

        return cls(WarpKind.CUSTOM, h, d1, d2, h_expr=h_expr)


@dataclass(frozen=True)
class Curvatures:
    k_rad: np.ndarray
    k_tan: Optional[np.ndarray]  # None for n = 2, where there is no tangential 2-plane
    ricci_radial: np.ndarray
    ricci_tangential: np.ndarray


@dataclass(frozen=True)
class HypothesisVerdict:
    ok: bool
    worst_r: float
    worst_value: float
    hypothesis: str


class Hypothesis(str, Enum):
    RICCI_NONNEG = "ricci_nonneg"
    SECTIONAL_POSITIVE = "sectional_positive"


HYPOTHESIS_TOL = 1e-9


@dataclass(frozen=True)
class ModelManifold:
    dim: int
    h: WarpingFunction
    r_max: float

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.dim}")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        eps = POLE_PROBE
        h0 = float(self.h.eval(eps))
        dh0 = float(self.h.deriv1(eps))
        if abs(h0) > POLE_TOL or abs(dh0 - 1.0) > POLE_TOL:
            raise ValueError(f"warping function fails the smooth-pole normalization: h({eps})={h0}, h'({eps})={dh0}")
        r = np.linspace(0.0, self.r_max, 1001)[1:]
        hv = self.h.eval(r)
        if not np.all(np.isfinite(hv)) or np.any(hv <= 0):
            bad = r[~(np.isfinite(hv) & (hv > 0))][0]
            raise ValueError(f"warping function is not positive and finite at r={bad}")

    @classmethod
    def euclidean(cls, dim: int, r_max: float = 10.0) -> "ModelManifold":
        return cls(dim, WarpingFunction.euclidean(), r_max)

    @classmethod
    def hyperbolic(cls, dim: int, r_max: float = 5.0, a: float = 1.0) -> "ModelManifold":
        return cls(dim, WarpingFunction.hyperbolic(a), r_max)

    @classmethod
    def paraboloid(cls, dim: int, r_max: float = 10.0) -> "ModelManifold":
        return cls(dim, WarpingFunction.paraboloid(), r_max)

    @classmethod
    def custom(cls, dim: int, h_expr: str, r_max: float = 10.0) -> "ModelManifold":
        return cls(dim, WarpingFunction.custom(h_expr), r_max)

    @property
    def kind(self) -> WarpKind:
        return self.h.kind

    @property
    def omega(self) -> float:
        return unit_sphere_measure(self.dim)

    def _radius(self, r, allow_zero=False):
        r = np.asarray(r, dtype=float)
        low_bad = (r < 0) if allow_zero else (r <= 0)
        if np.any(low_bad) or np.any(r > self.r_max * (1 + 1e-12)) or not np.all(np.isfinite(r)):
            raise DomainError(f"radius outside (0, {self.r_max}]: {r}")
        return r

    def sphere_area(self, r):
        r = self._radius(r)
        return self.omega * self.h.eval(r) ** (self.dim - 1)

    def ball_volume(self, r):
        r = self._radius(r)
        n = self.dim

        def one(rr):
            val, _ = integrate.quad(
                lambda t: float(self.h.eval(t)) ** (n - 1), 0.0, rr, epsabs=0.0, epsrel=1e-13, limit=200
            )
            return self.omega * val

        if r.ndim == 0:
            return one(float(r))
        return np.array([one(float(x)) for x in r.ravel()]).reshape(r.shape)

    def laplacian_of_r(self, r):
        """Laplacian of the distance to the pole, (n-1) h'/h."""
        r = self._radius(r)
        return (self.dim - 1) * self.h.deriv1(r) / self.h.eval(r)

    def curvatures(self, r) -> Curvatures:
        r = self._radius(r)
        h = self.h.eval(r)
        dh = self.h.deriv1(r)
        k_rad = -self.h.deriv2(r) / h
        n = self.dim
        if n == 2:
            return Curvatures(k_rad, None, k_rad, k_rad)
        k_tan = (1.0 - dh * dh) / (h * h)
        return Curvatures(k_rad, k_tan, (n - 1) * k_rad, k_rad + (n - 2) * k_tan)

    def check_hypotheses(self, hypothesis, grid) -> HypothesisVerdict:
        """Sample curvature on ``grid``; report the worst sample for the requested condition.

        Ricci nonnegativity tolerates values down to -1e-9; positive sectional
        curvature is strict.
        """
        hypothesis = Hypothesis(hypothesis)
        grid = np.asarray(grid, dtype=float)
        c = self.curvatures(grid)
        if hypothesis is Hypothesis.RICCI_NONNEG:
            vals = np.minimum(c.ricci_radial, c.ricci_tangential)
            ok_mask = vals >= -HYPOTHESIS_TOL
        else:
            vals = c.k_rad if c.k_tan is None else np.minimum(c.k_rad, c.k_tan)
            ok_mask = vals > 0
        i = int(np.argmin(vals))
        return HypothesisVerdict(bool(np.all(ok_mask)), float(grid[i]), float(vals[i]), hypothesis.value)

    def describe(self) -> dict:
        out = {"kind": self.kind.value, "dim": self.dim, "r_max": self.r_max}
        if self.h.a is not None:
            out["a"] = self.h.a
        if self.h.h_expr is not None:
            out["h_expr"] = self.h.h_expr
        return out
