"""Spherical-mean symmetrization v(r) of a field about the pole."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fields import PoleError, ScalarField, laplace_beltrami
from .model import ModelManifold
from .quadrature import SphereRule, sphere_mean, sphere_rule

IDENTITY_TOL = 1e-7
FD_VERDICT_TOL = 1e-5
CSV_COLUMNS = ("r", "v", "dv", "ddv", "lap_v", "mean_lap_u")


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Profile on an increasing grid starting at r = 0.

    ``lap_v[0]`` holds the limit of the radial Laplacian at the pole, n * ddv[0].
    """

    dim: int
    r: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    ddv: np.ndarray
    lap_v: np.ndarray
    mean_lap_u: Optional[np.ndarray] = None

    def __call__(self, r):
        """Cubic Hermite interpolation of v using dv."""
        from scipy.interpolate import CubicHermiteSpline

        return CubicHermiteSpline(self.r, self.v, self.dv)(r)

    def to_csv(self, dest) -> None:
        """Write the profile to a path or text stream, 17 significant digits."""
        if not hasattr(dest, "write"):
            with open(dest, "w", newline="") as fh:
                self.to_csv(fh)
            return
        cols = [self.r, self.v, self.dv, self.ddv, self.lap_v,
                self.mean_lap_u if self.mean_lap_u is not None else np.full_like(self.r, np.nan)]
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in zip(*cols):
            w.writerow([f"{x:.17g}" for x in row])


def default_grid(M: ModelManifold, count: int = 200) -> np.ndarray:
    return np.geomspace(1e-3, 0.9 * M.r_max, count)


def _with_origin(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("profile grid must be strictly increasing")
    return grid if grid[0] == 0 else np.concatenate([[0.0], grid])


def radial_laplacian(M: ModelManifold, r, dv, ddv):
    """ddv + (n-1)(h'/h) dv for r > 0."""
    return ddv + M.laplacian_of_r(r) * dv


def symmetrize(u: ScalarField, M: ModelManifold, grid=None, rule: SphereRule | None = None,
               with_mean_lap: bool = True) -> RadialProfile:
    """Spherical means of u, u_r and u_rr on the grid (an origin row is prepended).

    Derivatives of v are sphere means of the radial derivatives of u, i.e. the
    differentiation is done under the integral.
    """
    r = _with_origin(default_grid(M) if grid is None else grid)
    if r[-1] > M.r_max * (1 + 1e-12):
        raise ValueError(f"profile grid exceeds r_max={M.r_max}")
    if rule is None and not u.radial_only:
        rule = sphere_rule(M.dim)
    v = sphere_mean(u, M, r, rule)
    if r[0] == 0:
        v[0] = float(u(np.array(0.0), np.eye(M.dim)[0]))
    dv = sphere_mean(_RadialDeriv(u, 0), M, r, rule)
    ddv = sphere_mean(_RadialDeriv(u, 1), M, r, rule)
    lap = np.empty_like(r)
    lap[0] = M.dim * ddv[0]
    lap[1:] = radial_laplacian(M, r[1:], dv[1:], ddv[1:])
    mean_lap = None
    if with_mean_lap:
        mean_lap = sphere_mean(_Lap(u, M), M, r, rule)
    return RadialProfile(M.dim, r, v, dv, ddv, lap, mean_lap)


class _Lap:
    """Pointwise Laplacian of u as a field-like callable."""

    def __init__(self, u, M):
        self.u, self.M = u, M
        self.radial_only = u.radial_only

    def __call__(self, r, xi):
        return laplace_beltrami(self.u, self.M, r, xi)


class _RadialDeriv:
    def __init__(self, u, k):
        self.u, self.k = u, k
        self.radial_only = u.radial_only

    def __call__(self, r, xi):
        return self.u.radial_derivs(r, xi)[self.k]


def laplacian_consistency(u: ScalarField, M: ModelManifold, profile: RadialProfile,
                          rule: SphereRule | None = None):
    """Worst discrepancy between lap_v and the sphere mean of the Laplacian of u.

    Discrepancies are divided by max(1, |mean Laplacian|). Returns (worst, radius).
    """
    r = profile.r[1:]
    mean_lap = profile.mean_lap_u[1:] if profile.mean_lap_u is not None else sphere_mean(_Lap(u, M), M, r, rule)
    err = np.abs(profile.lap_v[1:] - mean_lap) / np.maximum(1.0, np.abs(mean_lap))
    i = int(np.argmax(err))
    return float(err[i]), float(r[i])


@dataclass(frozen=True)
class OriginLimits:
    dv0: float
    ddv0: float
    lap_limit: float
    lap_u0: Optional[float]
    predicted: Optional[tuple]
    deviations: Optional[tuple]


def origin_limits(u: ScalarField, M: ModelManifold, rule: SphereRule | None = None,
                  radii=(1e-3, 5e-4)) -> OriginLimits:
    """Richardson estimates of v'(0), v''(0) and the limit of the radial Laplacian,
    compared with 0, Lap u(0)/n and Lap u(0)."""
    h1, h2 = radii
    p = symmetrize(u, M, np.array([h2, h1]), rule, with_mean_lap=False)
    dv_a, dv_b = p.dv[2], p.dv[1]  # at h1, h2
    dd_a, dd_b = p.ddv[2], p.ddv[1]
    lv_a, lv_b = p.lap_v[2], p.lap_v[1]
    ratio = h1 / h2
    # dv ~ c r: linear extrapolation; ddv and lap_v ~ a + b r^2
    dv0 = (ratio * dv_b - dv_a) / (ratio - 1.0)
    q = ratio**2
    ddv0 = (q * dd_b - dd_a) / (q - 1.0)
    lap0 = (q * lv_b - lv_a) / (q - 1.0)
    try:
        e1 = np.zeros(M.dim)
        e1[0] = 1.0
        lap_u0 = float(laplace_beltrami(u, M, np.array(0.0), e1))
    except PoleError:
        return OriginLimits(float(dv0), float(ddv0), float(lap0), None, None, None)
    pred = (0.0, lap_u0 / M.dim, lap_u0)
    dev = (abs(dv0 - pred[0]), abs(ddv0 - pred[1]), abs(lap0 - pred[2]))
    return OriginLimits(float(dv0), float(ddv0), float(lap0), lap_u0, pred, tuple(float(d) for d in dev))


@dataclass(frozen=True)
class ProfileVerdict:
    ok: bool
    worst: float
    at_r: float


def monotonicity(profile: RadialProfile, tol: float = IDENTITY_TOL) -> ProfileVerdict:
    """v non-decreasing: dv >= -tol on the grid."""
    i = int(np.argmin(profile.dv))
    return ProfileVerdict(bool(profile.dv[i] >= -tol), float(profile.dv[i]), float(profile.r[i]))


def profile_subharmonicity(profile: RadialProfile, tol: float = IDENTITY_TOL) -> ProfileVerdict:
    """Radial Laplacian of v >= -tol on the grid."""
    i = int(np.argmin(profile.lap_v))
    return ProfileVerdict(bool(profile.lap_v[i] >= -tol), float(profile.lap_v[i]), float(profile.r[i]))
