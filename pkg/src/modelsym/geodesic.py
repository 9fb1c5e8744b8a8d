"""Geodesics and the exponential map on a model manifold.

A geodesic of a model stays in the totally geodesic surface spanned by the pole,
its starting point and its initial velocity. We integrate it in normal
polar coordinates (r, phi) on that surface,

    r'' = h h' phi'^2,        phi'' = -2 (h'/h) r' phi',

switching to normal coordinates near the pole where the polar system is singular,
and map the endpoint back with the frame (e_a, e_b) of the surface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import PolarPoint, tangent_basis
from .model import ModelManifold

MAX_STEP = 1e-3
MIN_STEPS = 1000
CHART_RADIUS = 0.5
POLE_EPS = 1e-12


class GeodesicRangeError(ValueError):
    """Geodesic left the working radius of the manifold."""


@dataclass(frozen=True)
class Tangent:
    """Tangent vector at a point: radial component plus an ambient angular vector
    orthogonal to the point's direction (measured in an orthonormal frame)."""

    radial: float
    angular: np.ndarray

    @classmethod
    def planar(cls, point: PolarPoint, radial: float, angular: float) -> "Tangent":
        """n = 2 form with a signed angular magnitude (positive = counterclockwise)."""
        xi = point.xi
        return cls(radial, angular * np.array([-xi[1], xi[0]]))


def _chart_accel(M: ModelManifold, y):
    """Geodesic equation in normal coordinates on the surface; y = (X, Y, X', Y')."""
    X, Y, VX, VY = y
    r = np.hypot(X, Y)
    safe = r > POLE_EPS
    rs = np.where(safe, r, 1.0)
    ex, ey = X / rs, Y / rs
    rdot = ex * VX + ey * VY
    phidot = (ex * VY - ey * VX) / rs
    h, dh = M.h.values(rs)
    a_rad = np.where(safe, (h * dh - rs) * phidot * phidot, 0.0)
    a_tan = np.where(safe, 2.0 * rdot * phidot * (1.0 - rs * dh / h), 0.0)
    return np.array([VX, VY, a_rad * ex - a_tan * ey, a_rad * ey + a_tan * ex])


def _polar_rhs(M: ModelManifold, y):
    """Warped-product geodesic equations; y = (r, phi, r', phi')."""
    r, _, rd, phid = y
    h, dh = M.h.values(np.where(r > POLE_EPS, r, 1.0))
    return np.array([rd, phid, h * dh * phid * phid, -2.0 * (dh / h) * rd * phid])


def _rk4_step(f, y, ds):
    k1 = f(y)
    k2 = f(y + (0.5 * ds) * k1)
    k3 = f(y + (0.5 * ds) * k2)
    k4 = f(y + ds * k3)
    return y + (ds / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _chart_to_polar(y):
    X, Y, VX, VY = y
    r = np.hypot(X, Y)
    rs = np.where(r > POLE_EPS, r, 1.0)
    return np.array([r, np.arctan2(Y, X), (X * VX + Y * VY) / rs, (X * VY - Y * VX) / (rs * rs)])


def _polar_to_chart(y):
    r, phi, rd, phid = y
    c, s = np.cos(phi), np.sin(phi)
    return np.array([r * c, r * s, rd * c - r * phid * s, rd * s + r * phid * c])


class _Integrator:
    """Batch RK4 that carries polar state (r, phi, r', phi') away from the pole and
    switches to normal coordinates (X, Y) on the surface when r < CHART_RADIUS.

    Polar state keeps the Clairaut constant h^2 phi' free of cancellation at large r;
    the chart removes the coordinate singularity at the pole. States are (4, N) arrays.
    """

    def __init__(self, M, polar):
        self.M = M
        self.P = np.array(polar, dtype=float)
        self.chart = self.P[0] < CHART_RADIUS
        self.any_chart = bool(np.any(self.chart))
        self.C = _polar_to_chart(self.P)
        self._polar = lambda y: _polar_rhs(M, y)
        self._chartf = lambda y: _chart_accel(M, y)

    def polar(self):
        if not self.any_chart:
            return self.P
        return np.where(self.chart, _chart_to_polar(self.C), self.P)

    def radius(self):
        if not self.any_chart:
            return self.P[0]
        return np.where(self.chart, np.hypot(self.C[0], self.C[1]), self.P[0])

    def step(self, ds):
        if not self.any_chart:
            self.P = _rk4_step(self._polar, self.P, ds)
            if np.min(self.P[0]) >= CHART_RADIUS:
                return
        else:
            if not np.all(self.chart):
                self.P = np.where(self.chart, self.P, _rk4_step(self._polar, self.P, ds))
            self.C = np.where(self.chart, _rk4_step(self._chartf, self.C, ds), self.C)
        to_chart = ~self.chart & (self.P[0] < CHART_RADIUS)
        if np.any(to_chart):
            self.C = np.where(to_chart, _polar_to_chart(self.P), self.C)
            self.chart = self.chart | to_chart
        to_polar = self.chart & (np.hypot(self.C[0], self.C[1]) > 2.0 * CHART_RADIUS)
        if np.any(to_polar):
            self.P = np.where(to_polar, _chart_to_polar(self.C), self.P)
            self.chart = self.chart & ~to_polar
        self.any_chart = bool(np.any(self.chart))


def _run(M, polar, ds, steps, store):
    it = _Integrator(M, polar)
    path = [it.polar()] if store else None
    r_peak = np.array(it.radius())
    for _ in range(steps):
        it.step(ds)
        if store:
            path.append(it.polar())
        np.maximum(r_peak, it.radius(), out=r_peak)
    return it.polar(), r_peak, path


def _invariants(M: ModelManifold, r, rd, phid):
    """Metric speed and Clairaut constant h^2 phi'."""
    h = M.h.eval(r)
    return np.sqrt(rd * rd + (h * phid) ** 2), h * h * phid


def _setup(M: ModelManifold, r0, xi0, wr, wang):
    """Frame (e_a, e_b) and unit-speed polar state for a batch of initial data."""
    r0 = np.atleast_1d(np.asarray(r0, dtype=float))
    xi0 = np.atleast_2d(np.asarray(xi0, dtype=float))
    wr = np.broadcast_to(np.asarray(wr, dtype=float), r0.shape)
    wang = np.broadcast_to(np.asarray(wang, dtype=float), xi0.shape)
    wang = wang - np.sum(wang * xi0, axis=-1, keepdims=True) * xi0
    alpha = np.linalg.norm(wang, axis=-1)
    length = np.hypot(wr, alpha)
    at_pole = r0 <= 0
    fallback = tangent_basis(xi0)[..., 0, :]
    eb = np.where((alpha > 0)[:, None], wang / np.where(alpha > 0, alpha, 1.0)[:, None], fallback)
    ea = xi0.copy()
    # at the pole the whole vector is a direction; rotate the frame onto it
    if np.any(at_pole):
        v = wr[:, None] * xi0 + wang
        vn = np.linalg.norm(v, axis=-1)
        good = at_pole & (vn > 0)
        ea_p = np.where(good[:, None], v / np.where(vn > 0, vn, 1.0)[:, None], xi0)
        eb_p = tangent_basis(ea_p)[..., 0, :]
        ea = np.where(at_pole[:, None], ea_p, ea)
        eb = np.where(at_pole[:, None], eb_p, eb)
    moving = length > 0
    L = np.where(moving, length, 1.0)
    rsafe = np.where(at_pole, 1.0, r0)
    rd = np.where(at_pole, 1.0, wr / L)
    phid = np.where(at_pole, 0.0, (alpha / L) / M.h.eval(rsafe))
    rd = np.where(moving, rd, 0.0)
    phid = np.where(moving, phid, 0.0)
    return (np.where(at_pole, 0.0, r0), np.zeros_like(r0), rd, phid), ea, eb, length


def _to_direction(phi, ea, eb):
    return np.cos(phi)[..., None] * ea + np.sin(phi)[..., None] * eb


def step_count(length, max_step: float = MAX_STEP, min_steps: int = MIN_STEPS) -> int:
    """Fixed number of RK4 steps for a batch: step <= min(max_step, length / min_steps)."""
    lmax = float(np.max(length)) if np.size(length) else 0.0
    return max(min_steps, int(math.ceil(lmax / max_step)))


def exp_map_batch(M: ModelManifold, r0, xi0, wr, wang, steps: int | None = None):
    """Exponential map for a batch of base points and tangent vectors.

    Returns ``(r, xi, escaped)``: endpoint radius, endpoint direction, and a mask of
    trajectories that left ``r_max`` at some time.
    """
    state, ea, eb, length = _setup(M, r0, xi0, wr, wang)
    n_steps = step_count(length) if steps is None else int(steps)
    # every trajectory uses the same step count, i.e. step length_i / n_steps
    ds = length / n_steps
    (r, phi, _, _), r_peak, _ = _run(M, state, ds, n_steps, store=False)
    return r, _to_direction(phi, ea, eb), r_peak > M.r_max * (1 + 1e-12)


def exp_map(M: ModelManifold, x: PolarPoint, w: Tangent, steps: int | None = None) -> PolarPoint:
    r, xi, escaped = exp_map_batch(M, [x.r], [x.xi], [w.radial], [np.asarray(w.angular, dtype=float)], steps)
    if escaped[0]:
        raise GeodesicRangeError(f"geodesic from r={x.r} leaves the working radius {M.r_max}")
    return PolarPoint(float(r[0]), xi[0])


@dataclass(frozen=True, eq=False)
class Trajectory:
    s: np.ndarray
    r: np.ndarray
    xi: np.ndarray
    speed: np.ndarray
    clairaut: np.ndarray
    escaped: bool
    start: np.ndarray  # Cartesian start in normal coordinates at the pole
    direction: np.ndarray  # initial unit velocity in those coordinates

    @property
    def speed_drift(self) -> float:
        return float(np.max(np.abs(self.speed - 1.0)))

    @property
    def clairaut_drift(self) -> float:
        return float(np.max(np.abs(self.clairaut - self.clairaut[0])))


def integrate(M: ModelManifold, r0, xi0, wr, wang, length: float, step: float | None = None):
    """Unit-speed trajectories of the given length, storing every step.

    Returns the list of ``Trajectory`` objects (one per initial datum)."""
    r0 = np.atleast_1d(np.asarray(r0, dtype=float))
    state, ea, eb, speed0 = _setup(M, r0, xi0, wr, wang)
    if step is None:
        n_steps = step_count(np.array([length]))
    else:
        n_steps = int(round(length / step))
    ds = length / n_steps
    rd0, phid0 = np.array(state[2]), np.array(state[3])
    _, r_peak, path = _run(M, state, ds, n_steps, store=True)
    R = np.stack([p[0] for p in path])
    PHI = np.stack([p[1] for p in path])
    RD = np.stack([p[2] for p in path])
    PHID = np.stack([p[3] for p in path])
    speed, clairaut = _invariants(M, R, RD, PHID)
    s = np.linspace(0.0, length, n_steps + 1)
    out = []
    for i in range(len(r0)):
        xi = _to_direction(PHI[:, i], ea[i], eb[i])
        # initial velocity from the setup state; polar velocity is undefined at r = 0
        v0 = rd0[i] * xi[0] + float(M.h.eval(R[0, i])) * phid0[i] * eb[i] if R[0, i] > 0 else rd0[i] * ea[i]
        out.append(
            Trajectory(s, R[:, i], xi, speed[:, i], clairaut[:, i], bool(r_peak[i] > M.r_max * (1 + 1e-12)),
                       R[0, i] * xi[0], v0 / np.linalg.norm(v0))
        )
    return out


def sample_geodesics(M: ModelManifold, count: int, length: float, seed: int = 0,
                     start_radius: float | None = None, step: float | None = None):
    """Seeded random unit-speed geodesics.

    Start points are uniform in radius on [0, start_radius] with uniform directions;
    initial velocities are uniform on the unit sphere of the tangent space.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    n = M.dim
    if start_radius is None:
        start_radius = max(0.0, min(M.r_max - length, 0.5 * M.r_max))
    r0 = rng.uniform(0.0, start_radius, count)
    xi0 = rng.standard_normal((count, n))
    xi0 /= np.linalg.norm(xi0, axis=-1, keepdims=True)
    v = rng.standard_normal((count, n))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    wr = np.sum(v * xi0, axis=-1)
    wang = v - wr[:, None] * xi0
    return integrate(M, r0, xi0, wr, wang, length, step)


def convergence_order(M: ModelManifold, r0: float, xi0, wr: float, wang, length: float, step: float) -> float:
    """Observed order from endpoints at step, step/2 and step/4 (in chart coordinates)."""
    ends = []
    for k in range(3):
        traj = integrate(M, [r0], [xi0], [wr], [wang], length, step / 2**k)[0]
        ends.append(traj.r[-1] * traj.xi[-1])
    e1 = np.linalg.norm(ends[0] - ends[1])
    e2 = np.linalg.norm(ends[1] - ends[2])
    return float(np.log2(e1 / e2))
