"""Executable checks of growth, energy and integral inequalities for subharmonic
and convex functions on model manifolds.

Every check verifies its hypotheses first and returns ``inapplicable`` when one
fails. Constants in the inequalities are existential, so checks report measured
extremal constants over the tested radii rather than universal bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .fields import (
    GeodesicSampler,
    ScalarField,
    ScaledField,
    gradient,
    is_convex_along_geodesics,
    is_nonnegative_on,
    is_subharmonic_on,
)
from .geodesic import exp_map_batch
from .model import Hypothesis, ModelManifold, unit_sphere_measure
from .quadrature import ball_integral, ball_nodes, sphere_mean, sphere_rule, sup_on
from .symmetrization import RadialProfile, profile_subharmonicity, symmetrize

HOLDS = "holds"
FAILS = "fails"
INAPPLICABLE = "inapplicable"

DEFAULT_TOLERANCES = {
    "nonnegative": 1e-12,
    "subharmonic": 1e-7,
    "subharmonic_fd": 1e-5,
    "convex": 1e-6,
    "profile": 1e-7,
    "inequality": 1e-9,
    "bishop": 1e-8,
    "gradient_floor": 1e-12,
}
ENVELOPE_MIN_C = 1e-12
MAX_SKIP_FRACTION = 0.01


@dataclass
class CheckReport:
    check_id: str
    hypotheses: dict
    measured: dict
    grid_range: tuple
    verdict: str
    witness: Optional[dict] = None
    reason: Optional[str] = None
    tolerances: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    series: dict = field(default_factory=dict, repr=False)

    @property
    def hypotheses_ok(self) -> bool:
        return all(h["ok"] for h in self.hypotheses.values())

    def to_json(self) -> dict:
        out = {
            "id": self.check_id,
            "hypotheses_ok": self.hypotheses_ok,
            "hypotheses": self.hypotheses,
            "measured": self.measured,
            "verdict": self.verdict,
            "range": list(self.grid_range),
            "tolerances": self.tolerances,
        }
        if self.witness is not None:
            out["witness"] = self.witness
        if self.reason is not None:
            out["reason"] = self.reason
        if self.notes:
            out["notes"] = list(self.notes)
        return out


@dataclass(frozen=True)
class GrowthClass:
    """Certificate |u| <= C r^degree weight(r) on ``r_range`` (finite-range only)."""

    degree: float
    C: float
    weight: Union[RadialProfile, Callable, None]
    r_range: tuple


@dataclass(frozen=True)
class HarnessOptions:
    sphere_order: Optional[int] = None
    radial_order: int = 64
    sup_density: tuple = (200, 256)
    subharmonic_samples: tuple = (64, 64)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    geodesic_count: int = 16
    gradient_sphere_order: int = 32
    gradient_radial_order: int = 16
    pointwise_nodes: int = 100

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def rule(self, M: ModelManifold):
        return sphere_rule(M.dim, self.sphere_order) if M.dim in (2, 3) else None

    def subharmonic_tol(self, u: ScalarField) -> float:
        return self.tol("subharmonic" if u.analytic else "subharmonic_fd")


DEFAULT_OPTIONS = HarnessOptions()


def _grid(grid) -> np.ndarray:
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    if g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
        raise ValueError("check grid must be a nonempty increasing list of positive radii")
    return g


def _f(x) -> float:
    return float(x)


# --- hypothesis probes -------------------------------------------------------


def _hyp_nonneg(u, M, r_hi, opts):
    ok, m, r, xi = is_nonnegative_on(u, M, r_hi, (min(opts.sup_density[0], 100), 64), opts.tol("nonnegative"))
    return {"ok": bool(ok), "min": _f(m), "at": [r, list(xi)]}


def _hyp_subharmonic(u, M, r_hi, opts):
    v = is_subharmonic_on(u, M, (1e-3, r_hi), opts.subharmonic_samples, opts.subharmonic_tol(u))
    return {"ok": v.ok, "min_laplacian": v.min_laplacian, "at": [v.at_r, list(v.at_xi)]}


def _curv_grid(r_hi):
    return np.linspace(r_hi / 200.0, r_hi, 200)


def _hyp_curv(M, hyp, r_hi):
    v = M.check_hypotheses(hyp, _curv_grid(r_hi))
    return {"ok": v.ok, "worst": v.worst_value, "at": v.worst_r}


def _hyp_convex(u, M, r_hi, opts):
    half = 0.5 * r_hi
    sampler = GeodesicSampler(count=opts.geodesic_count, length=half, seed=opts.seed, start_radius=half)
    v = is_convex_along_geodesics(u, M, sampler, opts.tol("convex"))
    return {
        "ok": v.ok,
        "worst_second_difference": v.worst_second_difference,
        "sampled": v.sampled,
        "skipped": v.skipped,
        "speed_drift": v.max_speed_drift,
        "clairaut_drift": v.max_clairaut_drift,
    }


def _gate(check_id, hyps, grid, tolerances):
    failed = [k for k, v in hyps.items() if not v["ok"]]
    if not failed:
        return None
    return CheckReport(
        check_id, hyps, {}, (float(grid[0]), float(grid[-1])), INAPPLICABLE,
        witness={"hypothesis": failed[0], **{k: v for k, v in hyps[failed[0]].items() if k != "ok"}},
        reason=f"hypothesis failed: {', '.join(failed)}", tolerances=tolerances,
    )


def _need_radius(M, r, what):
    if r > M.r_max * (1 + 1e-12):
        raise ValueError(f"{what} needs radius {r:g} but r_max={M.r_max:g}")


# --- checks ------------------------------------------------------------------


def check_mean_value(u: ScalarField, M: ModelManifold, grid, opts: HarnessOptions = DEFAULT_OPTIONS) -> CheckReport:
    """sup_{B_{r/2}} u <= C / Vol(B_r) * int_{B_r} u; reports C(r) and its max."""
    g = _grid(grid)
    hi = g[-1]
    tols = {k: opts.tol(k) for k in ("nonnegative", "subharmonic", "subharmonic_fd")}
    hyps = {
        "nonnegative": _hyp_nonneg(u, M, hi, opts),
        "subharmonic": _hyp_subharmonic(u, M, hi, opts),
        "ricci_nonneg": _hyp_curv(M, Hypothesis.RICCI_NONNEG, hi),
    }
    gated = _gate("mean_value", hyps, g, tols)
    if gated:
        return gated
    rule = opts.rule(M)
    C = np.empty_like(g)
    for i, r in enumerate(g):
        s = sup_on(u, M, "ball", r / 2, opts.sup_density).value
        integral = ball_integral(u, M, r, rule, opts.radial_order)
        C[i] = 0.0 if integral == 0 and s <= 0 else s * M.ball_volume(r) / integral
    measured = {"C_min": _f(C.max()), "C_at_lo": _f(C[0]), "C_at_hi": _f(C[-1]), "C_smallest": _f(C.min())}
    rep = CheckReport("mean_value", hyps, measured, (_f(g[0]), _f(hi)), HOLDS, tolerances=tols,
                      series={"r": g, "C": C})
    if not np.all(np.isfinite(C)):
        i = int(np.argmax(~np.isfinite(C)))
        rep.verdict = FAILS
        rep.witness = {"r": _f(g[i]), "lhs": "sup", "rhs": 0.0}
    return rep


def check_growth(u: ScalarField, M: ModelManifold, grid, opts: HarnessOptions = DEFAULT_OPTIONS,
                 small_r_grid=None):
    """sup_{B_{r/2}} u <= C r v(r) with v the spherical mean of u.

    Returns (report, GrowthClass or None). A small-r diagnostic of the same ratio
    is reported separately and does not affect the verdict.
    """
    g = _grid(grid)
    hi = g[-1]
    tols = {k: opts.tol(k) for k in ("nonnegative", "subharmonic", "subharmonic_fd", "profile")}
    hyps = {
        "nonnegative": _hyp_nonneg(u, M, hi, opts),
        "subharmonic": _hyp_subharmonic(u, M, hi, opts),
        "ricci_nonneg": _hyp_curv(M, Hypothesis.RICCI_NONNEG, hi),
    }
    rule = opts.rule(M)
    profile = symmetrize(u, M, np.geomspace(1e-3, hi, 100), rule, with_mean_lap=False)
    ps = profile_subharmonicity(profile, opts.tol("profile"))
    hyps["profile_subharmonic"] = {"ok": ps.ok, "min_lap_v": ps.worst, "at": ps.at_r}
    gated = _gate("growth", hyps, g, tols)
    if gated:
        return gated, None

    def ratio(radii):
        sups = np.array([sup_on(u, M, "ball", r / 2, opts.sup_density).value for r in radii])
        v = sphere_mean(u, M, radii, rule)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(v > 0, sups / (radii * np.where(v > 0, v, 1.0)), np.where(sups > 0, np.inf, 0.0))
        return rho, sups, v

    rho, sups, v = ratio(g)
    measured = {"rho_max": _f(rho.max()), "rho_at_lo": _f(rho[0]), "rho_at_hi": _f(rho[-1])}
    # restatement u = O(r w(r)) with w(r) = v(2r)
    ok2 = 2 * g <= M.r_max * (1 + 1e-12)
    if np.any(ok2):
        gg = g[ok2]
        sup_r = np.array([sup_on(u, M, "ball", r, opts.sup_density).value for r in gg])
        w = sphere_mean(u, M, 2 * gg, rule)
        with np.errstate(divide="ignore", invalid="ignore"):
            om = sup_r / (gg * w)
        measured["omega_ratio_max"] = _f(np.max(om))
    small = np.geomspace(0.05, 1.0, 12) if small_r_grid is None else _grid(small_r_grid)
    small = small[small <= M.r_max]
    rho_small = None
    if small.size:
        rho_small, _, _ = ratio(small)
        measured["small_r_rho_max"] = _f(rho_small.max())
        measured["small_r_rho_at_lo"] = _f(rho_small[0])
    rep = CheckReport("growth", hyps, measured, (_f(g[0]), _f(hi)), HOLDS, tolerances=tols,
                      series={"r": g, "rho": rho, "v": v, "sup": sups, "small_r": small, "small_rho": rho_small})
    if not np.all(np.isfinite(rho)):
        i = int(np.argmax(~np.isfinite(rho)))
        rep.verdict = FAILS
        rep.witness = {"r": _f(g[i]), "lhs": _f(sups[i]), "rhs": _f(g[i] * v[i])}
        rep.notes.append("spherical mean vanishes while u does not")
        return rep, None
    return rep, GrowthClass(1.0, _f(rho.max()), profile, (_f(g[0]), _f(hi)))


def fit_linear_envelope(r, F):
    """Smallest grid radius r0 with C = min_{r > r0} F(r)/(r - r0) >= 1e-12.

    Returns (C, r0) or None."""
    r = np.asarray(r, dtype=float)
    F = np.asarray(F, dtype=float)
    for j in range(len(r) - 1):
        C = float(np.min(F[j + 1:] / (r[j + 1:] - r[j])))
        if C >= ENVELOPE_MIN_C:
            return C, float(r[j])
    return None


def check_integral_lower(u: ScalarField, M: ModelManifold, p: float, grid,
                         opts: HarnessOptions = DEFAULT_OPTIONS) -> CheckReport:
    """int_{B_r} u^p >= C (r - r0) for r >= r0; fits the envelope (C, r0)."""
    g = _grid(grid)
    hi = g[-1]
    tols = {k: opts.tol(k) for k in ("nonnegative", "subharmonic", "subharmonic_fd")}
    tols["envelope_min_C"] = ENVELOPE_MIN_C
    hyps = {
        "sectional_positive": _hyp_curv(M, Hypothesis.SECTIONAL_POSITIVE, hi),
        "nonnegative": _hyp_nonneg(u, M, hi, opts),
        "subharmonic": _hyp_subharmonic(u, M, hi, opts),
        "exponent_gt_1": {"ok": bool(p > 1), "p": float(p)},
    }
    gated = _gate("integral_lower", hyps, g, tols)
    if gated:
        return gated
    rule = opts.rule(M)
    power = _Power(u, p)
    F = np.array([ball_integral(power, M, r, rule, opts.radial_order) for r in g])
    fit = fit_linear_envelope(g, F)
    measured = {"F_at_hi": _f(F[-1]), "p": float(p)}
    rep = CheckReport("integral_lower", hyps, measured, (_f(g[0]), _f(hi)), HOLDS, tolerances=tols,
                      series={"r": g, "F": F})
    if fit is None:
        rep.verdict = FAILS
        rep.witness = {"r": _f(hi), "lhs": _f(F[-1]), "rhs": "C*(r - r0) with C >= 1e-12 for every grid r0"}
        return rep
    measured["C"], measured["r0"] = fit
    return rep


class _Power:
    def __init__(self, u, p):
        self.u, self.p = u, p
        self.radial_only = u.radial_only

    def __call__(self, r, xi):
        return np.maximum(np.asarray(self.u(r, xi), dtype=float), 0.0) ** self.p


def check_convex_origin(u: ScalarField, M: ModelManifold, r0: Optional[float] = None, C: Optional[float] = None,
                        p: float = 2.0, grid=None, opts: HarnessOptions = DEFAULT_OPTIONS) -> CheckReport:
    """u(o) >= 2C / |dB_{r1}| - sup_{dB_{r1}} u with r1 = r0 + 1.

    Without (C, r0), they are measured by ``check_integral_lower`` on ``grid``.
    """
    if grid is None:
        grid = np.linspace(0.1, max(0.2, M.r_max - 1.0), 40)
    g = _grid(grid)
    hi = g[-1]
    tols = {k: opts.tol(k) for k in ("nonnegative", "convex", "inequality")}
    hyps = {
        "nonnegative": _hyp_nonneg(u, M, hi, opts),
        "convex": _hyp_convex(u, M, hi, opts),
        "sectional_positive": _hyp_curv(M, Hypothesis.SECTIONAL_POSITIVE, hi),
    }
    gated = _gate("convex_origin", hyps, g, tols)
    if gated:
        return gated
    source = "given"
    if C is None or r0 is None:
        env = check_integral_lower(u, M, p, g, opts)
        if env.verdict != HOLDS:
            rep = CheckReport("convex_origin", hyps, {}, (_f(g[0]), _f(hi)), INAPPLICABLE, tolerances=tols,
                              reason=f"no positive envelope from integral_lower ({env.verdict})")
            rep.witness = {"hypothesis": "integral_lower", **(env.witness or {})}
            return rep
        C, r0 = env.measured["C"], env.measured["r0"]
        source = "integral_lower"
    r1 = r0 + 1.0
    _need_radius(M, r1, "convex_origin")
    e1 = np.zeros(M.dim)
    e1[0] = 1.0
    lhs = float(u(np.array(0.0), e1))
    sup = sup_on(u, M, "sphere", r1, opts.sup_density).value
    rhs = 2.0 * C / float(M.sphere_area(r1)) - sup
    measured = {"u_origin": lhs, "rhs": _f(rhs), "C": float(C), "r0": float(r0), "r1": float(r1),
                "sup_sphere": _f(sup), "slack": _f(lhs - rhs)}
    rep = CheckReport("convex_origin", hyps, measured, (_f(g[0]), _f(hi)), HOLDS, tolerances=tols)
    rep.notes.append(f"(C, r0) {source}")
    if lhs < rhs - opts.tol("inequality") * max(1.0, abs(rhs)):
        rep.verdict = FAILS
        rep.witness = {"r": float(r1), "lhs": lhs, "rhs": _f(rhs)}
    return rep


def _grad_norm2(u, M):
    class _G:
        radial_only = u.radial_only

        def __call__(self, r, xi):
            return gradient(u, M, r, xi).norm2

    return _G()


def _energy_series(u, M, g, opts):
    rule = opts.rule(M)
    u2 = ScaledField(u, square=True)
    gn = _grad_norm2(u, M)
    G = np.array([ball_integral(gn, M, r, rule, opts.radial_order) for r in g])
    U2 = np.array([ball_integral(u2, M, 2 * r, rule, opts.radial_order) for r in g])
    w4 = sphere_mean(u2, M, 4 * g, rule)
    vol2 = np.array([M.ball_volume(2 * r) for r in g])
    return G, U2, w4, vol2


def _energy_hyps(u, M, hi, opts):
    return {
        "nonnegative": _hyp_nonneg(u, M, hi, opts),
        "subharmonic": _hyp_subharmonic(u, M, hi, opts),
        "ricci_nonneg": _hyp_curv(M, Hypothesis.RICCI_NONNEG, hi),
    }


def check_energy(u: ScalarField, M: ModelManifold, grid, opts: HarnessOptions = DEFAULT_OPTIONS) -> CheckReport:
    """(r / Vol(B_{2r})) int_{B_r} |grad u|^2 <= C w(4r), w the spherical mean of u^2."""
    g = _grid(grid)
    hi = g[-1]
    _need_radius(M, 4 * hi, "energy")
    tols = {k: opts.tol(k) for k in ("nonnegative", "subharmonic", "subharmonic_fd")}
    hyps = _energy_hyps(u, M, 4 * hi, opts)
    gated = _gate("energy", hyps, g, tols)
    if gated:
        return gated
    G, U2, w4, vol2 = _energy_series(u, M, g, opts)
    E = g * G / vol2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(w4 > 0, E / np.where(w4 > 0, w4, 1.0), np.where(E > 0, np.inf, 0.0))
        ingredient = np.where(U2 > 0, g * g * G / np.where(U2 > 0, U2, 1.0), np.where(G > 0, np.inf, 0.0))
    measured = {"C_energy": _f(ratio.max()), "ratio_at_lo": _f(ratio[0]), "ratio_at_hi": _f(ratio[-1]),
                "ingredient_max": _f(ingredient.max())}
    rep = CheckReport("energy", hyps, measured, (_f(g[0]), _f(hi)), HOLDS, tolerances=tols,
                      series={"r": g, "E": E, "w4": w4, "ratio": ratio, "ingredient": ingredient})
    if not np.all(np.isfinite(ratio)):
        i = int(np.argmax(~np.isfinite(ratio)))
        rep.verdict = FAILS
        rep.witness = {"r": _f(g[i]), "lhs": _f(E[i]), "rhs": _f(w4[i])}
    return rep


def check_limsup(u: ScalarField, M: ModelManifold, tail_grid, opts: HarnessOptions = DEFAULT_OPTIONS) -> CheckReport:
    """limsup r^{1-n} int_{B_r}|grad u|^2 <= C1 limsup w(4r), both limsups replaced by
    maxima over ``tail_grid`` (a finite-range surrogate)."""
    g = _grid(tail_grid)
    hi = g[-1]
    _need_radius(M, 4 * hi, "limsup")
    tols = {k: opts.tol(k) for k in ("nonnegative", "subharmonic", "subharmonic_fd", "inequality")}
    hyps = _energy_hyps(u, M, 4 * hi, opts)
    gated = _gate("limsup", hyps, g, tols)
    if gated:
        return gated
    energy = check_energy(u, M, g, opts)
    G, _, w4, _ = _energy_series(u, M, g, opts)
    n = M.dim
    bishop = max(float(M.ball_volume(2 * r)) / (unit_sphere_measure(n) / n * (2 * r) ** n) for r in g)
    C1 = energy.measured["C_energy"] * 2**n * unit_sphere_measure(n) / n * bishop
    lhs = G / g ** (n - 1)
    L, R = float(lhs.max()), float(w4.max())
    measured = {"lhs_surrogate": L, "rhs_surrogate": R, "C1": _f(C1), "C_energy": energy.measured["C_energy"]}
    rep = CheckReport("limsup", hyps, measured, (_f(g[0]), _f(hi)), HOLDS, tolerances=tols,
                      notes=["finite-range surrogate: limsups are maxima over the tail grid"],
                      series={"r": g, "lhs": lhs, "rhs": w4})
    if not math.isfinite(R) or not math.isfinite(C1):
        rep.notes.append("right-hand side unbounded numerically; holds vacuously")
        return rep
    if L > C1 * R * (1 + opts.tol("inequality")):
        rep.verdict = FAILS
        i = int(np.argmax(lhs))
        rep.witness = {"r": _f(g[i]), "lhs": L, "rhs": _f(C1 * R)}
    return rep


def pointwise_convexity_step(u: ScalarField, M: ModelManifold, r, xi):
    """Slack u(exp_x grad u) - u(x) - |grad u|^2 at the given points, plus an escape mask."""
    r = np.asarray(r, dtype=float)
    xi = np.asarray(xi, dtype=float)
    gr = gradient(u, M, r, xi)
    r_end, xi_end, escaped = exp_map_batch(M, r, xi, gr.radial, gr.angular)
    slack = np.asarray(u(r_end, xi_end)) - np.asarray(u(r, xi)) - gr.norm2
    return slack, escaped, gr.norm2


def check_gradient_integral(u: ScalarField, M: ModelManifold, grid,
                            opts: HarnessOptions = DEFAULT_OPTIONS) -> CheckReport:
    """int_{B_r} u(exp_x grad u) dV >= C6 Vol(B_r)^2 / (r^{n+1} w(4r)^3), w the spherical
    mean of u^2; hypotheses u >= 1 and |grad u| >= 1 are checked on the ball's nodes."""
    g = _grid(grid)
    hi = g[-1]
    _need_radius(M, 4 * hi, "gradient_integral")
    tols = {k: opts.tol(k) for k in ("convex", "inequality")}
    rule = sphere_rule(M.dim, opts.gradient_sphere_order) if M.dim in (2, 3) else None
    nodes = ball_nodes(M, hi, rule, opts.gradient_radial_order)
    R = np.broadcast_to(nodes.r[:, None], nodes.weights.shape).ravel()
    XI = np.broadcast_to(nodes.xi[None, :, :], nodes.weights.shape + (M.dim,)).reshape(-1, M.dim)
    uval = np.asarray(u(R, XI), dtype=float)
    gr = gradient(u, M, R, XI)
    gnorm = np.sqrt(gr.norm2)
    i_u, i_g = int(np.argmin(uval)), int(np.argmin(gnorm))
    floor = 1.0 - opts.tol("inequality")
    hyps = {
        "u_ge_1": {"ok": bool(uval[i_u] >= floor), "min": _f(uval[i_u]), "at": (R[i_u] * XI[i_u]).tolist()},
        "grad_ge_1": {"ok": bool(gnorm[i_g] >= floor), "min": _f(gnorm[i_g]), "at": (R[i_g] * XI[i_g]).tolist()},
        "ricci_nonneg": _hyp_curv(M, Hypothesis.RICCI_NONNEG, hi),
        "convex": _hyp_convex(u, M, hi, opts),
    }
    # pointwise step at sampled nodes where |grad u| >= 1, independent of the gate
    rng = np.random.default_rng(opts.seed)
    eligible = np.flatnonzero(gnorm >= 1.0)
    measured = {}
    pw_ok = True
    if eligible.size:
        pick = np.sort(rng.choice(eligible, size=min(opts.pointwise_nodes, eligible.size), replace=False))
        slack, esc, _ = pointwise_convexity_step(u, M, R[pick], XI[pick])
        slack = slack[~esc]
        if slack.size:
            measured["pointwise_min_slack"] = _f(slack.min())
            measured["pointwise_nodes"] = int(slack.size)
            pw_ok = bool(slack.min() >= -opts.tol("inequality"))
    gated = _gate("gradient_integral", hyps, g, tols)
    if gated:
        if hyps["grad_ge_1"]["ok"] is False:
            gated.witness = {"hypothesis": "grad_ge_1", "min": hyps["grad_ge_1"]["min"], "at": hyps["grad_ge_1"]["at"]}
        gated.measured.update(measured)
        return gated
    rule_m = opts.rule(M)
    u2 = ScaledField(u, square=True)
    C6 = np.empty_like(g)
    skipped_total = 0
    count_total = 0
    for i, r in enumerate(g):
        nd = ball_nodes(M, r, rule, opts.gradient_radial_order)
        Rn = np.broadcast_to(nd.r[:, None], nd.weights.shape).ravel()
        Xn = np.broadcast_to(nd.xi[None, :, :], nd.weights.shape + (M.dim,)).reshape(-1, M.dim)
        W = nd.weights.ravel()
        gi = gradient(u, M, Rn, Xn)
        r_end, xi_end, esc = exp_map_batch(M, Rn, Xn, gi.radial, gi.angular)
        skipped_total += int(esc.sum())
        count_total += esc.size
        lhs = float(np.sum(np.where(esc, 0.0, W * np.asarray(u(r_end, xi_end)))))
        w4 = float(sphere_mean(u2, M, np.array(4 * r), rule_m))
        vol = float(M.ball_volume(r))
        C6[i] = lhs * r ** (M.dim + 1) * w4**3 / vol**2
    measured.update({"C6_empirical": _f(C6.min()), "C6_at_lo": _f(C6[0]), "C6_at_hi": _f(C6[-1]),
                     "skipped_nodes": skipped_total})
    rep = CheckReport("gradient_integral", hyps, measured, (_f(g[0]), _f(hi)), HOLDS, tolerances=tols,
                      series={"r": g, "C6": C6})
    if skipped_total > MAX_SKIP_FRACTION * count_total:
        rep.verdict = INAPPLICABLE
        rep.reason = f"exp map left r_max at {skipped_total} of {count_total} nodes"
        rep.witness = {"hypothesis": "exp_map_range", "skipped": skipped_total}
        return rep
    if not (C6.min() > 0 and pw_ok):
        rep.verdict = FAILS
        i = int(np.argmin(C6))
        rep.witness = {"r": _f(g[i]), "lhs": _f(C6[i]), "rhs": 0.0,
                       "pointwise_min_slack": measured.get("pointwise_min_slack")}
    return rep


def check_bishop(M: ModelManifold, grid, opts: HarnessOptions = DEFAULT_OPTIONS) -> CheckReport:
    """Vol(B_r) divided by the Euclidean ball volume must be <= 1."""
    g = _grid(grid)
    tols = {"bishop": opts.tol("bishop")}
    hyps = {"ricci_nonneg": _hyp_curv(M, Hypothesis.RICCI_NONNEG, g[-1])}
    gated = _gate("bishop", hyps, g, tols)
    if gated:
        return gated
    n = M.dim
    ratio = np.array([M.ball_volume(r) for r in g]) / (unit_sphere_measure(n) / n * g**n)
    i = int(np.argmax(ratio))
    measured = {"ratio_max": _f(ratio[i]), "ratio_min": _f(ratio.min()), "ratio_at_hi": _f(ratio[-1])}
    rep = CheckReport("bishop", hyps, measured, (_f(g[0]), _f(g[-1])), HOLDS, tolerances=tols,
                      series={"r": g, "ratio": ratio})
    if ratio[i] > 1.0 + opts.tol("bishop"):
        rep.verdict = FAILS
        rep.witness = {"r": _f(g[i]), "lhs": _f(M.ball_volume(g[i])),
                       "rhs": _f(unit_sphere_measure(n) / n * g[i] ** n)}
    return rep


def classify_growth(u: ScalarField, M: ModelManifold, weight, p: float, grid,
                    opts: HarnessOptions = DEFAULT_OPTIONS):
    """Measured C = max_r sup_{dB_r}|u| / (r^p weight(r)); returns (report, GrowthClass or None).

    ``weight`` is a RadialProfile (interpolated), a callable of r, or None for weight 1.
    """
    g = _grid(grid)
    if weight is None:
        wv = np.ones_like(g)
    else:
        wv = np.asarray(weight(g), dtype=float)
    tols = {}
    hyps = {"weight_positive": {"ok": bool(np.all(wv > 0)), "min": _f(wv.min()), "at": _f(g[int(np.argmin(wv))])}}
    gated = _gate("classify_growth", hyps, g, tols)
    if gated:
        return gated, None
    absu = _Abs(u)
    sups = np.array([sup_on(absu, M, "sphere", r, opts.sup_density).value for r in g])
    ratio = sups / (g**p * wv)
    i = int(np.argmax(ratio))
    measured = {"C": _f(ratio[i]), "C_at": _f(g[i]), "degree": float(p)}
    rep = CheckReport("classify_growth", hyps, measured, (_f(g[0]), _f(g[-1])), HOLDS, tolerances=tols,
                      notes=["finite-range certificate"], series={"r": g, "ratio": ratio})
    return rep, GrowthClass(float(p), _f(ratio[i]), weight, (_f(g[0]), _f(g[-1])))


class _Abs:
    def __init__(self, u):
        self.u = u
        self.radial_only = u.radial_only

    def __call__(self, r, xi):
        return np.abs(np.asarray(self.u(r, xi), dtype=float))
