"""Scenario runner: ``modelsym run|list|profile``.

A scenario is a TOML (or JSON) file naming a manifold, a field, an r-grid and a
list of checks. Reports are deterministic JSON; exit status is 0 when no check
fails, 1 when at least one fails, 2 on configuration or evaluation errors.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import harness
from .expr import ParseError
from .fields import CATALOG, ExpressionField, ScalarField, catalog_field
from .model import ModelManifold
from .symmetrization import symmetrize

EXIT_OK, EXIT_FAILS, EXIT_ERROR = 0, 1, 2
REPORT_FORMAT = 1

CHECK_IDS = (
    "bishop",
    "classify_growth",
    "convex_origin",
    "energy",
    "gradient_integral",
    "growth",
    "integral_lower",
    "limsup",
    "mean_value",
)

# id -> (hypotheses, statement, citation)
CHECKS = {
    "bishop": ("ricci_nonneg", "Vol(B_r) <= Euclidean ball volume", "Bishop volume comparison"),
    "classify_growth": ("weight_positive", "|u| <= C r^p w(r) on the tested radii", "(w,p)-polynomial growth"),
    "convex_origin": ("nonnegative, convex, sectional_positive",
                      "u(o) >= 2C/|dB_{r0+1}| - sup_{dB_{r0+1}} u", "convex lower bound at the pole"),
    "energy": ("nonnegative, subharmonic, ricci_nonneg",
               "(r/Vol(B_2r)) int_{B_r} |grad u|^2 <= C w(4r), w = mean of u^2", "energy bound"),
    "gradient_integral": ("u_ge_1, grad_ge_1, convex, ricci_nonneg (on the ball)",
                          "int_{B_r} u(exp_x grad u) >= C6 Vol(B_r)^2 / (r^(n+1) w(4r)^3)",
                          "exp-gradient integral bound"),
    "growth": ("nonnegative, subharmonic, ricci_nonneg, profile_subharmonic",
               "sup_{B_r/2} u <= C r v(r)", "main growth theorem"),
    "integral_lower": ("sectional_positive, nonnegative, subharmonic, p > 1",
                       "int_{B_r} u^p >= C (r - r0) for r >= r0", "Greene-Wu integral lower bound"),
    "limsup": ("nonnegative, subharmonic, ricci_nonneg",
               "limsup r^(1-n) int_{B_r} |grad u|^2 <= C1 limsup w(4r)", "energy limsup (finite-range surrogate)"),
    "mean_value": ("nonnegative, subharmonic, ricci_nonneg",
                   "sup_{B_r/2} u <= C / Vol(B_r) int_{B_r} u", "Li-Schoen mean value inequality"),
}

MANIFOLDS = {
    "custom": "h(r) given by h_expr, derivatives by central differences",
    "euclidean": "h(r) = r",
    "hyperbolic": "h(r) = sinh(a r) / a, curvature -a^2",
    "paraboloid": "surface of revolution of z = t^2/2, h(r) by arc-length inversion",
}


class ConfigError(ValueError):
    """Invalid scenario; ``path`` names the offending key."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


# --- config schema -----------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ManifoldSpec(_Strict):
    kind: Literal["euclidean", "hyperbolic", "paraboloid", "custom"]
    dim: int = Field(ge=2)
    r_max: float = Field(gt=0)
    a: Optional[float] = Field(default=None, gt=0)
    h_expr: Optional[str] = None

    @model_validator(mode="after")
    def _kind_options(self):
        if self.a is not None and self.kind != "hyperbolic":
            raise ValueError("'a' only applies to kind = hyperbolic")
        if (self.h_expr is not None) != (self.kind == "custom"):
            raise ValueError("'h_expr' is required for kind = custom and not allowed otherwise")
        return self

    def build(self) -> ModelManifold:
        if self.kind == "euclidean":
            return ModelManifold.euclidean(self.dim, self.r_max)
        if self.kind == "hyperbolic":
            return ModelManifold.hyperbolic(self.dim, self.r_max, 1.0 if self.a is None else self.a)
        if self.kind == "paraboloid":
            return ModelManifold.paraboloid(self.dim, self.r_max)
        return ModelManifold.custom(self.dim, self.h_expr, self.r_max)


class FieldSpec(_Strict):
    catalog: Optional[str] = None
    params: dict = Field(default_factory=dict)
    expr: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.catalog is None) == (self.expr is None):
            raise ValueError("give exactly one of 'catalog' or 'expr'")
        if self.expr is not None and self.params:
            raise ValueError("'params' only applies to catalog fields")
        if self.catalog is not None and self.catalog not in CATALOG:
            raise ValueError(f"unknown catalog field {self.catalog!r}; known: {', '.join(sorted(CATALOG))}")
        return self

    def build(self, dim: int) -> ScalarField:
        if self.catalog is not None:
            return catalog_field(self.catalog, dim, dict(self.params))
        return ExpressionField(self.expr, dim)


class GridSpec(_Strict):
    r_lo: float = Field(gt=0)
    r_hi: float = Field(gt=0)
    count: int = Field(ge=2)
    spacing: Literal["linear", "geometric"] = "linear"

    @model_validator(mode="after")
    def _ordered(self):
        if not self.r_lo < self.r_hi:
            raise ValueError("r_lo must be below r_hi")
        return self

    def radii(self) -> np.ndarray:
        f = np.geomspace if self.spacing == "geometric" else np.linspace
        return f(self.r_lo, self.r_hi, self.count)


class QuadratureSpec(_Strict):
    sphere_order: Optional[int] = Field(default=None, ge=4)
    radial_order: int = Field(default=64, ge=2)
    sup_density: Tuple[int, int] = (200, 256)


class RangeSpec(_Strict):
    r_lo: float = Field(gt=0)
    r_hi: float = Field(gt=0)
    count: int = Field(default=5, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.r_lo > self.r_hi or (self.count > 1 and self.r_lo == self.r_hi):
            raise ValueError("need r_lo < r_hi")
        return self

    def radii(self) -> np.ndarray:
        return np.linspace(self.r_lo, self.r_hi, self.count)


class CheckSpec(_Strict):
    id: str
    p: Optional[float] = None
    range: Optional[RangeSpec] = None
    tail: Optional[RangeSpec] = None
    r0: Optional[float] = None
    C: Optional[float] = None
    weight: Literal["profile", "one"] = "profile"

    @field_validator("id")
    @classmethod
    def _known(cls, v):
        if v not in CHECKS:
            raise ValueError(f"unknown check id {v!r}; known: {', '.join(CHECK_IDS)}")
        return v

    @model_validator(mode="after")
    def _options(self):
        if self.tail is not None and self.id != "limsup":
            raise ValueError("'tail' only applies to limsup")
        if (self.r0 is None) != (self.C is None):
            raise ValueError("'r0' and 'C' go together")
        if self.r0 is not None and self.id != "convex_origin":
            raise ValueError("'r0'/'C' only apply to convex_origin")
        return self


class OutputSpec(_Strict):
    report_path: Optional[str] = None
    csv_path: Optional[str] = None


class ScenarioConfig(_Strict):
    name: str
    description: Optional[str] = None
    seed: int = 0
    manifold: ManifoldSpec
    field: FieldSpec
    grid: GridSpec
    quadrature: QuadratureSpec = QuadratureSpec()
    checks: List[CheckSpec] = Field(default_factory=list)
    tolerances: dict = Field(default_factory=dict)
    outputs: OutputSpec = OutputSpec()

    @field_validator("tolerances")
    @classmethod
    def _tols(cls, v):
        for k, x in v.items():
            if k not in harness.DEFAULT_TOLERANCES:
                raise ValueError(f"unknown tolerance {k!r}; known: {', '.join(sorted(harness.DEFAULT_TOLERANCES))}")
            if not (isinstance(x, (int, float)) and x > 0):
                raise ValueError(f"tolerance {k!r} must be a positive number")
        return v

    @model_validator(mode="after")
    def _within_r_max(self):
        r_max = self.manifold.r_max
        if self.grid.r_hi > r_max:
            raise ValueError(f"grid.r_hi={self.grid.r_hi} exceeds manifold.r_max={r_max}")
        for i, c in enumerate(self.checks):
            for key in ("range", "tail"):
                rs = getattr(c, key)
                if rs is not None and rs.r_hi > r_max:
                    raise ValueError(f"checks[{i}].{key}.r_hi={rs.r_hi} exceeds manifold.r_max={r_max}")
        return self


def _loc(err) -> str:
    out = ""
    for part in err["loc"]:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def parse_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        e = exc.errors()[0]
        msg = e["msg"].removeprefix("Value error, ")
        raise ConfigError(_loc(e), msg) from None


def load_config(source: Union[str, Path]) -> ScenarioConfig:
    """Read a config file, or a built-in scenario by name."""
    path = Path(source)
    if not path.exists():
        if str(source) in builtin_scenarios():
            return parse_config(tomli.loads(_builtin_text(str(source))))
        raise ConfigError("", f"no such config file or built-in scenario: {source}")
    text = path.read_text()
    try:
        data = json.loads(text) if path.suffix == ".json" else tomli.loads(text)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError("", f"cannot parse {path}: {exc}") from None
    return parse_config(data)


def builtin_scenarios() -> List[str]:
    files = resources.files("modelsym").joinpath("scenarios").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".toml"))


def _builtin_text(name: str) -> str:
    return resources.files("modelsym").joinpath("scenarios", f"{name}.toml").read_text()


# --- execution ---------------------------------------------------------------


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x) + 0.0  # folds -0.0 into 0.0
        return x if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    return x


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=False, allow_nan=False) + "\n"


def _options(cfg: ScenarioConfig, seed: Optional[int]) -> harness.HarnessOptions:
    q = cfg.quadrature
    return harness.HarnessOptions(
        sphere_order=q.sphere_order,
        radial_order=q.radial_order,
        sup_density=tuple(q.sup_density),
        tolerances=dict(cfg.tolerances),
        seed=cfg.seed if seed is None else seed,
    )


def _run_check(spec: CheckSpec, u, M, grid, opts) -> harness.CheckReport:
    g = spec.range.radii() if spec.range is not None else grid
    cid = spec.id
    if cid == "mean_value":
        return harness.check_mean_value(u, M, g, opts)
    if cid == "growth":
        return harness.check_growth(u, M, g, opts)[0]
    if cid == "integral_lower":
        return harness.check_integral_lower(u, M, 2.0 if spec.p is None else spec.p, g, opts)
    if cid == "convex_origin":
        return harness.check_convex_origin(u, M, spec.r0, spec.C, 2.0 if spec.p is None else spec.p, g, opts)
    if cid == "energy":
        return harness.check_energy(u, M, g, opts)
    if cid == "limsup":
        return harness.check_limsup(u, M, spec.tail.radii() if spec.tail is not None else g, opts)
    if cid == "gradient_integral":
        return harness.check_gradient_integral(u, M, g, opts)
    if cid == "bishop":
        return harness.check_bishop(M, g, opts)
    # classify_growth
    weight = None
    if spec.weight == "profile":
        weight = symmetrize(u, M, np.geomspace(1e-3, g[-1], 200), opts.rule(M), with_mean_lap=False)
    return harness.classify_growth(u, M, weight, 1.0 if spec.p is None else spec.p, g, opts)[0]


def _check_entry(spec, u, M, grid, opts) -> dict:
    try:
        return _run_check(spec, u, M, grid, opts).to_json()
    except Exception as exc:  # reported per check so the remaining checks still run
        return {"id": spec.id, "verdict": "error", "error": f"{type(exc).__name__}: {exc}"}


def build(cfg: ScenarioConfig):
    """(manifold, field) for a validated config; raises ConfigError on bad definitions."""
    try:
        M = cfg.manifold.build()
    except (ValueError, ParseError) as exc:
        raise ConfigError("manifold", str(exc)) from None
    try:
        u = cfg.field.build(M.dim)
    except (ValueError, KeyError, TypeError, ParseError) as exc:
        raise ConfigError("field", str(exc)) from None
    return M, u


def run_scenario(cfg: ScenarioConfig, threads: int = 1, seed: Optional[int] = None):
    """Run every check in declared order; returns (exit code, report dict)."""
    M, u = build(cfg)
    opts = _options(cfg, seed)
    grid = cfg.grid.radii()
    if threads > 1 and len(cfg.checks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(lambda s: _check_entry(s, u, M, grid, opts), cfg.checks))
    else:
        entries = [_check_entry(s, u, M, grid, opts) for s in cfg.checks]
    report = {
        "scenario": cfg.name,
        "manifold": M.describe(),
        "field": u.describe(),
        "grid": [float(grid[0]), float(grid[-1]), int(grid.size)],
        "seed": opts.seed,
        "checks": entries,
        "metadata": {"format": REPORT_FORMAT},
    }
    verdicts = [e["verdict"] for e in entries]
    if "error" in verdicts:
        code = EXIT_ERROR
    elif harness.FAILS in verdicts:
        code = EXIT_FAILS
    else:
        code = EXIT_OK
    return code, report


def profile_csv(cfg: ScenarioConfig) -> str:
    """CSV of the spherical-mean profile on the config grid (origin row first)."""
    M, u = build(cfg)
    opts = _options(cfg, None)
    prof = symmetrize(u, M, cfg.grid.radii(), opts.rule(M))
    buf = io.StringIO()
    prof.to_csv(buf)
    return buf.getvalue()


def list_catalog() -> str:
    lines = ["manifolds:"]
    lines += [f"  {k:<12} {MANIFOLDS[k]}" for k in sorted(MANIFOLDS)]
    lines.append("fields:")
    for name in sorted(CATALOG):
        entry = CATALOG[name]
        flags = catalog_field(name, 2).flags()
        on = [k.replace("_", "-") for k in sorted(flags) if flags[k]]
        params = ", ".join(f"{k}={v:g}" for k, v in sorted(entry["params"].items()))
        lines.append(f"  {name:<20} {entry['doc']}" + (f" ({params})" if params else "")
                     + (f" [{', '.join(on)}]" if on else ""))
    lines.append("checks:")
    for cid in sorted(CHECKS):
        hyps, stmt, cite = CHECKS[cid]
        lines.append(f"  {cid:<18} {stmt}")
        lines.append(f"  {'':<18} cites: {cite}; requires: {hyps}")
    lines.append("scenarios:")
    lines += [f"  {s}" for s in builtin_scenarios()]
    return "\n".join(lines) + "\n"


# --- entry point -------------------------------------------------------------


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="modelsym", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    run_p = sub.add_parser("run", help="run a scenario file or built-in scenario")
    run_p.add_argument("config")
    run_p.add_argument("--report", help="report path ('-' for stdout)")
    run_p.add_argument("--csv", help="also write the profile CSV here")
    run_p.add_argument("--threads", type=int, default=1)
    run_p.add_argument("--seed", type=int)
    sub.add_parser("list", help="list manifolds, fields, checks and built-in scenarios")
    prof_p = sub.add_parser("profile", help="write the spherical-mean profile as CSV")
    prof_p.add_argument("config")
    prof_p.add_argument("--csv", help="output path ('-' for stdout)")
    args = ap.parse_args(argv)

    if args.cmd == "list":
        sys.stdout.write(list_catalog())
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.cmd == "profile":
            _write(args.csv or cfg.outputs.csv_path, profile_csv(cfg))
            return EXIT_OK
        if args.threads < 1:
            raise ConfigError("--threads", "must be at least 1")
        code, report = run_scenario(cfg, threads=args.threads, seed=args.seed)
        _write(args.report or cfg.outputs.report_path, dumps_report(report))
        csv_path = args.csv or cfg.outputs.csv_path
        if csv_path:
            _write(csv_path, profile_csv(cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for e in report["checks"]:
        if e["verdict"] == "error":
            print(f"error in check {e['id']}: {e['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
