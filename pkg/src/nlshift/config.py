"""Run configuration: the executable form of one estimation specification."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import SplineSpec
from .control import custom_levels
from .dataset import PanelSchema
from .errors import ConfigError
from .pipeline import PipelineSettings
from .qreg import SolverOptions

__all__ = ["RunConfig", "load_config", "config_hash"]

_DEFAULT_SPLINE = {"degree": 3, "knots": 4, "rule": "quantile"}


@dataclass
class RunConfig:
    """Validated CLI configuration."""

    data_path: Path
    schema: PanelSchema
    qx: SplineSpec
    qv: SplineSpec
    fs_z: SplineSpec
    eps: float
    m1: int
    levels: tuple[float, ...] | None
    solver: SolverOptions
    grid_points: int
    grid_lo_pct: float
    grid_hi_pct: float
    b: int
    alpha: float
    seed: int
    threads: int
    out_dir: Path
    kappa: float
    phi_ladder: tuple[float, ...]
    sector_path: Path | None
    sector_columns: dict
    custom_policy_path: Path | None
    export_grid: bool
    raw: dict = field(default_factory=dict, repr=False)

    def settings(self, policies: tuple = ()) -> PipelineSettings:
        return PipelineSettings(
            qx=self.qx,
            qv=self.qv,
            eps=self.eps,
            m1=self.m1,
            levels=self.levels,
            grid_points=self.grid_points,
            grid_lo_pct=self.grid_lo_pct,
            grid_hi_pct=self.grid_hi_pct,
            solver=self.solver,
            policies=policies,
        )

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _get(d: dict, path: str, default=None, required: bool = False):
    cur = d
    parts = path.split(".")
    for i, key in enumerate(parts):
        if not isinstance(cur, dict) or key not in cur:
            if required:
                raise ConfigError(path, "missing required field")
            return default
        cur = cur[key]
    return cur


def _spline(d: dict, path: str) -> SplineSpec:
    raw = _get(d, path, default=dict(_DEFAULT_SPLINE)) or dict(_DEFAULT_SPLINE)
    try:
        return SplineSpec.from_dict(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a JSON run configuration.

    ``overrides`` (CLI flags) replace top-level scalar fields before
    validation so the hash reflects the effective run.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        cur = raw
        parts = key.split(".")
        for part in parts[:-1]:
            cur = cur.setdefault(part, {})
        cur[parts[-1]] = value

    data_path = _get(raw, "data.path", required=True)
    cols = _get(raw, "data.columns", required=True)
    for role in ("y", "x", "shares_prefix"):
        if role not in cols:
            raise ConfigError(f"data.columns.{role}", "missing required field")
    schema = PanelSchema.from_dict(cols)

    eps = float(_get(raw, "first_stage.eps", 0.01))
    if not 0.0 < eps < 0.5:
        raise ConfigError("first_stage.eps", f"must lie in (0, 0.5), got {eps}")
    m1 = int(_get(raw, "first_stage.m1", 599))
    if m1 < 2:
        raise ConfigError("first_stage.m1", f"must be >= 2, got {m1}")
    mesh = _get(raw, "first_stage.levels")
    if mesh is not None:
        try:
            mesh = tuple(custom_levels(mesh))
        except ValueError as exc:
            raise ConfigError("first_stage.levels", str(exc)) from None

    b = int(_get(raw, "inference.b", 199))
    alpha = float(_get(raw, "inference.alpha", 0.1))
    if not 0.0 < alpha < 1.0:
        raise ConfigError("inference.alpha", f"must lie in (0,1), got {alpha}")

    grid_points = int(_get(raw, "grid.points", 50))
    lo_pct = float(_get(raw, "grid.lo_pct", 5.0))
    hi_pct = float(_get(raw, "grid.hi_pct", 95.0))
    if grid_points < 2 or not 0 <= lo_pct < hi_pct <= 100:
        raise ConfigError("grid", "need points >= 2 and 0 <= lo_pct < hi_pct <= 100")

    ladder = _get(raw, "policy.phi_ladder")
    if ladder is None:
        ladder = tuple(np.round(np.arange(1, 31) * 0.01, 2))
    else:
        ladder = tuple(float(v) for v in ladder)
        if any(v < 0 for v in ladder):
            raise ConfigError("policy.phi_ladder", "tariff increases must be nonnegative")
    kappa = float(_get(raw, "policy.kappa", 1.19))
    if kappa == 1.0:
        raise ConfigError("policy.kappa", "substitution elasticity of exactly 1 is not allowed")
    sector_path = _get(raw, "policy.sector.path")
    sector_columns = _get(raw, "policy.sector.columns", {}) or {}
    custom_policy = _get(raw, "policy.custom_map_path")

    return RunConfig(
        data_path=Path(data_path),
        schema=schema,
        qx=_spline(raw, "basis.qx"),
        qv=_spline(raw, "basis.qv"),
        fs_z=_spline(raw, "basis.first_stage_z"),
        eps=eps,
        m1=m1,
        levels=mesh,
        solver=SolverOptions.from_dict(_get(raw, "solver", {}) or {}),
        grid_points=grid_points,
        grid_lo_pct=lo_pct,
        grid_hi_pct=hi_pct,
        b=b,
        alpha=alpha,
        seed=int(_get(raw, "seed", 0)),
        threads=int(_get(raw, "threads", 1)),
        out_dir=Path(_get(raw, "out", "results")),
        kappa=kappa,
        phi_ladder=ladder,
        sector_path=Path(sector_path) if sector_path else None,
        sector_columns=sector_columns,
        custom_policy_path=Path(custom_policy) if custom_policy else None,
        export_grid=bool(_get(raw, "export_grid", False)),
        raw=raw,
    )
