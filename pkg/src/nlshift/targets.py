"""Third estimation stage: the four target parameters and the tariff policy.

All estimators average the fitted surface (or its derivative) over the
observed covariates and control values; the local response curve projects the
pointwise derivatives onto the treatment spline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import ControlValues
from .dataset import PanelDataset, SectorPanel
from .errors import InvalidElasticity, RankDeficient
from .linalg import PivotedLstsq
from .structural import StructuralFit

__all__ = [
    "EvalGrid",
    "PolicyFn",
    "EstimateSet",
    "asf",
    "avg_derivative",
    "lar",
    "tariff_policy",
    "policy_effect",
    "default_phi_ladder",
]


@dataclass(frozen=True)
class EvalGrid:
    """Treatment values at which curve targets are reported."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_sample(cls, x: np.ndarray, n_points: int = 50, lo_pct: float = 5.0, hi_pct: float = 95.0) -> "EvalGrid":
        lo, hi = np.percentile(np.asarray(x, dtype=float), [lo_pct, hi_pct])
        return cls(points=np.linspace(lo, hi, n_points))

    def __len__(self) -> int:
        return len(self.points)


def default_phi_ladder() -> np.ndarray:
    """Tariff increases from 1% to 30% in 1% steps."""
    return np.round(np.arange(1, 31) * 0.01, 2)


@dataclass(frozen=True)
class PolicyFn:
    """A counterfactual treatment assignment: tariff-driven or a custom map."""

    kind: str  # "tariff" | "custom_map"
    phi: float = 0.0
    kappa: float = 1.19
    sector: SectorPanel | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("tariff", "custom_map"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "tariff":
            if self.kappa == 1.0:
                raise InvalidElasticity("substitution elasticity of exactly 1 is not allowed")
            if self.phi < 0:
                raise InvalidElasticity("tariff increase must be nonnegative")
            if self.sector is None:
                raise ValueError("tariff policy requires sector data")

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "custom_map":
            vals = np.asarray(self.values, dtype=float)
            if len(vals) != len(x):
                raise ValueError("custom policy values must match the panel length")
            return vals
        return tariff_policy(self.sector, self.phi, self.kappa)


def tariff_policy(sector: SectorPanel, phi: float, kappa: float = 1.19) -> np.ndarray:
    """Counterfactual exposure per region after a common tariff increase.

    A tariff increase of ``phi`` scales end-of-period imports by
    (1+phi)^(1-kappa) in every sector; start-of-period imports and workforce
    denominators are unchanged (partial equilibrium: domestic expenditure
    held fixed).
    """
    if kappa == 1.0:
        raise InvalidElasticity("substitution elasticity of exactly 1 is not allowed")
    if phi < 0:
        raise InvalidElasticity("tariff increase must be nonnegative")
    factor = (1.0 + phi) ** (1.0 - kappa)
    shock = (factor * sector.m_t - sector.m_tm1) / sector.l_t
    return sector.shares @ shock


def asf(fit: StructuralFit, panel: PanelDataset, v_hat: ControlValues, grid: EvalGrid,
        weights: np.ndarray | None = None) -> np.ndarray:
    """Average structural function over the grid.

    The fitted surface is linear in its basis row, so averaging rows over
    (D_i, V_i) first and evaluating once per grid point is exact.
    """
    struct = fit.structure
    qv = struct.v_spline.design(v_hat.v_hat)
    if weights is None:
        qv_bar = qv.mean(axis=0)
        d_bar = panel.d.mean(axis=0) if struct.n_covariates else np.empty(0)
    else:
        wsum = np.sum(weights)
        qv_bar = weights @ qv / wsum
        d_bar = weights @ panel.d / wsum if struct.n_covariates else np.empty(0)
    qx = struct.x_spline.design(grid.points)
    tensor = (qx[:, :, None] * qv_bar[None, None, :]).reshape(len(grid), -1)
    rows = np.hstack([tensor, np.broadcast_to(d_bar, (len(grid), struct.n_covariates))])
    return rows @ fit.pi2_hat


def avg_derivative(fit: StructuralFit, panel: PanelDataset, v_hat: ControlValues,
                   weights: np.ndarray | None = None) -> float:
    """Sample average of the fitted derivative at the observed points."""
    rows = fit.structure.rows_dx(panel.x, panel.d, v_hat.v_hat)
    vals = rows @ fit.pi2_hat
    if weights is None:
        return float(np.mean(vals))
    return float(np.sum(weights * vals) / np.sum(weights))


def lar(fit: StructuralFit, panel: PanelDataset, v_hat: ControlValues, grid: EvalGrid,
        weights: np.ndarray | None = None) -> np.ndarray:
    """Local average response: project pointwise derivatives on the x-spline.

    Uses the identical treatment spline as the second stage, so the sample
    mean of the projected curve reproduces the average derivative.
    """
    rows = fit.structure.rows_dx(panel.x, panel.d, v_hat.v_hat)
    mx = rows @ fit.pi2_hat
    qx = fit.structure.x_spline.design(panel.x)
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, dtype=float))
        solver = PivotedLstsq(qx * sw[:, None])
        coef = solver.solve(mx * sw)
    else:
        solver = PivotedLstsq(qx)
        coef = solver.solve(mx)
    if len(solver.kept) == 0:
        raise RankDeficient(list(solver.dropped), "projection design has no independent columns")
    return fit.structure.x_spline.design(grid.points) @ coef


def policy_effect(fit: StructuralFit, panel: PanelDataset, v_hat: ControlValues, ell: np.ndarray,
                  weights: np.ndarray | None = None) -> float:
    """Average outcome change from replacing the treatment with ell.

    Counterfactual treatments outside the training support use the basis'
    linear extrapolation.
    """
    ell = np.asarray(ell, dtype=float)
    if len(ell) != panel.n:
        raise ValueError("policy vector length must match the panel")
    rows = fit.structure.rows(ell, panel.d, v_hat.v_hat)
    diff = rows @ fit.pi2_hat - panel.y
    if weights is None:
        return float(np.mean(diff))
    return float(np.sum(weights * diff) / np.sum(weights))


@dataclass
class EstimateSet:
    """Point estimates for every target, with provenance."""

    grid: np.ndarray
    asf: np.ndarray
    lar: np.ndarray
    ad: float
    pe: list[tuple[float, float]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def curve(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name == "asf":
            return self.grid, self.asf
        if name == "lar":
            return self.grid, self.lar
        if name == "pe":
            return np.array([p for p, _ in self.pe]), np.array([g for _, g in self.pe])
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "schema_version": "1",
            "meta": dict(self.meta),
            "asf": {"x": self.grid.tolist(), "mu": np.asarray(self.asf).tolist()},
            "lar": {"x": self.grid.tolist(), "beta": np.asarray(self.lar).tolist()},
            "ad": float(self.ad),
            "pe": [{"phi": float(p), "gamma": float(g)} for p, g in self.pe],
        }
