"""End-to-end three-stage estimation used by the CLI and the bootstrap."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import SplineSpec, TensorBasis, build_k1
from .control import ControlValues, QuantileFitGrid, control_values, fit_grid
from .dataset import PanelDataset
from .qreg import SolverOptions
from .structural import StructuralFit, fit_structural
from .targets import EstimateSet, EvalGrid, asf, avg_derivative, lar, policy_effect

__all__ = ["PipelineSettings", "PipelineResult", "run_pipeline", "stages_after_grid"]


@dataclass(frozen=True)
class PipelineSettings:
    """Executable form of one estimation run's tuning choices."""

    qx: SplineSpec = SplineSpec(degree=3, n_knots=4)
    qv: SplineSpec = SplineSpec(degree=3, n_knots=4)
    eps: float = 0.01
    m1: int = 599
    k1_share_spline: SplineSpec | None = None
    levels: tuple[float, ...] | None = None
    grid_points: int = 50
    grid_lo_pct: float = 5.0
    grid_hi_pct: float = 95.0
    solver: SolverOptions = field(default_factory=SolverOptions)
    policies: tuple[tuple[float, np.ndarray], ...] = ()


@dataclass
class PipelineResult:
    estimates: EstimateSet
    k1: TensorBasis
    grid_fit: QuantileFitGrid
    v_hat: ControlValues
    fit: StructuralFit
    eval_grid: EvalGrid


def stages_after_grid(
    panel: PanelDataset,
    grid_fit: QuantileFitGrid,
    k1: TensorBasis,
    settings: PipelineSettings,
    eval_grid: EvalGrid,
    weights: np.ndarray | None = None,
    keep_cols: np.ndarray | None = None,
) -> tuple[EstimateSet, ControlValues, StructuralFit]:
    """Stages two and three, given an already-estimated quantile grid."""
    v_hat = control_values(grid_fit, panel, k1)
    fit = fit_structural(panel, v_hat, settings.qx, settings.qv, weights=weights, keep_cols=keep_cols)
    asf_vals = asf(fit, panel, v_hat, eval_grid, weights=weights)
    lar_vals = lar(fit, panel, v_hat, eval_grid, weights=weights)
    ad = avg_derivative(fit, panel, v_hat, weights=weights)
    pe = [(float(phi), policy_effect(fit, panel, v_hat, ell, weights=weights)) for phi, ell in settings.policies]
    est = EstimateSet(grid=eval_grid.points, asf=asf_vals, lar=lar_vals, ad=ad, pe=pe)
    return est, v_hat, fit


def run_pipeline(
    panel: PanelDataset,
    settings: PipelineSettings,
    weights: np.ndarray | None = None,
    meta: dict | None = None,
) -> PipelineResult:
    """Run the full three-stage procedure on one panel."""
    k1 = build_k1(panel, settings.k1_share_spline)
    grid_fit = fit_grid(
        panel,
        k1,
        eps=settings.eps,
        m1=settings.m1,
        weights=weights,
        opts=settings.solver,
        strict=False,
        levels=np.asarray(settings.levels) if settings.levels else None,
    )
    eval_grid = EvalGrid.from_sample(
        panel.x, n_points=settings.grid_points, lo_pct=settings.grid_lo_pct, hi_pct=settings.grid_hi_pct
    )
    est, v_hat, fit = stages_after_grid(panel, grid_fit, k1, settings, eval_grid, weights=weights)
    est.meta = dict(meta or {})
    est.meta.setdefault("n", panel.n)
    est.meta.setdefault("period_label", panel.period_label)
    return PipelineResult(estimates=est, k1=k1, grid_fit=grid_fit, v_hat=v_hat, fit=fit, eval_grid=eval_grid)
