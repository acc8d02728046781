"""Second estimation stage: least squares of the outcome on the tensor basis.

The fitted conditional-mean surface and its analytic x-derivative are the
inputs for every target parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import K2Structure, SplineSpec, TensorBasis, build_k2
from .control import ControlValues
from .dataset import PanelDataset
from .linalg import PivotedLstsq

__all__ = ["StructuralFit", "fit_structural", "m_hat", "m_x_hat"]


@dataclass
class StructuralFit:
    """OLS solution of the outcome on the second-stage design."""

    pi2_hat: np.ndarray
    structure: K2Structure
    dropped_cols: tuple[int, ...]
    residual_ss: float
    pivot_mismatch: bool = False

    @property
    def x_spline(self):
        return self.structure.x_spline


def fit_structural(
    panel: PanelDataset,
    v_hat: ControlValues,
    qx: SplineSpec,
    qv: SplineSpec,
    weights: np.ndarray | None = None,
    keep_cols: np.ndarray | None = None,
    basis: TensorBasis | None = None,
) -> StructuralFit:
    """Weighted least squares of Y on the (x ⊗ v, D) design.

    ``keep_cols`` pins the retained-column set (used by bootstrap replicates
    so coefficient vectors stay conformable); a replicate whose own pivoting
    disagrees is flagged through ``pivot_mismatch``.
    """
    if basis is None:
        basis = build_k2(panel.x, panel.d, v_hat.v_hat, qx, qv)
    design = basis.columns
    y = panel.y
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, dtype=float))
        design = design * sw[:, None]
        y = y * sw
    solver = PivotedLstsq(design, keep=keep_cols)
    coef = solver.solve(y)
    resid = y - design @ coef
    return StructuralFit(
        pi2_hat=coef,
        structure=basis.structure,
        dropped_cols=tuple(int(i) for i in solver.dropped),
        residual_ss=float(resid @ resid),
        pivot_mismatch=solver.pivot_mismatch,
    )


def m_hat(fit: StructuralFit, x, d, v) -> np.ndarray | float:
    """Fitted conditional mean at (x, d, v); linear beyond the boundary."""
    scalar = np.isscalar(x) and np.isscalar(v)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    d = np.asarray(d, dtype=float)
    if d.ndim == 1 and fit.structure.n_covariates:
        d = np.broadcast_to(d, (len(x), len(d)))
    rows = fit.structure.rows(x, d, v)
    vals = rows @ fit.pi2_hat
    return float(vals[0]) if scalar else vals


def m_x_hat(fit: StructuralFit, x, d, v) -> np.ndarray | float:
    """Analytic x-derivative of the fitted mean; covariates contribute zero."""
    scalar = np.isscalar(x) and np.isscalar(v)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    d = np.asarray(d, dtype=float)
    if d.ndim == 1 and fit.structure.n_covariates:
        d = np.broadcast_to(d, (len(x), len(d)))
    rows = fit.structure.rows_dx(x, d, v)
    vals = rows @ fit.pi2_hat
    return float(vals[0]) if scalar else vals
