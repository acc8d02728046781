"""Linear benchmarks: 2SLS, linear ASF/policy estimators, first-stage effects.

The first-stage-effect surface estimates the derivative of the treatment
equation in the instrument at a handful of control-variable levels; a sign
change anywhere on the surface means the 2SLS weights take negative values
and the estimand loses its causal interpretation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import PlacedSpline, SplineSpec, place_knots
from .dataset import PanelDataset
from .errors import WeakDesign
from .qreg import SolverOptions, solve_check_grid
from .targets import EvalGrid

__all__ = [
    "TslsFit",
    "tsls",
    "linear_asf",
    "linear_pe",
    "FirstStageSurface",
    "first_stage_effects",
    "WeightDiagnostic",
    "tsls_weight_diagnostic",
]


@dataclass
class TslsFit:
    """Just-identified IV fit with robust (optionally cluster-robust) errors."""

    alpha_hat: np.ndarray  # intercept, treatment, covariates..., period dummies...
    se: np.ndarray
    first_stage_coef: float
    n: int
    n_covariates: int
    n_periods: int = 1
    clusters: int | None = None

    @property
    def alpha0(self) -> float:
        return float(self.alpha_hat[0])

    @property
    def alpha1(self) -> float:
        return float(self.alpha_hat[1])

    @property
    def d_coefs(self) -> np.ndarray:
        return self.alpha_hat[2 : 2 + self.n_covariates]


def _stack_pooled(panels: list[PanelDataset]):
    y = np.concatenate([p.y for p in panels])
    x = np.concatenate([p.x for p in panels])
    z = np.concatenate([p.z for p in panels])
    d = np.vstack([p.d for p in panels])
    n_each = [p.n for p in panels]
    dummies = np.zeros((sum(n_each), len(panels) - 1))
    ofs = 0
    for i, n in enumerate(n_each):
        if i > 0:
            dummies[ofs : ofs + n, i - 1] = 1.0
        ofs += n
    cluster = None
    if all(p.cluster is not None for p in panels):
        cluster = sum((list(p.cluster) for p in panels), [])
    return y, x, z, np.hstack([d, dummies]), cluster, len(panels)


def tsls(
    panels: PanelDataset | list[PanelDataset],
    pooled: bool = False,
    cluster: bool = False,
) -> TslsFit:
    """2SLS of the outcome on the treatment, instrumenting with the panel's z.

    Covariates enter both stages; pooling multiple panels adds period
    indicator columns. Clustered errors use the panel's cluster ids with the
    CR1 small-sample factor; otherwise HC1.
    """
    if isinstance(panels, PanelDataset):
        panels = [panels]
    for p in panels:
        if p.z is None:
            raise ValueError("tsls needs an instrument column on the panel")
    if pooled and len(panels) > 1:
        y, x, z, d, cl, n_periods = _stack_pooled(panels)
    else:
        if len(panels) != 1:
            raise ValueError("pass pooled=True to combine several panels")
        p = panels[0]
        y, x, z, d = p.y, p.x, p.z, p.d
        cl = list(p.cluster) if p.cluster is not None else None
        n_periods = 1
    n = len(y)
    ones = np.ones((n, 1))
    regs = np.hstack([ones, x[:, None], d])
    inst = np.hstack([ones, z[:, None], d])

    # weak-design guard: treatment/instrument covariance after projecting
    # out the exogenous block
    exog = np.hstack([ones, d])
    coef_x, *_ = np.linalg.lstsq(exog, x, rcond=None)
    coef_z, *_ = np.linalg.lstsq(exog, z, rcond=None)
    xt = x - exog @ coef_x
    zt = z - exog @ coef_z
    denom = float(zt @ xt)
    scale = float(np.linalg.norm(zt) * np.linalg.norm(xt))
    if abs(denom) < 1e-12 * max(scale, 1.0):
        raise WeakDesign("instrument-treatment covariance is numerically zero")

    a = inst.T @ regs
    alpha = np.linalg.solve(a, inst.T @ y)
    resid = y - regs @ alpha
    k = regs.shape[1]
    bread = np.linalg.inv(a)
    if cluster and cl is not None:
        ids = np.asarray(cl)
        groups = np.unique(ids)
        meat = np.zeros((k, k))
        for g in groups:
            sel = ids == g
            s = inst[sel].T @ resid[sel]
            meat += np.outer(s, s)
        g_count = len(groups)
        adj = (g_count / (g_count - 1)) * ((n - 1) / (n - k))
        cov = adj * bread @ meat @ bread.T
        clusters = g_count
    else:
        meat = (inst * (resid**2)[:, None]).T @ inst
        cov = (n / (n - k)) * bread @ meat @ bread.T
        clusters = None

    fs_coef, *_ = np.linalg.lstsq(inst, x, rcond=None)
    return TslsFit(
        alpha_hat=alpha,
        se=np.sqrt(np.diag(cov)),
        first_stage_coef=float(fs_coef[1]),
        n=n,
        n_covariates=d.shape[1] - (n_periods - 1),
        n_periods=n_periods,
        clusters=clusters,
    )


def linear_asf(fit: TslsFit, panel: PanelDataset, grid: EvalGrid) -> np.ndarray:
    """The fitted line evaluated at the grid, covariates held at their mean."""
    d_bar = panel.d.mean(axis=0) if panel.n_covariates else np.empty(0)
    return fit.alpha0 + fit.alpha1 * grid.points + float(fit.d_coefs @ d_bar)


def linear_pe(fit: TslsFit, panel: PanelDataset, ell: np.ndarray) -> float:
    """Sample average of the fitted line at the counterfactual treatment, minus the mean outcome."""
    d_bar = panel.d.mean(axis=0) if panel.n_covariates else np.empty(0)
    ell = np.asarray(ell, dtype=float)
    return float(fit.alpha0 + fit.alpha1 * ell.mean() + fit.d_coefs @ d_bar - panel.y.mean())


@dataclass
class FirstStageSurface:
    """Estimated instrument-derivative of the treatment equation on a (z, v) grid."""

    z_grid: np.ndarray
    v_levels: np.ndarray
    surface: np.ndarray  # (n_z, n_v)
    spline: PlacedSpline
    coefs: np.ndarray  # (n_v, k)
    converged: np.ndarray


def first_stage_effects(
    panel: PanelDataset,
    z: np.ndarray | None = None,
    spec: SplineSpec = SplineSpec(degree=3, n_knots=4),
    v_levels: tuple[float, ...] = (0.2, 0.5, 0.8),
    n_grid: int = 50,
    opts: SolverOptions | None = None,
) -> FirstStageSurface:
    """Quantile fits of the treatment on a spline in the instrument.

    Covariates enter linearly and contribute nothing to the z-derivative.
    """
    z = panel.z if z is None else np.asarray(z, dtype=float)
    if z is None:
        raise ValueError("no instrument available")
    spline = place_knots(spec, z)
    design = np.hstack([spline.design(z), panel.d])
    levels = np.asarray(v_levels, dtype=float)
    sol = solve_check_grid(design, panel.x, levels, opts=opts)
    grid = EvalGrid.from_sample(z, n_points=n_grid)
    dq = spline.design(grid.points, deriv=1)
    coefs = sol.coefs[0][:, : spline.dim]
    surface = dq @ coefs.T
    return FirstStageSurface(
        z_grid=grid.points,
        v_levels=levels,
        surface=surface,
        spline=spline,
        coefs=sol.coefs[0],
        converged=sol.converged[0],
    )


@dataclass
class WeightDiagnostic:
    """Negative-weight report for the 2SLS estimand."""

    not_weakly_causal: bool
    negative_share: float
    sign_changes: list  # (v_level, z where the sign flips)

    def to_dict(self) -> dict:
        return {
            "not_weakly_causal": self.not_weakly_causal,
            "negative_share": self.negative_share,
            "sign_changes": [{"v": float(v), "z": float(z)} for v, z in self.sign_changes],
        }


def tsls_weight_diagnostic(surface: FirstStageSurface, z_density: np.ndarray | None = None) -> WeightDiagnostic:
    """Flag sign changes of the first-stage effect over the (z, v) grid."""
    s = surface.surface
    tol = 1e-10 * max(1.0, float(np.abs(s).max()))
    has_pos = np.any(s > tol)
    has_neg = np.any(s < -tol)
    flag = bool(has_pos and has_neg)
    if z_density is None:
        dens = np.ones(len(surface.z_grid))
    else:
        dens = np.asarray(z_density, dtype=float)
    dens = dens / dens.sum()
    negative_share = float((dens[:, None] * (s < -tol)).sum() / s.shape[1])
    changes = []
    for j, v in enumerate(surface.v_levels):
        col = s[:, j]
        flips = np.flatnonzero(np.sign(col[:-1]) * np.sign(col[1:]) < 0)
        for i in flips:
            z0, z1 = surface.z_grid[i], surface.z_grid[i + 1]
            y0, y1 = col[i], col[i + 1]
            changes.append((float(v), float(z0 - y0 * (z1 - z0) / (y1 - y0))))
    return WeightDiagnostic(not_weakly_causal=flag, negative_share=negative_share, sign_changes=changes)
