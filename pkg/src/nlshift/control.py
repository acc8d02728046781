"""First estimation stage: quantile-fit grid and control-variable values.

The conditional distribution of the treatment given shares and covariates is
recovered by integrating, over a fine quantile mesh, the indicator that the
fitted conditional quantile lies below the evaluation point. Trimming by eps
on both tails avoids estimating extreme quantiles.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .basis import TensorBasis
from .dataset import PanelDataset
from .errors import NoConvergence
from .qreg import QrFit, SolverOptions, solve_check_grid

__all__ = ["QuantileFitGrid", "ControlValues", "level_mesh", "fit_grid", "estimate_cdf", "control_values"]


def level_mesh(eps: float, m1: int) -> np.ndarray:
    """Uniform mesh {eps = v_1 < ... < v_M = 1-eps}."""
    if not 0.0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 0.5), got {eps}")
    if m1 < 2:
        raise ValueError(f"need at least 2 mesh points, got {m1}")
    return np.linspace(eps, 1.0 - eps, m1)


@dataclass
class QuantileFitGrid:
    """Coefficient vectors over the quantile mesh, with trimming constant."""

    eps: float
    levels: np.ndarray
    coefs: np.ndarray  # (M, k) coefficient matrix
    objectives: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    kept: np.ndarray
    dropped: np.ndarray
    design_hash: str = ""

    @property
    def m1(self) -> int:
        return len(self.levels)

    @property
    def fits(self) -> list[QrFit]:
        out = []
        for m, v in enumerate(self.levels):
            status = "converged" if self.converged[m] else "max_iter"
            out.append(
                QrFit(
                    v=float(v),
                    coef=self.coefs[m],
                    objective=float(self.objectives[m]),
                    iterations=int(self.iterations[m]),
                    status=status,
                )
            )
        return out

    def quantile_weights(self) -> np.ndarray:
        """Trapezoid weights on the indicator integral: half mass at endpoints.

        Valid for any strictly increasing mesh; the weights sum to the mesh
        span, so the estimated CDF stays inside [eps, 1-eps].
        """
        gaps = np.diff(self.levels)
        w = np.empty(self.m1)
        w[0] = gaps[0] / 2.0
        w[-1] = gaps[-1] / 2.0
        w[1:-1] = (gaps[:-1] + gaps[1:]) / 2.0
        return w


def _hash_design(design: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(design).tobytes()).hexdigest()[:16]


def custom_levels(levels) -> np.ndarray:
    """Validate a user-supplied mesh: increasing, symmetric trimmed endpoints."""
    levels = np.asarray(levels, dtype=float)
    if len(levels) < 2 or np.any(np.diff(levels) <= 0):
        raise ValueError("mesh levels must be strictly increasing with at least 2 points")
    if not 0.0 < levels[0] < 0.5:
        raise ValueError("the lowest mesh level is the trimming constant and must lie in (0, 0.5)")
    if abs(levels[0] - (1.0 - levels[-1])) > 1e-12:
        raise ValueError("mesh endpoints must be symmetric: lowest level = 1 - highest level")
    return levels


def fit_grid(
    panel: PanelDataset,
    k1: TensorBasis,
    eps: float = 0.01,
    m1: int = 599,
    weights: np.ndarray | None = None,
    opts: SolverOptions | None = None,
    strict: bool = True,
    levels: np.ndarray | None = None,
) -> QuantileFitGrid:
    """Estimate the quantile-coefficient grid for the treatment equation.

    ``levels`` replaces the uniform mesh with a custom one (its endpoints
    then define the trimming). Raises :class:`NoConvergence` listing the
    offending levels when any mesh point fails its optimality check
    (disable with ``strict=False``).
    """
    if levels is not None:
        levels = custom_levels(levels)
        eps = float(levels[0])
    else:
        levels = level_mesh(eps, m1)
    wm = None if weights is None else np.asarray(weights, dtype=float)[None, :]
    sol = solve_check_grid(k1.columns, panel.x, levels, weight_matrix=wm, opts=opts)
    grid = QuantileFitGrid(
        eps=eps,
        levels=levels,
        coefs=sol.coefs[0],
        objectives=sol.objectives[0],
        iterations=sol.iterations[0],
        converged=sol.converged[0],
        kept=sol.kept,
        dropped=sol.dropped,
        design_hash=_hash_design(k1.columns),
    )
    if strict and not np.all(grid.converged):
        bad = levels[~grid.converged]
        raise NoConvergence(f"quantile fits failed optimality at levels {np.round(bad, 4).tolist()}")
    return grid


def estimate_cdf(grid: QuantileFitGrid, k1_row: np.ndarray, x: float) -> float:
    """Trimmed conditional CDF at one point: eps + integral of the indicator."""
    fitted = grid.coefs @ np.asarray(k1_row, dtype=float)
    w = grid.quantile_weights()
    return float(grid.eps + w @ (fitted <= x))


def control_values(grid: QuantileFitGrid, panel: PanelDataset, k1: TensorBasis) -> "ControlValues":
    """Evaluate the estimated CDF at each observation's own treatment value."""
    fitted = k1.columns @ grid.coefs.T  # (n, M)
    w = grid.quantile_weights()
    v_hat = grid.eps + (fitted <= panel.x[:, None]) @ w
    return ControlValues(v_hat=v_hat, eps=grid.eps)


@dataclass(frozen=True)
class ControlValues:
    """Control-variable values, trimmed to [eps, 1-eps]."""

    v_hat: np.ndarray
    eps: float

    def __post_init__(self):
        v = np.asarray(self.v_hat, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("control values must be finite")
        if np.any(v < self.eps - 1e-12) or np.any(v > 1.0 - self.eps + 1e-12):
            raise ValueError("control values outside [eps, 1-eps]")
        object.__setattr__(self, "v_hat", v)

    def __len__(self) -> int:
        return len(self.v_hat)
