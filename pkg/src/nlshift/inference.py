"""Weighted-bootstrap inference: standard errors and uniform confidence bands.

Each replicate reruns the whole three-stage pipeline with i.i.d. standard
exponential observation weights. Standard errors come from the interquartile
range of the replicate draws; uniform bands scale them by the empirical
quantile of the per-replicate maximal t-statistic.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from .control import QuantileFitGrid, custom_levels, level_mesh
from .dataset import PanelDataset
from .errors import DegenerateSE, NlshiftError, TooFewDraws
from .pipeline import PipelineResult, PipelineSettings, run_pipeline, stages_after_grid
from .qreg import SolverOptions, solve_check_grid
from .targets import EstimateSet

__all__ = [
    "BootstrapRun",
    "BootstrapBands",
    "TargetBand",
    "replicate_rng",
    "run_bootstrap",
    "se_iqr",
    "uniform_bands",
]

IQR_TO_SD = 1.349  # normal-reference scaling of the interquartile range


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, replicate): order-independent."""
    key = np.array([seed % 2**64, replicate % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class BootstrapRun:
    """Replicate draws of every target, plus the point estimate they center on."""

    b: int
    seed: int
    point: PipelineResult
    draws: list[EstimateSet]
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_success(self) -> int:
        return len(self.draws)

    @property
    def flagged(self) -> bool:
        return self.n_success < 0.9 * self.b


def run_bootstrap(
    panel: PanelDataset,
    settings: PipelineSettings,
    b: int = 199,
    seed: int = 0,
    unit_weights: bool = False,
    meta: dict | None = None,
    threads: int = 1,
) -> BootstrapRun:
    """Draw exponential weights and rerun the pipeline for each replicate.

    ``unit_weights`` forces every weight to one (test hook: each replicate
    then reproduces the point estimate). Replicate-level failures are
    recorded and only fatal when they exceed 10% of the requested draws.
    """
    if b < 1:
        raise ValueError("need at least one replicate")
    point = run_pipeline(panel, settings, meta=meta)
    n = panel.n

    if unit_weights:
        weight_matrix = np.ones((b, n))
    else:
        weight_matrix = np.empty((b, n))
        for r in range(b):
            weight_matrix[r] = replicate_rng(seed, r).standard_exponential(n)

    levels = custom_levels(settings.levels) if settings.levels else level_mesh(settings.eps, settings.m1)
    sol = solve_check_grid(
        point.k1.columns,
        panel.x,
        levels,
        weight_matrix=weight_matrix,
        opts=settings.solver if unit_weights else SolverOptions.warm_replicate(),
        keep=point.grid_fit.kept,
        init=point.grid_fit.coefs,
    )

    keep_cols = np.flatnonzero(
        ~np.isin(np.arange(point.fit.structure.n_columns), np.asarray(point.fit.dropped_cols, dtype=int))
    )

    def one_replicate(r: int) -> EstimateSet:
        grid_r = QuantileFitGrid(
            eps=float(levels[0]),
            levels=levels,
            coefs=sol.coefs[r],
            objectives=sol.objectives[r],
            iterations=sol.iterations[r],
            converged=sol.converged[r],
            kept=sol.kept,
            dropped=sol.dropped,
            design_hash=point.grid_fit.design_hash,
        )
        est, _, fit_r = stages_after_grid(
            panel,
            grid_r,
            point.k1,
            settings,
            point.eval_grid,
            weights=weight_matrix[r],
            keep_cols=keep_cols,
        )
        est.meta = {"replicate": r, "pivot_mismatch": fit_r.pivot_mismatch}
        return est

    # fixed reduction order keeps results independent of the pool size
    results: list[EstimateSet | None] = [None] * b
    errors: dict[int, str] = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(one_replicate, r): r for r in range(b)}
            for fut in as_completed(futures):
                r = futures[fut]
                try:
                    results[r] = fut.result()
                except NlshiftError as exc:  # pragma: no cover - replicate-level guard
                    errors[r] = str(exc)
    else:
        for r in range(b):
            try:
                results[r] = one_replicate(r)
            except NlshiftError as exc:  # pragma: no cover - replicate-level guard
                errors[r] = str(exc)
    draws = [est for est in results if est is not None]
    failures = sorted(errors.items())
    run = BootstrapRun(b=b, seed=seed, point=point, draws=draws, failures=failures)
    if len(failures) > 0.1 * b:
        raise NlshiftError(f"{len(failures)} of {b} bootstrap replicates failed: {failures[:5]}")
    return run


def se_iqr(draws: np.ndarray) -> np.ndarray | float:
    """Interquartile range over replicates divided by 1.349.

    Quantiles interpolate linearly between order statistics; fewer than four
    draws raise :class:`TooFewDraws`.
    """
    arr = np.asarray(draws, dtype=float)
    if arr.shape[0] < 4:
        raise TooFewDraws(f"need at least 4 draws, got {arr.shape[0]}")
    q75, q25 = np.quantile(arr, [0.75, 0.25], axis=0)
    out = (q75 - q25) / IQR_TO_SD
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class TargetBand:
    """Uniform confidence band for one target (scalars are length-1 curves)."""

    name: str
    x: np.ndarray
    value: np.ndarray
    se: np.ndarray
    k_alpha: float
    lower: np.ndarray
    upper: np.ndarray
    excluded: np.ndarray  # grid points with degenerate se, left out of the sup

    def to_dict(self) -> dict:
        return {
            "x": np.asarray(self.x, dtype=float).tolist(),
            "value": np.asarray(self.value, dtype=float).tolist(),
            "se": np.asarray(self.se, dtype=float).tolist(),
            "k_alpha": float(self.k_alpha),
            "lower": np.asarray(self.lower, dtype=float).tolist(),
            "upper": np.asarray(self.upper, dtype=float).tolist(),
            "excluded": np.asarray(self.excluded, dtype=bool).astype(int).tolist(),
        }


@dataclass
class BootstrapBands:
    """Per-target standard errors, sup-t critical values, and (1-alpha) bands."""

    alpha: float
    targets: dict[str, TargetBand]

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "targets": {k: v.to_dict() for k, v in self.targets.items()}}


def _band_for(name: str, x: np.ndarray, point: np.ndarray, draw_matrix: np.ndarray, alpha: float) -> TargetBand:
    point = np.atleast_1d(np.asarray(point, dtype=float))
    se = np.atleast_1d(se_iqr(draw_matrix))
    excluded = se <= 0.0
    if np.all(excluded):
        raise DegenerateSE(f"all grid points of target {name!r} have zero bootstrap spread")
    if np.any(excluded):
        warnings.warn(f"target {name!r}: {int(excluded.sum())} grid points with zero se excluded from the sup")
    t_stats = np.abs(draw_matrix - point[None, :])[:, ~excluded] / se[None, ~excluded]
    sup_t = t_stats.max(axis=1)
    k_alpha = float(np.quantile(sup_t, 1.0 - alpha))
    lower = point - k_alpha * se
    upper = point + k_alpha * se
    return TargetBand(
        name=name, x=np.atleast_1d(x), value=point, se=se, k_alpha=k_alpha,
        lower=lower, upper=upper, excluded=excluded,
    )


def uniform_bands(run: BootstrapRun, point: EstimateSet | None = None, alpha: float = 0.1) -> BootstrapBands:
    """Maximal-t uniform bands for every estimated target."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0,1)")
    point = point or run.point.estimates
    targets: dict[str, TargetBand] = {}

    asf_draws = np.stack([np.asarray(d.asf) for d in run.draws])
    targets["asf"] = _band_for("asf", point.grid, point.asf, asf_draws, alpha)
    lar_draws = np.stack([np.asarray(d.lar) for d in run.draws])
    targets["lar"] = _band_for("lar", point.grid, point.lar, lar_draws, alpha)
    ad_draws = np.array([[d.ad] for d in run.draws])
    targets["ad"] = _band_for("ad", np.array([0.0]), np.array([point.ad]), ad_draws, alpha)
    if point.pe:
        phis = np.array([p for p, _ in point.pe])
        pe_point = np.array([g for _, g in point.pe])
        pe_draws = np.stack([np.array([g for _, g in d.pe]) for d in run.draws])
        targets["pe"] = _band_for("pe", phis, pe_point, pe_draws, alpha)
    return BootstrapBands(alpha=alpha, targets=targets)
