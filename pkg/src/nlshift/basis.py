"""B-spline bases and the tensor-product design matrices of the two stages.

The first-stage design is linear by default (intercept, shares, covariates).
The second-stage design interacts a treatment spline with a control-variable
spline via a row-wise Kronecker product and appends the covariates linearly,
so its x-derivative is zero on the covariate block.

Out-of-range points are clamped to the boundary and the basis is continued
linearly with the boundary derivative; fitted functions therefore
extrapolate linearly outside the training support.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .dataset import PanelDataset
from .errors import DegenerateKnots
from .linalg import pivoted_rank

__all__ = [
    "SplineSpec",
    "PlacedSpline",
    "TensorBasis",
    "K1Structure",
    "K2Structure",
    "place_knots",
    "eval_bspline",
    "build_k1",
    "build_k2",
    "d_dx_k2",
]


@dataclass(frozen=True)
class SplineSpec:
    """Declarative description of one univariate spline basis."""

    degree: int = 3
    n_knots: int = 4
    knot_rule: Literal["quantile", "uniform"] = "quantile"
    include_intercept: bool = False

    def __post_init__(self):
        if self.degree not in (1, 2, 3):
            raise ValueError(f"degree must be 1, 2, or 3, got {self.degree}")
        if self.n_knots < 0:
            raise ValueError("n_knots must be >= 0")
        if self.knot_rule not in ("quantile", "uniform"):
            raise ValueError(f"unknown knot rule {self.knot_rule!r}")

    @property
    def dim(self) -> int:
        """Column count: degree + interior knots + 1, plus optional intercept."""
        return self.degree + self.n_knots + 1 + int(self.include_intercept)

    @classmethod
    def from_dict(cls, d: dict) -> "SplineSpec":
        return cls(
            degree=int(d.get("degree", 3)),
            n_knots=int(d.get("knots", d.get("n_knots", 4))),
            knot_rule=d.get("rule", d.get("knot_rule", "quantile")),
            include_intercept=bool(d.get("include_intercept", False)),
        )


@dataclass(frozen=True)
class PlacedSpline:
    """A spline spec with concrete breakpoints, ready for evaluation."""

    spec: SplineSpec
    breaks: tuple[float, ...]  # lo, interior..., hi

    @property
    def lo(self) -> float:
        return self.breaks[0]

    @property
    def hi(self) -> float:
        return self.breaks[-1]

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def knot_vector(self) -> np.ndarray:
        m = self.spec.degree
        b = np.asarray(self.breaks, dtype=float)
        return np.concatenate([np.full(m, b[0]), b, np.full(m, b[-1])])

    def design(self, t: np.ndarray, deriv: int = 0, extrapolate: bool = True) -> np.ndarray:
        """Evaluate the basis (or its first derivative) at the given points."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tc = np.clip(t, self.lo, self.hi)
        m = self.spec.degree
        if deriv == 0:
            rows = _bspline_design(self.knot_vector, m, tc, deriv=0)
            if extrapolate:
                off = t - tc
                if np.any(off != 0):
                    drows = _bspline_design(self.knot_vector, m, tc, deriv=1)
                    rows = rows + off[:, None] * drows
        elif deriv == 1:
            rows = _bspline_design(self.knot_vector, m, tc, deriv=1)
        else:
            raise ValueError("only deriv 0 or 1 supported")
        if self.spec.include_intercept:
            ones = np.ones((len(t), 1)) if deriv == 0 else np.zeros((len(t), 1))
            rows = np.hstack([ones, rows])
        return rows


def place_knots(spec: SplineSpec, sample: np.ndarray) -> PlacedSpline:
    """Place boundary and interior knots on a training sample.

    Interior knots sit at equally spaced quantiles (or uniformly); collapsed
    placements raise :class:`DegenerateKnots`.
    """
    sample = np.asarray(sample, dtype=float)
    lo, hi = float(np.min(sample)), float(np.max(sample))
    if not hi > lo:
        raise DegenerateKnots("sample has zero range")
    k = spec.n_knots
    if k == 0:
        interior = np.empty(0)
    elif spec.knot_rule == "quantile":
        probs = np.arange(1, k + 1) / (k + 1)
        interior = np.quantile(sample, probs)
    else:
        interior = np.linspace(lo, hi, k + 2)[1:-1]
    breaks = np.concatenate([[lo], interior, [hi]])
    if np.any(np.diff(breaks) <= 0):
        raise DegenerateKnots(f"knot placement collapsed: {breaks}")
    return PlacedSpline(spec=spec, breaks=tuple(breaks))


def eval_bspline(spec: SplineSpec, knots: np.ndarray, t: float) -> np.ndarray:
    """Basis row at a scalar point, given breakpoints (lo, interior..., hi)."""
    placed = PlacedSpline(spec=spec, breaks=tuple(np.asarray(knots, dtype=float)))
    if np.any(np.diff(placed.breaks) <= 0):
        raise DegenerateKnots(f"breakpoints not strictly increasing: {knots}")
    return placed.design(np.array([t]))[0]


def _find_spans(tvec: np.ndarray, m: int, x: np.ndarray) -> np.ndarray:
    # span i satisfies tvec[i] <= x < tvec[i+1]; right boundary maps inward
    nb = len(tvec) - m - 1
    spans = np.searchsorted(tvec, x, side="right") - 1
    return np.clip(spans, m, nb - 1)


def _nonzero_basis(tvec: np.ndarray, m: int, x: np.ndarray, spans: np.ndarray) -> np.ndarray:
    """The m+1 basis functions that are nonzero at each point (Cox-de Boor)."""
    npts = len(x)
    n_funs = m + 1
    vals = np.zeros((npts, n_funs))
    vals[:, 0] = 1.0
    left = np.zeros((npts, n_funs))
    right = np.zeros((npts, n_funs))
    for j in range(1, n_funs):
        left[:, j] = x - tvec[spans + 1 - j]
        right[:, j] = tvec[spans + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = np.where(denom != 0, vals[:, r] / np.where(denom == 0, 1.0, denom), 0.0)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    return vals


def _bspline_design(tvec: np.ndarray, m: int, x: np.ndarray, deriv: int = 0) -> np.ndarray:
    """Dense design matrix of the full basis (or first derivative) at x."""
    x = np.asarray(x, dtype=float)
    nb = len(tvec) - m - 1
    spans = _find_spans(tvec, m, x)
    out = np.zeros((len(x), nb))
    rows = np.arange(len(x))[:, None]
    if deriv == 0:
        vals = _nonzero_basis(tvec, m, x, spans)
        cols = spans[:, None] - m + np.arange(m + 1)[None, :]
        out[rows, cols] = vals
        return out
    if m == 0:
        return out
    low = _nonzero_basis(tvec, m - 1, x, spans)  # funs spans-m+1 .. spans, degree m-1
    dvals = np.zeros((len(x), m + 1))
    for r in range(m + 1):
        k = spans - m + r
        term = np.zeros(len(x))
        if r >= 1:
            d1 = tvec[k + m] - tvec[k]
            term += np.where(d1 != 0, low[:, r - 1] / np.where(d1 == 0, 1.0, d1), 0.0)
        if r <= m - 1:
            d2 = tvec[k + m + 1] - tvec[k + 1]
            term -= np.where(d2 != 0, low[:, r] / np.where(d2 == 0, 1.0, d2), 0.0)
        dvals[:, r] = m * term
    cols = spans[:, None] - m + np.arange(m + 1)[None, :]
    out[rows, cols] = dvals
    return out


@dataclass(frozen=True)
class K1Structure:
    """First-stage design layout: intercept, share block, covariate block."""

    kind: Literal["linear", "spline"]
    n_sectors: int
    n_covariates: int
    share_splines: tuple[PlacedSpline, ...] = ()

    @property
    def n_columns(self) -> int:
        if self.kind == "linear":
            return 1 + self.n_sectors + self.n_covariates
        return 1 + sum(s.dim - 1 for s in self.share_splines) + self.n_covariates

    def rows(self, w: np.ndarray, d: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(w)
        d = np.atleast_2d(d) if d.size else np.empty((w.shape[0], 0))
        ones = np.ones((w.shape[0], 1))
        if self.kind == "linear":
            return np.hstack([ones, w, d])
        # each share block drops its first column: the block sums to one, so
        # the dropped function is recovered from the intercept
        blocks = [ones]
        for j, spl in enumerate(self.share_splines):
            blocks.append(spl.design(w[:, j])[:, 1:])
        blocks.append(d)
        return np.hstack(blocks)


@dataclass(frozen=True)
class K2Structure:
    """Second-stage design layout: (x-spline ⊗ v-spline) then linear covariates."""

    x_spline: PlacedSpline
    v_spline: PlacedSpline
    n_covariates: int

    @property
    def n_tensor(self) -> int:
        return self.x_spline.dim * self.v_spline.dim

    @property
    def n_columns(self) -> int:
        return self.n_tensor + self.n_covariates

    @property
    def depends_on_x(self) -> np.ndarray:
        mask = np.zeros(self.n_columns, dtype=bool)
        mask[: self.n_tensor] = True
        return mask

    def rows(self, x: np.ndarray, d: np.ndarray, v: np.ndarray) -> np.ndarray:
        qx = self.x_spline.design(np.atleast_1d(x))
        qv = self.v_spline.design(np.atleast_1d(v))
        tensor = (qx[:, :, None] * qv[:, None, :]).reshape(len(qx), -1)
        d = np.atleast_2d(d) if d.size else np.empty((len(qx), 0))
        return np.hstack([tensor, d])

    def rows_dx(self, x: np.ndarray, d: np.ndarray, v: np.ndarray) -> np.ndarray:
        dqx = self.x_spline.design(np.atleast_1d(x), deriv=1)
        qv = self.v_spline.design(np.atleast_1d(v))
        tensor = (dqx[:, :, None] * qv[:, None, :]).reshape(len(dqx), -1)
        return np.hstack([tensor, np.zeros((len(dqx), self.n_covariates))])


@dataclass(frozen=True)
class TensorBasis:
    """An evaluated design matrix plus the record of how it factorizes."""

    columns: np.ndarray
    structure: K1Structure | K2Structure
    boundary: tuple[tuple[float, float], ...]
    flagged_redundant: tuple[int, ...] = ()


def build_k1(panel: PanelDataset, share_spline: SplineSpec | None = None) -> TensorBasis:
    """First-stage design: [1, W, D] by default, spline-expanded shares on request.

    Dependent columns are flagged here but never dropped; the quantile solver
    owns the exclusion.
    """
    if share_spline is None:
        structure = K1Structure(kind="linear", n_sectors=panel.n_sectors, n_covariates=panel.n_covariates)
    else:
        splines = tuple(place_knots(share_spline, panel.w[:, j]) for j in range(panel.n_sectors))
        structure = K1Structure(
            kind="spline",
            n_sectors=panel.n_sectors,
            n_covariates=panel.n_covariates,
            share_splines=splines,
        )
    columns = structure.rows(panel.w, panel.d)
    _, dropped = pivoted_rank(columns)
    bounds = tuple((float(panel.w[:, j].min()), float(panel.w[:, j].max())) for j in range(panel.n_sectors))
    return TensorBasis(columns=columns, structure=structure, boundary=bounds, flagged_redundant=tuple(int(i) for i in dropped))


def build_k2(
    x: np.ndarray,
    d: np.ndarray,
    v: np.ndarray,
    qx: SplineSpec,
    qv: SplineSpec,
) -> TensorBasis:
    """Second-stage design at the training points.

    The tensor block carries the single global intercept through the
    partition of unity, so no explicit constant column is added.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    d = np.asarray(d, dtype=float)
    if d.ndim == 1:
        d = d.reshape(len(x), -1) if d.size else np.empty((len(x), 0))
    x_spline = place_knots(qx, x)
    v_spline = place_knots(qv, v)
    structure = K2Structure(x_spline=x_spline, v_spline=v_spline, n_covariates=d.shape[1])
    columns = structure.rows(x, d, v)
    boundary = ((x_spline.lo, x_spline.hi), (v_spline.lo, v_spline.hi))
    # an all-zero column means an empty region of the (x, v) rectangle
    zero_cols = np.flatnonzero(np.max(np.abs(columns), axis=0) == 0.0)
    return TensorBasis(
        columns=columns,
        structure=structure,
        boundary=boundary,
        flagged_redundant=tuple(int(i) for i in zero_cols),
    )


def d_dx_k2(basis: TensorBasis, x: np.ndarray, d: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Analytic ∂/∂x of the second-stage design rows; covariate block is zero."""
    if not isinstance(basis.structure, K2Structure):
        raise TypeError("d_dx_k2 requires a second-stage tensor basis")
    d = np.asarray(d, dtype=float)
    if d.ndim == 1:
        d = d.reshape(len(np.atleast_1d(x)), -1) if d.size else np.empty((len(np.atleast_1d(x)), 0))
    return basis.structure.rows_dx(x, d, v)
