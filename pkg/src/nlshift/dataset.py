"""Observation panels and sector-level policy inputs.

One :class:`PanelDataset` holds a single period: outcome, treatment, the
region-by-sector share matrix, and covariates. The common shock vector is
implicit per dataset, so conditioning on it means conditioning on the panel.
"""

from __future__ import annotations

import csv
import fnmatch
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import EmptyPanel, MissingColumn, NonFinite

__all__ = [
    "PanelDataset",
    "SectorPanel",
    "PanelSchema",
    "load_panel",
    "write_panel",
    "split_periods",
]


@dataclass(frozen=True)
class PanelSchema:
    """Role-to-column mapping for CSV ingestion.

    ``shares_prefix`` is a glob matched against the header to collect the J
    share columns (e.g. ``"share_*"``). Covariates are either an explicit
    list or a glob prefix; both may be empty.
    """

    y: str
    x: str
    shares_prefix: str
    covariates: tuple[str, ...] = ()
    covariates_prefix: str | None = None
    region_id: str | None = None
    period: str | None = None
    instrument: str | None = None
    cluster: str | None = None
    standardize_covariates: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "PanelSchema":
        return cls(
            y=d["y"],
            x=d["x"],
            shares_prefix=d["shares_prefix"],
            covariates=tuple(d.get("covariates", ())),
            covariates_prefix=d.get("covariates_prefix"),
            region_id=d.get("region_id"),
            period=d.get("period"),
            instrument=d.get("instrument"),
            cluster=d.get("cluster"),
            standardize_covariates=bool(d.get("standardize_covariates", False)),
        )


@dataclass(frozen=True)
class PanelDataset:
    """One period's observations. Immutable; safe to share across workers."""

    y: np.ndarray
    x: np.ndarray
    w: np.ndarray
    d: np.ndarray
    period_label: str = ""
    region_ids: tuple | None = None
    z: np.ndarray | None = None
    cluster: tuple | None = None
    period_rows: tuple | None = None
    share_names: tuple[str, ...] = ()
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        d = np.asarray(self.d, dtype=float)
        if d.ndim == 1:
            d = d.reshape(len(d), -1) if d.size else d.reshape(len(y), 0)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "d", d)
        n = len(y)
        if n < 2:
            raise EmptyPanel(f"need at least 2 rows, got {n}")
        if not (len(x) == n and w.shape[0] == n and d.shape[0] == n):
            raise ValueError("y, x, w, d row counts disagree")
        if w.shape[1] < 1:
            raise ValueError("need at least one share column")
        for name, arr in (("y", y), ("x", x), ("w", w), ("d", d)):
            if not np.all(np.isfinite(arr)):
                idx = np.argwhere(~np.isfinite(np.atleast_2d(arr)))
                raise NonFinite(int(idx[0][0]), name)
        if np.any(w < 0):
            raise ValueError("share matrix has negative entries")
        if np.var(x) <= 0:
            raise ValueError("treatment has zero sample variance; a continuous treatment is required")
        if self.region_ids is not None and len(set(self.region_ids)) != n:
            raise ValueError("duplicate region identifiers")
        for arr in (self.y, self.x, self.w, self.d):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def n_sectors(self) -> int:
        return self.w.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.d.shape[1]


@dataclass(frozen=True)
class SectorPanel:
    """Sector-level imports and workforce denominators for the tariff policy.

    ``shares`` is the region-by-sector exposure weight matrix used to
    aggregate the counterfactual sector shocks back to regions.
    """

    m_t: np.ndarray
    m_tm1: np.ndarray
    l_t: np.ndarray
    shares: np.ndarray

    def __post_init__(self):
        m_t = np.asarray(self.m_t, dtype=float)
        m_tm1 = np.asarray(self.m_tm1, dtype=float)
        l_t = np.asarray(self.l_t, dtype=float)
        shares = np.atleast_2d(np.asarray(self.shares, dtype=float))
        object.__setattr__(self, "m_t", m_t)
        object.__setattr__(self, "m_tm1", m_tm1)
        object.__setattr__(self, "l_t", l_t)
        object.__setattr__(self, "shares", shares)
        j = len(m_t)
        if not (len(m_tm1) == j and len(l_t) == j and shares.shape[1] == j):
            raise ValueError("sector dimensions disagree")
        if np.any(l_t <= 0):
            raise ValueError("workforce denominators must be strictly positive")
        if np.any(m_t < 0) or np.any(m_tm1 < 0):
            raise ValueError("imports must be nonnegative")
        if np.any(shares < 0):
            raise ValueError("shares must be nonnegative")

    @property
    def j(self) -> int:
        return len(self.m_t)

    def observed_exposure(self) -> np.ndarray:
        """Per-region exposure implied by the factual sector shocks."""
        return self.shares @ ((self.m_t - self.m_tm1) / self.l_t)


def _match_columns(header: list[str], pattern: str) -> list[str]:
    cols = [c for c in header if fnmatch.fnmatchcase(c, pattern)]
    return cols


def load_panel(path: str | Path, schema: PanelSchema) -> PanelDataset:
    """Read a CSV panel and validate it against the schema.

    Raises :class:`MissingColumn`, :class:`NonFinite`, or
    :class:`EmptyPanel` on malformed input.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    df = pd.read_csv(path, float_precision="round_trip")
    if len(df) == 0:
        raise EmptyPanel(str(path))
    header = list(df.columns)

    for role, col in (("y", schema.y), ("x", schema.x)):
        if col not in header:
            raise MissingColumn(col)
    share_cols = _match_columns(header, schema.shares_prefix)
    if not share_cols:
        raise MissingColumn(schema.shares_prefix)
    cov_cols = list(schema.covariates)
    if schema.covariates_prefix:
        cov_cols += [c for c in _match_columns(header, schema.covariates_prefix) if c not in cov_cols]
    for c in cov_cols:
        if c not in header:
            raise MissingColumn(c)
    for opt in (schema.region_id, schema.period, schema.instrument, schema.cluster):
        if opt is not None and opt not in header:
            raise MissingColumn(opt)

    def numeric(cols: list[str]) -> np.ndarray:
        block = df[cols].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
        bad = np.argwhere(~np.isfinite(block))
        if len(bad):
            r, c = bad[0]
            raise NonFinite(int(r), cols[int(c)])
        return block

    y = numeric([schema.y])[:, 0]
    x = numeric([schema.x])[:, 0]
    w = numeric(share_cols)
    d = numeric(cov_cols) if cov_cols else np.empty((len(df), 0))
    if schema.standardize_covariates and d.shape[1]:
        sd = d.std(axis=0, ddof=0)
        sd[sd == 0] = 1.0
        d = (d - d.mean(axis=0)) / sd
    z = numeric([schema.instrument])[:, 0] if schema.instrument else None
    region_ids = tuple(df[schema.region_id]) if schema.region_id else None
    cluster = tuple(df[schema.cluster]) if schema.cluster else None
    period_rows = tuple(df[schema.period]) if schema.period else None
    label = ""
    if period_rows is not None:
        uniq = sorted(set(period_rows), key=str)
        label = str(uniq[0]) if len(uniq) == 1 else "pooled"

    return PanelDataset(
        y=y,
        x=x,
        w=w,
        d=d,
        period_label=label,
        region_ids=region_ids,
        z=z,
        cluster=cluster,
        period_rows=period_rows,
        share_names=tuple(share_cols),
        covariate_names=tuple(cov_cols),
    )


def write_panel(panel: PanelDataset, path: str | Path, schema: PanelSchema) -> None:
    """Write a panel back to CSV, bit-exact for finite doubles (repr round-trip)."""
    path = Path(path)
    share_cols = list(panel.share_names) or [f"share_{j}" for j in range(panel.n_sectors)]
    cov_cols = list(panel.covariate_names) or [f"d_{k}" for k in range(panel.n_covariates)]
    header = [schema.y, schema.x] + share_cols + cov_cols
    extra: list[tuple[str, list]] = []
    if panel.region_ids is not None and schema.region_id:
        extra.append((schema.region_id, list(panel.region_ids)))
    if panel.period_rows is not None and schema.period:
        extra.append((schema.period, list(panel.period_rows)))
    if panel.z is not None and schema.instrument:
        extra.append((schema.instrument, [repr(float(v)) for v in panel.z]))
    if panel.cluster is not None and schema.cluster:
        extra.append((schema.cluster, list(panel.cluster)))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header + [name for name, _ in extra])
        for i in range(panel.n):
            row = [repr(float(panel.y[i])), repr(float(panel.x[i]))]
            row += [repr(float(v)) for v in panel.w[i]]
            row += [repr(float(v)) for v in panel.d[i]]
            row += [col[i] for _, col in extra]
            writer.writerow(row)


def split_periods(panel: PanelDataset, period_col: str | None = None) -> list[PanelDataset]:
    """Split a pooled panel into one dataset per distinct period value.

    The union of the returned rows is a permutation of the input rows.
    """
    if panel.period_rows is None:
        return [panel]
    labels = np.asarray(panel.period_rows)
    out = []
    for value in sorted(set(panel.period_rows), key=str):
        mask = labels == value
        idx = np.flatnonzero(mask)
        out.append(
            PanelDataset(
                y=panel.y[idx],
                x=panel.x[idx],
                w=panel.w[idx],
                d=panel.d[idx],
                period_label=str(value),
                region_ids=tuple(np.asarray(panel.region_ids, dtype=object)[idx]) if panel.region_ids else None,
                z=panel.z[idx] if panel.z is not None else None,
                cluster=tuple(np.asarray(panel.cluster, dtype=object)[idx]) if panel.cluster else None,
                period_rows=tuple(np.asarray(panel.period_rows, dtype=object)[idx]),
                share_names=panel.share_names,
                covariate_names=panel.covariate_names,
            )
        )
    return out
