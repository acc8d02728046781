"""Rank-revealing least squares used by both regression stages."""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = ["pivoted_rank", "PivotedLstsq"]


def pivoted_rank(design: np.ndarray, rtol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Numerical column rank via QR with column pivoting.

    Returns ``(kept, dropped)`` as original-column index arrays. ``dropped``
    follows pivot order, so the drop set is deterministic for a given matrix.
    """
    design = np.asarray(design, dtype=float)
    if design.shape[1] == 0:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    r, piv = scipy.linalg.qr(design, mode="r", pivoting=True)
    diag = np.abs(np.diag(r[: design.shape[1]]))
    if diag.size == 0 or diag[0] == 0:
        return np.empty(0, dtype=int), np.sort(piv)
    rank = int(np.sum(diag > rtol * diag[0]))
    kept = np.sort(piv[:rank])
    dropped = np.sort(piv[rank:])
    return kept, dropped


class PivotedLstsq:
    """Least squares through a pivoted QR of the (row-weighted) design.

    Dependent columns get coefficient zero; their indices are recorded so a
    caller can reuse the same retained set on reweighted replicates.
    """

    def __init__(self, design: np.ndarray, rtol: float = 1e-8, keep: np.ndarray | None = None):
        design = np.asarray(design, dtype=float)
        self.n_cols = design.shape[1]
        if keep is None:
            self.kept, self.dropped = pivoted_rank(design, rtol=rtol)
        else:
            keep = np.asarray(keep, dtype=int)
            subrank, subdrop = pivoted_rank(design[:, keep], rtol=rtol)
            self.kept = keep[subrank]
            mask = np.ones(self.n_cols, dtype=bool)
            mask[self.kept] = False
            self.dropped = np.flatnonzero(mask)
            self.pivot_mismatch = len(subdrop) > 0
        if not hasattr(self, "pivot_mismatch"):
            self.pivot_mismatch = False
        self._q, self._r = np.linalg.qr(design[:, self.kept], mode="reduced")

    def solve(self, response: np.ndarray) -> np.ndarray:
        coef = np.zeros(self.n_cols)
        if len(self.kept):
            coef[self.kept] = scipy.linalg.solve_triangular(self._r, self._q.T @ response)
        return coef
