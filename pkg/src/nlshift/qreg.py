"""Check-function minimization for one quantile level or a whole mesh.

The solver runs iteratively reweighted least squares on a smoothed check
function, shrinking the smoothing parameter geometrically, then polishes the
result by snapping to the nearest exact-interpolation vertex and, for the
rare stragglers, finishing with exact vertex-exchange descent. Optimality is
verified through the subgradient condition, with the tolerance band implied
by zero-residual observations.

Everything is batched: a single call solves (weight vector x level) problems
jointly with per-problem convergence tracking, which is what makes the
weighted bootstrap affordable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import RankDeficient
from .linalg import pivoted_rank

__all__ = ["SolverOptions", "QrFit", "check_loss", "fit_quantile", "solve_check_grid"]


@dataclass(frozen=True)
class SolverOptions:
    delta0: float = 1e-2
    delta_min: float = 1e-8
    max_iter: int = 500
    tol: float = 1e-10
    coarse_tol: float = 1e-9  # stage tolerance before the final smoothing level
    fast32: bool = False  # run the smoothed iterations in float32 (polish stays float64)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverOptions":
        return cls(
            delta0=float(d.get("delta0", 1e-2)),
            delta_min=float(d.get("delta_min", 1e-8)),
            max_iter=int(d.get("max_iter", 500)),
            tol=float(d.get("tol", 1e-10)),
            coarse_tol=float(d.get("coarse_tol", 1e-9)),
        )

    @classmethod
    def warm_replicate(cls) -> "SolverOptions":
        # short schedule for bootstrap replicates started at the point solution;
        # the vertex polish and exchange steps still enforce exact optimality
        return cls(delta0=1e-4, delta_min=1e-7, max_iter=80, tol=1e-8, coarse_tol=1e-7, fast32=True)


@dataclass
class QrFit:
    """Solution record for one quantile level."""

    v: float
    coef: np.ndarray
    objective: float
    iterations: int
    status: str  # converged | max_iter | degenerate


def check_loss(v: float, residuals: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Sum of the asymmetric absolute loss (v - 1{a<0}) * a."""
    if not 0.0 < v < 1.0:
        raise ValueError(f"quantile level must lie in (0,1), got {v}")
    r = np.asarray(residuals, dtype=float)
    rho = (v - (r < 0.0)) * r
    if weights is None:
        return float(np.sum(rho))
    return float(np.sum(np.asarray(weights, dtype=float) * rho))


@dataclass
class GridSolution:
    """Batched solver output over (weight vector, level) problems."""

    coefs: np.ndarray  # (P, L, k_full)
    objectives: np.ndarray  # (P, L)
    iterations: np.ndarray  # (P, L)
    converged: np.ndarray  # (P, L) bool
    kept: np.ndarray
    dropped: np.ndarray


def _delta_schedule(opts: SolverOptions) -> np.ndarray:
    if opts.delta_min >= opts.delta0:
        return np.array([opts.delta0])
    n = int(np.ceil(np.log10(opts.delta0 / opts.delta_min))) + 1
    return np.geomspace(opts.delta0, opts.delta_min, n)


def solve_check_grid(
    design: np.ndarray,
    response: np.ndarray,
    levels: np.ndarray,
    weight_matrix: np.ndarray | None = None,
    opts: SolverOptions | None = None,
    keep: np.ndarray | None = None,
    init: np.ndarray | None = None,
    chunk_elems: int = 5_000_000,
) -> GridSolution:
    """Solve the check-function problem for every (weight row, level) pair.

    ``weight_matrix`` has one weight vector per row (defaults to a single
    all-ones row). ``init`` of shape (L, k) warm-starts every weight row from
    a reference solution. Chunks over weight rows bound peak memory.
    """
    opts = opts or SolverOptions()
    g_full = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    if np.any((levels <= 0.0) | (levels >= 1.0)):
        raise ValueError("quantile levels must lie strictly inside (0,1)")
    n, k_full = g_full.shape
    if len(y) != n:
        raise ValueError("design and response row counts disagree")

    if keep is None:
        keep, dropped = pivoted_rank(g_full)
    else:
        keep = np.asarray(keep, dtype=int)
        mask = np.ones(k_full, dtype=bool)
        mask[keep] = False
        dropped = np.flatnonzero(mask)
    if len(keep) == 0:
        raise RankDeficient(list(range(k_full)), "design has no independent columns")
    g = g_full[:, keep]

    if weight_matrix is None:
        weights = np.ones((1, n))
    else:
        weights = np.atleast_2d(np.asarray(weight_matrix, dtype=float))
        if weights.shape[1] != n:
            raise ValueError("weight rows must match the sample size")
        if np.any(weights < 0) or np.any(weights.sum(axis=1) <= 0):
            raise ValueError("weights must be nonnegative with positive sum")
    n_p, n_l = weights.shape[0], len(levels)

    coefs = np.zeros((n_p, n_l, k_full))
    objectives = np.empty((n_p, n_l))
    iterations = np.empty((n_p, n_l), dtype=int)
    converged = np.empty((n_p, n_l), dtype=bool)

    init_k = None
    if init is not None:
        init = np.asarray(init, dtype=float)
        init_k = init[:, keep] if init.shape[1] == k_full else init

    chunk = max(1, int(chunk_elems // max(1, n_l * n)))
    for start in range(0, n_p, chunk):
        w_chunk = weights[start : start + chunk]
        beta, obj, iters, conv = _solve_flat(g, y, levels, w_chunk, opts, init_k)
        pc = w_chunk.shape[0]
        coefs[start : start + pc][:, :, keep] = beta.reshape(pc, n_l, -1)
        objectives[start : start + pc] = obj.reshape(pc, n_l)
        iterations[start : start + pc] = iters.reshape(pc, n_l)
        converged[start : start + pc] = conv.reshape(pc, n_l)

    return GridSolution(
        coefs=coefs,
        objectives=objectives,
        iterations=iterations,
        converged=converged,
        kept=keep,
        dropped=dropped,
    )


def _solve_flat(g, y, levels, weights, opts, init_k):
    """Flattened (weight row x level) solve with per-problem convergence."""
    n, k = g.shape
    n_p, n_l = weights.shape[0], len(levels)
    q = n_p * n_l
    vq = np.tile(levels, n_p)[:, None]  # (Q, 1)
    wq = np.repeat(weights, n_l, axis=0)  # (Q, n)
    g_outer = (g[:, :, None] * g[:, None, :]).reshape(n, k * k)
    b_const = (2.0 * vq - 1.0) * (wq @ g)  # (Q, k)

    if init_k is not None:
        beta = np.tile(init_k, (n_p, 1))
    else:
        a0 = np.einsum("pn,nj,nk->pjk", weights, g, g)
        b0 = np.einsum("pn,n,nk->pk", weights, y, g)
        beta0 = np.linalg.solve(a0 + _ridge(a0), b0[..., None])[..., 0]
        beta = np.repeat(beta0, n_l, axis=0)

    # smoothed iterations may run in float32: they only localize the vertex,
    # the polish below restores full precision
    dt = np.float32 if opts.fast32 else np.float64
    gf = g.astype(dt)
    gtf = np.ascontiguousarray(gf.T)
    yf = y.astype(dt)[None, :]
    wf = wq.astype(dt)
    g_outer_f = g_outer.astype(dt)
    b_const_f = b_const.astype(dt)
    beta = beta.astype(dt)
    resid = yf - beta @ gtf
    iters = np.zeros(q, dtype=int)
    schedule = _delta_schedule(opts)
    stage_cap = max(10, opts.max_iter // len(schedule))

    for si, delta in enumerate(schedule):
        stage_tol = opts.tol if si == len(schedule) - 1 else max(opts.tol, opts.coarse_tol)
        if opts.fast32:
            stage_tol = max(stage_tol, 2e-6)
        active = np.arange(q)
        for _ in range(stage_cap):
            if len(active) == 0:
                break
            w_a = wf[active]
            r_a = resid[active]
            u = r_a * r_a
            u += dt(delta * delta)
            np.sqrt(u, out=u)
            np.divide(w_a, u, out=u)
            a = (u @ g_outer_f).reshape(len(active), k, k).astype(np.float64)
            a += _ridge(a)
            u *= yf
            rhs = u @ gf + b_const_f[active]
            beta_a = np.linalg.solve(a, rhs[..., None].astype(np.float64))[..., 0].astype(dt)
            resid[active] = yf - beta_a @ gtf
            prev = beta[active]
            beta[active] = beta_a
            iters[active] += 1
            rel = np.max(np.abs(beta_a - prev), axis=1) / (1.0 + np.max(np.abs(beta_a), axis=1))
            still = (rel >= stage_tol) & (iters[active] < opts.max_iter)
            active = active[still]

    beta = beta.astype(np.float64)
    resid = y[None, :] - beta @ g.T
    obj = np.sum(wq * (vq - (resid < 0.0)) * resid, axis=1)

    # polish: snap to the exact-interpolation vertex from the k
    # smallest-residual rows whenever it does not increase the loss
    if n > k:
        idx = np.argpartition(np.abs(resid), k - 1, axis=-1)[:, :k]
    else:
        idx = np.broadcast_to(np.arange(n), (q, n))
    g_sub = g[idx]  # (Q, k, k)
    y_sub = y[idx]
    with np.errstate(all="ignore"):
        cand = np.einsum("qkj,qk->qj", np.linalg.pinv(g_sub), y_sub)
    r_cand = y[None, :] - cand @ g.T
    cand_obj = np.sum(wq * (vq - (r_cand < 0.0)) * r_cand, axis=1)
    take = np.isfinite(cand_obj) & (cand_obj <= obj + 1e-12 * (1.0 + np.abs(obj)))
    beta[take] = cand[take]
    resid[take] = r_cand[take]
    obj[take] = cand_obj[take]

    scale = _scale(y)
    conv = _subgradient_ok(g, resid, wq, vq, scale)

    # rare slow problems: finish with exact vertex-exchange descent
    if not np.all(conv):
        for iq in np.flatnonzero(~conv):
            beta[iq] = _exchange_descent(g, y, float(vq[iq, 0]), wq[iq], beta[iq])
            resid[iq] = y - g @ beta[iq]
            obj[iq] = check_loss(float(vq[iq, 0]), resid[iq], wq[iq])
        conv = _subgradient_ok(g, resid, wq, vq, scale)
    return beta, obj, iters, conv


def _ridge(a: np.ndarray) -> np.ndarray:
    diag_mean = np.mean(np.diagonal(a, axis1=-2, axis2=-1), axis=-1)
    return 1e-12 * np.maximum(diag_mean, 1e-300)[..., None, None] * np.eye(a.shape[-1])


def _scale(y: np.ndarray) -> float:
    med = np.median(y)
    return float(max(1.0, np.median(np.abs(y - med))))


def _subgradient_ok(g, resid, wq, vq, scale, rtol: float = 1e-10):
    """Check 0 lies inside the weighted subgradient interval of every column.

    Observations inside the zero band contribute the interval between
    (v-1)*g and v*g; the rest contribute psi * g exactly. The band is tight:
    it is meant for points sitting exactly on an interpolation vertex.
    """
    zero_tol = 1e-8 * scale
    at_zero = np.abs(resid) <= zero_tol
    psi = (vq - (resid < 0.0)) * ~at_zero
    sgrad = (wq * psi) @ g
    gp = np.maximum(g, 0.0)
    gn = np.minimum(g, 0.0)
    wz = wq * at_zero
    zp = wz @ gp
    zn = wz @ gn
    lo = sgrad + (vq - 1.0) * zp + vq * zn
    hi = sgrad + vq * zp + (vq - 1.0) * zn
    slack = rtol * (wq @ np.abs(g) + 1.0)
    return np.all((lo <= slack) & (hi >= -slack), axis=-1)


def _pick_basis(g, r, k):
    """Select k independent rows closest to zero residual."""
    order = np.argsort(np.abs(r))
    act = order[:k]
    try:
        return act, np.linalg.inv(g[act])
    except np.linalg.LinAlgError:
        pass
    pool = order[: min(len(r), max(4 * k, k + 8))]
    _, _, piv = scipy.linalg.qr(g[pool].T, pivoting=True)
    act = pool[piv[:k]]
    try:
        return act, np.linalg.inv(g[act])
    except np.linalg.LinAlgError:
        return None, None


def _exchange_descent(g, y, v, w, coef, max_steps: int = 300):
    """Exact vertex-to-vertex descent on the check loss (simplex steps).

    Phase one snaps to the interpolation vertex of the nearest independent
    rows; each subsequent step walks a basic edge direction with negative
    one-sided derivative to the breakpoint where the directional derivative
    turns nonnegative. A vertex with no descending edge is a global minimum
    of the piecewise-linear loss (barring degenerate ties).
    """
    n, k = g.shape
    start_coef = coef.copy()
    start_loss = check_loss(v, y - g @ coef, w)
    act, gainv = _pick_basis(g, y - g @ coef, k)
    if gainv is None:
        return start_coef
    coef = gainv @ y[act]
    zero_tol = 1e-9 * (1.0 + float(np.max(np.abs(y))))

    for _ in range(max_steps):
        r = y - g @ coef
        at_zero = np.abs(r) <= zero_tol
        psi = (v - (r < 0.0)) * ~at_zero
        base_grad = (w * psi) @ g  # rows off the zero band

        # one-sided derivatives of all 2k basic edge directions at once
        c_all = g @ gainv  # column j: residual change rate of direction +e_j
        bg = base_grad @ gainv
        wz = w[at_zero]
        cz = c_all[at_zero]
        zb_plus = (1.0 - v) * (wz @ np.maximum(cz, 0.0)) - v * (wz @ np.minimum(cz, 0.0))
        zb_minus = -(1.0 - v) * (wz @ np.minimum(cz, 0.0)) + v * (wz @ np.maximum(cz, 0.0))
        d_all = np.concatenate([-bg + zb_plus, bg + zb_minus])
        slack = 1e-9 * (1.0 + float(np.abs(d_all).max()))

        improved = False
        for pick in np.argsort(d_all):
            if d_all[pick] >= -slack:
                break
            j, sgn = (pick, 1.0) if pick < k else (pick - k, -1.0)
            u = sgn * gainv[:, j]
            c = sgn * c_all[:, j]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_hit = np.where((~at_zero) & (np.abs(c) > 1e-14), r / c, np.inf)
            pos = np.flatnonzero((t_hit > 0.0) & np.isfinite(t_hit))
            if len(pos) == 0:
                continue
            ordered = pos[np.argsort(t_hit[pos])]
            gain = np.cumsum(w[ordered] * np.abs(c[ordered])) + d_all[pick]
            if not np.any(gain >= 0.0):
                continue
            stop = int(np.argmax(gain >= 0.0))
            t_star = t_hit[ordered[stop]]
            new_coef = coef + t_star * u
            if check_loss(v, y - g @ new_coef, w) < check_loss(v, r, w) - 1e-12:
                # pivot: the crossing row enters the basis in place of j
                enter = ordered[stop]
                new_act = act.copy()
                new_act[j] = enter
                try:
                    new_inv = np.linalg.inv(g[new_act])
                except np.linalg.LinAlgError:
                    new_act, new_inv = _pick_basis(g, y - g @ new_coef, k)
                    if new_inv is None:
                        return new_coef
                act, gainv = new_act, new_inv
                coef = gainv @ y[act]
                improved = True
                break
        if not improved:
            break
    if check_loss(v, y - g @ coef, w) <= start_loss + 1e-12:
        return coef
    return start_coef


def fit_quantile(
    design: np.ndarray,
    response: np.ndarray,
    v: float,
    opts: SolverOptions | None = None,
    weights: np.ndarray | None = None,
    keep: np.ndarray | None = None,
) -> QrFit:
    """Minimize the check loss of the response on the design at level ``v``."""
    if not 0.0 < v < 1.0:
        raise ValueError(f"quantile level must lie in (0,1), got {v}")
    wm = None if weights is None else np.asarray(weights, dtype=float)[None, :]
    sol = solve_check_grid(design, response, np.array([v]), weight_matrix=wm, opts=opts, keep=keep)
    coef = sol.coefs[0, 0]
    status = "converged" if sol.converged[0, 0] else "max_iter"
    if not np.all(np.isfinite(coef)):
        status = "degenerate"
    return QrFit(
        v=v,
        coef=coef,
        objective=float(sol.objectives[0, 0]),
        iterations=int(sol.iterations[0, 0]),
        status=status,
    )
