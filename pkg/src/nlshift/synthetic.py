"""Synthetic data generators satisfying the model's assumptions.

Four canonical designs, all with scalar unobservable eta entering the
treatment equation strictly monotonically and a rank variable entering the
outcome equation through an additive normal disturbance. ``V`` denotes the
normal CDF of eta, which is the population control variable.

linear_gaussian (J sectors, p covariates):
    W_ij ~ U(0,2) iid, shift_j = 2/J, Z = sum_j shift_j W_ij  (E[Z]=2)
    X = x0 + xz*Z + xd*sum(D) + sx*eta
    Y = y0 + yx*X + yd*sum(D) + yv*V + sy*e
    m(x,d,v) = y0 + yx*x + yd*sum(d) + yv*v ; ASF slope yx, LAR/AD = yx.
    The sector fixture M_t = 1 + shift, M_{t-1} = 1, L = 1 makes the
    factual sector shock reproduce the shift vector, so tariff
    counterfactuals have the closed form gamma(phi) = yx*(f-1)*sum_j M_tj/L_j
    with f = (1+phi)^(1-kappa), using E[W_ij] = 1.

heteroskedastic_qr (scalar share):
    w ~ U(0,4), X = x0 + xz*w + (s0 + s1*w)*eta, Y = y0 + yx*X + yv*V + sy*e
    Conditional quantiles of X are linear in (1,w) with v-varying slopes.

quadratic (scalar share, skewed instrument):
    w ~ 8*Beta(2,5), Z = w, X = (Z - E[Z]) + sx*eta  (E[X] = 0)
    Y = X^2 + yv*V + sy*e ; LAR(x) = 2x, AD = 0, ASF(x) = x^2 + yv/2.
    The outcome derivative 2X is heterogeneous, so the 2SLS estimand
    mu3(Z)/var(Z) differs from the Average Derivative.

sign_flip_first_stage (scalar share):
    w ~ 4*Beta(2,5), Z = w, X = (Z-2)^2 + sx*eta, Y = X^2 + yv*V + sy*e
    dX/dz = 2(z-2) changes sign at z = 2, so the 2SLS weights take
    negative values; the skewed instrument keeps cov(X, Z) away from zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dataset import PanelDataset, SectorPanel
from .errors import InvalidSpec

__all__ = ["DgpSpec", "LatentRecord", "GeneratedData", "generate", "KINDS"]

KINDS = ("linear_gaussian", "heteroskedastic_qr", "quadratic", "sign_flip_first_stage")

_DEFAULTS: dict[str, dict[str, float]] = {
    "linear_gaussian": dict(x0=0.0, xz=1.0, xd=0.3, sx=0.45, y0=1.0, yx=2.0, yd=0.5, yv=1.0, sy=0.1),
    "heteroskedastic_qr": dict(x0=1.0, xz=2.0, s0=0.5, s1=0.2, y0=1.0, yx=1.0, yv=1.0, sy=0.25),
    "quadratic": dict(sx=0.5, yv=1.0, sy=0.1),
    "sign_flip_first_stage": dict(sx=1.0, yv=1.0, sy=0.1),
}


@dataclass(frozen=True)
class DgpSpec:
    """A frozen synthetic design: kind, sizes, coefficients, seed."""

    kind: str
    n: int
    j: int = 1
    p: int = 0
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown DGP kind {self.kind!r}")
        if self.n < 2:
            raise InvalidSpec("need n >= 2")
        if self.kind != "linear_gaussian" and (self.j != 1 or self.p != 0):
            raise InvalidSpec(f"{self.kind} is defined for a scalar share and no covariates")
        merged = dict(_DEFAULTS[self.kind])
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        self._validate_monotonicity()

    def _validate_monotonicity(self):
        p = self.params
        if self.kind == "heteroskedastic_qr":
            # scale must stay strictly positive over the share support [0,4]
            if p["s0"] <= 0 or p["s0"] + 4.0 * p["s1"] <= 0:
                raise InvalidSpec("treatment noise scale must be strictly positive on the support")
        else:
            if p["sx"] <= 0:
                raise InvalidSpec("treatment noise scale must be strictly positive")

    @property
    def shift(self) -> np.ndarray:
        if self.kind == "linear_gaussian":
            return np.full(self.j, 2.0 / self.j)
        return np.ones(1)

    def z_mean(self) -> float:
        if self.kind == "quadratic":
            return 8.0 * 2.0 / 7.0  # 8 * Beta(2,5) mean
        if self.kind == "sign_flip_first_stage":
            return 4.0 * 2.0 / 7.0
        return 2.0

    def z_pdf(self, z: np.ndarray) -> np.ndarray:
        """Density of the shift-share instrument (scalar-share kinds only)."""
        if self.kind == "quadratic":
            return stats.beta.pdf(np.asarray(z) / 8.0, 2, 5) / 8.0
        if self.kind == "sign_flip_first_stage":
            return stats.beta.pdf(np.asarray(z) / 4.0, 2, 5) / 4.0
        if self.kind == "linear_gaussian" and self.j == 1:
            return stats.uniform.pdf(np.asarray(z), 0.0, 4.0)
        if self.kind == "heteroskedastic_qr":
            return stats.uniform.pdf(np.asarray(z), 0.0, 4.0)
        raise InvalidSpec("instrument density is closed-form only for a scalar share")

    def z_support(self) -> tuple[float, float]:
        if self.kind == "quadratic":
            return 0.0, 8.0
        return 0.0, 4.0

    # structural functions -------------------------------------------------
    def h1(self, z: np.ndarray, d: np.ndarray, eta: np.ndarray) -> np.ndarray:
        p = self.params
        dsum = d.sum(axis=-1) if np.ndim(d) == 2 and d.shape[-1] else 0.0
        if self.kind == "linear_gaussian":
            return p["x0"] + p["xz"] * z + p["xd"] * dsum + p["sx"] * eta
        if self.kind == "heteroskedastic_qr":
            return p["x0"] + p["xz"] * z + (p["s0"] + p["s1"] * z) * eta
        if self.kind == "quadratic":
            return (z - self.z_mean()) + p["sx"] * eta
        return (z - 2.0) ** 2 + p["sx"] * eta

    def dh1_dz(self, z: np.ndarray, eta: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind == "linear_gaussian":
            return np.broadcast_to(p["xz"], np.broadcast_shapes(np.shape(z), np.shape(eta))).astype(float)
        if self.kind == "heteroskedastic_qr":
            return p["xz"] + p["s1"] * np.asarray(eta) * np.ones_like(np.asarray(z, dtype=float))
        if self.kind == "quadratic":
            return np.ones(np.broadcast_shapes(np.shape(z), np.shape(eta)))
        return 2.0 * (np.asarray(z, dtype=float) - 2.0) * np.ones_like(np.asarray(eta, dtype=float))

    def h2(self, x: np.ndarray, d: np.ndarray, v: np.ndarray, e: np.ndarray) -> np.ndarray:
        p = self.params
        dsum = d.sum(axis=-1) if np.ndim(d) == 2 and d.shape[-1] else 0.0
        if self.kind == "linear_gaussian":
            return p["y0"] + p["yx"] * x + p["yd"] * dsum + p["yv"] * v + p["sy"] * e
        if self.kind == "heteroskedastic_qr":
            return p["y0"] + p["yx"] * x + p["yv"] * v + p["sy"] * e
        return x**2 + p["yv"] * v + p["sy"] * e

    def dh2_dx(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind in ("linear_gaussian", "heteroskedastic_qr"):
            return np.full_like(np.asarray(x, dtype=float), p["yx"])
        return 2.0 * np.asarray(x, dtype=float)

    # closed-form targets ---------------------------------------------------
    def m_true(self, x: np.ndarray, dsum: np.ndarray | float, v: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind == "linear_gaussian":
            return p["y0"] + p["yx"] * np.asarray(x) + p["yd"] * dsum + p["yv"] * np.asarray(v)
        if self.kind == "heteroskedastic_qr":
            return p["y0"] + p["yx"] * np.asarray(x) + p["yv"] * np.asarray(v)
        return np.asarray(x) ** 2 + p["yv"] * np.asarray(v)

    def asf_true(self, x: np.ndarray) -> np.ndarray:
        return self.m_true(x, 0.0, 0.5)

    def lar_true(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind in ("linear_gaussian", "heteroskedastic_qr"):
            return np.full_like(np.asarray(x, dtype=float), p["yx"])
        return 2.0 * np.asarray(x, dtype=float)

    def ad_true(self) -> float:
        p = self.params
        if self.kind in ("linear_gaussian", "heteroskedastic_qr"):
            return p["yx"]
        if self.kind == "quadratic":
            return 0.0  # 2 E[X] with E[X] = 0
        # sign_flip: 2 E[(Z-2)^2] with Z ~ 4*Beta(2,5): 2*(var + (mean-2)^2)
        return 2.0 * (20.0 / 49.0 + 36.0 / 49.0)

    def sector_fixture(self, shares: np.ndarray) -> SectorPanel:
        """Sector panel consistent with the linear design's shift vector."""
        if self.kind != "linear_gaussian":
            raise InvalidSpec("the sector fixture is defined for the linear design")
        shift = self.shift
        return SectorPanel(m_t=1.0 + shift, m_tm1=np.ones(self.j), l_t=np.ones(self.j), shares=shares)

    def pe_tariff_true(self, phi: float, kappa: float = 1.19) -> float:
        """Closed-form tariff policy effect for the linear design."""
        if self.kind != "linear_gaussian":
            raise InvalidSpec("closed-form tariff effect is defined for the linear design")
        p = self.params
        factor = (1.0 + phi) ** (1.0 - kappa)
        m_t = 1.0 + self.shift
        # E[ell] = sum_j E[W_j] (factor*M_tj - 1), E[X] = x0 + xz*sum(shift), E[W_j] = 1
        e_ell = float(np.sum(factor * m_t - 1.0))
        e_x = p["x0"] + p["xz"] * float(np.sum(self.shift))
        return p["yx"] * (e_ell - e_x)

    def pe_shift_true(self, delta: float) -> float:
        """Policy effect of the shift map x -> x + delta."""
        p = self.params
        if self.kind in ("linear_gaussian", "heteroskedastic_qr"):
            return p["yx"] * delta
        # E[(X+delta)^2 - X^2] = 2 delta E[X] + delta^2
        return 2.0 * delta * self._ex() + delta**2

    def _ex(self) -> float:
        if self.kind == "quadratic":
            return 0.0
        if self.kind == "sign_flip_first_stage":
            return 8.0 / 7.0  # E[(Z-2)^2], Z ~ 4*Beta(2,5)
        raise InvalidSpec("no closed-form treatment mean for this kind")


@dataclass(frozen=True)
class LatentRecord:
    """Unobservables kept aside for oracle checks; never fed to estimators."""

    eta: np.ndarray
    v_true: np.ndarray
    e: np.ndarray
    u_true: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class GeneratedData:
    panel: PanelDataset
    latent: LatentRecord
    spec: DgpSpec
    sector: SectorPanel | None = None


def _draw_primitives(spec: DgpSpec, rng: np.random.Generator, n: int, antithetic: bool = False):
    """Draw (W, D, eta, e); shares independent of the errors given D."""
    if antithetic:
        half = (n + 1) // 2
        uw = rng.uniform(size=(half, spec.j))
        uw = np.vstack([uw, 1.0 - uw])[:n]
        ue = rng.uniform(size=half)
        ue = np.concatenate([ue, 1.0 - ue])[:n]
        uy = rng.uniform(size=half)
        uy = np.concatenate([uy, 1.0 - uy])[:n]
        ud = rng.uniform(size=(half, spec.p))
        ud = np.vstack([ud, 1.0 - ud])[:n] if spec.p else np.empty((n, 0))
        eta = stats.norm.ppf(np.clip(ue, 1e-12, 1 - 1e-12))
        e = stats.norm.ppf(np.clip(uy, 1e-12, 1 - 1e-12))
        d = stats.norm.ppf(np.clip(ud, 1e-12, 1 - 1e-12)) if spec.p else np.empty((n, 0))
    else:
        uw = rng.uniform(size=(n, spec.j))
        eta = rng.standard_normal(n)
        e = rng.standard_normal(n)
        d = rng.standard_normal((n, spec.p)) if spec.p else np.empty((n, 0))
    if spec.kind == "linear_gaussian":
        w = 2.0 * uw
    elif spec.kind == "quadratic":
        w = 8.0 * stats.beta.ppf(np.clip(uw, 1e-14, 1 - 1e-14), 2, 5)
    elif spec.kind == "sign_flip_first_stage":
        w = 4.0 * stats.beta.ppf(np.clip(uw, 1e-14, 1 - 1e-14), 2, 5)
    else:
        w = 4.0 * uw
    return w, d, eta, e


def generate(spec: DgpSpec) -> GeneratedData:
    """Draw one panel plus its sealed latent record."""
    rng = np.random.default_rng(spec.seed)
    w, d, eta, e = _draw_primitives(spec, rng, spec.n)
    z = w @ spec.shift
    x = spec.h1(z, d, eta)
    v_true = stats.norm.cdf(eta)
    u_true = stats.norm.cdf(e)
    y = spec.h2(x, d, v_true, e)
    sector = None
    if spec.kind == "linear_gaussian":
        sector = spec.sector_fixture(w)
    panel = PanelDataset(
        y=y,
        x=x,
        w=w,
        d=d,
        period_label=f"{spec.kind}-seed{spec.seed}",
        z=z,
        share_names=tuple(f"share_{j}" for j in range(spec.j)),
        covariate_names=tuple(f"d_{k}" for k in range(spec.p)),
    )
    latent = LatentRecord(eta=eta, v_true=v_true, e=e, u_true=u_true, z=z)
    return GeneratedData(panel=panel, latent=latent, spec=spec, sector=sector)
