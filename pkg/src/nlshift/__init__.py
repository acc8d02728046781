"""Nonlinear treatment-effect estimation for shift-share designs."""

from .basis import SplineSpec, TensorBasis, build_k1, build_k2, d_dx_k2, eval_bspline, place_knots
from .control import ControlValues, QuantileFitGrid, control_values, estimate_cdf, fit_grid
from .dataset import PanelDataset, PanelSchema, SectorPanel, load_panel, split_periods, write_panel
from .inference import BootstrapBands, BootstrapRun, run_bootstrap, se_iqr, uniform_bands
from .qreg import QrFit, SolverOptions, check_loss, fit_quantile
from .structural import StructuralFit, fit_structural, m_hat, m_x_hat
from .targets import EstimateSet, EvalGrid, asf, avg_derivative, lar, policy_effect, tariff_policy
from .tsls import TslsFit, first_stage_effects, linear_asf, linear_pe, tsls, tsls_weight_diagnostic

__version__ = "0.1.0"

__all__ = [
    "SplineSpec",
    "TensorBasis",
    "build_k1",
    "build_k2",
    "d_dx_k2",
    "eval_bspline",
    "place_knots",
    "ControlValues",
    "QuantileFitGrid",
    "control_values",
    "estimate_cdf",
    "fit_grid",
    "PanelDataset",
    "PanelSchema",
    "SectorPanel",
    "load_panel",
    "split_periods",
    "write_panel",
    "BootstrapBands",
    "BootstrapRun",
    "run_bootstrap",
    "se_iqr",
    "uniform_bands",
    "QrFit",
    "SolverOptions",
    "check_loss",
    "fit_quantile",
    "StructuralFit",
    "fit_structural",
    "m_hat",
    "m_x_hat",
    "EstimateSet",
    "EvalGrid",
    "asf",
    "avg_derivative",
    "lar",
    "policy_effect",
    "tariff_policy",
    "TslsFit",
    "first_stage_effects",
    "linear_asf",
    "linear_pe",
    "tsls",
    "tsls_weight_diagnostic",
    "__version__",
]
