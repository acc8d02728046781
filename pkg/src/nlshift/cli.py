"""Command-line surface: estimate, bootstrap, policy, compare-2sls, simulate.

Structured results go to JSON (sorted keys, reproducible bytes); curve
outputs get CSV mirrors for spreadsheet use. Every JSON payload embeds the
effective config hash and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import RunConfig, load_config
from .dataset import PanelDataset, SectorPanel, load_panel, split_periods
from .errors import ConfigError, EmptyPanel, MissingColumn, NlshiftError, NonFinite
from .inference import run_bootstrap, uniform_bands
from .oracles import oracle_targets
from .pipeline import run_pipeline
from .synthetic import KINDS, DgpSpec, generate
from .targets import tariff_policy
from .tsls import first_stage_effects, linear_asf, linear_pe, tsls, tsls_weight_diagnostic

__all__ = ["main"]


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _write_curve_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([repr(float(v)) for v in row])


def _meta(cfg: RunConfig, panel: PanelDataset) -> dict:
    return {
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "n": panel.n,
        "period_label": panel.period_label,
        "version": __version__,
    }


def _load_periods(cfg: RunConfig) -> list[PanelDataset]:
    panel = load_panel(cfg.data_path, cfg.schema)
    return split_periods(panel)


def _suffix(panel: PanelDataset, many: bool) -> str:
    return f"_{panel.period_label}" if many and panel.period_label else ""


def _load_sector(cfg: RunConfig, panel: PanelDataset) -> SectorPanel:
    if cfg.sector_path is None:
        raise ConfigError("policy.sector.path", "tariff policy requires sector data")
    df = pd.read_csv(cfg.sector_path)
    cols = cfg.sector_columns
    m_t = df[cols.get("m_t", "m_t")].to_numpy(float)
    m_tm1 = df[cols.get("m_tm1", "m_tm1")].to_numpy(float)
    l_t = df[cols.get("l_t", "l_t")].to_numpy(float)
    return SectorPanel(m_t=m_t, m_tm1=m_tm1, l_t=l_t, shares=panel.w)


def _policies_for(cfg: RunConfig, panel: PanelDataset) -> tuple:
    if cfg.custom_policy_path is not None:
        df = pd.read_csv(cfg.custom_policy_path)
        vals = df[df.columns[-1]].to_numpy(float)
        if len(vals) != panel.n:
            raise ConfigError("policy.custom_map_path", "row count does not match the panel")
        return ((0.0, vals),)
    sector = _load_sector(cfg, panel)
    ell0 = sector.observed_exposure()
    if not np.allclose(ell0, panel.x, rtol=1e-8, atol=1e-10):
        print(
            "warning: zero-tariff exposure does not reproduce the treatment "
            "(max gap %.3g); sector data and panel may be from different vintages"
            % float(np.max(np.abs(ell0 - panel.x))),
            file=sys.stderr,
        )
    return tuple((phi, tariff_policy(sector, phi, cfg.kappa)) for phi in cfg.phi_ladder)


def _export_first_stage_grid(path: Path, grid_fit) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level"] + [f"coef_{i}" for i in range(grid_fit.coefs.shape[1])])
        for v, row in zip(grid_fit.levels, grid_fit.coefs):
            writer.writerow([repr(float(v))] + [repr(float(c)) for c in row])


def cmd_estimate(cfg: RunConfig, with_policy: bool = False) -> int:
    panels = _load_periods(cfg)
    many = len(panels) > 1
    for panel in panels:
        policies = _policies_for(cfg, panel) if with_policy else ()
        res = run_pipeline(panel, cfg.settings(policies), meta=_meta(cfg, panel))
        sfx = _suffix(panel, many)
        est = res.estimates
        _write_json(cfg.out_dir / f"estimates{sfx}.json", est.to_dict())
        _write_curve_csv(cfg.out_dir / f"asf{sfx}.csv", ["x", "value"], [est.grid, est.asf])
        _write_curve_csv(cfg.out_dir / f"lar{sfx}.csv", ["x", "value"], [est.grid, est.lar])
        _write_curve_csv(cfg.out_dir / f"treatment{sfx}.csv", ["x"], [np.sort(panel.x)])
        if est.pe:
            phis, gammas = est.curve("pe")
            _write_curve_csv(cfg.out_dir / f"pe{sfx}.csv", ["phi", "gamma"], [phis, gammas])
        if cfg.export_grid:
            _export_first_stage_grid(cfg.out_dir / f"first_stage_grid{sfx}.csv", res.grid_fit)
        print(f"estimate{sfx or ''}: n={panel.n} ad={est.ad:.6g} -> {cfg.out_dir}")
    return 0


def cmd_bootstrap(cfg: RunConfig, with_policy: bool = False) -> int:
    panels = _load_periods(cfg)
    many = len(panels) > 1
    for panel in panels:
        policies = _policies_for(cfg, panel) if with_policy else ()
        run = run_bootstrap(panel, cfg.settings(policies), b=cfg.b, seed=cfg.seed, meta=_meta(cfg, panel), threads=cfg.threads)
        bands = uniform_bands(run, alpha=cfg.alpha)
        sfx = _suffix(panel, many)
        payload = {
            "schema_version": "1",
            "meta": {**_meta(cfg, panel), "b": cfg.b, "alpha": cfg.alpha, "n_success": run.n_success},
            "point": run.point.estimates.to_dict(),
            "bands": bands.to_dict(),
            "failures": [{"replicate": r, "error": msg} for r, msg in run.failures],
        }
        name = "policy" if with_policy else "bands"
        _write_json(cfg.out_dir / f"{name}{sfx}.json", payload)
        ad = bands.targets["ad"]
        print(
            f"bootstrap{sfx}: B={cfg.b} ad={ad.value[0]:.6g} "
            f"[{ad.lower[0]:.6g}, {ad.upper[0]:.6g}] -> {cfg.out_dir}"
        )
    return 0


def cmd_policy(cfg: RunConfig) -> int:
    if cfg.b > 0:
        return cmd_bootstrap(cfg, with_policy=True)
    return cmd_estimate(cfg, with_policy=True)


def cmd_compare_2sls(cfg: RunConfig) -> int:
    panels = _load_periods(cfg)
    many = len(panels) > 1
    rows = []
    fs_payload = {}
    flag = False
    overlays = {}
    for panel in panels:
        res = run_pipeline(panel, cfg.settings(), meta=_meta(cfg, panel))
        fit = tsls(panel, cluster=panel.cluster is not None)
        surf = first_stage_effects(panel, spec=cfg.fs_z)
        diag = tsls_weight_diagnostic(surf)
        flag = flag or diag.not_weakly_causal
        rows.append(
            {
                "period": panel.period_label,
                "ad": res.estimates.ad,
                "tsls": fit.alpha1,
                "tsls_se": float(fit.se[1]),
                "first_stage": fit.first_stage_coef,
                "n": panel.n,
                "not_weakly_causal": diag.not_weakly_causal,
            }
        )
        fs_payload[panel.period_label or "panel"] = {
            "z": surf.z_grid.tolist(),
            "v_levels": surf.v_levels.tolist(),
            "surface": surf.surface.tolist(),
            "diagnostic": diag.to_dict(),
        }
        overlay = {
            "linear_asf": {
                "x": res.eval_grid.points.tolist(),
                "value": linear_asf(fit, panel, res.eval_grid).tolist(),
            }
        }
        if cfg.sector_path is not None:
            sector = _load_sector(cfg, panel)
            overlay["linear_pe"] = {
                "phi": list(cfg.phi_ladder),
                "value": [linear_pe(fit, panel, tariff_policy(sector, phi, cfg.kappa)) for phi in cfg.phi_ladder],
            }
        overlays[panel.period_label or "panel"] = overlay
    pooled = None
    if many:
        fit = tsls(panels, pooled=True, cluster=all(p.cluster is not None for p in panels))
        pooled = {"tsls": fit.alpha1, "tsls_se": float(fit.se[1]), "first_stage": fit.first_stage_coef, "n": fit.n}
    payload = {
        "schema_version": "1",
        "meta": {"config_hash": cfg.hash, "seed": cfg.seed, "version": __version__},
        "per_period": rows,
        "pooled": pooled,
        "first_stage_effects": fs_payload,
        "linear_overlays": overlays,
        "negative_weight_flag": flag,
    }
    _write_json(cfg.out_dir / "compare_2sls.json", payload)
    with (cfg.out_dir / "compare_2sls.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
        if pooled:
            writer.writerow({"period": "pooled", "ad": "", "tsls": pooled["tsls"],
                             "tsls_se": pooled["tsls_se"], "first_stage": pooled["first_stage"],
                             "n": pooled["n"], "not_weakly_causal": flag})
    for row in rows:
        print(
            "period %s: AD=%.4g 2SLS=%.4g (%.3g) fs=%.4g%s"
            % (row["period"] or "-", row["ad"], row["tsls"], row["tsls_se"], row["first_stage"],
               " [negative-weight flag]" if row["not_weakly_causal"] else "")
        )
    if pooled:
        print("pooled: 2SLS=%.4g (%.3g) fs=%.4g" % (pooled["tsls"], pooled["tsls_se"], pooled["first_stage"]))
    return 0


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = DgpSpec(kind=args.dgp, n=args.n, j=args.j, p=args.p, seed=args.seed)
    data = generate(spec)
    panel = data.panel
    header = ["y", "x"] + list(panel.share_names) + list(panel.covariate_names) + ["z"]
    with (out / "panel.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(panel.n):
            row = [panel.y[i], panel.x[i], *panel.w[i], *panel.d[i], panel.z[i]]
            writer.writerow([repr(float(v)) for v in row])
    grid = np.linspace(np.percentile(panel.x, 5), np.percentile(panel.x, 95), 50)
    ladder = np.round(np.arange(1, 31) * 0.01, 2) if spec.kind == "linear_gaussian" else None
    oracle = oracle_targets(spec, grid, phi_ladder=ladder, shift_delta=1.0, mc_draws=args.oracle_draws,
                            include_tsls=spec.j == 1 and spec.p == 0)
    _write_json(out / "oracle.json", oracle.to_dict())
    if data.sector is not None:
        with (out / "sector.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["m_t", "m_tm1", "l_t"])
            for j in range(data.sector.j):
                writer.writerow([repr(float(data.sector.m_t[j])), repr(float(data.sector.m_tm1[j])),
                                 repr(float(data.sector.l_t[j]))])
    cfg = {
        "data": {
            "path": str(out / "panel.csv"),
            "columns": {
                "y": "y",
                "x": "x",
                "shares_prefix": "share_*",
                "covariates": list(panel.covariate_names),
                "instrument": "z",
            },
        },
        "first_stage": {"eps": 0.01, "m1": 199},
        "inference": {"b": 199, "alpha": 0.1},
        "seed": args.seed,
        "out": str(out / "results"),
    }
    if data.sector is not None:
        cfg["policy"] = {"sector": {"path": str(out / "sector.csv")}}
    _write_json(out / "config.json", cfg)
    print(f"simulate: {args.dgp} n={args.n} seed={args.seed} -> {out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlshift", description=__doc__)
    parser.add_argument("--version", action="version", version=f"nlshift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--threads", type=int, default=None, help="worker pool size")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--eps", type=float, default=None, help="override trimming constant")
        p.add_argument("--m1", type=int, default=None, help="override quantile mesh size")

    p_est = sub.add_parser("estimate", help="three-stage point estimation")
    add_config_flags(p_est)

    p_boot = sub.add_parser("bootstrap", help="estimation plus weighted-bootstrap bands")
    add_config_flags(p_boot)
    p_boot.add_argument("--bootstrap", "--b", dest="b", type=int, default=None, help="replicate count")
    p_boot.add_argument("--alpha", type=float, default=None, help="band level")

    p_pol = sub.add_parser("policy", help="tariff-ladder policy effects")
    add_config_flags(p_pol)
    p_pol.add_argument("--sector", default=None, help="override sector CSV path")
    p_pol.add_argument("--bootstrap", "--b", dest="b", type=int, default=None)
    p_pol.add_argument("--alpha", type=float, default=None)

    p_cmp = sub.add_parser("compare-2sls", help="2SLS benchmarks and weight diagnostics")
    add_config_flags(p_cmp)

    p_sim = sub.add_parser("simulate", help="draw a synthetic panel with oracle values")
    p_sim.add_argument("--dgp", required=True, choices=KINDS)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--j", type=int, default=1, help="sector count (linear design)")
    p_sim.add_argument("--p", type=int, default=0, help="covariate count (linear design)")
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--oracle-draws", type=int, default=1_000_000)
    return parser


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        out["threads"] = args.threads
    if getattr(args, "out", None) is not None:
        out["out"] = args.out
    if getattr(args, "eps", None) is not None:
        out["first_stage.eps"] = args.eps
    if getattr(args, "m1", None) is not None:
        out["first_stage.m1"] = args.m1
    if getattr(args, "b", None) is not None:
        out["inference.b"] = args.b
    if getattr(args, "alpha", None) is not None:
        out["inference.alpha"] = args.alpha
    if getattr(args, "sector", None) is not None:
        out["policy.sector.path"] = args.sector
    return out


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        cfg = load_config(args.config, overrides=_overrides(args))
        if args.command == "estimate":
            return cmd_estimate(cfg)
        if args.command == "bootstrap":
            return cmd_bootstrap(cfg)
        if args.command == "policy":
            return cmd_policy(cfg)
        if args.command == "compare-2sls":
            return cmd_compare_2sls(cfg)
        raise ConfigError("command", f"unknown command {args.command!r}")
    except (ConfigError, FileNotFoundError, MissingColumn, NonFinite, EmptyPanel, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NlshiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
