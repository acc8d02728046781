"""Batch renderer: scan a results directory, write one figure per series."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import FigureJob, render
from .schema import MissingSeries, SchemaMismatch, load_payload

__all__ = ["main", "collect_jobs"]


def collect_jobs(results: Path, out: Path, fmt: str = "png") -> list[FigureJob]:
    """Pair every recognized result file with the figures it supports.

    Band files win over bare estimate files with the same suffix; the 2SLS
    comparison file contributes overlays and first-stage figures.
    """
    jobs: list[FigureJob] = []
    overlay = results / "compare_2sls.json"
    overlay_path = overlay if overlay.exists() else None

    def suffix_of(path: Path, stem: str) -> str:
        return path.stem[len(stem):]

    curve_sources: dict[str, Path] = {}
    for path in sorted(results.glob("estimates*.json")):
        curve_sources[suffix_of(path, "estimates")] = path
    for path in sorted(results.glob("bands*.json")):
        curve_sources[suffix_of(path, "bands")] = path

    for sfx, path in sorted(curve_sources.items()):
        key = sfx.lstrip("_") or None
        for kind in ("lar", "asf"):
            jobs.append(
                FigureJob(
                    kind=kind,
                    input=path,
                    output=out / f"{kind}{sfx}.{fmt}",
                    overlay=overlay_path if kind == "asf" else None,
                    overlay_key=key,
                    fmt=fmt,
                )
            )

    for path in sorted(results.glob("policy*.json")):
        sfx = suffix_of(path, "policy")
        jobs.append(
            FigureJob(
                kind="pe",
                input=path,
                output=out / f"pe{sfx}.{fmt}",
                overlay=overlay_path,
                overlay_key=sfx.lstrip("_") or None,
                fmt=fmt,
            )
        )

    if overlay_path is not None:
        payload = load_payload(overlay_path)
        for key in payload.get("first_stage_effects", {}):
            safe = key.replace("/", "-") or "panel"
            jobs.append(
                FigureJob(
                    kind="first_stage",
                    input=overlay_path,
                    output=out / f"first_stage_{safe}.{fmt}",
                    overlay_key=key,
                    fmt=fmt,
                )
            )

    for path in sorted(results.glob("treatment*.csv")):
        sfx = suffix_of(path, "treatment")
        jobs.append(FigureJob(kind="histogram", input=path, output=out / f"histogram{sfx}.{fmt}", fmt=fmt))
    return jobs


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="render_figs", description=__doc__)
    parser.add_argument("--in", dest="results", required=True, help="directory of estimator result files")
    parser.add_argument("--out", dest="out", required=True, help="directory for rendered figures")
    parser.add_argument("--format", dest="fmt", choices=("png", "pdf"), default="png")
    args = parser.parse_args(argv)

    results = Path(args.results)
    if not results.is_dir():
        print(f"error: {results} is not a directory", file=sys.stderr)
        return 2
    try:
        jobs = collect_jobs(results, Path(args.out), fmt=args.fmt)
        if not jobs:
            print(f"error: no recognizable result files under {results}", file=sys.stderr)
            return 2
        for job in jobs:
            path = render(job)
            print(f"wrote {path}")
    except (SchemaMismatch, MissingSeries) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
