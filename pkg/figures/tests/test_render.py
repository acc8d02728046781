import json
from pathlib import Path

import numpy as np
import pytest
from matplotlib.collections import PolyCollection

from nlshift_figs.cli import collect_jobs, main
from nlshift_figs.render import FigureJob, build_figure, render

FIXTURES = Path(__file__).parent / "fixtures"


def _job(kind, name, tmp_path, **kw):
    return FigureJob(kind=kind, input=FIXTURES / name, output=tmp_path / f"{kind}.png", **kw)


@pytest.mark.parametrize(
    "kind,name",
    [("lar", "bands.json"), ("asf", "bands.json"), ("pe", "policy.json"), ("histogram", "treatment.csv")],
)
def test_render_writes_file(kind, name, tmp_path):
    out = render(_job(kind, name, tmp_path))
    assert out.exists()
    assert out.stat().st_size > 5_000


def test_first_stage_figure(tmp_path):
    out = render(_job("first_stage", "compare_2sls.json", tmp_path, overlay_key="panel"))
    assert out.exists()
    fig = build_figure(_job("first_stage", "compare_2sls.json", tmp_path, overlay_key="panel"))
    assert len(fig.axes[0].lines) >= 3  # one curve per control-variable level


def test_band_figure_has_shaded_region(tmp_path):
    fig = build_figure(_job("lar", "bands.json", tmp_path))
    ax = fig.axes[0]
    assert any(isinstance(c, PolyCollection) for c in ax.collections)
    solid = [l for l in ax.lines if l.get_linestyle() == "-" and l.get_color() == "black"]
    assert solid


def test_asf_overlay_contains_solid_and_dashed_series(tmp_path):
    job = _job("asf", "bands.json", tmp_path, overlay=FIXTURES / "compare_2sls.json", overlay_key="panel")
    fig = build_figure(job)
    ax = fig.axes[0]
    by_label = {l.get_label(): l for l in ax.lines}
    assert "estimate" in by_label
    assert "linear 2SLS" in by_label
    assert by_label["estimate"].get_linestyle() == "-"
    assert by_label["linear 2SLS"].get_linestyle() != "-"


def test_point_only_input_renders_without_band(tmp_path):
    fig = build_figure(_job("asf", "estimates.json", tmp_path))
    ax = fig.axes[0]
    assert not any(isinstance(c, PolyCollection) for c in ax.collections)
    assert len(ax.lines) >= 1


def test_rendering_is_deterministic(tmp_path):
    a = render(FigureJob(kind="lar", input=FIXTURES / "bands.json", output=tmp_path / "a.png"))
    b = render(FigureJob(kind="lar", input=FIXTURES / "bands.json", output=tmp_path / "b.png"))
    assert a.read_bytes() == b.read_bytes()


def test_pdf_output_is_deterministic(tmp_path):
    a = render(FigureJob(kind="asf", input=FIXTURES / "bands.json", output=tmp_path / "a.pdf", fmt="pdf"))
    b = render(FigureJob(kind="asf", input=FIXTURES / "bands.json", output=tmp_path / "b.pdf", fmt="pdf"))
    assert a.read_bytes() == b.read_bytes()


def test_inputs_not_modified(tmp_path):
    before = (FIXTURES / "bands.json").read_bytes()
    render(_job("lar", "bands.json", tmp_path))
    assert (FIXTURES / "bands.json").read_bytes() == before


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError):
        FigureJob(kind="pie", input=FIXTURES / "bands.json", output=tmp_path / "x.png")


def test_cli_batch_renders_all_kinds(tmp_path):
    code = main(["--in", str(FIXTURES), "--out", str(tmp_path)])
    assert code == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"lar.png", "asf.png", "pe.png", "first_stage_panel.png", "histogram.png"} <= names


def test_cli_missing_directory_exits_2(tmp_path):
    assert main(["--in", str(tmp_path / "void"), "--out", str(tmp_path)]) == 2


def test_cli_empty_directory_exits_2(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["--in", str(empty), "--out", str(tmp_path)]) == 2
