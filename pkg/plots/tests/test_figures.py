import math

import pytest

from cplab_plots.cli import main as cli_main
from cplab_plots.figures import (
    SHAPE_FOR_COVERAGE,
    FigureSpec,
    RenderError,
    render,
)
from cplab_plots.summary import SummaryError, apply_filters, read_summary

HEADER = (
    "run_id,ncm,model,dataset,noise,d,n,epsilon,repetitions,"
    "mean_validity,se_validity,mean_efficiency,se_efficiency,"
    "mean_abs_coverage_gap,se_abs_coverage_gap,outlier_reps,"
    "corrected_mean_efficiency,corrected_se_efficiency,"
    "n_infeasible,total_zero_width"
)


def _row(ncm="absolute", model="mvnn", noise="homo_gauss", n=100, eps=0.1,
         validity=0.9, eff=1.5, se_eff=0.02, gap=0.01, se_gap=0.002,
         n_infeasible=0):
    return (
        f"abc123,{ncm},{model},synthetic,{noise},1,{n},{eps},20,"
        f"{validity},0.005,{eff},{se_eff},{gap},{se_gap},,"
        f"{eff},{se_eff},{n_infeasible},0"
    )


def _write(tmp_path, rows):
    p = tmp_path / "summary.csv"
    p.write_text("\n".join([HEADER, *rows]) + "\n")
    return p


@pytest.fixture
def three_coverages(tmp_path):
    return _write(tmp_path, [
        _row(n=100, eps=0.2, validity=0.80, eff=0.8),
        _row(n=500, eps=0.1, validity=0.90, eff=1.2),
        _row(n=1000, eps=0.05, validity=0.95, eff=1.6),
    ])


class TestSummaryIo:
    def test_reads_typed_rows(self, three_coverages):
        rows = read_summary(three_coverages)
        assert rows[0]["n"] == 100
        assert rows[0]["epsilon"] == 0.2
        assert rows[0]["mean_efficiency"] == 0.8
        assert rows[0]["ncm"] == "absolute"

    def test_missing_file(self, tmp_path):
        with pytest.raises(SummaryError, match="not found"):
            read_summary(tmp_path / "absent.csv")

    def test_missing_column(self, tmp_path):
        p = tmp_path / "summary.csv"
        p.write_text("ncm,model\nabsolute,mvnn\n")
        with pytest.raises(SummaryError, match="missing columns"):
            read_summary(p)

    def test_header_only(self, tmp_path):
        p = tmp_path / "summary.csv"
        p.write_text(HEADER + "\n")
        with pytest.raises(SummaryError, match="no data rows"):
            read_summary(p)

    def test_filter_matches_numeric_text(self, three_coverages):
        rows = read_summary(three_coverages)
        kept = apply_filters(rows, {"n": "500"})
        assert len(kept) == 1 and kept[0]["n"] == 500

    def test_empty_selection_names_filter(self, three_coverages):
        rows = read_summary(three_coverages)
        with pytest.raises(SummaryError, match="noise=purple"):
            apply_filters(rows, {"noise": "purple"})

    def test_unknown_column_named(self, three_coverages):
        rows = read_summary(three_coverages)
        with pytest.raises(SummaryError, match="colour"):
            apply_filters(rows, {"colour": "red"})


class TestTradeoff:
    def test_golden_coordinates(self, three_coverages, tmp_path):
        out = tmp_path / "fig.svg"
        result = render(three_coverages, FigureSpec("tradeoff"), out)
        got = {(p["n"]): p for p in result.points}
        assert got[100]["x"] == 0.80
        assert got[100]["y"] == pytest.approx(0.8 / 0.8)
        assert got[500]["x"] == 0.90
        assert got[500]["y"] == pytest.approx(1.2 / 0.9)
        assert got[1000]["x"] == 0.95
        assert got[1000]["y"] == pytest.approx(1.6 / 0.95)

    def test_marker_shape_encodes_coverage(self, three_coverages, tmp_path):
        result = render(three_coverages, FigureSpec("tradeoff"),
                        tmp_path / "fig.svg")
        markers = {p["epsilon"]: p["marker"] for p in result.points}
        assert markers == {0.2: "^", 0.1: "s", 0.05: "D"}
        assert SHAPE_FOR_COVERAGE[0.01] == "o"

    def test_marker_area_grows_with_size(self, three_coverages, tmp_path):
        result = render(three_coverages, FigureSpec("tradeoff"),
                        tmp_path / "fig.svg")
        areas = {p["n"]: p["area"] for p in result.points}
        assert areas[100] < areas[500] < areas[1000]

    def test_single_row_single_marker(self, tmp_path):
        p = _write(tmp_path, [_row(eps=0.1, validity=0.9, eff=2.0)])
        result = render(p, FigureSpec("tradeoff"), tmp_path / "fig.svg")
        assert len(result.points) == 1
        assert result.points[0]["y"] == pytest.approx(2.0 / 0.9)

    def test_deterministic_coordinates(self, three_coverages, tmp_path):
        a = render(three_coverages, FigureSpec("tradeoff"), tmp_path / "a.svg")
        b = render(three_coverages, FigureSpec("tradeoff"), tmp_path / "b.svg")
        assert a.points == b.points

    def test_infinite_rows_excluded_and_counted(self, tmp_path):
        p = _write(tmp_path, [
            _row(n=100, eps=0.1),
            _row(n=500, eps=0.01, validity=1.0, eff=math.inf, n_infeasible=20),
        ])
        result = render(p, FigureSpec("tradeoff"), tmp_path / "fig.svg")
        assert len(result.points) == 1
        assert result.excluded == 1
        assert "1 infeasible/infinite row excluded" == result.caption

    def test_all_rows_infeasible_errors(self, tmp_path):
        p = _write(tmp_path, [
            _row(eps=0.01, validity=1.0, eff=math.inf, n_infeasible=20),
        ])
        with pytest.raises(RenderError, match="infeasible"):
            render(p, FigureSpec("tradeoff"), tmp_path / "fig.svg")


class TestConvergence:
    def test_error_bars_are_1_96_se(self, tmp_path):
        p = _write(tmp_path, [
            _row(n=100, gap=0.020, se_gap=0.004),
            _row(n=500, gap=0.008, se_gap=0.002),
            _row(n=1000, gap=0.006, se_gap=0.001),
        ])
        result = render(p, FigureSpec("convergence"), tmp_path / "fig.svg")
        assert len(result.points) == 1
        series = result.points[0]
        assert series["x"] == [100, 500, 1000]
        assert series["y"] == [0.020, 0.008, 0.006]
        assert series["err"] == pytest.approx([1.96 * 0.004, 1.96 * 0.002,
                                               1.96 * 0.001])

    def test_series_split_by_pair_and_coverage(self, tmp_path):
        p = _write(tmp_path, [
            _row(ncm="absolute", model="mvnn", n=100, eps=0.1),
            _row(ncm="absolute", model="mvnn", n=500, eps=0.1),
            _row(ncm="quantile", model="gbqr", n=100, eps=0.2),
            _row(ncm="quantile", model="gbqr", n=500, eps=0.2),
        ])
        result = render(p, FigureSpec("convergence"), tmp_path / "fig.svg")
        labels = sorted(s["series"] for s in result.points)
        assert labels == ["absolute/mvnn @ 90%", "quantile/gbqr @ 80%"]


class TestEfficiencyVsSize:
    def test_series_track_mean_width(self, tmp_path):
        p = _write(tmp_path, [
            _row(n=500, eff=1.1),
            _row(n=100, eff=1.9),
            _row(n=1000, eff=0.9),
        ])
        result = render(p, FigureSpec("efficiency-vs-size"), tmp_path / "f.svg")
        series = result.points[0]
        assert series["x"] == [100, 500, 1000]
        assert series["y"] == [1.9, 1.1, 0.9]


class TestOutputFiles:
    def test_svg_by_default(self, three_coverages, tmp_path):
        out = tmp_path / "fig.svg"
        render(three_coverages, FigureSpec("tradeoff"), out)
        head = out.read_bytes()[:200]
        assert b"<svg" in head or b"<?xml" in head

    def test_png_on_request(self, three_coverages, tmp_path):
        out = tmp_path / "fig.png"
        render(three_coverages, FigureSpec("tradeoff"), out, png=True)
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_family_rejected(self):
        with pytest.raises(RenderError, match="family"):
            FigureSpec("pie")


class TestCli:
    def test_happy_path(self, three_coverages, tmp_path, capsys):
        out = tmp_path / "fig.svg"
        code = cli_main([
            "--family", "tradeoff", "--in", str(three_coverages),
            "--out", str(out),
        ])
        assert code == 0
        assert out.exists()
        assert "wrote" in capsys.readouterr().out

    def test_filter_flag(self, three_coverages, tmp_path):
        out = tmp_path / "fig.svg"
        code = cli_main([
            "--family", "tradeoff", "--filter", "epsilon=0.1",
            "--in", str(three_coverages), "--out", str(out),
        ])
        assert code == 0

    def test_empty_selection_exit_one(self, three_coverages, tmp_path):
        code = cli_main([
            "--family", "tradeoff", "--filter", "noise=purple",
            "--in", str(three_coverages), "--out", str(tmp_path / "f.svg"),
        ])
        assert code == 1

    def test_missing_summary_exit_one(self, tmp_path):
        code = cli_main([
            "--family", "tradeoff", "--in", str(tmp_path / "absent.csv"),
            "--out", str(tmp_path / "f.svg"),
        ])
        assert code == 1

    def test_malformed_filter_exit_two(self, three_coverages, tmp_path):
        code = cli_main([
            "--family", "tradeoff", "--filter", "no-equals-sign",
            "--in", str(three_coverages), "--out", str(tmp_path / "f.svg"),
        ])
        assert code == 2

    def test_caption_notes_excluded_rows(self, tmp_path, capsys):
        p = _write(tmp_path, [
            _row(n=100, eps=0.1),
            _row(n=500, eps=0.01, validity=1.0, eff=math.inf, n_infeasible=20),
        ])
        code = cli_main([
            "--family", "tradeoff", "--in", str(p),
            "--out", str(tmp_path / "f.svg"),
        ])
        assert code == 0
        assert "1 infeasible/infinite row excluded" in capsys.readouterr().out
