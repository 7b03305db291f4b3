"""CSV and PNG rendering of intra-story curves."""

from __future__ import annotations

import csv

from evstory.metrics import IntraCurve, MetricReport
from evstory.plots import plot_curve, render_report, write_curve_csv

CURVE = IntraCurve(by_index={2: 0.25, 3: 0.5, 4: 0.125}, aggregate=0.291667)


def test_curve_csv_layout(tmp_path):
    path = write_curve_csv(CURVE, tmp_path / "curve.csv")
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sentence_index", "value"]
    assert rows[1:] == [
        ["2", "0.250000"],
        ["3", "0.500000"],
        ["4", "0.125000"],
        ["aggregate", "0.291667"],
    ]


def test_plot_writes_png(tmp_path):
    path = plot_curve(CURVE, "title", "ylabel", tmp_path / "curve.png")
    data = path.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"


def test_render_report_one_pair_per_curve(tmp_path):
    report = MetricReport(intra={"repetition": CURVE, "coherence": CURVE})
    written = render_report(report, tmp_path / "plots")
    names = sorted(p.name for p in written)
    assert names == ["coherence.csv", "coherence.png", "repetition.csv", "repetition.png"]
    for path in written:
        assert path.exists() and path.stat().st_size > 0


def test_render_report_empty_intra(tmp_path):
    assert render_report(MetricReport(), tmp_path / "plots") == []
