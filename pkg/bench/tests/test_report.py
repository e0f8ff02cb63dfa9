import sys
import tempfile
import unittest
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pandas as pd

sys.path.append(str(Path(__file__).parent.parent.parent))

from bench.tests.helpers import rows_for, store_from, synthetic_store
from data.errors import ArgumentError, ContractError
from model.profiles import CollapseSpec, ecdf
from report.summary import (
    format_summary,
    gap_trend_diagnostic,
    method_gap_by_size,
    summarize,
    write_summary,
)
from report.svg import (
    Panel,
    PlotSpec,
    boxplot_stats,
    render_boxplot_panel,
    render_document,
    render_ecdf_panel,
)

NS = "{http://www.w3.org/2000/svg}"


def parse(document):
    root = ET.fromstring(document.encode("utf-8"))
    return root


def by_class(root, tag, css_class):
    return [e for e in root.iter(f"{NS}{tag}") if e.get("class") == css_class]


class TestECDFPanel(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        self.curves = [ecdf(rng.normal(size=30), f"M{k}", "log10_trivial_ratio") for k in range(1, 8)]

    def test_seven_curves_two_boundaries(self):
        root = parse(render_ecdf_panel(self.curves, boundaries=[-0.5, 0.5]))
        self.assertEqual(root.tag, f"{NS}svg")
        self.assertEqual(len(list(root.iter(f"{NS}path"))), 7)
        self.assertEqual(len(by_class(root, "line", "boundary")), 2)

    def test_single_step_curve(self):
        root = parse(render_ecdf_panel([ecdf([1.0, 1.0], "M1")]))
        paths = list(root.iter(f"{NS}path"))
        self.assertEqual(len(paths), 1)
        self.assertEqual(paths[0].get("d").count("V"), 1)

    def test_no_boundaries(self):
        root = parse(render_ecdf_panel(self.curves, boundaries=[]))
        self.assertEqual(by_class(root, "line", "boundary"), [])

    def test_boundary_toggle_off(self):
        document = render_ecdf_panel(self.curves, PlotSpec(boundaries=False), boundaries=[0.0])
        self.assertEqual(by_class(parse(document), "line", "boundary"), [])

    def test_mixed_schemes(self):
        curves = [ecdf([0.1], "M1", "log10_trivial_ratio"), ecdf([0.2], "M2", "relative_to_best")]
        with self.assertRaises(ContractError):
            render_ecdf_panel(curves)

    def test_no_curve(self):
        with self.assertRaises(ArgumentError):
            render_ecdf_panel([])

    def test_pure_function(self):
        self.assertEqual(render_ecdf_panel(self.curves), render_ecdf_panel(self.curves))

    def test_title_from_collapse_spec(self):
        spec = CollapseSpec(collapse_over=["problem"], fixed={"size_class": "10d"})
        document = render_ecdf_panel(self.curves, collapse_spec=spec)
        self.assertIn("size_class=10d", document)

    def test_writes_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "ecdf.svg"
            document = render_ecdf_panel(self.curves, PlotSpec(out=str(out)))
            self.assertEqual(out.read_text(encoding="utf-8"), document)


class TestBoxplotPanel(unittest.TestCase):

    def test_stats_type_7(self):
        stats = boxplot_stats([1, 2, 3, 4, 5])
        self.assertEqual((stats["q1"], stats["median"], stats["q3"]), (2.0, 3.0, 4.0))
        self.assertEqual((stats["whisker_low"], stats["whisker_high"]), (1.0, 5.0))
        self.assertEqual(stats["outliers"], [])

        stats = boxplot_stats([1, 2, 3, 4])
        self.assertEqual((stats["q1"], stats["median"], stats["q3"]), (1.75, 2.5, 3.25))

    def test_outliers(self):
        stats = boxplot_stats([1, 2, 3, 4, 5, 100])
        self.assertEqual(stats["outliers"], [100.0])
        self.assertEqual(stats["whisker_high"], 5.0)

    def test_box_geometry(self):
        root = parse(render_boxplot_panel({"M1": [1, 2, 3, 4, 5]}))
        group = by_class(root, "g", "box-group")[0]
        self.assertEqual(group.get("data-median"), "3")
        panel = by_class(root, "g", "panel")[0]
        low, high = float(panel.get("data-ymin")), float(panel.get("data-ymax"))

        def pixel(value):
            return 232.0 - (value - low) / (high - low) * 200.0

        box = by_class(root, "rect", "box")[0]
        self.assertAlmostEqual(float(box.get("y")), pixel(4.0), delta=0.01)
        self.assertAlmostEqual(float(box.get("height")), pixel(2.0) - pixel(4.0), delta=0.02)
        median = by_class(root, "line", "median")[0]
        self.assertAlmostEqual(float(median.get("y1")), pixel(3.0), delta=0.01)

    def test_degenerate_box(self):
        root = parse(render_boxplot_panel({"M2": [2.0, 2.0, 2.0]}))
        self.assertEqual(float(by_class(root, "rect", "box")[0].get("height")), 0.0)

    def test_seven_boxes(self):
        groups = {f"M{k}": np.arange(k, k + 10, dtype=float) for k in range(1, 8)}
        root = parse(render_boxplot_panel(groups))
        self.assertEqual(len(by_class(root, "g", "box-group")), 7)
        self.assertEqual([g.get("data-method") for g in by_class(root, "g", "box-group")], list(groups))

    def test_independent_scales(self):
        panels = [
            Panel("boxplot", {"M1": [1.0, 2.0, 3.0]}, "a"),
            Panel("boxplot", {"M1": [100.0, 200.0, 300.0]}, "b"),
        ]
        root = parse(render_document(panels, PlotSpec(rows=1, cols=2)))
        first, second = by_class(root, "g", "panel")
        self.assertNotEqual(first.get("data-ymin"), second.get("data-ymin"))
        self.assertNotEqual(first.get("data-ymax"), second.get("data-ymax"))

    def test_style_stable_across_panels(self):
        panels = [
            Panel("boxplot", {"M4": [1.0, 2.0], "M2": [1.0, 3.0]}, "a"),
            Panel("ecdf", [ecdf([0.1, 0.5], "M4"), ecdf([0.2], "M2")], "b"),
        ]
        root = parse(render_document(panels, PlotSpec(rows=1, cols=2)))
        strokes = {e.get("stroke") for e in by_class(root, "rect", "box") + list(root.iter(f"{NS}path"))}
        self.assertEqual(len(strokes), 2)

    def test_empty_group_omitted(self):
        with self.assertLogs("report.svg", level="WARNING"):
            root = parse(render_boxplot_panel({"M1": [1.0, 2.0], "M2": []}))
        self.assertEqual(len(by_class(root, "g", "box-group")), 1)

    def test_no_group(self):
        with self.assertRaises(ArgumentError):
            render_boxplot_panel({})

    def test_too_many_panels(self):
        panel = Panel("boxplot", {"M1": [1.0]})
        with self.assertRaises(ArgumentError):
            render_document([panel, panel], PlotSpec(rows=1, cols=1))


class TestSummary(unittest.TestCase):

    def test_columns_and_counts(self):
        store = synthetic_store(problems=["a-A-2", "b-A-2"], replicates=5)
        table, diagnostics = summarize(store, "trivial", "rmse")
        self.assertEqual(
            list(table.columns),
            ["method", "n_cells", "n_ok", "median", "mean", "win_fraction", "poor_fit_fraction"],
        )
        self.assertEqual(list(table["method"]), [f"M{k}" for k in range(1, 8)])
        self.assertTrue((table["n_cells"] == 10).all())
        self.assertGreaterEqual(table["win_fraction"].sum(), 1.0)
        self.assertEqual(diagnostics["fit_failed"], 0)

    def test_one_method(self):
        table, _ = summarize(synthetic_store(methods=["M6"]), "best")
        self.assertEqual(table["win_fraction"].iloc[0], 1.0)
        self.assertEqual(table["median"].iloc[0], 0.0)

    def test_strictly_better(self):
        rows = []
        for replicate in range(3):
            rows += rows_for("p-A-2", "M1", "5d", replicate, 0.01)
            rows += rows_for("p-A-2", "M2", "5d", replicate, 0.9)
        table, _ = summarize(store_from(rows), "trivial")
        wins = dict(zip(table["method"], table["win_fraction"]))
        self.assertEqual(wins, {"M1": 1.0, "M2": 0.0})
        poor = dict(zip(table["method"], table["poor_fit_fraction"]))
        self.assertEqual(poor, {"M1": 0.0, "M2": 1.0})

    def test_failed_cells_counted(self):
        rows = rows_for("p-A-2", "M1", "5d", 0, 0.2) + rows_for("p-A-2", "M1", "5d", 1, None, status="fit_failed")
        table, diagnostics = summarize(store_from(rows))
        self.assertEqual(table["n_cells"].iloc[0], 2)
        self.assertEqual(table["n_ok"].iloc[0], 1)
        self.assertEqual(diagnostics["fit_failed"], 1)
        self.assertIn("Cellules en échec: 1", format_summary(table, diagnostics))

    def test_empty_store(self):
        with self.assertRaises(ArgumentError):
            summarize(store_from([]))

    def test_write_summary(self):
        table, diagnostics = summarize(synthetic_store())
        with tempfile.TemporaryDirectory() as tmp:
            csv_path, txt_path = write_summary(table, diagnostics, str(Path(tmp) / "resume"))
            self.assertEqual(len(pd.read_csv(csv_path)), 7)
            self.assertIn("Ex aequo", Path(txt_path).read_text(encoding="utf-8"))


class TestMethodGap(unittest.TestCase):

    def scores(self, gaps):
        rows = []
        for size, gap in gaps.items():
            for replicate in range(3):
                rows.append({"method": "M2", "size_class": size, "replicate": replicate, "score": -1.0})
                rows.append({"method": "M4", "size_class": size, "replicate": replicate, "score": -1.0 + gap})
        return pd.DataFrame(rows)

    def test_gap_ordered_by_size(self):
        gaps = method_gap_by_size(self.scores({"15d": 0.3, "5d": 0.1, "10d": 0.2}))
        self.assertEqual(list(gaps.index), ["5d", "10d", "15d"])
        np.testing.assert_allclose(gaps.to_numpy(), [0.1, 0.2, 0.3])

    def test_trend_consistent(self):
        gaps = method_gap_by_size(self.scores({"5d": 0.1, "10d": 0.08, "15d": 0.3}))
        self.assertTrue(gap_trend_diagnostic(gaps))

    def test_trend_diagnostic_logged(self):
        gaps = method_gap_by_size(self.scores({"5d": 0.5, "10d": 0.2, "15d": 0.1}))
        with self.assertLogs("report.summary", level="WARNING"):
            self.assertFalse(gap_trend_diagnostic(gaps))


if __name__ == "__main__":
    unittest.main()
