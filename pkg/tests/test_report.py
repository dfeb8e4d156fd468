"""Tests for comparison tables and the seed summary."""

import os
import sys
import tempfile
import unittest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from errors import ConfigInvalid, IoError
from output import read_json, write_json
from report import (
    TABLE_HEADER,
    compare_seed_runs,
    format_cell,
    format_seed_summary,
    format_table,
    merge_reports,
    reference_paths,
)


def report_row(label, rmse_mean, rmse_std=0.5):
    return {
        "method_label": label,
        "aggregate": {
            "ssim": {"mean": 0.9, "std": 0.01},
            "mae_mm": {"mean": 1.0, "std": 0.2},
            "rmse_mm": {"mean": rmse_mean, "std": rmse_std},
            "delta1": {"mean": 0.8, "std": 0.1},
        },
        "eval_config": {"ssim_operand": "depth / max_depth_mm"},
    }


class TestFormatting(unittest.TestCase):
    def test_cells(self):
        self.assertEqual(format_cell({"mean": 4.3819, "std": 1.3041}), "4.382 ± 1.304")
        self.assertEqual(format_cell({"mean": 0.5, "std": None}), "0.500")
        self.assertEqual(format_cell(None), "–")

    def test_table_layout(self):
        table = format_table([report_row("A", 2.0)])
        lines = table.splitlines()
        self.assertEqual(lines[0], TABLE_HEADER)
        self.assertEqual(lines[2], "| A | 0.900 ± 0.010 | 1.000 ± 0.200 | 2.000 ± 0.500 | 0.800 ± 0.100 |")
        self.assertIn("SSIM computed on depth / max_depth_mm.", table)

    def test_row_without_label(self):
        with self.assertRaises(ConfigInvalid):
            format_table([{"aggregate": {}}])


class TestPublishedRows(unittest.TestCase):
    def test_three_rows_in_order(self):
        self.assertEqual([read_json(p)["method_label"] for p in reference_paths()], ["CycleGAN", "Ours w/o DA", "Ours"])

    def test_reproduces_published_values(self):
        table = merge_reports(reference_paths())
        self.assertIn("| CycleGAN | 0.913 | 3.397 ± 1.885 | 5.566 ± 3.452 | 0.482 |", table)
        self.assertIn("| Ours w/o DA | 0.931 | 2.813 ± 0.849 | 4.408 ± 1.297 | 0.498 |", table)
        self.assertIn("| Ours | 0.932 | 2.785 ± 0.849 | 4.382 ± 1.304 | 0.501 |", table)
        self.assertNotIn("SSIM computed on", table)

    def test_merge_appends_new_reports(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "report.json")
            write_json(path, report_row("Desk run", 3.25))
            table = merge_reports(reference_paths() + [path])
        rows = [line for line in table.splitlines() if line.startswith("| ") and "Method" not in line]
        self.assertEqual(len(rows), 4)
        self.assertTrue(rows[-1].startswith("| Desk run |"))

    def test_merge_errors(self):
        with self.assertRaises(ConfigInvalid):
            merge_reports([])
        with self.assertRaises(IoError):
            merge_reports(["/nonexistent/report.json"])


class TestSeedComparison(unittest.TestCase):
    def _runs(self, pairs):
        return [
            {"seed": i, "adapted": report_row("Ours", a), "source_only": report_row("Ours w/o DA", b)}
            for i, (a, b) in enumerate(pairs)
        ]

    def test_direction_holds(self):
        summary = compare_seed_runs(self._runs([(4.0, 4.5), (4.2, 4.1), (3.9, 4.4), (4.0, 4.3), (4.1, 4.2)]))
        self.assertEqual(summary["n_seeds"], 5)
        self.assertEqual(summary["improved_count"], 4)
        self.assertAlmostEqual(summary["adapted_mean_rmse_mm"], 4.04)
        self.assertAlmostEqual(summary["source_only_mean_rmse_mm"], 4.3)
        self.assertTrue(summary["direction_holds"])
        text = format_seed_summary(summary)
        self.assertIn("adapted better in 4/5 seeds", text)

    def test_direction_needs_majority(self):
        summary = compare_seed_runs(self._runs([(1.0, 4.0), (4.2, 4.1), (4.3, 4.1)]))
        self.assertLess(summary["adapted_mean_rmse_mm"], summary["source_only_mean_rmse_mm"])
        self.assertFalse(summary["direction_holds"])

    def test_no_runs(self):
        with self.assertRaises(ConfigInvalid):
            compare_seed_runs([])


if __name__ == "__main__":
    unittest.main()
