import math
from unittest import TestCase

import numpy as np

from signmap.aggregation import PlacardLandmark
from signmap.evaluation import (SCATTER_COLUMNS, Correspondence, EvalParams,
                                EvalReport, MetricRow, compute_metrics,
                                correspond, correspondence_from_pairs,
                                dominant_direction, error_trend, evaluate,
                                format_table, label_accuracy, scatter_csv,
                                snap_theta)

WALLS = [0.0, math.pi / 2, math.pi, -math.pi / 2]

def lm(x, y, theta=0.0, label=""):
    return PlacardLandmark([x, y, 1.5], theta, label)

def row(distance, error):
    return MetricRow(landmark_id=0, reference_id=0, label="",
                     reference_label="",
                     distance_from_origin=distance, displacement_error=error,
                     theta_error_deg=0.0)

def hallway(n=34):
    """References two metres apart along x, alternating wall sides"""
    return [lm(2.0 * i, 0.0, math.pi / 2 if i % 2 else -math.pi / 2,
               "2.{:03d}".format(100 + i)) for i in range(n)]

class TestSnap(TestCase):

    def test_nearest(self):
        (theta, star), = snap_theta([0.05], WALLS)
        self.assertEqual(theta, 0.05)
        self.assertAlmostEqual(star, 0.0)
        (_, star), = snap_theta([math.radians(170)], WALLS)
        self.assertAlmostEqual(abs(star), math.pi)

    def test_tie(self):
        (_, star), = snap_theta([math.pi / 4], WALLS)
        self.assertAlmostEqual(star, 0.0)

    def test_dominant(self):
        baseline = [0.1, 0.12, 0.08, 1.0]
        self.assertAlmostEqual(dominant_direction(baseline), 0.1)
        with self.assertRaises(ValueError):
            dominant_direction([])

    def test_quarter_turn(self):
        rng = np.random.default_rng(0)
        baseline = rng.normal(0.2, 0.05, 20)
        thetas = rng.uniform(-math.pi, math.pi, 50)
        a = snap_theta(thetas, baseline)
        b = snap_theta(thetas, baseline + math.pi / 2)
        for (_, sa), (_, sb) in zip(a, b):
            self.assertAlmostEqual(math.cos(sa), math.cos(sb))
            self.assertAlmostEqual(math.sin(sa), math.sin(sb))


class TestCorrespond(TestCase):

    def test_identical(self):
        refs = hallway(5)
        corr = correspond(refs, refs)
        self.assertEqual(corr.matches, [(i, i) for i in range(5)])
        self.assertEqual((corr.duplicates, corr.false_positives, corr.missed),
                         ([], [], []))

    def test_duplicate(self):
        refs = [lm(0, 0), lm(3, 0)]
        corr = correspond([lm(0.2, 0), lm(0.1, 0)], refs)
        self.assertEqual(corr.matches, [(1, 0)])
        self.assertEqual(corr.duplicates, [(0, 0)])
        self.assertEqual(corr.missed, [1])

    def test_false_positive(self):
        corr = correspond([lm(1, 1), lm(0, 0.4)], [lm(0, 0)])
        self.assertEqual(corr.matches, [(1, 0)])
        self.assertEqual(corr.false_positives, [0])
        self.assertEqual(correspond([lm(0, 0)], []).false_positives, [0])

    def test_label_preference(self):
        refs = [lm(0.1, 0, label="MEN"), lm(-0.3, 0, label="WOMEN")]
        corr = correspond([lm(0, 0, label="WOMEN")], refs)
        self.assertEqual(corr.matches, [(0, 1)])
        corr = correspond([lm(0, 0)], refs)
        self.assertEqual(corr.matches, [(0, 0)])

    def test_pairs(self):
        corr = correspondence_from_pairs([(0, 1), (2, 1), (3, 0)], 5, 3)
        self.assertEqual(corr, Correspondence([(0, 1), (3, 0)], [(2, 1)],
                                              [1, 4], [2]))
        with self.assertRaises(ValueError):
            correspondence_from_pairs([(0, 5)], 2, 2)
        with self.assertRaises(ValueError):
            correspondence_from_pairs([(0, 1), (0, 0)], 2, 2)


class TestMetrics(TestCase):

    def test_perfect(self):
        refs = hallway()
        report = evaluate(refs, refs)
        self.assertEqual((report.observed_count, report.matched_count,
                          report.missed_count, report.duplicate_count,
                          report.false_positive_count), (34, 34, 0, 0, 0))
        self.assertAlmostEqual(report.displacement_mean, 0.0)
        self.assertAlmostEqual(report.theta_err_mean, 0.0)
        self.assertEqual(report.label_accuracy, 1.0)

    def test_offset(self):
        refs = hallway()
        moved = [lm(r.x + 0.3, r.y, r.theta + math.radians(3), r.label)
                 for r in refs]
        report = evaluate(moved, refs)
        self.assertAlmostEqual(report.displacement_mean, 0.3)
        self.assertAlmostEqual(report.displacement_std, 0.0)
        self.assertAlmostEqual(report.theta_err_mean, 3.0)
        self.assertEqual(len(report.rows), 34)
        self.assertAlmostEqual(report.rows[5].distance_from_origin, 10.0)

    def test_origin(self):
        refs = hallway(3)
        report = evaluate(refs, refs, EvalParams(origin=(4.0, 3.0)))
        np.testing.assert_allclose(
            [r.distance_from_origin for r in report.rows],
            [5.0, math.hypot(2, 3), 3.0])

    def test_label_accuracy(self):
        refs = hallway()
        found = [lm(r.x, r.y, r.theta, r.label if i < 13 else "MEN")
                 for i, r in enumerate(refs)]
        report = evaluate(found, refs)
        self.assertEqual(report.labels_correct, 13)
        self.assertAlmostEqual(report.label_accuracy, 13 / 34)
        self.assertAlmostEqual(label_accuracy(found, refs), 13 / 34)
        self.assertIn("13/34 (38%)", format_table([("ICP", report)]))

    def test_landmark_order(self):
        rng = np.random.default_rng(3)
        refs = hallway()
        found = [lm(r.x + rng.normal(0, 0.1), r.y + rng.normal(0, 0.1),
                    r.theta + rng.normal(0, 0.05),
                    r.label if rng.random() < 0.7 else "")
                 for r in refs for _ in range(1 + (r.x % 6 == 0))]
        found.append(lm(100.0, 100.0))
        corr = correspond(found, refs)
        self.assertTrue(corr.duplicates and corr.false_positives)
        report = compute_metrics(found, refs, corr)

        perm = rng.permutation(len(found))
        moved = np.argsort(perm)
        shuffled = [found[k] for k in perm]
        relabeled = Correspondence(
            [(int(moved[i]), j) for i, j in reversed(corr.matches)],
            [(int(moved[i]), j) for i, j in corr.duplicates],
            [int(moved[i]) for i in corr.false_positives], corr.missed)
        other = compute_metrics(shuffled, refs, relabeled)

        for field in ("observed_count", "matched_count", "missed_count",
                      "duplicate_count", "false_positive_count",
                      "labels_correct"):
            self.assertEqual(getattr(other, field), getattr(report, field))
        for field in ("displacement_mean", "displacement_std",
                      "theta_err_mean", "theta_err_std", "label_accuracy",
                      "distance_error_spearman"):
            self.assertAlmostEqual(getattr(other, field),
                                   getattr(report, field), msg=field)

        def by_reference(rows):
            return sorted((r.reference_id, r.label, r.displacement_error,
                           r.theta_error_deg) for r in rows)
        for a, b in zip(by_reference(other.rows), by_reference(report.rows)):
            self.assertEqual(a[:2], b[:2])
            np.testing.assert_allclose(a[2:], b[2:], atol=1e-12)

    def test_bookkeeping(self):
        with self.assertRaises(ValueError):
            EvalReport(observed_count=5, matched_count=3, missed_count=0,
                       duplicate_count=1, false_positive_count=0)
        corr = Correspondence([(0, 0)], [], [1], [])
        report = compute_metrics([lm(0, 0), lm(5, 5)], [lm(0, 0)], corr)
        self.assertEqual(report.observed_count, report.matched_count +
                         report.duplicate_count + report.false_positive_count)

    def test_empty(self):
        report = evaluate([], hallway(4))
        self.assertEqual((report.observed_count, report.missed_count), (0, 4))
        self.assertEqual(report.label_accuracy, 0.0)
        self.assertIsNone(report.distance_error_spearman)


class TestReports(TestCase):

    def test_trend(self):
        self.assertIsNone(error_trend([row(1, 0.1), row(2, 0.2)]))
        self.assertIsNone(error_trend([row(1, 0.1), row(2, 0.1),
                                       row(3, 0.1)]))
        self.assertAlmostEqual(error_trend([row(d, 0.01 * d * d)
                                            for d in range(1, 8)]), 1.0)
        self.assertAlmostEqual(error_trend([row(d, 1.0 / d)
                                            for d in range(1, 8)]), -1.0)

    def test_table(self):
        refs = hallway(4)
        reports = [("ICP", evaluate(refs, refs)),
                   ("seed", evaluate(refs[:3], refs))]
        lines = format_table(reports).splitlines()
        self.assertEqual(len(lines), 11)
        self.assertEqual(lines[0].split(), ["ICP", "seed"])
        self.assertEqual(lines[1].split(), ["Observed", "4", "3"])
        self.assertIn("Missed", lines[2])

    def test_scatter(self):
        refs = hallway(3)
        text = scatter_csv([("0", evaluate(refs, refs))])
        lines = text.splitlines()
        self.assertEqual(lines[0], ",".join(SCATTER_COLUMNS))
        self.assertEqual(len(lines), 4)
        self.assertTrue(lines[2].startswith("0,1,1,2.0,0.0,"))
