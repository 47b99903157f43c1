import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from abrsi.data import EvaluationTruth
from abrsi.evaluation import (
    certainty_fraction,
    classification_metrics,
    evaluate_target,
    hellinger,
    pl_quality,
    soft_pl_hellinger,
)
from abrsi.pseudolabel import PseudoLabelSet

NAMES = ("normal", "dos", "probe")


def one_hot_probs(predictions, k=3, confidence=0.8):
    probs = np.full((len(predictions), k), (1.0 - confidence) / (k - 1))
    probs[np.arange(len(predictions)), predictions] = confidence
    return probs


simplex = st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3).map(lambda v: np.array(v) / np.sum(v))


class ClassificationMetricsTestCase(unittest.TestCase):

    def setUp(self):
        self.truth = np.array([0, 0, 1, 1, 2, 2])
        self.probs = one_hot_probs([0, 1, 1, 1, 2, 0])

    def test_hand_fixture(self):
        report = classification_metrics(self.probs, self.truth)
        self.assertAlmostEqual(report.accuracy, 4 / 6)
        self.assertAlmostEqual(report.weighted_precision, (0.5 + 2 / 3 + 1.0) / 3)
        self.assertAlmostEqual(report.weighted_recall, (0.5 + 1.0 + 0.5) / 3)
        self.assertAlmostEqual(report.weighted_f1, (0.5 + 0.8 + 2 / 3) / 3)
        self.assertEqual(report.confusion, [[1, 1, 0], [0, 2, 0], [1, 0, 1]])
        self.assertTrue(0.0 <= report.auc <= 1.0)

    def test_perfect_predictions(self):
        report = classification_metrics(one_hot_probs(self.truth), self.truth)
        self.assertEqual((report.accuracy, report.weighted_f1, report.auc), (1.0, 1.0, 1.0))

    def test_auc_is_invariant_to_monotone_rescaling(self):
        scores = np.random.default_rng(0).dirichlet(np.ones(3), size=30)
        truth = np.arange(30) % 3
        base = classification_metrics(scores, truth)
        rescaled = classification_metrics(2.0 * scores**3 + 1.0, truth)
        self.assertAlmostEqual(base.auc, rescaled.auc)
        self.assertEqual(base.accuracy, rescaled.accuracy)

    def test_absent_and_never_predicted_categories_warn(self):
        with self.assertLogs('abrsi.evaluation', level='WARNING') as logs:
            report = classification_metrics(one_hot_probs([0, 0, 0, 0]), np.array([0, 0, 1, 1]))
        self.assertTrue(any("absentes" in line for line in logs.output))
        self.assertTrue(any("jamais prédites" in line for line in logs.output))
        self.assertAlmostEqual(report.weighted_recall, 0.5)

    def test_single_category_has_no_auc(self):
        with self.assertLogs('abrsi.evaluation', level='WARNING'):
            report = classification_metrics(one_hot_probs([0, 0]), np.array([0, 0]))
        self.assertIsNone(report.auc)

    def test_invalid_inputs(self):
        with self.assertRaises(ValueError):
            classification_metrics(self.probs, self.truth[:4])
        with self.assertRaises(ValueError):
            classification_metrics(self.probs, np.array([0, 0, 1, 1, 2, 3]))


class HellingerTestCase(unittest.TestCase):

    def test_reference_values(self):
        self.assertAlmostEqual(hellinger([0.5, 0.5], [1.0, 0.0]), 0.5412, places=4)
        self.assertEqual(hellinger([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]), 0.0)
        self.assertAlmostEqual(hellinger([1.0, 0.0], [0.0, 1.0]), 1.0)

    def test_rejects_non_distributions(self):
        with self.assertRaises(ValueError):
            hellinger([0.5, 0.6], [0.5, 0.5])
        with self.assertRaises(ValueError):
            hellinger([0.5, 0.5], [1.0, 0.0, 0.0])

    @settings(max_examples=100, deadline=None)
    @given(simplex, simplex, simplex)
    def test_metric_properties(self, p, q, r):
        self.assertAlmostEqual(hellinger(p, q), hellinger(q, p))
        self.assertTrue(0.0 <= hellinger(p, q) <= 1.0)
        self.assertLessEqual(hellinger(p, r), hellinger(p, q) + hellinger(q, r) + 1e-12)


class PseudoLabelQualityTestCase(unittest.TestCase):

    def setUp(self):
        self.truth = EvaluationTruth(labels=np.array([0, 0, 2, 1]), category_names=NAMES)

    def _labels(self, hard_mask, hard_labels):
        probs = one_hot_probs([0, 1, 2, 1])
        return PseudoLabelSet(
            nn=np.array([0, 1, 2, 1]), rs=None, sr=None, tr=None,
            hard_mask=np.array(hard_mask), hard_labels=np.array(hard_labels), probs=probs,
        )

    def test_hard_subset(self):
        quality = pl_quality(self._labels([True, True, False, True], [0, 1, -1, 1]), self.truth)
        self.assertAlmostEqual(quality.hard_ratio, 0.75)
        self.assertAlmostEqual(quality.hard_accuracy, 2 / 3)
        expected = np.sqrt(np.sum((np.sqrt([1 / 3, 2 / 3, 0.0]) - np.sqrt([0.5, 0.25, 0.25])) ** 2) / 2)
        self.assertAlmostEqual(quality.hard_hellinger, expected)

    def test_no_hard_labels(self):
        quality = pl_quality(self._labels([False] * 4, [-1] * 4), self.truth)
        self.assertEqual(quality.hard_ratio, 0.0)
        self.assertIsNone(quality.hard_accuracy)
        self.assertIsNone(quality.hard_hellinger)

    def test_size_mismatch(self):
        truth = EvaluationTruth(labels=np.array([0, 1]), category_names=NAMES)
        with self.assertRaises(ValueError):
            pl_quality(self._labels([True] * 4, [0, 1, 2, 1]), truth)


class CertaintyTestCase(unittest.TestCase):

    def test_fraction_above_threshold(self):
        probs = np.array([[0.9, 0.1], [0.6, 0.4], [0.29, 0.71], [0.7, 0.3]])
        self.assertEqual(certainty_fraction(probs), 0.5)
        self.assertEqual(certainty_fraction(probs, threshold=0.5), 1.0)
        with self.assertRaises(ValueError):
            certainty_fraction(probs, threshold=1.0)

    def test_soft_diversity(self):
        truth = EvaluationTruth(labels=np.array([0, 1, 2]), category_names=NAMES)
        self.assertAlmostEqual(soft_pl_hellinger(np.full((3, 3), 1 / 3), truth), 0.0)

    def test_evaluate_target_fills_every_metric(self):
        truth = EvaluationTruth(labels=np.array([0, 0, 2, 1]), category_names=NAMES)
        probs = one_hot_probs([0, 1, 2, 1])
        labels = PseudoLabelSet(
            nn=np.array([0, 1, 2, 1]), rs=None, sr=None, tr=None,
            hard_mask=np.ones(4, dtype=bool), hard_labels=np.array([0, 1, 2, 1]), probs=probs,
        )
        metrics = evaluate_target(probs, truth, labels).as_dict()
        self.assertAlmostEqual(metrics["accuracy"], 0.75)
        self.assertEqual(metrics["hard_pl_ratio"], 1.0)
        self.assertAlmostEqual(metrics["hard_pl_accuracy"], 0.75)
        self.assertEqual(metrics["certainty_fraction"], 1.0)
        self.assertIsNotNone(metrics["soft_pl_hellinger"])


if __name__ == '__main__':
    unittest.main()
