# abrsi/evaluation.py
"""
Métriques d'évaluation sur le domaine cible et diagnostics de qualité des
pseudo-étiquettes. Toutes les fonctions sont pures.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix, precision_recall_fscore_support, roc_auc_score

from .data import EvaluationTruth
from .pseudolabel import PseudoLabelSet

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9
CERTAINTY_THRESHOLD = 0.7


@dataclass
class MetricsReport:
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    auc: Optional[float]
    confusion: List[List[int]]
    hellinger_hard_pl: Optional[float] = None
    hard_pl_ratio: Optional[float] = None
    hard_pl_accuracy: Optional[float] = None
    soft_pl_hellinger: Optional[float] = None
    certainty_fraction: Optional[float] = None
    extra: Dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> Dict:
        return asdict(self)


def _weighted_auc(pred_probs: np.ndarray, truth: np.ndarray, classes: np.ndarray) -> Optional[float]:
    """AUC un-contre-tous pondérée par le support ; rangs moyens pour les ex æquo."""
    if classes.size < 2:
        logger.warning("AUC indéfinie : une seule catégorie présente dans la vérité terrain")
        return None
    scores, supports = [], []
    for category in classes:
        positives = truth == category
        scores.append(roc_auc_score(positives.astype(int), pred_probs[:, category]))
        supports.append(positives.sum())
    return float(np.average(scores, weights=supports))


def classification_metrics(pred_probs: np.ndarray, truth: np.ndarray) -> MetricsReport:
    """Exactitude, P/R/F1 pondérés et AUC pondérée ; les catégories absentes de la vérité sont exclues."""
    pred_probs = np.asarray(pred_probs, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    k = pred_probs.shape[1]
    if truth.shape[0] != pred_probs.shape[0]:
        raise ValueError(f"{truth.shape[0]} étiquettes pour {pred_probs.shape[0]} prédictions")
    if truth.size and (truth.min() < 0 or truth.max() >= k):
        raise ValueError(f"Vérité terrain hors de [0, {k})")

    predictions = np.argmax(pred_probs, axis=1)
    classes = np.unique(truth)
    absent = sorted(set(range(k)) - set(classes.tolist()))
    if absent:
        logger.warning(f"Catégories absentes de la vérité terrain, exclues de la pondération : {absent}")
    never_predicted = sorted(set(classes.tolist()) - set(predictions.tolist()))
    if never_predicted:
        logger.warning(f"Catégories jamais prédites, précision fixée à 0 : {never_predicted}")

    precision, recall, f1, _ = precision_recall_fscore_support(
        truth, predictions, labels=classes, average="weighted", zero_division=0
    )
    return MetricsReport(
        accuracy=float(accuracy_score(truth, predictions)),
        weighted_precision=float(precision),
        weighted_recall=float(recall),
        weighted_f1=float(f1),
        auc=_weighted_auc(pred_probs, truth, classes),
        confusion=confusion_matrix(truth, predictions, labels=np.arange(k)).tolist(),
    )


def _check_simplex_vector(p: np.ndarray, name: str):
    if np.any(p < -SIMPLEX_TOL) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{name} n'est pas une distribution de probabilité")


def hellinger(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"Distributions de tailles différentes : {p.shape} et {q.shape}")
    _check_simplex_vector(p, "p")
    _check_simplex_vector(q, "q")
    diff = np.sqrt(np.clip(p, 0.0, None)) - np.sqrt(np.clip(q, 0.0, None))
    return float(min(1.0, np.sqrt(np.sum(diff**2)) / np.sqrt(2.0)))


@dataclass(frozen=True)
class PlQuality:
    hard_ratio: float
    hard_accuracy: Optional[float]
    hard_hellinger: Optional[float]


def pl_quality(pseudo_labels: PseudoLabelSet, truth: EvaluationTruth) -> PlQuality:
    """Part, exactitude et diversité (Hellinger) des pseudo-étiquettes dures."""
    if truth.labels.shape[0] != pseudo_labels.n_instances:
        raise ValueError("Vérité terrain et pseudo-étiquettes de tailles différentes")
    hard = np.flatnonzero(pseudo_labels.hard_mask)
    if hard.size == 0:
        return PlQuality(hard_ratio=0.0, hard_accuracy=None, hard_hellinger=None)
    labels = pseudo_labels.hard_labels[hard]
    distribution = np.bincount(labels, minlength=truth.k_categories) / hard.size
    return PlQuality(
        hard_ratio=hard.size / pseudo_labels.n_instances,
        hard_accuracy=float(np.mean(labels == truth.labels[hard])),
        hard_hellinger=hellinger(distribution, truth.distribution()),
    )


def certainty_fraction(probs: np.ndarray, threshold: float = CERTAINTY_THRESHOLD) -> float:
    """Part des lignes dont la probabilité maximale dépasse le seuil."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("Le seuil de certitude doit être dans ]0, 1[")
    return float(np.mean(np.max(probs, axis=1) > threshold))


def soft_pl_hellinger(probs: np.ndarray, truth: EvaluationTruth) -> float:
    """Diversité des PL souples : Hellinger entre la prédiction moyenne et la distribution réelle."""
    mean = probs.mean(axis=0)
    return hellinger(mean / mean.sum(), truth.distribution())


def evaluate_target(
    pred_probs: np.ndarray,
    truth: EvaluationTruth,
    pseudo_labels: Optional[PseudoLabelSet] = None,
) -> MetricsReport:
    report = classification_metrics(pred_probs, truth.labels)
    report.soft_pl_hellinger = soft_pl_hellinger(pred_probs, truth)
    report.certainty_fraction = certainty_fraction(pred_probs)
    if pseudo_labels is not None:
        quality = pl_quality(pseudo_labels, truth)
        report.hard_pl_ratio = quality.hard_ratio
        report.hard_pl_accuracy = quality.hard_accuracy
        report.hellinger_hard_pl = quality.hard_hellinger
    return report
