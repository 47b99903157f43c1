# abrsi/pseudolabel.py
"""
Vote à quatre voix (NN, RS, SR, TR) sur les instances cibles non étiquetées et
assemblage des pseudo-étiquettes hybrides dures / souples.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, Optional

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatchError
from .numerics import kmeans

logger = logging.getLogger(__name__)

ABSENT = -1
VOTERS = ("nn", "rs", "sr", "tr")
SR_RULES = ("unanimous", "majority")
SR_METRICS = ("euclidean", "cosine")
PL_STRATEGIES = ("hybrid", "soft_only")
_DISTANCE_CHUNK = 1024


def vote_nn(probs: np.ndarray) -> np.ndarray:
    """Argmax ligne à ligne ; en cas d'égalité, la plus petite catégorie."""
    if probs.ndim != 2:
        raise DimensionMismatchError("vote_nn", probs.shape, ("n", "K"))
    return np.argmax(probs, axis=1).astype(np.int64)


def vote_sr(
    tgt_feats: np.ndarray,
    src_feats: np.ndarray,
    src_labels: np.ndarray,
    k_neighbors: int = 3,
    rule: str = "unanimous",
    metric: str = "euclidean",
) -> np.ndarray:
    """
    Étiquette des k sources les plus proches dans l'espace partagé, présente
    seulement si elles s'accordent (unanimité, ou majorité stricte).
    """
    if k_neighbors < 1:
        raise ValueError("k_neighbors doit être >= 1")
    if k_neighbors > src_feats.shape[0]:
        raise ValueError(f"k_neighbors={k_neighbors} supérieur au nombre de sources ({src_feats.shape[0]})")
    if rule not in SR_RULES or metric not in SR_METRICS:
        raise ValueError(f"Règle SR '{rule}' ou métrique '{metric}' inconnue")
    if tgt_feats.shape[1] != src_feats.shape[1]:
        raise DimensionMismatchError("vote_sr", tgt_feats.shape, src_feats.shape)

    src_labels = np.asarray(src_labels, dtype=np.int64)
    votes = np.full(tgt_feats.shape[0], ABSENT, dtype=np.int64)
    for start in range(0, tgt_feats.shape[0], _DISTANCE_CHUNK):
        block = tgt_feats[start:start + _DISTANCE_CHUNK]
        distances = cdist(block, src_feats, metric="sqeuclidean" if metric == "euclidean" else "cosine")
        nearest = np.argpartition(distances, k_neighbors - 1, axis=1)[:, :k_neighbors]
        # Égalité à la frontière : les plus petits indices l'emportent.
        kth = np.take_along_axis(distances, nearest, axis=1).max(axis=1, keepdims=True)
        tied = np.flatnonzero(np.sum(distances <= kth, axis=1) > k_neighbors)
        if tied.size:
            nearest[tied] = np.argsort(distances[tied], axis=1, kind="stable")[:, :k_neighbors]
        neighbour_labels = src_labels[nearest]
        if rule == "unanimous":
            agree = np.all(neighbour_labels == neighbour_labels[:, :1], axis=1)
            votes[start:start + block.shape[0]] = np.where(agree, neighbour_labels[:, 0], ABSENT)
        else:
            for row, labels in enumerate(neighbour_labels):
                counts = np.bincount(labels)
                if counts.max() * 2 > k_neighbors:
                    votes[start + row] = int(np.argmax(counts))
    return votes


def vote_tr(
    tgt_feats: np.ndarray,
    nn_labels: np.ndarray,
    k_clusters: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """k-means sur les cibles ; chaque membre reçoit le mode des votes NN de son cluster (égalité -> absent)."""
    if k_clusters < 1:
        raise ValueError("k_clusters doit être >= 1")
    if k_clusters > tgt_feats.shape[0]:
        logger.warning(f"k_clusters={k_clusters} supérieur au nombre de cibles, ramené à {tgt_feats.shape[0]}")
        k_clusters = tgt_feats.shape[0]

    clustering = kmeans(tgt_feats, k_clusters, rng)
    nn_labels = np.asarray(nn_labels, dtype=np.int64)
    votes = np.full(tgt_feats.shape[0], ABSENT, dtype=np.int64)
    for cluster in range(k_clusters):
        members = clustering.assignments == cluster
        if not np.any(members):
            continue
        counts = np.bincount(nn_labels[members])
        winners = np.flatnonzero(counts == counts.max())
        if winners.size == 1:
            votes[members] = winners[0]
    return votes


@dataclass(frozen=True)
class PlRecord:
    nn: int
    rs: Optional[int]
    sr: Optional[int]
    tr: Optional[int]
    hard_label: Optional[int]
    soft_probs: Optional[np.ndarray]

    @property
    def status(self) -> str:
        return "soft" if self.hard_label is None else f"hard({self.hard_label})"


@dataclass(frozen=True)
class PseudoLabelSet:
    """Pseudo-étiquettes d'une époque, sous forme vectorisée. Un voteur désactivé vaut None."""
    nn: np.ndarray
    rs: Optional[np.ndarray]
    sr: Optional[np.ndarray]
    tr: Optional[np.ndarray]
    hard_mask: np.ndarray
    hard_labels: np.ndarray  # ABSENT hors du masque
    probs: np.ndarray

    @property
    def n_instances(self) -> int:
        return int(self.nn.shape[0])

    @property
    def hard_ratio(self) -> float:
        return float(self.hard_mask.mean()) if self.n_instances else 0.0

    def votes(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in VOTERS if getattr(self, name) is not None}

    def agreement_rates(self) -> Dict[str, float]:
        """Part des instances où chaque voteur est présent et d'accord avec NN."""
        return {
            name: float(np.mean(votes == self.nn))
            for name, votes in self.votes().items()
            if name != "nn"
        }

    def subset(self, positions: np.ndarray) -> "PseudoLabelSet":
        positions = np.asarray(positions, dtype=np.int64)

        def _take(votes):
            return None if votes is None else votes[positions]

        return PseudoLabelSet(
            nn=self.nn[positions], rs=_take(self.rs), sr=_take(self.sr), tr=_take(self.tr),
            hard_mask=self.hard_mask[positions], hard_labels=self.hard_labels[positions], probs=self.probs[positions],
        )

    def target_matrix(self, probs: Optional[np.ndarray] = None) -> np.ndarray:
        """p_T substitué : one-hot pour les instances dures, ligne du classifieur sinon."""
        substituted = (self.probs if probs is None else probs).copy()
        hard_rows = np.flatnonzero(self.hard_mask)
        substituted[hard_rows] = 0.0
        substituted[hard_rows, self.hard_labels[hard_rows]] = 1.0
        return substituted

    def records(self) -> Iterator[PlRecord]:
        def _optional(votes, j):
            if votes is None or votes[j] == ABSENT:
                return None
            return int(votes[j])

        for j in range(self.n_instances):
            hard = bool(self.hard_mask[j])
            yield PlRecord(
                nn=int(self.nn[j]),
                rs=_optional(self.rs, j),
                sr=_optional(self.sr, j),
                tr=_optional(self.tr, j),
                hard_label=int(self.hard_labels[j]) if hard else None,
                soft_probs=None if hard else self.probs[j].copy(),
            )


def assemble(
    nn: np.ndarray,
    rs: Optional[np.ndarray],
    sr: Optional[np.ndarray],
    tr: Optional[np.ndarray],
    probs: np.ndarray,
    strategy: str = "hybrid",
) -> PseudoLabelSet:
    """
    Dur(k) si et seulement si tous les voteurs actifs sont présents et valent k ;
    souple sinon, avec la ligne du classifieur comme distribution.
    """
    if strategy not in PL_STRATEGIES:
        raise ValueError(f"Stratégie de pseudo-étiquetage inconnue '{strategy}'")
    nn = np.asarray(nn, dtype=np.int64)
    active = [np.asarray(v, dtype=np.int64) for v in (rs, sr, tr) if v is not None]
    for votes in active:
        if votes.shape != nn.shape:
            raise DimensionMismatchError("assemble", nn.shape, votes.shape)
    if probs.shape[0] != nn.shape[0]:
        raise DimensionMismatchError("assemble", nn.shape, probs.shape)

    hard_mask = np.ones(nn.shape[0], dtype=bool)
    for votes in active:
        hard_mask &= votes == nn
    if strategy == "soft_only":
        hard_mask[:] = False
    hard_labels = np.where(hard_mask, nn, ABSENT)
    return PseudoLabelSet(nn=nn, rs=rs, sr=sr, tr=tr, hard_mask=hard_mask, hard_labels=hard_labels, probs=probs)
