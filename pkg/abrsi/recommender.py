# abrsi/recommender.py
"""
Recommandeurs LSI entraînés sur les projections de chaque domaine, bi-recommandation
et perte d'appariement adaptative (L_ABR).
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .data import DomainTag
from .errors import DimensionMismatchError
from .numerics import SvdFactors, as_matrix, cosine_matrix, truncated_svd

logger = logging.getLogger(__name__)

FOLD_MODES = ("literal", "standard")


@dataclass(frozen=True)
class LsiModel:
    """
    Factorisation de la matrice transposée (d_C × n) : `factors.u` est le facteur
    caractéristiques-latent (d_C × R), `factors.s` le transfert latent et
    `row_latents` = V·diag(s) donne une ligne latente par instance.
    """
    factors: SvdFactors
    domain_tag: DomainTag
    row_latents: np.ndarray
    fold_mode: str = "literal"

    @property
    def rank(self) -> int:
        return self.factors.rank

    @property
    def feature_dim(self) -> int:
        return int(self.factors.u.shape[0])


def fit_lsi(features: np.ndarray, r: int, domain_tag: DomainTag = DomainTag.SOURCE, fold_mode: str = "literal") -> LsiModel:
    features = as_matrix(features, "lsi features")
    if fold_mode not in FOLD_MODES:
        raise ValueError(f"Mode de projection LSI inconnu '{fold_mode}'")
    n, d_c = features.shape
    if not 1 <= r <= min(d_c, n):
        raise ValueError(f"Rang LSI {r} hors de [1, {min(d_c, n)}]")
    factors = truncated_svd(features.T, r)
    row_latents = factors.vt.T * factors.s
    return LsiModel(factors=factors, domain_tag=DomainTag(domain_tag), row_latents=row_latents, fold_mode=fold_mode)


def fold_in(model: LsiModel, x: np.ndarray) -> np.ndarray:
    """
    Projette un vecteur (ou une matrice de lignes) dans l'espace latent du modèle.

    Mode "literal" : x·U·Σ (facteur caractéristiques-latent puis transfert latent).
    Mode "standard" : repliement LSI classique x·U·Σ⁻¹, exprimé à l'échelle des
    lignes stockées (×Σ), soit x·U ; une ligne d'entraînement retrouve sa latente.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.feature_dim:
        raise DimensionMismatchError("fold_in", x.shape, model.factors.u.shape)
    projected = x @ model.factors.u
    if model.fold_mode == "literal":
        return projected * model.factors.s
    return projected


@dataclass(frozen=True)
class BiRecommendation:
    rs_s_index: np.ndarray  # source recommandée (top-1) par instance cible
    rs_s_label: np.ndarray  # PL^RS
    rs_t_topn: Tuple[np.ndarray, ...]  # par catégorie source, indices cibles recommandés
    mu_rs_s: np.ndarray
    mu_rs_t: np.ndarray
    present_mask: np.ndarray

    @property
    def k_categories(self) -> int:
        return int(self.present_mask.shape[0])

    def restrict(self, target_positions: np.ndarray) -> "BiRecommendation":
        """Sous-ensemble pour un minibatch ; les indices cibles sont renumérotés."""
        target_positions = np.asarray(target_positions, dtype=np.int64)
        local = {int(j): position for position, j in enumerate(target_positions)}
        topn = tuple(
            np.array([local[int(j)] for j in members if int(j) in local], dtype=np.int64) for members in self.rs_t_topn
        )
        labels = self.rs_s_label[target_positions]
        present = self.present_mask & np.array(
            [len(topn[k]) > 0 and np.any(labels == k) for k in range(self.k_categories)], dtype=bool
        )
        return BiRecommendation(
            rs_s_index=self.rs_s_index[target_positions],
            rs_s_label=labels,
            rs_t_topn=topn,
            mu_rs_s=self.mu_rs_s,
            mu_rs_t=self.mu_rs_t,
            present_mask=present,
        )


def recommend(
    model_s: LsiModel,
    model_t: LsiModel,
    src_feats: np.ndarray,
    src_labels: np.ndarray,
    tgt_feats: np.ndarray,
    top_n: int,
    k_categories: Optional[int] = None,
) -> BiRecommendation:
    """
    RS_S : chaque cible reçoit la source la plus proche (cosinus latent, égalité
    -> plus petit indice). RS_T : les TopN cibles les plus proches de chaque
    centroïde de catégorie source.
    """
    src_labels = np.asarray(src_labels, dtype=np.int64)
    k = int(k_categories if k_categories is not None else src_labels.max() + 1)
    n_t = tgt_feats.shape[0]
    if top_n < 1:
        raise ValueError("TopN doit être >= 1")
    if top_n > n_t:
        logger.warning(f"TopN={top_n} supérieur au nombre de cibles ({n_t}), ramené à {n_t}")
        top_n = n_t

    similarities = cosine_matrix(fold_in(model_s, tgt_feats), model_s.row_latents)
    rs_s_index = np.argmax(similarities, axis=1).astype(np.int64)
    rs_s_label = src_labels[rs_s_index]

    target_latents = model_t.row_latents
    rs_t_topn = []
    mu_rs_s = np.zeros((k, tgt_feats.shape[1]))
    mu_rs_t = np.zeros((k, tgt_feats.shape[1]))
    present = np.zeros(k, dtype=bool)
    for category in range(k):
        members = src_labels == category
        if not np.any(members):
            rs_t_topn.append(np.empty(0, dtype=np.int64))
            continue
        centroid = src_feats[members].mean(axis=0, keepdims=True)
        scores = cosine_matrix(fold_in(model_t, centroid), target_latents)[0]
        ranked = np.argsort(-scores, kind="stable")[:top_n].astype(np.int64)
        rs_t_topn.append(ranked)
        mu_rs_t[category] = tgt_feats[ranked].mean(axis=0)

        labelled = rs_s_label == category
        if np.any(labelled):
            mu_rs_s[category] = tgt_feats[labelled].mean(axis=0)
            present[category] = True

    missing = [c for c in range(k) if not present[c]]
    if missing:
        logger.debug(f"Catégories sans cible recommandée par RS_S : {missing}")
    return BiRecommendation(
        rs_s_index=rs_s_index,
        rs_s_label=rs_s_label,
        rs_t_topn=tuple(rs_t_topn),
        mu_rs_s=mu_rs_s,
        mu_rs_t=mu_rs_t,
        present_mask=present,
    )


def abr_loss(
    rec: BiRecommendation,
    tgt_feats: np.ndarray,
    src_feats: Optional[np.ndarray] = None,
    source_side: bool = False,
) -> Tuple[float, np.ndarray, Optional[np.ndarray]]:
    """
    Moyenne sur les catégories présentes de ‖μ_RS_S^k − μ_RS_T^k‖².

    Les affectations de `rec` sont des constantes ; les centroïdes sont recalculés
    à partir des projections fournies pour que le gradient les traverse. Avec
    `source_side`, μ_RS_S^k est la moyenne des sources recommandées (variante
    littérale de l'équation) et le gradient atteint aussi les projections source.
    Renvoie (valeur, gradient cible, gradient source ou None).
    """
    grad_t = np.zeros_like(tgt_feats)
    grad_s = None
    if source_side:
        if src_feats is None:
            raise ValueError("abr_loss(source_side=True) requiert les projections source")
        grad_s = np.zeros_like(src_feats)

    present = np.flatnonzero(rec.present_mask)
    if present.size == 0:
        logger.warning("L_ABR : aucune catégorie présente, perte nulle")
        return 0.0, grad_t, grad_s

    value = 0.0
    scale = 1.0 / present.size
    for category in present:
        labelled = np.flatnonzero(rec.rs_s_label == category)
        top = rec.rs_t_topn[category]
        if source_side:
            recommended = rec.rs_s_index[labelled]
            mu_s = src_feats[recommended].mean(axis=0)
        else:
            mu_s = tgt_feats[labelled].mean(axis=0)
        mu_t = tgt_feats[top].mean(axis=0)
        diff = mu_s - mu_t
        value += scale * float(diff @ diff)

        if source_side:
            np.add.at(grad_s, recommended, 2.0 * scale * diff / labelled.size)
        else:
            np.add.at(grad_t, labelled, 2.0 * scale * diff / labelled.size)
        np.add.at(grad_t, top, -2.0 * scale * diff / top.size)
    return value, grad_t, grad_s
