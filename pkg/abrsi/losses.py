# abrsi/losses.py
"""
Termes de l'objectif : L_SUP, L_DIV, L_TE, connaissance d'erreur (EK) et L_EKL,
ainsi que les variantes d'ablation (discriminateur de domaine, appariement
probabiliste). Chaque fonction renvoie la valeur et ses gradients analytiques.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError
from .network import LayerGrad, Mlp

logger = logging.getLogger(__name__)

LOG_CLAMP = 1e-12
D_CLAMP = 1e-7
EKL_GROUPINGS = ("sum", "literal")
EK_VARIANTS = ("zero", "reverse", "previous")


def _check_simplex(probs: np.ndarray, operation: str):
    if probs.ndim != 2:
        raise DimensionMismatchError(operation, probs.shape, ("n", "K"))


def l_sup(probs_s: np.ndarray, labels_s: np.ndarray) -> Tuple[float, np.ndarray]:
    """Entropie croisée moyenne, log borné à 1e-12."""
    _check_simplex(probs_s, "l_sup")
    labels_s = np.asarray(labels_s, dtype=np.int64)
    n, k = probs_s.shape
    if labels_s.shape != (n,):
        raise DimensionMismatchError("l_sup", probs_s.shape, labels_s.shape)
    if labels_s.size and (labels_s.min() < 0 or labels_s.max() >= k):
        raise ValueError(f"Étiquette hors de [0, {k})")

    rows = np.arange(n)
    picked = probs_s[rows, labels_s]
    clamped = np.maximum(picked, LOG_CLAMP)
    value = float(-np.mean(np.log(clamped)))
    grad = np.zeros_like(probs_s)
    grad[rows, labels_s] = np.where(picked > LOG_CLAMP, -1.0 / (n * clamped), 0.0)
    return value, grad


def l_div(probs_t: np.ndarray) -> Tuple[float, np.ndarray]:
    """Entropie négative de la prédiction moyenne, dans [−log K, 0] ; 0·log0 = 0."""
    _check_simplex(probs_t, "l_div")
    n = probs_t.shape[0]
    mean = probs_t.mean(axis=0)
    positive = mean > 0
    value = float(np.sum(mean[positive] * np.log(mean[positive])))
    grad_mean = np.log(np.maximum(mean, LOG_CLAMP)) + 1.0
    grad = np.broadcast_to(grad_mean / n, probs_t.shape).copy()
    return value, grad


def l_te(probs_t: np.ndarray, alpha: float, reduction: str = "sum") -> Tuple[float, np.ndarray]:
    """Entropie de Tsallis d'indice α, sommée sur les instances (ou moyennée)."""
    _check_simplex(probs_t, "l_te")
    if alpha <= 0 or alpha == 1:
        raise ValueError(f"Indice de Tsallis invalide : {alpha}")
    if reduction not in ("sum", "mean"):
        raise ValueError(f"Réduction inconnue '{reduction}'")
    scale = 1.0 / (alpha - 1.0)
    clipped = np.clip(probs_t, 0.0, None)
    per_row = scale * (1.0 - np.sum(clipped**alpha, axis=1))
    # Pour α < 1, p^(α−1) diverge en 0 : la base est bornée comme dans l_div.
    base = np.maximum(clipped, LOG_CLAMP) if alpha < 1.0 else clipped
    grad = -scale * alpha * base ** (alpha - 1.0)
    if reduction == "mean":
        return float(per_row.mean()), grad / probs_t.shape[0]
    return float(per_row.sum()), grad


def tsallis_rows(probs_t: np.ndarray, alpha: float) -> np.ndarray:
    return (1.0 - np.sum(np.clip(probs_t, 0.0, None) ** alpha, axis=1)) / (alpha - 1.0)


# --- Connaissance d'erreur ---

@dataclass
class EkBuild:
    """
    EK des catégories valides (`categories`) et de quoi rétropropager vers les
    sorties probabilistes. Les lignes cibles dures sont des constantes.
    """
    ek: np.ndarray  # K' × K (ou K' × 1 en mode scalaire)
    categories: np.ndarray
    diff: np.ndarray  # p_S^μ − p_T^μ, K' × K
    source_means: np.ndarray
    target_means: np.ndarray
    scalar: bool
    _labels_s: np.ndarray
    _counts: np.ndarray
    _probs_t: np.ndarray
    _weights: np.ndarray
    _trainable_rows: np.ndarray
    _n_s: int

    def backward_diff(self, grad_diff: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Gradients (probs_s, probs_t) à partir de dL/d(diff)."""
        grad_s = np.zeros((self._n_s, self._probs_t.shape[1]))
        grad_t = np.zeros_like(self._probs_t)
        for row, category in enumerate(self.categories):
            g = grad_diff[row]
            members = self._labels_s == category
            grad_s[members] += g / self._counts[row]

            h = -g
            weight = self._weights[row]
            q = self._probs_t
            grad_t[:, category] += (q @ h - h @ self.target_means[row]) / weight
            grad_t += np.outer(q[:, category], h) / weight
        grad_t[~self._trainable_rows] = 0.0
        return grad_s, grad_t

    def backward(self, grad_ek: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if self.scalar:
            grad_diff = 2.0 * self.diff * grad_ek[:, :1]
        else:
            grad_diff = 2.0 * self.diff * grad_ek
        return self.backward_diff(grad_diff)


def build_ek(
    probs_s: np.ndarray,
    labels_s: np.ndarray,
    probs_t: np.ndarray,
    trainable_rows: Optional[np.ndarray] = None,
    scalar: bool = False,
) -> EkBuild:
    """
    `probs_t` est la matrice cible déjà substituée (one-hot pour les pseudo-étiquettes
    dures) ; `trainable_rows` marque les lignes qui restent des sorties du classifieur.
    EK^(k) = (p_S^μ(k) − p_T^μ(k))∘², ou sa somme en mode scalaire.
    """
    _check_simplex(probs_s, "build_ek")
    _check_simplex(probs_t, "build_ek")
    if probs_s.shape[1] != probs_t.shape[1]:
        raise DimensionMismatchError("build_ek", probs_s.shape, probs_t.shape)
    labels_s = np.asarray(labels_s, dtype=np.int64)
    k = probs_s.shape[1]
    if trainable_rows is None:
        trainable_rows = np.ones(probs_t.shape[0], dtype=bool)

    categories, counts, source_means, target_means, weights = [], [], [], [], []
    for category in range(k):
        members = labels_s == category
        count = int(members.sum())
        weight = float(probs_t[:, category].sum())
        if count == 0:
            logger.warning(f"EK : catégorie {category} sans instance source, ignorée")
            continue
        if weight <= LOG_CLAMP:
            logger.warning(f"EK : catégorie {category} sans masse cible, ignorée")
            continue
        categories.append(category)
        counts.append(count)
        weights.append(weight)
        source_means.append(probs_s[members].mean(axis=0))
        target_means.append(probs_t[:, category] @ probs_t / weight)

    dim = 1 if scalar else k
    if not categories:
        empty = np.zeros((0, k))
        return EkBuild(
            ek=np.zeros((0, dim)), categories=np.zeros(0, dtype=np.int64), diff=empty, source_means=empty,
            target_means=empty, scalar=scalar, _labels_s=labels_s, _counts=np.zeros(0), _probs_t=probs_t,
            _weights=np.zeros(0), _trainable_rows=trainable_rows, _n_s=probs_s.shape[0],
        )

    source_means = np.vstack(source_means)
    target_means = np.vstack(target_means)
    diff = source_means - target_means
    ek = np.sum(diff**2, axis=1, keepdims=True) if scalar else diff**2
    return EkBuild(
        ek=ek,
        categories=np.asarray(categories, dtype=np.int64),
        diff=diff,
        source_means=source_means,
        target_means=target_means,
        scalar=scalar,
        _labels_s=labels_s,
        _counts=np.asarray(counts, dtype=np.float64),
        _probs_t=probs_t,
        _weights=np.asarray(weights),
        _trainable_rows=np.asarray(trainable_rows, dtype=bool),
        _n_s=probs_s.shape[0],
    )


@dataclass
class EkState:
    current: np.ndarray  # K × dim, lignes nulles pour les catégories ignorées
    previous: np.ndarray
    psi: float = -0.3
    phi: float = -0.05

    @classmethod
    def zeros(cls, k: int, dim: int, psi: float = -0.3, phi: float = -0.05) -> "EkState":
        return cls(current=np.zeros((k, dim)), previous=np.zeros((k, dim)), psi=psi, phi=phi)

    def store(self, build: EkBuild):
        self.current = np.zeros_like(self.current)
        self.current[build.categories] = build.ek


def advance_epoch(ek: EkState) -> EkState:
    """previous <- current ; current remis à zéro."""
    return EkState(current=np.zeros_like(ek.current), previous=ek.current.copy(), psi=ek.psi, phi=ek.phi)


@dataclass
class AdversarialResult:
    value: float
    d_grads: List[LayerGrad]
    d_accuracy: float


@dataclass
class EklResult(AdversarialResult):
    grad_ek: np.ndarray


def l_ekl(
    ek: np.ndarray,
    previous: np.ndarray,
    d: Mlp,
    psi: float,
    phi: float,
    variants=EK_VARIANTS,
    grouping: str = "sum",
) -> EklResult:
    """
    (1/K')Σ log D(EK) + (1/(V·K'))ΣΣ_* (1 − log D(EK_*)) sur les variantes actives
    EK_0 = 0, EK_R = ψ·EK, EK_P = φ·EK_précédent. Le regroupement "literal" lit
    le terme comme (V − log D), ce qui ne change que la constante.
    `previous` est aligné ligne à ligne sur `ek`.
    """
    if grouping not in EKL_GROUPINGS:
        raise ValueError(f"Regroupement L_EKL inconnu '{grouping}'")
    variants = tuple(v for v in EK_VARIANTS if v in variants)
    n_cat = ek.shape[0]
    if n_cat == 0:
        logger.warning("L_EKL : aucune catégorie valide, perte nulle")
        return EklResult(
            value=0.0, d_grads=[LayerGrad(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in d.layers],
            d_accuracy=0.0, grad_ek=np.zeros_like(ek),
        )

    blocks = [ek]
    for variant in variants:
        if variant == "zero":
            blocks.append(np.zeros_like(ek))
        elif variant == "reverse":
            blocks.append(psi * ek)
        else:
            blocks.append(phi * previous)
    inputs = np.vstack(blocks)
    outputs, tape = d.forward(inputs)
    outputs = outputs[:, 0]
    if not np.all(np.isfinite(outputs)):
        raise NonFiniteError("L_EKL : sortie du discriminateur non finie")
    clamped = np.clip(outputs, D_CLAMP, 1.0 - D_CLAMP)
    if np.any((clamped <= 0.0) | (clamped >= 1.0)):
        raise NonFiniteError("L_EKL : sortie du discriminateur hors de (0, 1) après bornage")

    n_variants = len(variants)
    coefficients = np.full(inputs.shape[0], 1.0 / n_cat)
    if n_variants:
        coefficients[n_cat:] = -1.0 / (n_variants * n_cat)
    constant = 0.0
    if n_variants:
        constant = 1.0 if grouping == "sum" else float(n_variants)
    value = float(np.sum(coefficients * np.log(clamped)) + constant)

    saturated = clamped != outputs
    upstream = np.where(saturated, 0.0, coefficients / clamped)[:, None]
    d_grads, grad_inputs = d.backward(tape, upstream)

    grad_ek = grad_inputs[:n_cat].copy()
    if "reverse" in variants:
        offset = n_cat * (1 + variants.index("reverse"))
        grad_ek += psi * grad_inputs[offset:offset + n_cat]

    correct = np.concatenate([outputs[:n_cat] > 0.5, outputs[n_cat:] < 0.5])
    return EklResult(value=value, d_grads=d_grads, d_accuracy=float(correct.mean()), grad_ek=grad_ek)


@dataclass
class DomainAdversarialResult(AdversarialResult):
    grad_feats_s: np.ndarray
    grad_feats_t: np.ndarray


def domain_adversarial_loss(d: Mlp, feats_s: np.ndarray, feats_t: np.ndarray) -> DomainAdversarialResult:
    """
    Remplaçant de L_EKL : D classe l'origine des projections (source = 1).
    La valeur renvoyée est −L_dom, pour que D la maximise comme L_EKL.
    """
    inputs = np.vstack([feats_s, feats_t])
    n_s, n_t = feats_s.shape[0], feats_t.shape[0]
    outputs, tape = d.forward(inputs)
    outputs = outputs[:, 0]
    clamped = np.clip(outputs, D_CLAMP, 1.0 - D_CLAMP)
    value = float(np.mean(np.log(clamped[:n_s])) + np.mean(np.log(1.0 - clamped[n_s:])))

    saturated = clamped != outputs
    upstream = np.concatenate([1.0 / (n_s * clamped[:n_s]), -1.0 / (n_t * (1.0 - clamped[n_s:]))])
    upstream = np.where(saturated, 0.0, upstream)[:, None]
    d_grads, grad_inputs = d.backward(tape, upstream)

    correct = np.concatenate([outputs[:n_s] > 0.5, outputs[n_s:] < 0.5])
    return DomainAdversarialResult(
        value=value, d_grads=d_grads, d_accuracy=float(correct.mean()),
        grad_feats_s=grad_inputs[:n_s], grad_feats_t=grad_inputs[n_s:],
    )


def prob_matching_loss(build: EkBuild) -> Tuple[float, np.ndarray]:
    """Remplaçant de L_EKL : moyenne des distances euclidiennes entre moyennes probabilistes par catégorie."""
    if build.categories.size == 0:
        return 0.0, np.zeros_like(build.diff)
    norms = np.linalg.norm(build.diff, axis=1)
    n_cat = build.categories.size
    safe = np.where(norms > LOG_CLAMP, norms, 1.0)
    grad_diff = np.where((norms > LOG_CLAMP)[:, None], build.diff / safe[:, None], 0.0) / n_cat
    return float(norms.mean()), grad_diff


# --- Calendriers ---

@dataclass(frozen=True)
class Schedules:
    rho_max: float
    alpha_max: float
    alpha_min: float
    total_epochs: int

    def _progress(self, epoch: int) -> float:
        if self.total_epochs <= 1:
            return 0.0
        return epoch / (self.total_epochs - 1)

    def rho(self, epoch: int) -> float:
        return self.rho_max * self._progress(epoch)

    def alpha(self, epoch: int) -> float:
        return self.alpha_max + (self.alpha_min - self.alpha_max) * self._progress(epoch)
