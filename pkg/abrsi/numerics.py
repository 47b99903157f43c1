# abrsi/numerics.py
"""
Primitives numériques partagées : validation de matrices, produit matriciel,
SVD tronquée, k-means et similarité cosinus.

Toutes les fonctions sont pures : à entrées et graine identiques, les sorties
sont identiques bit à bit.
"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.extmath import svd_flip

from .errors import ClusteringError, DimensionMismatchError, NonFiniteError, SvdConvergenceError

logger = logging.getLogger(__name__)

# Norme en dessous de laquelle un vecteur est considéré comme nul pour le cosinus.
ZERO_NORM = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Générateur PCG64 déterministe : même graine, même flux."""
    if seed < 0:
        raise ValueError(f"La graine doit être un entier non signé, reçu {seed}")
    return np.random.default_rng(np.random.PCG64(seed))


def derive_seed(rng: np.random.Generator) -> int:
    """Tire une graine entière pour les bibliothèques qui attendent un random_state."""
    return int(rng.integers(0, 2**31 - 1))


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Convertit en matrice float64 2D et rejette NaN/Inf."""
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2:
        raise DimensionMismatchError(f"as_matrix({name})", matrix.shape, ("rows", "cols"))
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteError(f"'{name}' contient des valeurs non finies")
    return matrix


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionMismatchError("matmul", a.shape, b.shape)
    product = a @ b
    if not np.all(np.isfinite(product)):
        raise NonFiniteError("matmul: le produit contient des valeurs non finies")
    return product


@dataclass(frozen=True)
class SvdFactors:
    """u (m×R), s (R, décroissant), vt (R×n)."""
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.s.shape[0])

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vt


def _gram_svd(m: np.ndarray):
    # Repli : décomposition propre de MᵀM, moins précise mais sans itération LAPACK.
    eigenvalues, eigenvectors = np.linalg.eigh(m.T @ m)
    order = np.argsort(eigenvalues, kind="stable")[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    v = eigenvectors[:, order]
    s = np.sqrt(eigenvalues)
    safe = np.where(s > ZERO_NORM, s, 1.0)
    u = (m @ v) / safe
    u[:, s <= ZERO_NORM] = 0.0
    return u, s, v.T


def truncated_svd(m: np.ndarray, r: int, tol: float = 1e-8) -> SvdFactors:
    """
    Meilleure approximation de rang r au sens de Frobenius.

    Utilise le pilote LAPACK gesdd, puis gesvd en cas d'échec, puis la
    décomposition de la matrice de Gram. Les signes sont normalisés
    (svd_flip) pour que le résultat soit reproductible.
    """
    m = as_matrix(m, "svd input")
    rows, cols = m.shape
    if not 1 <= r <= min(rows, cols):
        raise ValueError(f"Rang {r} hors de [1, {min(rows, cols)}] pour une matrice {m.shape}")

    decomposition = None
    for driver in ("gesdd", "gesvd"):
        try:
            decomposition = scipy.linalg.svd(m, full_matrices=False, lapack_driver=driver)
            break
        except np.linalg.LinAlgError as e:
            logger.warning(f"SVD LAPACK '{driver}' non convergente sur {m.shape}: {e}")

    if decomposition is None:
        u, s, vt = _gram_svd(m)
        full_norm = np.linalg.norm(m)
        residual = np.linalg.norm(m - (u * s) @ vt) / (full_norm if full_norm > 0 else 1.0)
        if residual > tol:
            raise SvdConvergenceError(f"SVD non convergente pour une matrice {m.shape}", residual)
    else:
        u, s, vt = decomposition

    u, vt = svd_flip(u, vt)
    return SvdFactors(u=u[:, :r].copy(), s=s[:r].copy(), vt=vt[:r, :].copy())


@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300) -> KMeansResult:
    """k-means de Lloyd, initialisation k-means++ tirée de `rng`."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ClusteringError("k-means sur une entrée vide")
    if k < 1:
        raise ClusteringError("k-means requiert k >= 1")
    if k > points.shape[0]:
        raise ClusteringError(f"k={k} supérieur au nombre de points ({points.shape[0]})")
    if max_iter < 1:
        raise ClusteringError("max_iter doit être >= 1")

    model = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=1,
        max_iter=max_iter,
        tol=0.0,
        algorithm="lloyd",
        random_state=derive_seed(rng),
    )
    with warnings.catch_warnings():
        # Points dupliqués : moins de clusters distincts que k, comportement attendu.
        warnings.simplefilter("ignore", ConvergenceWarning)
        model.fit(points)
    return KMeansResult(
        assignments=model.labels_.astype(np.int64),
        centroids=model.cluster_centers_,
        inertia=float(model.inertia_),
        n_iter=int(model.n_iter_),
    )


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosinus de deux vecteurs ; 0 si l'une des normes est < 1e-12."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError("cosine_sim", a.shape, b.shape)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a < ZERO_NORM or norm_b < ZERO_NORM:
        return 0.0
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosinus ligne à ligne (n_a × n_b), même convention de vecteur nul que cosine_sim."""
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError("cosine_matrix", a.shape, b.shape)

    def _normalize(rows):
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        return np.where(norms < ZERO_NORM, 0.0, rows / np.where(norms < ZERO_NORM, 1.0, norms))

    return np.clip(_normalize(a) @ _normalize(b).T, -1.0, 1.0)
