# abrsi/data.py
"""
Ingestion et préparation des domaines source (étiqueté) et cible (non étiqueté).

Les étiquettes réelles du domaine cible sont isolées dans un conteneur
EvaluationTruth que l'entraînement ne reçoit jamais.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import DataError, EmptyDatasetError, MissingColumnError
from .numerics import as_matrix

logger = logging.getLogger(__name__)

PREPARED_LABEL_COLUMN = "category"
BINARY_CATEGORIES = ("benign", "intrusion")


class DomainTag(str, Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class DomainDataset:
    features: np.ndarray
    labels: Optional[np.ndarray]
    domain_tag: DomainTag
    category_names: Tuple[str, ...]
    feature_names: Tuple[str, ...] = ()
    provenance: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "features", as_matrix(self.features, f"{self.domain_tag.value} features"))
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (self.n_instances,):
                raise DataError(
                    f"{labels.shape[0]} étiquettes pour {self.n_instances} instances ({self.domain_tag.value})"
                )
            if labels.size and (labels.min() < 0 or labels.max() >= self.k_categories):
                raise DataError(f"Étiquettes hors de [0, {self.k_categories}) pour le domaine {self.domain_tag.value}")
            object.__setattr__(self, "labels", labels)
        elif self.domain_tag is DomainTag.SOURCE:
            raise DataError("Le domaine source doit être étiqueté")

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_instances(self) -> int:
        return int(self.features.shape[0])

    @property
    def k_categories(self) -> int:
        return len(self.category_names)

    def subset(self, indices: np.ndarray) -> "DomainDataset":
        labels = None if self.labels is None else self.labels[indices]
        return replace(self, features=self.features[indices], labels=labels)


@dataclass(frozen=True)
class EvaluationTruth:
    """Étiquettes cibles réservées à l'évaluation."""
    labels: np.ndarray
    category_names: Tuple[str, ...]

    @property
    def k_categories(self) -> int:
        return len(self.category_names)

    def distribution(self) -> np.ndarray:
        counts = np.bincount(self.labels, minlength=self.k_categories).astype(np.float64)
        return counts / max(counts.sum(), 1.0)


class PreprocessRecipe(BaseModel):
    """Recette de prétraitement d'un jeu de données, chargée depuis config/recipes/*.json."""
    name: str
    label_column: str
    selected_features: List[str]
    categorical_maps: Dict[str, Dict[str, int]] = Field(default_factory=dict)
    label_map: Dict[str, str]
    binary_mode: bool = False
    benign_category: str = "normal"
    expected_feature_count: Optional[int] = None
    column_names: Optional[List[str]] = None
    sample_fraction: Optional[float] = None
    source_url: Optional[str] = None

    @field_validator("sample_fraction")
    @classmethod
    def _fraction_range(cls, value):
        if value is not None and not 0.0 < value <= 1.0:
            raise ValueError("sample_fraction doit être dans ]0, 1]")
        return value

    @model_validator(mode="after")
    def _check_recipe(self):
        if self.expected_feature_count is not None and len(self.selected_features) != self.expected_feature_count:
            raise ValueError(
                f"La recette '{self.name}' sélectionne {len(self.selected_features)} colonnes, "
                f"{self.expected_feature_count} attendues"
            )
        if len(set(self.selected_features)) != len(self.selected_features):
            raise ValueError(f"Colonnes dupliquées dans la recette '{self.name}'")
        unknown = set(self.categorical_maps) - set(self.selected_features)
        if unknown:
            raise ValueError(f"Tables catégorielles pour des colonnes non sélectionnées: {sorted(unknown)}")
        return self

    def category_names(self) -> Tuple[str, ...]:
        # Ordre de première apparition : la table nom -> identifiant est injective.
        return tuple(dict.fromkeys(self.label_map.values()))


def load_recipe(path) -> PreprocessRecipe:
    with open(path, encoding="utf-8-sig") as recipe_file:
        return PreprocessRecipe.model_validate(json.load(recipe_file))


def _min_max(frame: pd.DataFrame) -> np.ndarray:
    values = frame.to_numpy(dtype=np.float64)
    low = values.min(axis=0)
    span = values.max(axis=0) - low
    # Colonne constante (min = max) : toutes les valeurs à 0.
    scaled = np.where(span > 0, (values - low) / np.where(span > 0, span, 1.0), 0.0)
    return np.clip(scaled, 0.0, 1.0)


def load_csv(path, recipe: PreprocessRecipe, domain_tag: DomainTag = DomainTag.SOURCE) -> DomainDataset:
    """
    Charge un CSV selon la recette : déduplication, encodage catégoriel,
    mise à l'échelle min-max par colonne, abandon compté des lignes invalides.
    """
    path = Path(path)
    read_options = {"dtype": str, "keep_default_na": False, "skipinitialspace": True}
    if recipe.column_names:
        read_options.update(header=None, names=recipe.column_names)
    frame = pd.read_csv(path, encoding="utf-8", **read_options)
    frame.columns = [str(column).strip() for column in frame.columns]

    required = [*recipe.selected_features, recipe.label_column]
    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise MissingColumnError(path, missing)

    frame = frame[required]
    rows_read = len(frame)
    frame = frame.drop_duplicates(ignore_index=True)
    duplicates = rows_read - len(frame)

    raw_labels = frame[recipe.label_column].str.strip()
    mapped = raw_labels.map(recipe.label_map)
    unmapped = int(mapped.isna().sum())
    if unmapped:
        logger.warning(f"{unmapped} ligne(s) de '{path.name}' ont une étiquette sans correspondance et sont ignorées.")

    features = pd.DataFrame(index=frame.index)
    for column in recipe.selected_features:
        cells = frame[column].str.strip()
        if column in recipe.categorical_maps:
            features[column] = cells.map(recipe.categorical_maps[column]).astype(np.float64)
        else:
            features[column] = pd.to_numeric(cells, errors="coerce")
    features = features.replace([np.inf, -np.inf], np.nan)
    malformed_mask = features.isna().any(axis=1) & mapped.notna()
    malformed = int(malformed_mask.sum())
    if malformed:
        logger.warning(f"{malformed} ligne(s) de '{path.name}' contiennent des cellules invalides et sont ignorées.")

    keep = mapped.notna() & ~features.isna().any(axis=1)
    features = features[keep]
    if features.empty:
        raise EmptyDatasetError(f"Aucune ligne exploitable dans '{path}' après filtrage")

    names = recipe.category_names()
    index_of = {name: position for position, name in enumerate(names)}
    labels = mapped[keep].map(index_of).to_numpy(dtype=np.int64)

    provenance = {
        "rows_read": rows_read,
        "duplicates_dropped": duplicates,
        "unmapped_dropped": unmapped,
        "malformed_dropped": malformed,
        "rows_kept": int(keep.sum()),
    }
    logger.info(f"Jeu '{recipe.name}' chargé depuis {path.name}: {provenance}")
    return DomainDataset(
        features=_min_max(features),
        labels=labels,
        domain_tag=domain_tag,
        category_names=names,
        feature_names=tuple(recipe.selected_features),
        provenance=provenance,
    )


def split_truth(dataset: DomainDataset) -> Tuple[DomainDataset, EvaluationTruth]:
    """Retire les étiquettes d'un domaine cible et les place dans un conteneur d'évaluation."""
    if dataset.labels is None:
        raise DataError("Aucune étiquette à séparer")
    unlabelled = replace(dataset, labels=None, domain_tag=DomainTag.TARGET)
    return unlabelled, EvaluationTruth(labels=dataset.labels.copy(), category_names=dataset.category_names)


@dataclass(frozen=True)
class AlignedDomains:
    source: DomainDataset
    target: DomainDataset
    target_truth: EvaluationTruth
    k_categories: int
    source_dropped: int
    target_dropped: int


def align_labels(
    source: DomainDataset,
    target: DomainDataset,
    target_truth: EvaluationTruth,
    binary_mode: bool = False,
    benign_category: str = "normal",
) -> AlignedDomains:
    """
    Restreint les deux domaines aux catégories partagées et les ré-indexe
    dans un même espace [0, K). En mode binaire, toute catégorie autre que
    la catégorie bénigne devient « intrusion ».
    """
    def _renamed(names, labels):
        names = np.asarray(names, dtype=object)[labels]
        if binary_mode:
            names = np.where(names == benign_category, BINARY_CATEGORIES[0], BINARY_CATEGORIES[1])
        return names

    source_names = _renamed(source.category_names, source.labels)
    target_names = _renamed(target_truth.category_names, target_truth.labels)

    ordered = BINARY_CATEGORIES if binary_mode else source.category_names
    shared = tuple(name for name in ordered if name in set(source_names) and name in set(target_names))
    if not shared:
        raise DataError("Aucune catégorie partagée entre les domaines source et cible")
    if len(shared) == 1:
        logger.warning(f"Une seule catégorie partagée ('{shared[0]}') : la détection sera triviale.")

    index_of = {name: position for position, name in enumerate(shared)}
    source_keep = np.array([name in index_of for name in source_names], dtype=bool)
    target_keep = np.array([name in index_of for name in target_names], dtype=bool)
    if not source_keep.any() or not target_keep.any():
        raise EmptyDatasetError("Un domaine est vide après alignement des catégories")

    source_labels = np.array([index_of[name] for name in source_names[source_keep]], dtype=np.int64)
    truth_labels = np.array([index_of[name] for name in target_names[target_keep]], dtype=np.int64)

    source_dropped = int((~source_keep).sum())
    target_dropped = int((~target_keep).sum())
    if source_dropped or target_dropped:
        logger.info(
            f"Alignement : {source_dropped} instance(s) source et {target_dropped} instance(s) cible "
            f"hors des {len(shared)} catégories partagées ont été retirées."
        )

    aligned_source = replace(
        source, features=source.features[source_keep], labels=source_labels, category_names=shared
    )
    aligned_target = replace(target, features=target.features[target_keep], labels=None, category_names=shared)
    return AlignedDomains(
        source=aligned_source,
        target=aligned_target,
        target_truth=EvaluationTruth(labels=truth_labels, category_names=shared),
        k_categories=len(shared),
        source_dropped=source_dropped,
        target_dropped=target_dropped,
    )


def stratified_sample(dataset: DomainDataset, fraction: float, rng: np.random.Generator) -> DomainDataset:
    """Échantillon stratifié par catégorie (au moins une instance par catégorie présente)."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction doit être dans ]0, 1]")
    if dataset.labels is None:
        raise DataError("L'échantillonnage stratifié requiert des étiquettes")
    chosen = []
    for category in range(dataset.k_categories):
        members = np.flatnonzero(dataset.labels == category)
        if members.size == 0:
            continue
        size = max(1, int(round(fraction * members.size)))
        chosen.append(np.sort(rng.choice(members, size=size, replace=False)))
    indices = np.sort(np.concatenate(chosen))
    return dataset.subset(indices)


def save_prepared(dataset: DomainDataset, path, truth: Optional[EvaluationTruth] = None) -> Path:
    """Écrit un CSV préparé : colonnes de caractéristiques + colonne 'category'."""
    labels = dataset.labels if dataset.labels is not None else (truth.labels if truth is not None else None)
    if labels is None:
        raise DataError("Impossible d'écrire un jeu préparé sans étiquettes")
    columns = list(dataset.feature_names) or [f"f{i}" for i in range(dataset.dim)]
    frame = pd.DataFrame(dataset.features, columns=columns)
    frame[PREPARED_LABEL_COLUMN] = np.asarray(dataset.category_names, dtype=object)[labels]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def load_prepared(path, domain_tag: DomainTag = DomainTag.SOURCE) -> DomainDataset:
    """Relit un CSV écrit par save_prepared (valeurs déjà dans [0, 1])."""
    frame = pd.read_csv(path)
    if PREPARED_LABEL_COLUMN not in frame.columns:
        raise MissingColumnError(path, [PREPARED_LABEL_COLUMN])
    names = tuple(dict.fromkeys(frame[PREPARED_LABEL_COLUMN].astype(str)))
    index_of = {name: position for position, name in enumerate(names)}
    labels = frame[PREPARED_LABEL_COLUMN].astype(str).map(index_of).to_numpy(dtype=np.int64)
    feature_frame = frame.drop(columns=[PREPARED_LABEL_COLUMN])
    if feature_frame.empty:
        raise EmptyDatasetError(f"'{path}' ne contient aucune ligne")
    return DomainDataset(
        features=feature_frame.to_numpy(dtype=np.float64),
        labels=labels,
        domain_tag=domain_tag,
        category_names=names,
        feature_names=tuple(feature_frame.columns),
    )


def synth_latents(rng: np.random.Generator, k: int, n: int, separation: float) -> Tuple[np.ndarray, np.ndarray]:
    """Latents gaussiens de k classes équiprobables, centrés sur separation·e_c."""
    labels = rng.permutation(np.arange(n) % k)
    latents = separation * np.eye(k)[labels] + rng.normal(size=(n, k))
    return latents, labels.astype(np.int64)


def synth_pair(
    rng: np.random.Generator,
    k: int,
    d_s: int,
    d_t: int,
    n_s: int,
    n_t: int,
    separation: float,
    noise: float = 0.1,
    shared_projection: bool = False,
) -> Tuple[DomainDataset, DomainDataset, EvaluationTruth]:
    """
    Paire de domaines synthétiques hétérogènes : latents source puis cible
    (tirés dans cet ordre avec synth_latents), projetés par deux
    applications linéaires aléatoires puis bruités et mis à l'échelle.
    """
    if min(d_s, d_t, n_s, n_t) <= 0:
        raise ValueError("Les dimensions et effectifs doivent être strictement positifs")
    if k < 2:
        raise ValueError("synth_pair requiert au moins deux catégories")
    if shared_projection and d_s != d_t:
        raise ValueError("Une projection partagée exige d_s = d_t")

    latents_s, labels_s = synth_latents(rng, k, n_s, separation)
    latents_t, labels_t = synth_latents(rng, k, n_t, separation)
    map_s = rng.normal(size=(k, d_s)) / np.sqrt(k)
    map_t = map_s if shared_projection else rng.normal(size=(k, d_t)) / np.sqrt(k)
    x_s = latents_s @ map_s + noise * rng.normal(size=(n_s, d_s))
    x_t = latents_t @ map_t + noise * rng.normal(size=(n_t, d_t))

    names = tuple(f"class_{c}" for c in range(k))
    source = DomainDataset(
        features=_min_max(pd.DataFrame(x_s)),
        labels=labels_s,
        domain_tag=DomainTag.SOURCE,
        category_names=names,
        feature_names=tuple(f"s{i}" for i in range(d_s)),
    )
    target = DomainDataset(
        features=_min_max(pd.DataFrame(x_t)),
        labels=None,
        domain_tag=DomainTag.TARGET,
        category_names=names,
        feature_names=tuple(f"t{i}" for i in range(d_t)),
    )
    return source, target, EvaluationTruth(labels=labels_t, category_names=names)
