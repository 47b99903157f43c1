# abrsi/services.py
"""
Ce module contient la logique métier des commandes : chargement des
expériences, préparation des domaines, exécution d'une graine et écriture
des rapports. Il est partagé par la CLI et les tâches Celery.
"""
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Union, get_args, get_origin

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .data import (
    AlignedDomains,
    DomainTag,
    align_labels,
    load_csv,
    load_prepared,
    load_recipe,
    save_prepared,
    split_truth,
    stratified_sample,
    synth_pair,
)
from .errors import ConfigError
from .evaluation import evaluate_target, pl_quality
from .network import classify, project
from .numerics import make_rng
from .report import read_json, write_json, write_run_report
from .sources import ensure_dataset
from .trainer import EpochSnapshot, TrainConfig, preset_flags, source_only, train

logger = logging.getLogger(__name__)


class SyntheticSpec(BaseModel):
    """Paire de domaines synthétiques hétérogènes."""
    model_config = ConfigDict(extra="forbid")

    k: int = Field(4, ge=2)
    d_s: int = Field(20, ge=1)
    d_t: int = Field(12, ge=1)
    n_s: int = Field(2000, ge=1)
    n_t: int = Field(2000, ge=1)
    separation: float = 6.0
    noise: float = Field(0.1, ge=0)
    shared_projection: bool = False
    data_seed: Optional[int] = None


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    source_path: Optional[str] = None
    target_path: Optional[str] = None
    source_recipe: Optional[str] = None
    target_recipe: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    binary_mode: bool = False
    benign_category: str = "normal"
    train: TrainConfig = Field(default_factory=TrainConfig)
    ablation: str = "full"
    output_dir: Optional[str] = None
    seeds: List[int] = Field(default_factory=lambda: [0])
    baseline: bool = True

    @model_validator(mode="after")
    def _check_experiment(self):
        if not self.seeds:
            raise ValueError("La liste des graines ne doit pas être vide")
        if self.synthetic is None:
            if not self.source_path or not self.target_path:
                raise ValueError("source_path et target_path sont requis hors mode synthétique")
            for recipe in (self.source_recipe, self.target_recipe):
                if recipe and not Path(recipe).exists():
                    raise ValueError(f"Recette introuvable : {recipe}")
            # Un fichier brut absent reste acceptable si la recette porte une source_url.
            for path, recipe in ((self.source_path, self.source_recipe), (self.target_path, self.target_recipe)):
                if not Path(path).exists() and not recipe:
                    raise ValueError(f"Fichier introuvable : {path}")
        preset_flags(self.ablation)
        return self


def load_experiment(path, overrides: Optional[Dict] = None) -> ExperimentConfig:
    """Charge un ExperimentConfig JSON ; les options de la ligne de commande surchargent le fichier."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Fichier de configuration introuvable : {path}")
    payload = read_json(path)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("epochs",):
            payload.setdefault("train", {})[key] = value
        else:
            payload[key] = value
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as e:
        raise ConfigError(f"Configuration invalide ({path}) : {e}") from e


def _load_domain(path, recipe_path, domain_tag, settings):
    if recipe_path:
        recipe = load_recipe(recipe_path)
        path = ensure_dataset(
            path, recipe, settings.get("DATA_CACHE_DIR", "data"), float(settings.get("DOWNLOAD_TIMEOUT", 60))
        )
        return load_csv(path, recipe, domain_tag), recipe
    return load_prepared(path, domain_tag), None


def prepare_domains(experiment: ExperimentConfig, seed: int, settings: Optional[Dict] = None) -> AlignedDomains:
    """Charge (ou génère) les deux domaines et les aligne sur leurs catégories partagées."""
    settings = settings or {}
    if experiment.synthetic is not None:
        spec = experiment.synthetic
        rng = make_rng(spec.data_seed if spec.data_seed is not None else seed)
        source, target, truth = synth_pair(
            rng, spec.k, spec.d_s, spec.d_t, spec.n_s, spec.n_t, spec.separation, spec.noise, spec.shared_projection
        )
    else:
        source, source_recipe = _load_domain(experiment.source_path, experiment.source_recipe, DomainTag.SOURCE, settings)
        labelled_target, target_recipe = _load_domain(
            experiment.target_path, experiment.target_recipe, DomainTag.TARGET, settings
        )
        rng = make_rng(seed)
        for recipe in (source_recipe, target_recipe):
            if recipe is not None and recipe.sample_fraction is not None:
                if recipe is source_recipe:
                    source = stratified_sample(source, recipe.sample_fraction, rng)
                else:
                    labelled_target = stratified_sample(labelled_target, recipe.sample_fraction, rng)
        target, truth = split_truth(labelled_target)
    return align_labels(source, target, truth, experiment.binary_mode, experiment.benign_category)


def _truth_monitor(truth):
    def monitor(params, snapshot: EpochSnapshot):
        quality = pl_quality(snapshot.discrete.pseudo_labels, truth)
        predictions = np.argmax(snapshot.target_probs, axis=1)
        return {
            "target_accuracy": float(np.mean(predictions == truth.labels)),
            "hard_pl_accuracy": quality.hard_accuracy,
            "hard_pl_hellinger": quality.hard_hellinger,
        }
    return monitor


def _predict(params, domains: AlignedDomains):
    started = time.perf_counter()
    features, _ = project(params, domains.target.features, DomainTag.TARGET)
    probs = classify(params, features)
    elapsed = time.perf_counter() - started
    return probs, elapsed / max(domains.target.n_instances, 1)


def run_seed(
    experiment: ExperimentConfig,
    seed: int,
    run_dir,
    preset: Optional[str] = None,
    settings: Optional[Dict] = None,
    resume_from: Optional[str] = None,
) -> Dict:
    """Une exécution complète pour une graine : entraînement, évaluation, référence, rapport."""
    preset = preset or experiment.ablation
    run_dir = Path(run_dir)
    domains = prepare_domains(experiment, seed, settings)
    cfg = experiment.train.model_copy(update={"seed": seed, "ablation_flags": preset_flags(preset)})

    params, report = train(
        domains.source, domains.target, cfg,
        monitor=_truth_monitor(domains.target_truth),
        checkpoint_path=run_dir / "checkpoint.npz",
        resume_from=resume_from,
    )
    probs, inference_seconds = _predict(params, domains)
    metrics = evaluate_target(probs, domains.target_truth, report.final_pseudo_labels)

    summary = {
        "name": experiment.name,
        "seed": seed,
        "preset": preset,
        "config": experiment.model_dump(mode="json"),
        "train_config": cfg.model_dump(mode="json"),
        "categories": list(domains.source.category_names),
        "provenance": {
            "source": dict(domains.source.provenance),
            "target": dict(domains.target.provenance),
            "source_dropped_by_alignment": domains.source_dropped,
            "target_dropped_by_alignment": domains.target_dropped,
            "n_source": domains.source.n_instances,
            "n_target": domains.target.n_instances,
        },
        "final_epoch": report.last,
        "final_metrics": metrics.as_dict(),
    }
    if experiment.baseline and preset == "full":
        baseline_params, _ = train(domains.source, domains.target, source_only(cfg))
        baseline_probs, _ = _predict(baseline_params, domains)
        summary["source_only_metrics"] = evaluate_target(baseline_probs, domains.target_truth).as_dict()

    write_run_report(run_dir, report, summary, inference_seconds)
    logger.info(
        f"Graine {seed} ({preset}) : exactitude cible {metrics.accuracy:.4f}, F1 {metrics.weighted_f1:.4f}"
    )
    return summary


def output_root(experiment: ExperimentConfig, settings: Dict) -> Path:
    return Path(experiment.output_dir or settings.get("OUTPUT_ROOT", "runs")) / experiment.name


def run_dir_for(root: Path, preset: str, seed: int, suffix: str = "") -> Path:
    return root / (preset + suffix) / f"seed_{seed}"


def coerce_train_value(param: str, raw: str):
    """Convertit une valeur textuelle de la CLI vers le type du champ de TrainConfig."""
    field = TrainConfig.model_fields.get(param)
    if field is None or param == "ablation_flags":
        raise ConfigError(f"Paramètre inconnu pour le balayage : '{param}'")
    annotation = field.annotation
    if get_origin(annotation) is Union:
        if raw.lower() == "none":
            return None
        annotation = next(arg for arg in get_args(annotation) if arg is not type(None))
    try:
        if annotation is bool:
            return {"true": True, "1": True, "false": False, "0": False}[raw.lower()]
        return annotation(raw)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"Valeur invalide pour '{param}' : {raw!r} (attendu {annotation.__name__})") from e


def with_train_value(experiment: ExperimentConfig, param: str, value) -> ExperimentConfig:
    """Copie validée de l'expérience avec un hyperparamètre modifié."""
    if param not in TrainConfig.model_fields or param == "ablation_flags":
        raise ConfigError(f"Paramètre inconnu pour le balayage : '{param}'")
    train_payload = experiment.train.model_dump()
    train_payload[param] = value
    try:
        train_cfg = TrainConfig.model_validate(train_payload)
    except ValidationError as e:
        raise ConfigError(f"Valeur invalide pour '{param}' : {value!r} ({e})") from e
    return experiment.model_copy(update={"train": train_cfg})


def prepare_dataset(
    recipe_path,
    input_path,
    output_path,
    settings: Optional[Dict] = None,
    domain: str = "source",
    seed: int = 0,
) -> Dict:
    """Commande `prep` : CSV brut -> CSV préparé + provenance."""
    settings = settings or {}
    recipe = load_recipe(recipe_path)
    raw_path = ensure_dataset(
        input_path, recipe, settings.get("DATA_CACHE_DIR", "data"), float(settings.get("DOWNLOAD_TIMEOUT", 60))
    )
    dataset = load_csv(raw_path, recipe, DomainTag(domain))
    if recipe.sample_fraction is not None:
        dataset = stratified_sample(dataset, recipe.sample_fraction, make_rng(seed))
    output_path = save_prepared(dataset, output_path)
    provenance = {
        "recipe": recipe.name,
        "input": str(raw_path),
        "domain": domain,
        "sample_fraction": recipe.sample_fraction,
        "seed": seed,
        "categories": list(dataset.category_names),
        "n_features": dataset.dim,
        "n_rows": dataset.n_instances,
        **dataset.provenance,
    }
    write_json(Path(output_path).with_suffix(".provenance.json"), provenance)
    return provenance
