# abrsi/tasks.py
import logging
from typing import Any, Dict, Optional

from .extensions import celery
from .services import ExperimentConfig, run_seed

# Configuration du logger
logger = logging.getLogger(__name__)


@celery.task(name="abrsi.tasks.train_seed_task")
def train_seed_task(
    experiment: Dict[str, Any],
    seed: int,
    run_dir: str,
    preset: Optional[str] = None,
    settings: Optional[Dict[str, Any]] = None,
    resume_from: Optional[str] = None,
) -> Dict[str, Any]:
    """
    Exécute une graine (entraînement + évaluation + rapport) et renvoie le résumé JSON.
    L'expérience voyage sous forme de dict pour rester sérialisable en JSON.
    """
    config = ExperimentConfig.model_validate(experiment)
    logger.info(f"Tâche d'entraînement : '{config.name}', préréglage {preset or config.ablation}, graine {seed}")
    return run_seed(config, seed, run_dir, preset=preset, settings=settings, resume_from=resume_from)
