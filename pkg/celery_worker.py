# celery_worker.py
import logging

from abrsi import load_settings
from abrsi.extensions import celery, init_celery  # Importer l'instance Celery partagée

logger = logging.getLogger(__name__)


def init_celery_from_settings(settings=None):
    """
    Initialise l'instance Celery partagée à partir des réglages d'exécution.
    Appelé par le lanceur de worker (worker_launcher.py) ; la CLI appelle init_celery directement.
    Un worker sans broker n'a pas de sens : on refuse de démarrer plutôt que de passer en mode eager.
    """
    settings = settings or load_settings()
    if not settings.get('CELERY_BROKER_URL'):
        raise ValueError("Le broker Celery n'est pas configuré. Veuillez définir REDIS_URL ou CELERY_BROKER_URL.")
    init_celery(settings)
    logger.info(f"Worker Celery configuré sur le broker {settings['CELERY_BROKER_URL']}")
    return celery

# IMPORTANT: Ne pas appeler init_celery_from_settings() globalement ici.
# Les commandes `celery -A celery_worker.celery ...` doivent pouvoir importer 'celery'
# sans déclencher la lecture des réglages.
