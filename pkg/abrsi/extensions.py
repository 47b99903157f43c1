# abrsi/extensions.py
import logging

from celery import Celery

logger = logging.getLogger(__name__)

# Initialisation de Celery. L'instance est définie ici pour être partagée par la CLI et les workers.
celery = Celery(__name__, include=['abrsi.tasks'])


def init_celery(settings):
    """
    Configure l'instance Celery partagée à partir des réglages.
    Sans broker, les tâches s'exécutent localement et de façon synchrone (mode eager).
    """
    broker_url = settings.get('CELERY_BROKER_URL')
    celery.conf.update(
        task_serializer='json',
        result_serializer='json',
        accept_content=['json'],
        # Empêcher Celery de détourner la configuration du logger racine pour éviter les logs dupliqués.
        worker_hijack_root_logger=False,
        worker_redirect_stdouts=False,
        worker_log_color=False,
    )
    if broker_url:
        celery.conf.update(
            broker_url=broker_url,
            result_backend=settings.get('CELERY_RESULT_BACKEND') or broker_url,
            task_always_eager=False,
        )
    else:
        logger.warning("Aucun broker Celery configuré : exécution des tâches en mode eager (processus courant).")
        celery.conf.update(
            broker_url='memory://',
            result_backend='cache+memory://',
            task_always_eager=True,
            task_eager_propagates=True,
        )
    return celery
