import logging

from celery.signals import after_setup_logger
from abrsi import configure_logging, configure_run_journal, load_settings
from celery_worker import init_celery_from_settings

# 1. Charger les réglages une seule fois pour le worker.
settings = load_settings()

# --- Configuration de la journalisation pour le worker Celery ---
# Le worker partage la configuration de logging de la CLI.
@after_setup_logger.connect
def setup_celery_worker_logging(logger, **kwargs):
    """Ce signal est émis après que le logger du worker a été configuré."""
    # Les logs des tâches suivent les règles de abrsi/__init__.py (niveau, format, rotation).
    configure_logging(settings)
    configure_run_journal(settings)

    # --- Réduction de la verbosité de Celery ---
    logging.getLogger('celery').setLevel(logging.INFO)

    logger.info("Configuration de la journalisation ABRSI appliquée au worker Celery.")

# 2. Initialiser Celery avec le broker configuré.
init_celery_from_settings(settings)

from celery.__main__ import main

if __name__ == '__main__':
    # 3. Exécute la ligne de commande de Celery.
    #    Exemple : python worker_launcher.py -A celery_worker.celery worker --loglevel=info
    main()
