import os
import json
import logging
from logging.handlers import TimedRotatingFileHandler
from dotenv import load_dotenv

# Charger les variables d'environnement, sauf en mode test pour éviter les I/O sur le filesystem.
if os.environ.get("ABRSI_ENV") != "testing":
    load_dotenv()

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
DEFAULT_ROTATION_DAYS = 7

logger = logging.getLogger(__name__)


def default_settings():
    return {
        'LOG_LEVEL': 'INFO',
        'LOG_ROTATION_DAYS': DEFAULT_ROTATION_DAYS,
        'LOG_DIR': os.path.join(PROJECT_ROOT, 'logs'),
        'OUTPUT_ROOT': os.path.join(PROJECT_ROOT, 'runs'),
        'DATA_CACHE_DIR': os.path.join(PROJECT_ROOT, 'data'),
        'DOWNLOAD_TIMEOUT': 60,
        'CELERY_BROKER_URL': None,
        'CELERY_RESULT_BACKEND': None,
    }


def _rotation_days(settings):
    try:
        return int(settings.get('LOG_ROTATION_DAYS', DEFAULT_ROTATION_DAYS)), None
    except (ValueError, TypeError):
        return DEFAULT_ROTATION_DAYS, settings.get('LOG_ROTATION_DAYS')


def configure_logging(settings):
    """
    Configure la journalisation avec rotation de fichiers.
    En cas d'échec de création du dossier de logs, la console reste la seule sortie.
    """
    log_dir = settings.get('LOG_DIR') or os.path.join(PROJECT_ROOT, 'logs')

    try:
        os.makedirs(log_dir, exist_ok=True)
    except OSError as e:
        print(f"AVERTISSEMENT: Impossible de créer le dossier de logs {log_dir}. Erreur: {e}")
        return

    log_level_str = str(settings.get('LOG_LEVEL', 'INFO')).upper()
    log_level = getattr(logging, log_level_str, logging.INFO)
    rotation_days, invalid_rotation_value = _rotation_days(settings)

    log_file = os.path.join(log_dir, 'abrsi.log')
    file_handler = TimedRotatingFileHandler(log_file, when='midnight', backupCount=rotation_days, encoding='utf-8')
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    file_handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    root_logger.handlers.clear()
    root_logger.addHandler(file_handler)
    root_logger.setLevel(log_level)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    if invalid_rotation_value is not None:
        root_logger.warning(
            f"Valeur invalide '{invalid_rotation_value}' pour LOG_ROTATION_DAYS. "
            f"Utilisation de la valeur par défaut : {DEFAULT_ROTATION_DAYS} jours."
        )


def configure_run_journal(settings):
    """
    Journal séparé 'journal.log' : un objet JSON par exécution terminée
    (configuration, graine, métriques finales), pour une analyse ultérieure.
    """
    log_dir = settings.get('LOG_DIR') or os.path.join(PROJECT_ROOT, 'logs')
    if not os.path.exists(log_dir):
        # configure_logging a déjà signalé l'échec de création.
        return None

    rotation_days, _ = _rotation_days(settings)
    journal_handler = TimedRotatingFileHandler(
        os.path.join(log_dir, 'journal.log'), when='midnight', backupCount=rotation_days, encoding='utf-8'
    )
    journal_handler.setFormatter(logging.Formatter('%(message)s'))

    journal_logger = logging.getLogger('journal')
    for handler in journal_logger.handlers[:]:
        handler.close()
        journal_logger.removeHandler(handler)
    journal_logger.setLevel(logging.INFO)
    journal_logger.addHandler(journal_handler)
    journal_logger.propagate = False
    return journal_logger


def load_settings(config_path=None):
    """
    Construit la configuration d'exécution par couches.
    Priorité : 1. REDIS_URL > 2. Variables d'environnement > 3. config/settings.json > 4. Valeurs par défaut
    """
    settings = default_settings()

    # Couche 3 : fichier de configuration
    config_path = config_path or os.path.join(PROJECT_ROOT, 'config', 'settings.json')
    logger.info(f"Recherche du fichier de configuration à l'emplacement : {config_path}")
    if os.path.exists(config_path):
        try:
            # 'utf-8-sig' ignore le BOM des fichiers édités sous Windows.
            with open(config_path, encoding='utf-8-sig') as config_file:
                settings.update(json.load(config_file))
            logger.info("Fichier settings.json chargé avec succès.")
        except json.JSONDecodeError:
            logger.error(f"Erreur de décodage du fichier JSON : {config_path}")
    else:
        logger.warning("Fichier settings.json non trouvé. Utilisation des valeurs par défaut et des variables d'environnement.")

    # Couche 2 : variables d'environnement
    env_to_settings_map = {
        'LOG_LEVEL': 'LOG_LEVEL',
        'LOG_ROTATION_DAYS': 'LOG_ROTATION_DAYS',
        'ABRSI_LOG_DIR': 'LOG_DIR',
        'ABRSI_OUTPUT_ROOT': 'OUTPUT_ROOT',
        'ABRSI_DATA_CACHE_DIR': 'DATA_CACHE_DIR',
        'ABRSI_DOWNLOAD_TIMEOUT': 'DOWNLOAD_TIMEOUT',
        'CELERY_BROKER_URL': 'CELERY_BROKER_URL',
        'CELERY_RESULT_BACKEND': 'CELERY_RESULT_BACKEND',
    }
    for env_key, settings_key in env_to_settings_map.items():
        if (env_value := os.environ.get(env_key)) is not None:
            if settings.get(settings_key) != env_value:
                logger.info(f"  -> Surcharge de '{settings_key}' avec la variable d'environnement '{env_key}'.")
            settings[settings_key] = env_value

    # Couche 1 : REDIS_URL surcharge toute autre configuration du broker
    if redis_url_from_env := os.environ.get('REDIS_URL'):
        logger.info("La variable d'environnement REDIS_URL est définie. Elle surcharge toute autre configuration Redis.")
        settings['CELERY_BROKER_URL'] = redis_url_from_env
        settings['CELERY_RESULT_BACKEND'] = redis_url_from_env
    elif not settings.get('CELERY_BROKER_URL'):
        logger.warning("Aucune URL Redis n'est configurée. Les tâches Celery s'exécuteront localement (mode eager).")

    logger.info("=" * 50)
    logger.info("Configuration finale chargée :")
    logger.info(f"  - Log Level: {settings.get('LOG_LEVEL')}")
    logger.info(f"  - Log Rotation Days: {settings.get('LOG_ROTATION_DAYS')}")
    logger.info(f"  - Log Dir: {settings.get('LOG_DIR')}")
    logger.info(f"  - Output Root: {settings.get('OUTPUT_ROOT')}")
    logger.info(f"  - Data Cache Dir: {settings.get('DATA_CACHE_DIR')}")
    logger.info(f"  - Celery Broker URL: {settings.get('CELERY_BROKER_URL')}")
    logger.info(f"  - Celery Result Backend: {settings.get('CELERY_RESULT_BACKEND')}")
    logger.info("=" * 50)
    return settings
