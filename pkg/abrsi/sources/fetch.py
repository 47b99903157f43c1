# abrsi/sources/fetch.py
import logging
import os
from pathlib import Path
from urllib.parse import urlparse

import requests

from ..data import PreprocessRecipe
from ..errors import DataError

# Configuration du logger
logger = logging.getLogger(__name__)

CHUNK_SIZE = 1 << 20


def fetch_dataset(url: str, destination, timeout: float = 60) -> Path:
    """
    Télécharge un fichier de données brut vers `destination`.

    Le fichier est écrit sous un nom temporaire puis renommé, pour qu'un
    téléchargement interrompu ne laisse jamais de CSV tronqué dans le cache.
    """
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    partial = destination.with_name(destination.name + ".part")
    logger.info(f"Téléchargement de {url} vers {destination}")
    try:
        with requests.get(url, stream=True, timeout=timeout) as response:
            response.raise_for_status()
            with open(partial, "wb") as handle:
                for chunk in response.iter_content(chunk_size=CHUNK_SIZE):
                    handle.write(chunk)
    except requests.exceptions.RequestException as e:
        logger.error(f"Erreur de requête HTTP lors du téléchargement de {url}: {e}", exc_info=True)
        if partial.exists():
            partial.unlink()
        raise DataError(f"Téléchargement impossible depuis {url}: {e}") from e
    os.replace(partial, destination)
    logger.info(f"Téléchargement de {url} terminé ({destination.stat().st_size} octets).")
    return destination


def ensure_dataset(path, recipe: PreprocessRecipe, cache_dir, timeout: float = 60) -> Path:
    """Renvoie `path` s'il existe, sinon le fichier de la recette dans le cache (téléchargé au besoin)."""
    path = Path(path) if path else None
    if path is not None and path.exists():
        return path
    if not recipe.source_url:
        raise DataError(f"Fichier introuvable : {path} (aucune source_url dans la recette '{recipe.name}')")
    filename = Path(urlparse(recipe.source_url).path).name or f"{recipe.name}.csv"
    cached = Path(cache_dir) / recipe.name / filename
    if cached.exists():
        logger.info(f"Fichier '{cached}' déjà présent dans le cache.")
        return cached
    return fetch_dataset(recipe.source_url, cached, timeout=timeout)
