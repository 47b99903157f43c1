# abrsi/report.py
"""
Écriture des artefacts d'exécution : epochs.csv, summary.json, timing.json,
agrégats multi-graines et tables d'ablation / de sensibilité.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np
import pandas as pd

from .trainer import RunReport

logger = logging.getLogger(__name__)
journal = logging.getLogger('journal')

EPOCHS_FILE = "epochs.csv"
SUMMARY_FILE = "summary.json"
TIMING_FILE = "timing.json"
AGGREGATE_FILE = "aggregate.csv"
FINAL_METRIC_KEYS = (
    "accuracy",
    "weighted_precision",
    "weighted_recall",
    "weighted_f1",
    "auc",
    "hard_pl_ratio",
    "hard_pl_accuracy",
    "hellinger_hard_pl",
    "soft_pl_hellinger",
    "certainty_fraction",
)


def _to_builtin(value):
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def write_json(path, payload: Dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(_to_builtin(payload), handle, indent=2, sort_keys=True, ensure_ascii=False)
        handle.write("\n")
    return path


def read_json(path) -> Dict:
    with open(path, encoding="utf-8-sig") as handle:
        return json.load(handle)


def write_run_report(run_dir, report: RunReport, summary: Dict, inference_seconds_per_instance: float) -> Path:
    """
    Les durées sont isolées dans timing.json : epochs.csv et summary.json restent
    identiques octet pour octet d'une exécution à l'autre pour une même graine.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(report.epochs).to_csv(run_dir / EPOCHS_FILE, index=False)
    write_json(run_dir / SUMMARY_FILE, summary)
    seconds = report.epoch_seconds
    write_json(
        run_dir / TIMING_FILE,
        {
            "epoch_seconds": seconds,
            "mean_epoch_seconds": float(np.mean(seconds)) if seconds else None,
            "inference_seconds_per_instance": inference_seconds_per_instance,
        },
    )
    journal.info(json.dumps(_to_builtin({"run_dir": str(run_dir), **summary}), sort_keys=True))
    logger.info(f"Rapport écrit dans {run_dir}")
    return run_dir


def final_metrics_row(summary: Dict) -> Dict:
    row = {"seed": summary.get("seed"), "preset": summary.get("preset")}
    metrics = summary.get("final_metrics", {})
    row.update({key: metrics.get(key) for key in FINAL_METRIC_KEYS})
    baseline = summary.get("source_only_metrics")
    if baseline:
        row["source_only_accuracy"] = baseline.get("accuracy")
    return row


def aggregate(summaries: Sequence[Dict]) -> pd.DataFrame:
    """Moyenne et écart-type (ddof=0) des métriques finales sur les graines."""
    frame = pd.DataFrame([final_metrics_row(s) for s in summaries])
    numeric = frame.drop(columns=["seed", "preset"]).apply(pd.to_numeric, errors="coerce")
    stats = pd.DataFrame({"mean": numeric.mean(), "std": numeric.std(ddof=0), "n": numeric.count()})
    stats.index.name = "metric"
    return stats.reset_index()


def write_aggregate(directory, summaries: Sequence[Dict]) -> Path:
    path = Path(directory) / AGGREGATE_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    aggregate(summaries).to_csv(path, index=False)
    return path


def ablation_table(summaries: Iterable[Dict], order: Sequence[str]) -> pd.DataFrame:
    """Une ligne par préréglage, moyennes sur les graines, dans l'ordre du groupe."""
    frame = pd.DataFrame([final_metrics_row(s) for s in summaries])
    table = frame.drop(columns=["seed"]).groupby("preset", sort=False).mean(numeric_only=True)
    table["n_seeds"] = frame.groupby("preset", sort=False)["seed"].count()
    return table.reindex([p for p in order if p in table.index]).reset_index()


def sweep_table(rows: List[Dict]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=["param", "value", "seed", "accuracy", "weighted_f1", "auc"])


def collect_summaries(root) -> List[Dict]:
    """Relit tous les summary.json sous `root` (ordre de chemin)."""
    paths = sorted(Path(root).rglob(SUMMARY_FILE))
    if not paths:
        logger.warning(f"Aucun {SUMMARY_FILE} trouvé sous {root}")
    return [read_json(path) for path in paths]
