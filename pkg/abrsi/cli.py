# abrsi/cli.py
"""
Point d'entrée en ligne de commande : train, ablate, sweep, prep, report.

Codes de sortie : 0 succès, 2 erreur de configuration ou d'entrée/sortie,
1 erreur d'exécution.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from . import configure_logging, configure_run_journal, load_settings
from .errors import AbrsiError, ConfigError, DataError, UnknownPresetError
from .extensions import init_celery
from .report import ablation_table, collect_summaries, final_metrics_row, sweep_table, write_aggregate
from .services import (
    ExperimentConfig,
    coerce_train_value,
    load_experiment,
    output_root,
    prepare_dataset,
    run_dir_for,
    with_train_value,
)
from .tasks import train_seed_task
from .trainer import group_members

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abrsi", description="Adaptation de domaine hétérogène pour la détection d'intrusions.")
    parser.add_argument("--settings", default=None, help="Fichier de réglages d'exécution (défaut : config/settings.json)")
    commands = parser.add_subparsers(dest="command", required=True)

    def experiment_options(sub):
        sub.add_argument("--config", required=True, help="Fichier JSON de l'expérience")
        sub.add_argument("--seed", type=int, action="append", dest="seeds", help="Graine (répétable)")
        sub.add_argument("--binary", action="store_true", default=None, help="Mode binaire bénin / intrusion")
        sub.add_argument("--output-dir", default=None)
        sub.add_argument("--epochs", type=int, default=None)

    train = commands.add_parser("train", help="Entraîne le modèle pour chaque graine")
    experiment_options(train)
    train.add_argument("--ablation", default=None, help="Préréglage d'ablation (full, A1, ..., nn_only)")
    train.add_argument("--resume", default=None, help="Point de reprise (une seule graine)")

    ablate = commands.add_parser("ablate", help="Compare le modèle complet aux membres d'un groupe d'ablation")
    experiment_options(ablate)
    ablate.add_argument("--group", required=True, choices=list("ABCDEF"))

    sweep = commands.add_parser("sweep", help="Analyse de sensibilité d'un hyperparamètre")
    experiment_options(sweep)
    sweep.add_argument("--param", required=True)
    sweep.add_argument("--values", required=True, nargs="+")

    prep = commands.add_parser("prep", help="Prétraite un jeu de données brut selon une recette")
    prep.add_argument("--recipe", required=True)
    prep.add_argument("--input", default=None, help="CSV brut (téléchargé via source_url s'il est absent)")
    prep.add_argument("--output", required=True)
    prep.add_argument("--domain", choices=["source", "target"], default="source")
    prep.add_argument("--seed", type=int, default=0)

    report = commands.add_parser("report", help="Agrège les summary.json d'un dossier de résultats")
    report.add_argument("--root", required=True)
    return parser


def _overrides(args) -> Dict:
    return {
        "seeds": args.seeds,
        "ablation": getattr(args, "ablation", None),
        "binary_mode": args.binary,
        "output_dir": args.output_dir,
        "epochs": args.epochs,
    }


def dispatch(jobs: Sequence[Dict], settings: Dict) -> List[Dict]:
    """Envoie une tâche par exécution puis attend les résumés, dans l'ordre des tâches."""
    pending = [train_seed_task.delay(settings=settings, **job) for job in jobs]
    return [result.get() for result in pending]


def _job(experiment: ExperimentConfig, seed: int, run_dir: Path, preset: str, **extra) -> Dict:
    return {"experiment": experiment.model_dump(mode="json"), "seed": seed, "run_dir": str(run_dir), "preset": preset, **extra}


def cmd_train(args, settings: Dict) -> int:
    experiment = load_experiment(args.config, _overrides(args))
    if args.resume and len(experiment.seeds) != 1:
        raise ConfigError("--resume exige une seule graine")
    root = output_root(experiment, settings)
    preset = experiment.ablation
    jobs = [
        _job(experiment, seed, run_dir_for(root, preset, seed), preset, resume_from=args.resume)
        for seed in experiment.seeds
    ]
    summaries = dispatch(jobs, settings)
    aggregate_path = write_aggregate(root / preset, summaries)
    for summary in summaries:
        row = final_metrics_row(summary)
        print(f"graine {row['seed']}: exactitude={row['accuracy']:.4f} f1={row['weighted_f1']:.4f}")
    print(f"Agrégat : {aggregate_path}")
    return EXIT_OK


def cmd_ablate(args, settings: Dict) -> int:
    experiment = load_experiment(args.config, _overrides(args))
    members = group_members(args.group)
    root = output_root(experiment, settings)
    jobs = [
        _job(experiment, seed, run_dir_for(root, preset, seed), preset)
        for preset in members
        for seed in experiment.seeds
    ]
    table = ablation_table(dispatch(jobs, settings), members)
    path = root / f"ablation_{args.group}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    print(table.to_string(index=False))
    print(f"Table d'ablation : {path}")
    return EXIT_OK


def cmd_sweep(args, settings: Dict) -> int:
    experiment = load_experiment(args.config, _overrides(args))
    root = output_root(experiment, settings)
    values = [coerce_train_value(args.param, raw) for raw in args.values]
    variants = [(value, with_train_value(experiment, args.param, value)) for value in values]
    jobs, keys = [], []
    for value, variant in variants:
        variant = variant.model_copy(update={"baseline": False})
        for seed in experiment.seeds:
            jobs.append(_job(variant, seed, run_dir_for(root, experiment.ablation, seed, f"_{args.param}_{value}"), experiment.ablation))
            keys.append((value, seed))
    rows = []
    for (value, seed), summary in zip(keys, dispatch(jobs, settings)):
        metrics = summary["final_metrics"]
        rows.append({
            "param": args.param, "value": value, "seed": seed,
            "accuracy": metrics["accuracy"], "weighted_f1": metrics["weighted_f1"], "auc": metrics["auc"],
        })
    path = root / f"sweep_{args.param}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    sweep_table(rows).to_csv(path, index=False)
    print(f"Balayage : {path} ({len(rows)} ligne(s))")
    return EXIT_OK


def cmd_prep(args, settings: Dict) -> int:
    provenance = prepare_dataset(args.recipe, args.input, args.output, settings, args.domain, args.seed)
    print(f"{provenance['recipe']} : {provenance['n_rows']} lignes, {provenance['n_features']} caractéristiques -> {args.output}")
    return EXIT_OK


def cmd_report(args, settings: Dict) -> int:
    summaries = collect_summaries(args.root)
    if not summaries:
        raise DataError(f"Aucun résumé d'exécution sous {args.root}")
    path = write_aggregate(args.root, summaries)
    print(f"Agrégat de {len(summaries)} exécution(s) : {path}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "prep": cmd_prep,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = load_settings(args.settings)
    configure_logging(settings)
    configure_run_journal(settings)
    init_celery(settings)

    try:
        return COMMANDS[args.command](args, settings)
    except (ConfigError, DataError, UnknownPresetError, ValidationError, OSError) as e:
        logger.error(f"Erreur de configuration ou d'entrée/sortie : {e}")
        print(f"erreur : {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AbrsiError as e:
        logger.error(f"Erreur d'exécution : {e}", exc_info=True)
        print(f"erreur : {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
