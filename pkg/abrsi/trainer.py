# abrsi/trainer.py
"""
Boucle d'entraînement : projection, recommandeurs LSI, vote des pseudo-étiquettes,
objectif pondéré et mise à jour minimax par inversion de gradient.

La vérité terrain du domaine cible n'entre jamais ici : les métriques de suivi
passent par un `monitor` fourni par l'appelant.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .data import DomainDataset, DomainTag
from .errors import ConfigError, TrainingDivergedError, UnknownPresetError
from .losses import (
    EK_VARIANTS,
    EkBuild,
    EkState,
    Schedules,
    advance_epoch,
    build_ek,
    domain_adversarial_loss,
    l_div,
    l_ekl,
    l_sup,
    l_te,
    prob_matching_loss,
)
from .network import (
    Checkpoint,
    NetworkParams,
    ParamGrads,
    Upstream,
    ForwardTapes,
    backward,
    init_adam,
    init_network,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
    scale_grads,
)
from .numerics import make_rng
from .pseudolabel import PseudoLabelSet, assemble, vote_nn, vote_sr, vote_tr
from .recommender import BiRecommendation, abr_loss, fit_lsi, recommend

logger = logging.getLogger(__name__)

LOSS_NAMES = ("L_SUP", "L_ABR", "L_DIV", "L_TE", "L_EKL")


class AblationFlags(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    disable_abr: bool = False
    disable_rs_vote: bool = False
    disable_sr_vote: bool = False
    disable_tr_vote: bool = False
    hard_only: bool = False
    soft_only: bool = False
    disable_div: bool = False
    disable_te: bool = False
    disable_ekl: bool = False
    domain_discriminator_instead: bool = False
    prob_matching_instead: bool = False
    disable_ek_prev: bool = False
    disable_ek_rev: bool = False

    @model_validator(mode="after")
    def _consistent(self):
        if self.hard_only and self.soft_only:
            raise ValueError("hard_only et soft_only sont exclusifs")
        replacements = [self.disable_ekl, self.domain_discriminator_instead, self.prob_matching_instead]
        if sum(replacements) > 1:
            raise ValueError("Au plus un remplacement de L_EKL (disable_ekl, domain_discriminator_instead, prob_matching_instead)")
        return self

    def ek_variants(self) -> Tuple[str, ...]:
        skipped = {"reverse"} if self.disable_ek_rev else set()
        if self.disable_ek_prev:
            skipped.add("previous")
        return tuple(v for v in EK_VARIANTS if v not in skipped)


class TrainConfig(BaseModel):
    """Hyperparamètres ; les valeurs par défaut sont le jeu unique de la méthode."""
    model_config = ConfigDict(extra="forbid")

    rho_max: float = 0.1
    delta: float = 1.0
    tau: float = 0.005
    gamma: float = 0.1
    top_n: int = Field(3, ge=1)
    sr_neighbors: int = Field(3, ge=1)
    alpha_max: float = Field(8.0, gt=0)
    alpha_min: float = Field(4.0, gt=0)
    psi: float = Field(-0.3, le=0)
    phi: float = Field(-0.05, le=0)
    lsi_rank: Optional[int] = Field(None, ge=1)
    shared_dim: int = Field(64, ge=1)
    hidden_width: int = Field(128, ge=1)
    lr: float = Field(1e-3, gt=0)
    epochs: int = Field(200, ge=1)
    seed: int = 0
    batch_size: Optional[int] = Field(None, ge=1)
    fold_mode: str = "literal"
    sr_rule: str = "unanimous"
    sr_metric: str = "euclidean"
    tr_clusters: Optional[int] = Field(None, ge=1)
    scalar_ek: bool = False
    ekl_grouping: str = "sum"
    te_reduction: str = "sum"
    abr_source_side: bool = False
    checkpoint_every: int = Field(0, ge=0)
    ablation_flags: AblationFlags = Field(default_factory=AblationFlags)

    @model_validator(mode="after")
    def _consistent(self):
        for name in ("rho_max", "delta", "tau", "gamma", "lr", "alpha_max", "alpha_min", "psi", "phi"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} doit être fini")
        if (self.alpha_max - 1.0) * (self.alpha_min - 1.0) <= 0:
            raise ValueError("Le calendrier de α ne doit ni atteindre ni traverser 1")
        if self.abr_source_side and self.batch_size is not None:
            raise ValueError("abr_source_side est incompatible avec les minibatchs")
        if self.fold_mode not in ("literal", "standard"):
            raise ValueError(f"fold_mode inconnu '{self.fold_mode}'")
        if self.ekl_grouping not in ("sum", "literal"):
            raise ValueError(f"ekl_grouping inconnu '{self.ekl_grouping}'")
        if self.te_reduction not in ("sum", "mean"):
            raise ValueError(f"te_reduction inconnu '{self.te_reduction}'")
        return self

    def schedules(self) -> Schedules:
        return Schedules(self.rho_max, self.alpha_max, self.alpha_min, self.epochs)

    @property
    def adapts(self) -> bool:
        """Faux pour la référence source seule : aucun terme ne touche le domaine cible."""
        return any(value != 0 for value in (self.rho_max, self.delta, self.tau, self.gamma))


# --- Préréglages d'ablation ---

PRESETS: Dict[str, Dict[str, bool]] = {
    "full": {},
    "A1": {"disable_abr": True},
    "A2": {"disable_rs_vote": True},
    "A3": {"disable_abr": True, "disable_rs_vote": True},
    "B1": {"disable_sr_vote": True, "disable_tr_vote": True},
    "B2": {"disable_rs_vote": True, "disable_tr_vote": True},
    "B3": {"disable_rs_vote": True, "disable_sr_vote": True},
    "C1": {"hard_only": True},
    "C2": {"soft_only": True},
    "D1": {"disable_te": True},
    "D2": {"disable_div": True},
    "D3": {"disable_te": True, "disable_div": True},
    "E1": {"disable_ekl": True},
    "E2": {"domain_discriminator_instead": True},
    "E3": {"prob_matching_instead": True},
    "F1": {"disable_ek_prev": True},
    "F2": {"disable_ek_rev": True},
    "nn_only": {"disable_rs_vote": True, "disable_sr_vote": True, "disable_tr_vote": True},
}

GROUPS: Dict[str, Tuple[str, ...]] = {
    "A": ("A1", "A2", "A3"),
    "B": ("B1", "B2", "B3"),
    "C": ("C1", "C2"),
    "D": ("D1", "D2", "D3"),
    "E": ("E1", "E2", "E3"),
    "F": ("F1", "F2"),
}


def preset_flags(name: str) -> AblationFlags:
    if name not in PRESETS:
        raise UnknownPresetError(name, list(PRESETS))
    return AblationFlags(**PRESETS[name])


def group_members(group: str) -> Tuple[str, ...]:
    if group not in GROUPS:
        raise UnknownPresetError(group, list(GROUPS))
    return GROUPS[group] + ("full",)


def source_only(cfg: TrainConfig) -> TrainConfig:
    """Référence sans adaptation : seule L_SUP reste active."""
    return cfg.model_copy(update={"rho_max": 0.0, "delta": 0.0, "tau": 0.0, "gamma": 0.0})


# --- État discret d'une époque ---

@dataclass
class DiscreteState:
    """Sélections discrètes figées pendant l'époque (aucun gradient)."""
    recommendation: Optional[BiRecommendation]
    pseudo_labels: PseudoLabelSet


@dataclass
class EpochSnapshot:
    epoch: int
    source_features: np.ndarray
    target_features: np.ndarray
    source_probs: np.ndarray
    target_probs: np.ndarray
    discrete: DiscreteState


@dataclass
class ObjectiveResult:
    breakdown: Dict[str, float]
    weights: Dict[str, float]
    total: float
    grads: ParamGrads
    d_accuracy: Optional[float]
    ek_build: Optional[EkBuild]


def _discriminator_in_dim(cfg: TrainConfig, k: int) -> int:
    if cfg.ablation_flags.domain_discriminator_instead:
        return cfg.shared_dim
    return 1 if cfg.scalar_ek else k


def _lsi_rank(cfg: TrainConfig, n_s: int, n_t: int) -> int:
    rank = cfg.lsi_rank or min(cfg.shared_dim, 32)
    return max(1, min(rank, cfg.shared_dim, n_s, n_t))


def _needs_recommendation(cfg: TrainConfig) -> bool:
    flags = cfg.ablation_flags
    return not flags.disable_rs_vote or (not flags.disable_abr and cfg.rho_max > 0)


def compute_discrete_state(
    snapshot_feats: Tuple[np.ndarray, np.ndarray],
    target_probs: np.ndarray,
    source_labels: np.ndarray,
    k: int,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> DiscreteState:
    """Réajuste les recommandeurs puis fait voter les quatre voix sur l'instantané de l'époque."""
    src_feats, tgt_feats = snapshot_feats
    flags = cfg.ablation_flags
    if not cfg.adapts:
        # Référence sans pseudo-étiquettes : ni recommandeurs ni voteurs.
        return DiscreteState(
            recommendation=None,
            pseudo_labels=assemble(vote_nn(target_probs), None, None, None, target_probs, "soft_only"),
        )

    recommendation = None
    if _needs_recommendation(cfg):
        rank = _lsi_rank(cfg, src_feats.shape[0], tgt_feats.shape[0])
        model_s = fit_lsi(src_feats, rank, DomainTag.SOURCE, cfg.fold_mode)
        model_t = fit_lsi(tgt_feats, rank, DomainTag.TARGET, cfg.fold_mode)
        recommendation = recommend(model_s, model_t, src_feats, source_labels, tgt_feats, cfg.top_n, k)

    nn = vote_nn(target_probs)
    rs = None if flags.disable_rs_vote else recommendation.rs_s_label
    sr = None
    if not flags.disable_sr_vote:
        sr = vote_sr(tgt_feats, src_feats, source_labels, cfg.sr_neighbors, cfg.sr_rule, cfg.sr_metric)
    tr = None
    if not flags.disable_tr_vote:
        tr = vote_tr(tgt_feats, nn, cfg.tr_clusters or k, rng)
    strategy = "soft_only" if flags.soft_only else "hybrid"
    return DiscreteState(recommendation=recommendation, pseudo_labels=assemble(nn, rs, sr, tr, target_probs, strategy))


def compute_objective(
    params: NetworkParams,
    source_x: np.ndarray,
    source_y: np.ndarray,
    target_x: np.ndarray,
    discrete: DiscreteState,
    ek_state: EkState,
    cfg: TrainConfig,
    epoch: int,
) -> ObjectiveResult:
    """
    J = L_SUP + ρL_ABR + δL_DIV + τL_TE + γL_EKL pour un état discret figé,
    avec les gradients de tous les paramètres. Les gradients de E et C sont
    ceux de J ; ceux de D sont ceux de −J (D maximise le terme adversarial).
    """
    flags = cfg.ablation_flags
    schedules = cfg.schedules()
    weights = {
        "L_SUP": 1.0,
        "L_ABR": 0.0 if flags.disable_abr else schedules.rho(epoch),
        "L_DIV": 0.0 if flags.disable_div or flags.hard_only else cfg.delta,
        "L_TE": 0.0 if flags.disable_te or flags.hard_only else cfg.tau,
        "L_EKL": 0.0 if flags.disable_ekl else cfg.gamma,
    }
    breakdown = dict.fromkeys(LOSS_NAMES, 0.0)

    fs, tape_fs = params.e_s.forward(source_x)
    ft, tape_ft = params.e_t.forward(target_x)
    ps, tape_ps = params.c.forward(fs)
    pt, tape_pt = params.c.forward(ft)
    up = Upstream(probs_s=np.zeros_like(ps), probs_t=np.zeros_like(pt), feats_s=np.zeros_like(fs), feats_t=np.zeros_like(ft))

    breakdown["L_SUP"], grad = l_sup(ps, source_y)
    up.probs_s += grad

    if weights["L_ABR"] > 0 and discrete.recommendation is not None:
        value, grad_t, grad_s = abr_loss(discrete.recommendation, ft, fs, cfg.abr_source_side)
        breakdown["L_ABR"] = value
        up.feats_t += weights["L_ABR"] * grad_t
        if grad_s is not None:
            up.feats_s += weights["L_ABR"] * grad_s

    if weights["L_DIV"] != 0:
        breakdown["L_DIV"], grad = l_div(pt)
        up.probs_t += weights["L_DIV"] * grad
    if weights["L_TE"] != 0:
        breakdown["L_TE"], grad = l_te(pt, schedules.alpha(epoch), cfg.te_reduction)
        up.probs_t += weights["L_TE"] * grad

    pl = discrete.pseudo_labels
    if flags.hard_only:
        hard_rows = np.flatnonzero(pl.hard_mask)
        ek_probs_t = pl.subset(hard_rows).target_matrix(pt[hard_rows])
        ek = build_ek(ps, source_y, ek_probs_t, np.zeros(hard_rows.size, dtype=bool), cfg.scalar_ek)
    else:
        ek = build_ek(ps, source_y, pl.target_matrix(pt), ~pl.hard_mask, cfg.scalar_ek)

    d_accuracy = None
    gamma = weights["L_EKL"]
    if gamma != 0:
        if flags.domain_discriminator_instead:
            result = domain_adversarial_loss(params.d, fs, ft)
            up.adversarial_feats_s = -gamma * result.grad_feats_s
            up.adversarial_feats_t = -gamma * result.grad_feats_t
            up.discriminator = scale_grads({"d": result.d_grads}, -gamma)["d"]
            breakdown["L_EKL"], d_accuracy = result.value, result.d_accuracy
        elif flags.prob_matching_instead:
            value, grad_diff = prob_matching_loss(ek)
            grad_ps, grad_pt = ek.backward_diff(grad_diff)
            breakdown["L_EKL"] = value
            _add_ek_grads(up, pl, flags.hard_only, gamma * grad_ps, gamma * grad_pt)
        else:
            result = l_ekl(
                ek.ek, ek_state.previous[ek.categories], params.d, ek_state.psi, ek_state.phi,
                flags.ek_variants(), cfg.ekl_grouping,
            )
            # Gradients de L_D = −γ·L_EKL ; l'inversion les retourne vers E et C.
            adv_ps, adv_pt = ek.backward(-gamma * result.grad_ek)
            up.adversarial_probs_s = adv_ps
            up.adversarial_probs_t = _expand_target_grad(adv_pt, pl, flags.hard_only)
            up.discriminator = scale_grads({"d": result.d_grads}, -gamma)["d"]
            breakdown["L_EKL"], d_accuracy = result.value, result.d_accuracy

    grads = backward(params, ForwardTapes(tape_fs, tape_ft, tape_ps, tape_pt), up)
    total = math.fsum(weights[name] * breakdown[name] for name in LOSS_NAMES)
    return ObjectiveResult(breakdown, weights, total, grads, d_accuracy, ek)


def _expand_target_grad(grad: np.ndarray, pl: PseudoLabelSet, hard_only: bool) -> np.ndarray:
    if not hard_only:
        return grad
    full = np.zeros((pl.n_instances, grad.shape[1]))
    full[np.flatnonzero(pl.hard_mask)] = grad
    return full


def _add_ek_grads(up: Upstream, pl: PseudoLabelSet, hard_only: bool, grad_ps: np.ndarray, grad_pt: np.ndarray):
    up.probs_s += grad_ps
    up.probs_t += _expand_target_grad(grad_pt, pl, hard_only)


# --- Rapport d'entraînement ---

@dataclass
class RunReport:
    epochs: List[Dict[str, Optional[float]]] = field(default_factory=list)
    epoch_seconds: List[float] = field(default_factory=list)
    config: Dict = field(default_factory=dict)
    seed: int = 0
    final_pseudo_labels: Optional[PseudoLabelSet] = None
    start_epoch: int = 0

    @property
    def last(self) -> Dict[str, Optional[float]]:
        return self.epochs[-1] if self.epochs else {}


Monitor = Callable[[NetworkParams, EpochSnapshot], Dict[str, Optional[float]]]


def _batches(n_s: int, n_t: int, batch_size: Optional[int], rng: np.random.Generator):
    if batch_size is None:
        yield np.arange(n_s), np.arange(n_t)
        return
    order_s = rng.permutation(n_s)
    order_t = rng.permutation(n_t)
    count = math.ceil(max(n_s, n_t) / batch_size)
    for b in range(count):
        window = np.arange(b * batch_size, (b + 1) * batch_size)
        # Le domaine le plus court boucle ; une ligne n'apparaît qu'une fois par lot.
        yield np.unique(order_s[window % n_s]), np.unique(order_t[window % n_t])


def _check_inputs(source: DomainDataset, target: DomainDataset, cfg: TrainConfig):
    if source.labels is None:
        raise ConfigError("Le domaine source doit être étiqueté")
    if target.labels is not None:
        raise ConfigError("Le domaine cible doit être non étiqueté ; la vérité terrain reste hors de l'entraînement")
    if source.category_names != target.category_names:
        raise ConfigError("Les domaines source et cible ne partagent pas le même espace de catégories")
    if cfg.sr_neighbors > source.n_instances:
        raise ConfigError(f"sr_neighbors={cfg.sr_neighbors} supérieur au nombre d'instances source")


def _run_meta(source: DomainDataset, target: DomainDataset, cfg: TrainConfig, k: int) -> Dict:
    return {
        "seed": cfg.seed,
        "d_s": source.dim,
        "d_t": target.dim,
        "k": k,
        "shared_dim": cfg.shared_dim,
        "hidden_width": cfg.hidden_width,
        "discriminator_in_dim": _discriminator_in_dim(cfg, k),
    }


def _check_resume(checkpoint: Checkpoint, expected: Dict, epochs: int, path):
    """Le point de reprise doit venir de la même graine et des mêmes formes que la configuration."""
    mismatched = {
        key: (checkpoint.meta[key], value)
        for key, value in expected.items()
        if key in checkpoint.meta and checkpoint.meta[key] != value
    }
    if mismatched:
        details = ", ".join(f"{key}: {saved} != {wanted}" for key, (saved, wanted) in mismatched.items())
        raise ConfigError(f"Point de reprise {path} incompatible avec la configuration ({details})")
    if checkpoint.epoch > epochs:
        raise ConfigError(f"Point de reprise {path} à l'époque {checkpoint.epoch}, au-delà de {epochs} époques")


def train(
    source: DomainDataset,
    target: DomainDataset,
    cfg: TrainConfig,
    monitor: Optional[Monitor] = None,
    checkpoint_path: Optional[Path] = None,
    resume_from: Optional[Path] = None,
) -> Tuple[NetworkParams, RunReport]:
    """Entraîne le modèle complet ; déterministe pour une graine donnée."""
    _check_inputs(source, target, cfg)
    k = len(source.category_names)
    xs, ys, xt = source.features, source.labels, target.features
    flags = cfg.ablation_flags

    rng = make_rng(cfg.seed)
    if resume_from is not None:
        checkpoint = load_checkpoint(resume_from)
        _check_resume(checkpoint, _run_meta(source, target, cfg, k), cfg.epochs, resume_from)
        params, adam = checkpoint.params, checkpoint.adam
        rng.bit_generator.state = checkpoint.rng_state
        ek_state = EkState(checkpoint.ek_current, checkpoint.ek_previous, cfg.psi, cfg.phi)
        start_epoch = checkpoint.epoch
        logger.info(f"Reprise depuis {resume_from} à l'époque {start_epoch}")
    else:
        params = init_network(
            source.dim, target.dim, cfg.shared_dim, k, cfg.hidden_width, rng, _discriminator_in_dim(cfg, k)
        )
        adam = init_adam(params)
        ek_state = EkState.zeros(k, 1 if cfg.scalar_ek else k, cfg.psi, cfg.phi)
        start_epoch = 0

    report = RunReport(config=cfg.model_dump(mode="json"), seed=cfg.seed, start_epoch=start_epoch)
    schedules = cfg.schedules()
    logger.info(
        f"Entraînement : {source.n_instances} sources (d={source.dim}), {target.n_instances} cibles "
        f"(d={target.dim}), K={k}, {cfg.epochs} époques, graine {cfg.seed}"
    )

    for epoch in range(start_epoch, cfg.epochs):
        started = time.perf_counter()
        fs, _ = params.e_s.forward(xs)
        ft, _ = params.e_t.forward(xt)
        ps, _ = params.c.forward(fs)
        pt, _ = params.c.forward(ft)
        discrete = compute_discrete_state((fs, ft), pt, ys, k, cfg, rng)
        snapshot = EpochSnapshot(epoch, fs, ft, ps, pt, discrete)
        pl = discrete.pseudo_labels

        sums = dict.fromkeys(LOSS_NAMES + ("total",), 0.0)
        accuracies = []
        n_batches = 0
        for batch_s, batch_t in _batches(xs.shape[0], xt.shape[0], cfg.batch_size, rng):
            batch_discrete = discrete
            if cfg.batch_size is not None:
                batch_discrete = DiscreteState(
                    recommendation=None if discrete.recommendation is None else discrete.recommendation.restrict(batch_t),
                    pseudo_labels=pl.subset(batch_t),
                )
            result = compute_objective(params, xs[batch_s], ys[batch_s], xt[batch_t], batch_discrete, ek_state, cfg, epoch)
            if not math.isfinite(result.total):
                raise TrainingDivergedError(epoch, {**result.breakdown, "total": result.total})
            optimizer_step(params, result.grads, adam, cfg.lr)
            for name in LOSS_NAMES:
                sums[name] += result.breakdown[name]
            sums["total"] += result.total
            if result.d_accuracy is not None:
                accuracies.append(result.d_accuracy)
            n_batches += 1

        if flags.hard_only:
            hard_rows = np.flatnonzero(pl.hard_mask)
            snapshot_ek = build_ek(ps, ys, pl.subset(hard_rows).target_matrix(), None, cfg.scalar_ek)
        else:
            snapshot_ek = build_ek(ps, ys, pl.target_matrix(), ~pl.hard_mask, cfg.scalar_ek)
        ek_state.store(snapshot_ek)
        ek_state = advance_epoch(ek_state)

        row: Dict[str, Optional[float]] = {"epoch": epoch}
        row.update({name: sums[name] / n_batches for name in LOSS_NAMES})
        row["total"] = sums["total"] / n_batches
        row["rho"] = schedules.rho(epoch)
        row["alpha"] = schedules.alpha(epoch)
        row["hard_ratio"] = pl.hard_ratio
        for voter in ("rs", "sr", "tr"):
            row[f"agree_{voter}"] = pl.agreement_rates().get(voter)
        row["d_accuracy"] = float(np.mean(accuracies)) if accuracies else None
        if monitor is not None:
            row.update(monitor(params, snapshot))
        report.epochs.append(row)
        report.epoch_seconds.append(time.perf_counter() - started)
        report.final_pseudo_labels = pl

        logger.debug(
            f"Époque {epoch}: total={row['total']:.5f} L_SUP={row['L_SUP']:.5f} "
            f"L_EKL={row['L_EKL']:.5f} PL durs={row['hard_ratio']:.3f}"
        )
        completed = epoch + 1
        if checkpoint_path is not None and (
            completed == cfg.epochs or (cfg.checkpoint_every and completed % cfg.checkpoint_every == 0)
        ):
            save_checkpoint(
                checkpoint_path,
                Checkpoint(
                    params=params, adam=adam, epoch=completed, rng_state=rng.bit_generator.state,
                    ek_current=ek_state.current, ek_previous=ek_state.previous,
                    meta=_run_meta(source, target, cfg, k),
                ),
            )

    logger.info(f"Entraînement terminé ({len(report.epochs)} époque(s), graine {cfg.seed})")
    return params, report


@dataclass
class AblationRun:
    preset: str
    params: NetworkParams
    report: RunReport
    metrics: Dict[str, Optional[float]]


def run_ablation(
    presets,
    source: DomainDataset,
    target: DomainDataset,
    cfg: TrainConfig,
    evaluate: Callable[[NetworkParams, RunReport], Dict[str, Optional[float]]],
    monitor: Optional[Monitor] = None,
) -> List[AblationRun]:
    """
    Entraîne chaque préréglage (nom de préréglage ou de groupe) sous la même
    graine et la même configuration ; `evaluate` produit les métriques comparées.
    """
    if isinstance(presets, str):
        presets = group_members(presets) if presets in GROUPS else (presets,)
    runs = []
    for name in presets:
        variant = cfg.model_copy(update={"ablation_flags": preset_flags(name)})
        logger.info(f"Ablation '{name}' (graine {cfg.seed})")
        params, report = train(source, target, variant, monitor=monitor)
        runs.append(AblationRun(preset=name, params=params, report=report, metrics=evaluate(params, report)))
    return runs
