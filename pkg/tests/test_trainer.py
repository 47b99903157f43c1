import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
from pydantic import ValidationError

from abrsi.data import DomainDataset, DomainTag
from abrsi.errors import ConfigError, TrainingDivergedError, UnknownPresetError
from abrsi.losses import EkState
from abrsi.network import LEAKY_SLOPE, init_network
from abrsi.numerics import make_rng
from abrsi.trainer import (
    GROUPS,
    LOSS_NAMES,
    PRESETS,
    AblationFlags,
    TrainConfig,
    compute_discrete_state,
    compute_objective,
    group_members,
    preset_flags,
    run_ablation,
    source_only,
    _batches,
    train,
)

from fixtures import tiny_config, tiny_domains


class ConfigTestCase(unittest.TestCase):

    def test_defaults(self):
        cfg = TrainConfig()
        self.assertEqual((cfg.rho_max, cfg.delta, cfg.tau, cfg.gamma), (0.1, 1.0, 0.005, 0.1))
        self.assertEqual((cfg.top_n, cfg.sr_neighbors, cfg.alpha_max, cfg.alpha_min), (3, 3, 8.0, 4.0))
        self.assertEqual((cfg.psi, cfg.phi), (-0.3, -0.05))

    def test_alpha_schedule_must_not_cross_one(self):
        with self.assertRaises(ValidationError):
            TrainConfig(alpha_max=2.0, alpha_min=0.5)
        TrainConfig(alpha_max=0.9, alpha_min=0.5)

    def test_variant_coefficients_must_be_non_positive(self):
        with self.assertRaises(ValidationError):
            TrainConfig(psi=0.3)

    def test_non_finite_weight_is_rejected(self):
        with self.assertRaises(ValidationError):
            TrainConfig(gamma=float("nan"))

    def test_source_side_abr_needs_full_batch(self):
        with self.assertRaises(ValidationError):
            TrainConfig(abr_source_side=True, batch_size=32)

    def test_flags_are_exclusive(self):
        with self.assertRaises(ValidationError):
            AblationFlags(hard_only=True, soft_only=True)
        with self.assertRaises(ValidationError):
            AblationFlags(disable_ekl=True, prob_matching_instead=True)

    def test_presets(self):
        self.assertEqual(preset_flags("full"), AblationFlags())
        self.assertEqual(preset_flags("F1").ek_variants(), ("zero", "reverse"))
        self.assertEqual(preset_flags("F2").ek_variants(), ("zero", "previous"))
        self.assertEqual(group_members("A"), ("A1", "A2", "A3", "full"))
        for members in GROUPS.values():
            self.assertTrue(set(members) <= set(PRESETS))
        with self.assertRaises(UnknownPresetError):
            preset_flags("Z9")
        with self.assertRaises(UnknownPresetError):
            group_members("Z")

    def test_source_only_keeps_only_supervision(self):
        cfg = source_only(TrainConfig())
        self.assertEqual((cfg.rho_max, cfg.delta, cfg.tau, cfg.gamma), (0.0, 0.0, 0.0, 0.0))


def keep_off_kinks(network, x, margin=1e-2):
    """Décale les biais LeakyReLU pour qu'aucune pré-activation ne soit à moins de `margin` de 0."""
    h = x
    for layer in network.layers:
        z = h @ layer.weight + layer.bias
        if layer.activation == "leaky_relu":
            for unit in range(z.shape[1]):
                shift = 0.0
                while np.min(np.abs(z[:, unit] + shift)) < margin:
                    shift += 2 * margin
                layer.bias[unit] += shift
            z = h @ layer.weight + layer.bias
            h = np.where(z > 0, z, LEAKY_SLOPE * z)
        else:
            h = z


class ObjectiveGradientTestCase(unittest.TestCase):
    """Gradients analytiques de l'objectif complet contre différences centrées (ε = 1e-5)."""

    def _check(self, flags=None, **overrides):
        values = dict(rho_max=0.5, delta=1.0, tau=0.1, gamma=0.5, epochs=3, shared_dim=6, hidden_width=8,
                      top_n=3, tr_clusters=4, sr_neighbors=3)
        values.update(overrides)
        if flags:
            values["ablation_flags"] = AblationFlags(**flags)
        cfg = TrainConfig(**values)
        source, target, _ = tiny_domains(seed=3, d_s=7, d_t=5, n_s=40, n_t=40)
        k = 3
        d_in = cfg.shared_dim if cfg.ablation_flags.domain_discriminator_instead else (1 if cfg.scalar_ek else k)
        rng = make_rng(4)
        params = init_network(7, 5, cfg.shared_dim, k, cfg.hidden_width, rng, d_in)
        xs, ys, xt = source.features, source.labels, target.features
        keep_off_kinks(params.e_s, xs)
        keep_off_kinks(params.e_t, xt)

        fs, _ = params.e_s.forward(xs)
        ft, _ = params.e_t.forward(xt)
        pt, _ = params.c.forward(ft)
        discrete = compute_discrete_state((fs, ft), pt, ys, k, cfg, rng)
        ek_dim = 1 if cfg.scalar_ek else k
        ek_state = EkState(np.zeros((k, ek_dim)), rng.uniform(0.0, 0.2, size=(k, ek_dim)))

        def total():
            return compute_objective(params, xs, ys, xt, discrete, ek_state, cfg, 1).total

        analytic = compute_objective(params, xs, ys, xt, discrete, ek_state, cfg, 1).grads
        eps = 1e-5
        for name, network in params.networks().items():
            sign = -1.0 if name == "d" else 1.0
            for index, layer in enumerate(network.layers):
                for attribute in ("weight", "bias"):
                    tensor = getattr(layer, attribute)
                    numeric = np.zeros_like(tensor)
                    for position in np.ndindex(tensor.shape):
                        original = tensor[position]
                        tensor[position] = original + eps
                        plus = total()
                        tensor[position] = original - eps
                        minus = total()
                        tensor[position] = original
                        numeric[position] = (plus - minus) / (2 * eps)
                    np.testing.assert_allclose(
                        getattr(analytic[name][index], attribute), sign * numeric, rtol=1e-4, atol=1e-7,
                        err_msg=f"{name}.layers[{index}].{attribute}",
                    )
        return discrete

    def test_full_objective(self):
        discrete = self._check()
        self.assertIsNotNone(discrete.recommendation)

    def test_scalar_error_knowledge_and_literal_grouping(self):
        self._check(scalar_ek=True, ekl_grouping="literal", te_reduction="mean")

    def test_source_side_matching(self):
        self._check(abr_source_side=True)

    def test_hard_only(self):
        self._check(flags={"hard_only": True})

    def test_domain_discriminator_stand_in(self):
        self._check(flags={"domain_discriminator_instead": True})

    def test_probability_matching_stand_in(self):
        self._check(flags={"prob_matching_instead": True})


class TrainTestCase(unittest.TestCase):

    def setUp(self):
        self.source, self.target, self.truth = tiny_domains()

    def test_same_seed_same_report(self):
        cfg = tiny_config()
        params_a, report_a = train(self.source, self.target, cfg)
        params_b, report_b = train(self.source, self.target, cfg)
        self.assertEqual(report_a.epochs, report_b.epochs)
        for (name, a), (_, b) in zip(params_a.parameters(), params_b.parameters()):
            np.testing.assert_array_equal(a, b, err_msg=name)
        np.testing.assert_array_equal(report_a.final_pseudo_labels.hard_mask, report_b.final_pseudo_labels.hard_mask)

    def test_different_seed_different_weights(self):
        params_a, _ = train(self.source, self.target, tiny_config(seed=0))
        params_b, _ = train(self.source, self.target, tiny_config(seed=1))
        self.assertFalse(np.array_equal(params_a.c.layers[0].weight, params_b.c.layers[0].weight))

    def test_epoch_bookkeeping(self):
        cfg = tiny_config(epochs=4)
        _, report = train(self.source, self.target, cfg)
        self.assertEqual([row["epoch"] for row in report.epochs], [0, 1, 2, 3])
        self.assertEqual(len(report.epoch_seconds), 4)
        schedules = cfg.schedules()
        for row in report.epochs:
            self.assertTrue(set(LOSS_NAMES) <= row.keys())
            self.assertAlmostEqual(row["rho"], schedules.rho(row["epoch"]))
            self.assertAlmostEqual(row["alpha"], schedules.alpha(row["epoch"]))
            self.assertTrue(0.0 <= row["hard_ratio"] <= 1.0)
            self.assertTrue(np.isfinite(row["total"]))
            for voter in ("agree_rs", "agree_sr", "agree_tr"):
                self.assertTrue(0.0 <= row[voter] <= 1.0)
            self.assertIsNotNone(row["d_accuracy"])
        # ρ(0) = 0 : pas d'appariement à la première époque
        self.assertEqual(report.epochs[0]["L_ABR"], 0.0)
        self.assertEqual(report.last, report.epochs[-1])

    def test_target_truth_never_reaches_training(self):
        permuted = np.random.default_rng(0).permutation(self.truth.labels)

        def monitor_for(labels, key):
            def monitor(params, snapshot):
                predictions = np.argmax(snapshot.target_probs, axis=1)
                return {key: float(np.mean(predictions == labels))}
            return monitor

        params_a, report_a = train(self.source, self.target, tiny_config(), monitor=monitor_for(self.truth.labels, "acc"))
        params_b, report_b = train(self.source, self.target, tiny_config(), monitor=monitor_for(permuted, "acc"))
        for (name, a), (_, b) in zip(params_a.parameters(), params_b.parameters()):
            np.testing.assert_array_equal(a, b, err_msg=name)
        self.assertTrue(0.0 <= report_a.last["acc"] <= 1.0)
        self.assertTrue(0.0 <= report_b.last["acc"] <= 1.0)

    def test_labelled_target_is_rejected(self):
        labelled = DomainDataset(self.target.features, self.truth.labels, DomainTag.TARGET, self.target.category_names)
        with self.assertRaises(ConfigError):
            train(self.source, labelled, tiny_config())

    def test_too_many_sr_neighbours(self):
        with self.assertRaises(ConfigError):
            train(self.source, self.target, tiny_config(sr_neighbors=1000))

    def test_every_preset_trains(self):
        for name in PRESETS:
            _, report = train(self.source, self.target, tiny_config(epochs=2, ablation_flags=preset_flags(name)))
            self.assertEqual(len(report.epochs), 2, name)
            self.assertTrue(all(np.isfinite(row["total"]) for row in report.epochs), name)

    def test_ablated_terms_stay_at_zero(self):
        _, hard_only = train(self.source, self.target, tiny_config(ablation_flags=preset_flags("C1")))
        self.assertEqual({row["L_DIV"] for row in hard_only.epochs} | {row["L_TE"] for row in hard_only.epochs}, {0.0})

        _, soft_only = train(self.source, self.target, tiny_config(ablation_flags=preset_flags("C2")))
        self.assertEqual({row["hard_ratio"] for row in soft_only.epochs}, {0.0})

        _, no_ekl = train(self.source, self.target, tiny_config(ablation_flags=preset_flags("E1")))
        self.assertEqual({row["L_EKL"] for row in no_ekl.epochs}, {0.0})
        self.assertIsNone(no_ekl.last["d_accuracy"])

        _, nn_only = train(self.source, self.target, tiny_config(ablation_flags=preset_flags("nn_only")))
        self.assertEqual({row["hard_ratio"] for row in nn_only.epochs}, {1.0})
        self.assertIsNone(nn_only.last["agree_rs"])

    def test_source_only_baseline(self):
        _, report = train(self.source, self.target, source_only(tiny_config()))
        for row in report.epochs:
            self.assertEqual((row["L_ABR"], row["L_DIV"], row["L_TE"], row["L_EKL"]), (0.0, 0.0, 0.0, 0.0))
            self.assertEqual(row["total"], row["L_SUP"])

    def test_source_only_baseline_skips_the_voters(self):
        with patch('abrsi.trainer.vote_sr') as vote_sr, patch('abrsi.trainer.vote_tr') as vote_tr:
            _, report = train(self.source, self.target, source_only(tiny_config()))
        vote_sr.assert_not_called()
        vote_tr.assert_not_called()
        for row in report.epochs:
            self.assertEqual(row["hard_ratio"], 0.0)
            self.assertEqual({row.get(f"agree_{voter}") for voter in ("rs", "sr", "tr")}, {None})
        self.assertIsNone(report.final_pseudo_labels.rs)

    def test_recommendation_skipped_when_unused(self):
        cfg = tiny_config(ablation_flags=preset_flags("A3"))
        rng = make_rng(0)
        params = init_network(self.source.dim, self.target.dim, cfg.shared_dim, 3, cfg.hidden_width, rng)
        fs, _ = params.e_s.forward(self.source.features)
        ft, _ = params.e_t.forward(self.target.features)
        pt, _ = params.c.forward(ft)
        discrete = compute_discrete_state((fs, ft), pt, self.source.labels, 3, cfg, rng)
        self.assertIsNone(discrete.recommendation)
        self.assertIsNone(discrete.pseudo_labels.rs)

    def test_minibatches(self):
        _, report = train(self.source, self.target, tiny_config(batch_size=16))
        self.assertEqual(len(report.epochs), 3)
        self.assertTrue(all(np.isfinite(row["total"]) for row in report.epochs))

    def test_minibatch_rows_are_unique(self):
        batches = list(_batches(5, 12, 8, make_rng(0)))
        self.assertEqual(len(batches), 2)
        for rows_s, rows_t in batches:
            self.assertEqual(len(rows_s), len(set(rows_s.tolist())))
            self.assertEqual(len(rows_s), 5)
            self.assertEqual(len(rows_t), len(set(rows_t.tolist())))
        covered = np.concatenate([rows_t for _, rows_t in batches])
        self.assertEqual(sorted(covered.tolist()), list(range(12)))

    def test_diverging_loss_is_reported(self):
        def broken(probs, labels):
            return float("nan"), np.zeros_like(probs)

        with patch('abrsi.trainer.l_sup', side_effect=broken):
            with self.assertRaises(TrainingDivergedError) as ctx:
                train(self.source, self.target, tiny_config())
        self.assertEqual(ctx.exception.epoch, 0)
        self.assertIn("L_SUP", ctx.exception.breakdown)

    def test_resume_continues_identically(self):
        class Interrupted(Exception):
            pass

        def interrupt_at(epoch):
            def monitor(params, snapshot):
                if snapshot.epoch == epoch:
                    raise Interrupted()
                return {}
            return monitor

        cfg = tiny_config(epochs=4, checkpoint_every=2)
        straight, straight_report = train(self.source, self.target, cfg)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "checkpoint.npz")
            with self.assertRaises(Interrupted):
                train(self.source, self.target, cfg, monitor=interrupt_at(2), checkpoint_path=path)
            resumed, resumed_report = train(self.source, self.target, cfg, resume_from=path)

        self.assertEqual(resumed_report.start_epoch, 2)
        self.assertEqual(resumed_report.epochs, straight_report.epochs[2:])
        for (name, a), (_, b) in zip(straight.parameters(), resumed.parameters()):
            np.testing.assert_array_equal(a, b, err_msg=name)

    def test_resume_rejects_a_mismatched_checkpoint(self):
        cfg = tiny_config(epochs=2, checkpoint_every=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "checkpoint.npz")
            train(self.source, self.target, cfg, checkpoint_path=path)
            for changed in (cfg.model_copy(update={"seed": 1}), tiny_config(epochs=2, shared_dim=5), tiny_config(epochs=1)):
                with self.subTest(changed=changed), self.assertRaises(ConfigError):
                    train(self.source, self.target, changed, resume_from=path)

    def test_run_ablation_group(self):
        runs = run_ablation(
            "F", self.source, self.target, tiny_config(epochs=2),
            evaluate=lambda params, report: {"total": report.last["total"]},
        )
        self.assertEqual([run.preset for run in runs], ["F1", "F2", "full"])
        self.assertTrue(all(np.isfinite(run.metrics["total"]) for run in runs))


if __name__ == '__main__':
    unittest.main()
