import io
import json
import math
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest.mock import patch

import pandas as pd

from abrsi import default_settings
from abrsi.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, main
from abrsi.errors import TrainingDivergedError
from abrsi.extensions import init_celery

from fixtures import quick_experiment


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        settings = default_settings()
        settings.update({"OUTPUT_ROOT": str(self.root / "runs"), "LOG_DIR": str(self.root / "logs")})
        patchers = [
            patch('abrsi.cli.load_settings', return_value=settings),
            patch('abrsi.cli.configure_logging'),
            patch('abrsi.cli.configure_run_journal'),
        ]
        for patcher in patchers:
            patcher.start()
            self.addCleanup(patcher.stop)
        self.config = self.root / "quick.json"
        self.config.write_text(json.dumps(quick_experiment()), encoding="utf-8")

    def tearDown(self):
        init_celery({})
        self.tmp.cleanup()

    def run_cli(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = main(list(argv))
        return code, out.getvalue(), err.getvalue()

    def test_parser_requires_a_command(self):
        with redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                build_parser().parse_args([])

    def test_repeated_seeds(self):
        args = build_parser().parse_args(["train", "--config", "x.json", "--seed", "1", "--seed", "2"])
        self.assertEqual(args.seeds, [1, 2])
        self.assertIsNone(args.binary)

    def test_missing_config(self):
        code, _, err = self.run_cli("train", "--config", str(self.root / "absent.json"))
        self.assertEqual(code, EXIT_CONFIG)
        self.assertIn("erreur", err)

    def test_train_writes_run_and_aggregate(self):
        code, out, _ = self.run_cli("train", "--config", str(self.config), "--seed", "0", "--seed", "1")
        self.assertEqual(code, EXIT_OK)
        preset_dir = self.root / "runs" / "quick" / "full"
        for seed in (0, 1):
            for name in ("epochs.csv", "summary.json", "timing.json"):
                self.assertTrue((preset_dir / f"seed_{seed}" / name).exists())
        aggregate = pd.read_csv(preset_dir / "aggregate.csv")
        accuracy = aggregate.set_index("metric").loc["accuracy"]
        self.assertEqual(accuracy["n"], 2)
        self.assertIn("graine 1", out)

        code, out, _ = self.run_cli("report", "--root", str(preset_dir))
        self.assertEqual(code, EXIT_OK)
        self.assertIn("2 exécution(s)", out)

    def test_output_dir_and_epochs_overrides(self):
        code, _, _ = self.run_cli("train", "--config", str(self.config), "--output-dir", str(self.root / "elsewhere"), "--epochs", "1")
        self.assertEqual(code, EXIT_OK)
        epochs = pd.read_csv(self.root / "elsewhere" / "quick" / "full" / "seed_0" / "epochs.csv")
        self.assertEqual(len(epochs), 1)

    def test_resume_needs_a_single_seed(self):
        code, _, _ = self.run_cli("train", "--config", str(self.config), "--seed", "0", "--seed", "1", "--resume", "ckpt.npz")
        self.assertEqual(code, EXIT_CONFIG)

    def test_unknown_preset(self):
        code, _, _ = self.run_cli("train", "--config", str(self.config), "--ablation", "Z9")
        self.assertEqual(code, EXIT_CONFIG)

    def test_diverged_training_is_a_runtime_error(self):
        with patch('abrsi.services.train', side_effect=TrainingDivergedError(0, {"L_SUP": math.nan})):
            code, _, err = self.run_cli("train", "--config", str(self.config))
        self.assertEqual(code, EXIT_RUNTIME)
        self.assertIn("époque 0", err)

    def test_ablate_writes_group_table(self):
        code, _, _ = self.run_cli("ablate", "--config", str(self.config), "--group", "F", "--epochs", "1")
        self.assertEqual(code, EXIT_OK)
        table = pd.read_csv(self.root / "runs" / "quick" / "ablation_F.csv")
        self.assertEqual(table["preset"].tolist(), ["F1", "F2", "full"])
        self.assertEqual(table["n_seeds"].tolist(), [1, 1, 1])

    def test_sweep(self):
        code, _, _ = self.run_cli("sweep", "--config", str(self.config), "--param", "tau", "--values", "0.01", "0.1", "--epochs", "1")
        self.assertEqual(code, EXIT_OK)
        table = pd.read_csv(self.root / "runs" / "quick" / "sweep_tau.csv")
        self.assertEqual(table["value"].tolist(), [0.01, 0.1])
        self.assertTrue((self.root / "runs" / "quick" / "full_tau_0.01" / "seed_0" / "summary.json").exists())

    def test_sweep_passes_typed_values(self):
        code, _, _ = self.run_cli("sweep", "--config", str(self.config), "--param", "top_n", "--values", "2", "--epochs", "1")
        self.assertEqual(code, EXIT_OK)
        summary = json.loads((self.root / "runs" / "quick" / "full_top_n_2" / "seed_0" / "summary.json").read_text(encoding="utf-8"))
        self.assertIs(type(summary["train_config"]["top_n"]), int)
        self.assertEqual(summary["train_config"]["top_n"], 2)
        code, _, _ = self.run_cli("sweep", "--config", str(self.config), "--param", "top_n", "--values", "2.5")
        self.assertEqual(code, EXIT_CONFIG)

    def test_sweep_unknown_parameter(self):
        code, _, _ = self.run_cli("sweep", "--config", str(self.config), "--param", "learning_rate", "--values", "1")
        self.assertEqual(code, EXIT_CONFIG)

    def test_report_without_runs(self):
        code, _, _ = self.run_cli("report", "--root", str(self.root / "empty"))
        self.assertEqual(code, EXIT_CONFIG)


if __name__ == '__main__':
    unittest.main()
