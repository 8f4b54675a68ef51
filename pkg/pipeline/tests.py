import json
from contextlib import redirect_stdout
from io import StringIO

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from rest_framework import serializers

from backbone.model import SamplingConfig
from commons.checkpoint import read_container
from commons.logs import TrainingLog
from commons.testing import WorkspaceMixin, make_corpus, slow
from corpus.manifest import MANIFEST_NAME, META_NAME, read_manifest
from metrics.evaluation import evaluate_system, load_report
from metrics.schemas import COMPARISON_COLUMNS
from pipeline.base import flatten_detail
from pipeline.config import RunConfig, load_config, parse_config
from pipeline.generation import GenerationJob, generate_set, grid_emotions, grid_values
from predictor.training import PredictorConfig, train_predictor
from trainer.training import TrainConfig, train_generator

SMALL_RUN = """
[corpus]
vocab_size = 16
clip_len = 64
n_clips = 24

[backbone]
d_model = 16
n_heads = 2
n_layers = 1
max_len = 64

[conditioning]
text_tokens = 2
av_hidden = 8

[proxy]
n_queries = 2
n_layers = 1
n_heads = 2
d_model = 16

[train]
steps = 4
batch_size = 4
eval_every = 2
lr = 0.001

[predictor]
batch_size = 8
max_steps = 10
eval_every = 5
val_clips = 4

[generation]
grid = 2
per_point = 2
length = 64

[sampling]
top_k = 8
"""


class ConfigTests(SimpleTestCase):
    def test_defaults_without_a_file(self):
        self.assertEqual(load_config(), RunConfig())
        self.assertEqual(RunConfig().train.alpha, 100.0)

    def test_sections_are_typed(self):
        config = parse_config(SMALL_RUN)
        self.assertEqual(config.corpus.clip_len, 64)
        self.assertEqual(config.train.lr, 0.001)
        self.assertEqual(config.generation.n_clips, 8)
        self.assertEqual(config.window.window_tokens, 32)

    def test_null_values(self):
        config = parse_config("[train]\nlara_layer = none\n[proxy]\nn_queries =\n")
        self.assertIsNone(config.train.lara_layer)
        self.assertIsNone(config.proxy.n_queries)

    def test_unknown_section_and_key(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            parse_config("[bogus]\nx = 1\n")
        self.assertIn("bogus", ctx.exception.detail)
        with self.assertRaises(serializers.ValidationError) as ctx:
            parse_config("[train]\nlearning_rate = 0.1\n")
        self.assertEqual(flatten_detail(ctx.exception.detail), ["train.learning_rate: Unknown configuration key."])

    def test_invalid_value_names_section_and_key(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            parse_config("[corpus]\nvocab_size = 15\n")
        self.assertTrue(flatten_detail(ctx.exception.detail)[0].startswith("corpus.vocab_size: "))

    def test_seed_reaches_every_seeded_section(self):
        config = parse_config(SMALL_RUN).with_seed(9)
        self.assertEqual(
            (config.corpus.seed, config.train.seed, config.sampling.seed, config.predictor.seed),
            (9, 9, 9, 9),
        )


class GridTests(SimpleTestCase):
    def test_values(self):
        np.testing.assert_array_equal(grid_values(5), [1.0, 3.0, 5.0, 7.0, 9.0])
        np.testing.assert_array_equal(grid_values(1), [5.0])

    def test_row_major_order(self):
        points = [(p.valence, p.arousal) for p in grid_emotions(2)]
        self.assertEqual(points, [(1.0, 1.0), (1.0, 9.0), (9.0, 1.0), (9.0, 9.0)])

    def test_job_validation(self):
        self.assertEqual(GenerationJob(grid=3, per_point=4).n_clips, 36)
        with self.assertRaises(serializers.ValidationError):
            GenerationJob(grid=0)


class CommandTests(WorkspaceMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.config = self.workdir / "run.ini"
        self.config.write_text(SMALL_RUN)
        self.corpus = self.workdir / "corpus"

    def call(self, name, *args):
        out = StringIO()
        call_command(name, "--config", str(self.config), *args, stdout=out)
        return out.getvalue()

    def make_corpus(self):
        self.call("make_corpus", str(self.corpus))

    def train_lm(self, *extra):
        out = self.workdir / "lm" / "model.ckpt"
        self.call("train", "lm", str(self.corpus), "--out", str(out), *extra)
        return out

    def test_make_corpus(self):
        self.make_corpus()
        manifest = read_manifest(self.corpus)
        self.assertEqual(len(manifest), 24)
        self.assertEqual(manifest.clip_len, 64)

        again = self.workdir / "again"
        self.call("make_corpus", str(again))
        self.assertEqual((self.corpus / MANIFEST_NAME).read_text(), (again / MANIFEST_NAME).read_text())

    def test_global_seed(self):
        out = StringIO()
        call_command("make_corpus", str(self.corpus), "--config", str(self.config), "--seed", "5", stdout=out)
        self.assertEqual(json.loads((self.corpus / META_NAME).read_text())["seed"], 5)

    def test_missing_config_names_the_path(self):
        missing = self.workdir / "nope.ini"
        with self.assertRaises(CommandError) as ctx:
            call_command("make_corpus", str(self.corpus), "--config", str(missing))
        self.assertIn(str(missing), str(ctx.exception))
        self.assertEqual(ctx.exception.returncode, 1)

    def test_bad_config_key(self):
        self.config.write_text("[train]\nalfa = 1\n")
        with self.assertRaisesRegex(CommandError, "train.alfa"):
            self.make_corpus()

    def test_train_lm_unweighted(self):
        self.make_corpus()
        log_path = self.workdir / "lm.jsonl"
        checkpoint = self.train_lm("--alpha", "0", "--log", str(log_path))
        log = TrainingLog.read(log_path)
        self.assertEqual(set(log.values("lara_weight")), {0.0})
        header, _ = read_container(checkpoint)
        self.assertEqual(header["train"]["alpha"], 0.0)
        self.assertEqual(header["step"], 4)

    def test_train_lm_default_weight(self):
        self.make_corpus()
        log_path = self.workdir / "lm.jsonl"
        self.train_lm("--log", str(log_path))
        self.assertEqual(set(TrainingLog.read(log_path).values("lara_weight")), {100.0})

    def test_resume_from_the_command_line(self):
        self.make_corpus()
        first = self.train_lm("--steps", "2")
        resumed = self.workdir / "lm" / "resumed.ckpt"
        self.call("train", "lm", str(self.corpus), "--out", str(resumed), "--resume", str(first), "--steps", "2")
        self.assertEqual(read_container(resumed)[0]["step"], 4)
        for flag in (["--alpha", "1"], ["--save-every", "1"]):
            with self.assertRaises(CommandError) as ctx:
                self.call("train", "lm", str(self.corpus), "--out", str(resumed), "--resume", str(first), *flag)
            self.assertEqual(ctx.exception.returncode, 2)

    def test_global_flags_after_the_subcommand(self):
        self.make_corpus()
        out = self.workdir / "lm" / "model.ckpt"
        call_command(
            "train", "lm", str(self.corpus), "--out", str(out), "--config", str(self.config), "--seed", "3",
            stdout=StringIO(),
        )
        header, _ = read_container(out)
        self.assertEqual(header["train"]["seed"], 3)
        self.assertEqual(header["configs"]["backbone"]["d_model"], 16)
        self.assertEqual(read_container(out.parent / "last.ckpt")[0]["step"], 4)

        for target in ("lm", "predictor"):
            help_text = StringIO()
            with redirect_stdout(help_text), self.assertRaises(SystemExit):
                call_command("train", target, "--help")
            for flag in ("--config", "--seed", "--threads"):
                self.assertIn(flag, help_text.getvalue(), target)

    def test_generate_evaluate_and_compare(self):
        self.make_corpus()
        checkpoint = self.train_lm()
        gen_dir = self.workdir / "gen"
        self.call("generate", str(checkpoint), str(gen_dir))
        generated = read_manifest(gen_dir)
        self.assertEqual(len(generated), 8)
        self.assertEqual(generated.meta["checkpoint_step"], 4)
        self.assertEqual(generated.meta["alpha"], 100.0)
        self.assertEqual(generated.meta["extractor_seed"], 42)
        self.assertEqual(
            sorted({(r.emotion.valence, r.emotion.arousal) for r in generated}),
            [(1.0, 1.0), (1.0, 9.0), (9.0, 1.0), (9.0, 9.0)],
        )
        again = self.workdir / "gen-again"
        self.call("generate", str(checkpoint), str(again))
        self.assertEqual((gen_dir / MANIFEST_NAME).read_text(), (again / MANIFEST_NAME).read_text())
        for record in generated:
            self.assertEqual(record.token_path.read_bytes(), (again / record.token_path.relative_to(gen_dir)).read_bytes())

        predictor = self.workdir / "predictor.ckpt"
        self.call("train", "predictor", str(self.corpus), "--out", str(predictor))
        report_path = self.workdir / "reports" / "reference.json"
        self.call(
            "evaluate", str(self.corpus), str(self.corpus),
            "--predictor", str(predictor), "--report", str(report_path), "--name", "reference",
        )
        report = load_report(report_path)
        self.assertEqual(report.system_name, "reference")
        self.assertEqual(report.n_clips, 24)
        self.assertAlmostEqual(report.fd, 0.0, delta=1e-8)
        scatter = pd.read_csv(report_path.with_suffix(".scatter.csv"))
        self.assertEqual(len(scatter), 24)

        planted_path = self.workdir / "reports" / "planted.json"
        self.call("evaluate", str(self.corpus), str(self.corpus), "--planted", "--report", str(planted_path))
        self.assertEqual(load_report(planted_path).system_name, "corpus")

        csv_path = self.workdir / "table.csv"
        pdf_path = self.workdir / "table.pdf"
        output = self.call("compare", str(report_path), str(planted_path), "--csv", str(csv_path), "--pdf", str(pdf_path))
        self.assertIn("reference", output)
        table = pd.read_csv(csv_path)
        self.assertEqual(list(table.columns), COMPARISON_COLUMNS)
        self.assertEqual(list(table["system_name"]), ["reference", "corpus"])
        self.assertTrue(pdf_path.read_bytes().startswith(b"%PDF"))

    def test_evaluate_usage_errors(self):
        self.make_corpus()
        report = str(self.workdir / "r.json")
        with self.assertRaises(CommandError):
            self.call("evaluate", str(self.corpus), str(self.corpus), "--report", report)
        with self.assertRaises(CommandError) as ctx:
            self.call("evaluate", str(self.corpus), str(self.corpus), "--planted", "--report", report, "--eps", "-1")
        self.assertEqual(ctx.exception.returncode, 2)

    def test_help_exits_cleanly(self):
        for name in ("make_corpus", "train", "generate", "evaluate", "compare"):
            with redirect_stdout(StringIO()), self.assertRaises(SystemExit) as ctx:
                call_command(name, "--help")
            self.assertEqual(ctx.exception.code, 0, name)

    def test_pipeline_failures_exit_with_one(self):
        self.make_corpus()
        with self.assertRaises(CommandError) as ctx:
            self.call("generate", str(self.workdir / "missing.ckpt"), str(self.workdir / "gen"))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn("Cannot read checkpoint", str(ctx.exception))


class ControllabilityOrderingTests(WorkspaceMixin, SimpleTestCase):
    def arousal_correlation(self, manifest, predictor, cfg, name):
        trainer, _ = train_generator(manifest, cfg)
        gen_dir = self.workdir / name
        generate_set(trainer.generator.eval(), GenerationJob(), SamplingConfig(seed=cfg.seed), gen_dir)
        report, _ = evaluate_system(gen_dir, predictor, manifest, system_name=name)
        return report.r_a

    @slow
    def test_alignment_beats_plain_cross_entropy_on_arousal(self):
        wins = 0
        for seed in range(3):
            manifest = make_corpus(self.workdir / f"corpus-{seed}", vocab_size=256, clip_len=256, n_clips=2400, seed=seed)
            predictor, _ = train_predictor(manifest, PredictorConfig(seed=seed))
            aligned = self.arousal_correlation(manifest, predictor, TrainConfig(seed=seed), f"lara-{seed}")
            plain = self.arousal_correlation(
                manifest, predictor, TrainConfig(seed=seed, alpha=0.0, proxy=False), f"ce-{seed}"
            )
            self.assertGreaterEqual(aligned, 0.5, seed)
            wins += aligned >= plain
        self.assertGreaterEqual(wins, 2)
