import numpy as np
import torch
from django.test import SimpleTestCase
from rest_framework import serializers

from affect.emotion import EmotionPoint, normalize_av
from backbone.model import BackboneConfig, SamplingConfig
from commons.checkpoint import read_container
from commons.exceptions import CheckpointError, LaraGenError, NumericError
from commons.testing import WorkspaceMixin, make_corpus, slow
from conditioning.encoder import ConditioningConfig
from corpus.estimator import estimate_emotion
from proxy.network import ProxyConfig
from trainer.generator import load_generator, resolve_proxy_config
from trainer.training import (
    LAST_CHECKPOINT,
    GeneratorTrainer,
    TrainConfig,
    resume,
    split_indices,
    train_generator,
)

BACKBONE = BackboneConfig(d_model=16, n_heads=2, n_layers=2, vocab_size=16, max_len=64)
CONDITIONING = ConditioningConfig(text_tokens=2, av_hidden=8)
PROXY = ProxyConfig(n_queries=2, n_layers=1, n_heads=2)
BASE = {"steps": 6, "batch_size": 4, "lr": 1e-3, "eval_every": 2, "val_fraction": 0.25}


class TrainerTestMixin(WorkspaceMixin):
    def setUp(self):
        super().setUp()
        self.manifest = make_corpus(self.workdir / "corpus", clip_len=64, n_clips=24)

    def train(self, out_dir=None, log_path=None, **overrides):
        cfg = TrainConfig(**{**BASE, **overrides})
        return train_generator(
            self.manifest,
            cfg,
            BACKBONE,
            CONDITIONING,
            PROXY,
            log_path=log_path,
            out_dir=out_dir,
        )


class SplitTests(SimpleTestCase):
    def test_disjoint_and_seeded(self):
        train, val = split_indices(40, 0.1, seed=3)
        self.assertEqual(len(val), 4)
        self.assertEqual(sorted(np.concatenate([train, val])), list(range(40)))
        again = split_indices(40, 0.1, seed=3)
        np.testing.assert_array_equal(train, again[0])
        self.assertFalse(np.array_equal(val, split_indices(40, 0.1, seed=4)[1]))

    def test_nothing_left_to_train_on(self):
        with self.assertRaises(serializers.ValidationError):
            split_indices(1, 0.9, seed=0)

    def test_fraction_that_holds_out_nothing(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            split_indices(4, 0.1, seed=0)
        self.assertIn("val_fraction", ctx.exception.detail)
        train, val = split_indices(4, 0.0, seed=0)
        self.assertEqual((len(train), len(val)), (4, 0))


class ConfigTests(SimpleTestCase):
    def test_alignment_needs_the_proxy(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            TrainConfig(alpha=1.0, proxy=False)
        self.assertIn("proxy", ctx.exception.detail)
        TrainConfig(alpha=0.0, proxy=False)

    def test_negative_alpha(self):
        with self.assertRaises(serializers.ValidationError):
            TrainConfig(alpha=-0.5)

    def test_proxy_queries_follow_the_windows(self):
        resolved = resolve_proxy_config(ProxyConfig(n_queries=None), BACKBONE, 8, 32)
        self.assertEqual((resolved.n_queries, resolved.d_model, resolved.d_feat), (8, 16, 32))
        with self.assertRaises(serializers.ValidationError) as ctx:
            resolve_proxy_config(ProxyConfig(n_queries=8), BACKBONE, 2, 32)
        self.assertIn("n_queries", ctx.exception.detail)


class GeneratorTrainingTests(TrainerTestMixin, SimpleTestCase):
    def test_log_records(self):
        trainer, log = self.train()
        steps = [r for r in log.records if "ce" in r]
        self.assertEqual([r["step"] for r in steps], [1, 2, 3, 4, 5, 6])
        self.assertEqual([r["step"] for r in log.records if "val_ce" in r], [2, 4, 6])
        for record in steps:
            self.assertAlmostEqual(record["total"], record["ce"] + 100.0 * record["lara"], delta=1e-3)
            self.assertEqual(record["lara_weight"], 100.0)
        self.assertEqual(trainer.step, 6)

    def test_unweighted_run_logs_ce_as_total(self):
        _, log = self.train(alpha=0.0)
        for record in (r for r in log.records if "ce" in r):
            self.assertEqual(record["lara_weight"], 0.0)
            self.assertEqual(record["total"], record["ce"])
            self.assertIsNotNone(record["lara"])

    def test_unweighted_alignment_matches_plain_cross_entropy(self):
        with_proxy, log_a = self.train(alpha=0.0)
        without_proxy, log_b = self.train(alpha=0.0, proxy=False)
        self.assertEqual(log_a.values("ce"), log_b.values("ce"))
        self.assertEqual(log_a.values("val_ce"), log_b.values("val_ce"))
        self.assertEqual(log_b.values("lara"), [])
        self.assertIsNone(without_proxy.generator.proxy)
        shared = dict(without_proxy.generator.named_parameters())
        for name, param in with_proxy.generator.named_parameters():
            if name.startswith("proxy."):
                self.assertIsNone(param.grad, name)
            else:
                self.assertTrue(torch.equal(param, shared[name]), name)

    def test_alignment_reaches_the_backbone(self):
        trainer, _ = self.train(steps=1)
        param = trainer.generator.backbone.blocks[0].attn.c_attn.weight
        ce, lara = trainer._losses(torch.from_numpy(trainer.train_idx[:4]))
        plain = torch.autograd.grad(ce, param, retain_graph=True)[0]
        aligned = torch.autograd.grad(ce + 100.0 * lara, param)[0]
        self.assertFalse(torch.allclose(plain, aligned))

    def test_parameter_inventory(self):
        trainer, _ = self.train(steps=1)
        prefixes = {name.split(".")[0] for name in trainer.param_names}
        self.assertEqual(prefixes, {"conditioner", "backbone", "proxy"})
        optimized = sum(p.numel() for group in trainer.optimizer.param_groups for p in group["params"])
        self.assertEqual(optimized, sum(p.numel() for p in trainer.generator.parameters()))
        self.assertFalse(hasattr(trainer.extractor, "parameters"))

        trainer.generator.register_parameter("stray", torch.nn.Parameter(torch.zeros(1)))
        with self.assertRaises(LaraGenError):
            trainer._check_inventory()

    def test_same_seed_same_checkpoint(self):
        first, _ = self.train()
        second, _ = self.train()
        a = first.save(self.workdir / "a.ckpt")
        b = second.save(self.workdir / "b.ckpt")
        self.assertEqual(a.read_bytes(), b.read_bytes())

    def test_reloaded_generator_matches(self):
        trainer, _ = self.train()
        path = trainer.save(self.workdir / "g.ckpt")
        loaded, header = load_generator(path)
        self.assertEqual(header["step"], 6)
        trainer.generator.eval()
        tokens = torch.from_numpy(self.manifest.load_all()[:3])
        emotions = trainer.emotions[:3]
        with torch.no_grad():
            expected, _, _ = trainer.generator(tokens, emotions)
            got, _, _ = loaded(tokens, emotions)
        self.assertTrue(torch.equal(expected, got))

    def test_resume_matches_uninterrupted_run(self):
        straight, straight_log = self.train(steps=6)
        straight_path = straight.save(self.workdir / "straight.ckpt")

        half, _ = self.train(steps=3)
        half_path = half.save(self.workdir / "half.ckpt")
        resumed, resumed_log = resume(half_path, self.manifest, 3)
        resumed_path = resumed.save(self.workdir / "resumed.ckpt")

        header_a, tensors_a = read_container(straight_path)
        header_b, tensors_b = read_container(resumed_path)
        self.assertEqual(sorted(tensors_a), sorted(tensors_b))
        for name in tensors_a:
            self.assertEqual(float(np.max(np.abs(tensors_a[name] - tensors_b[name]))), 0.0, name)
        self.assertEqual(header_b["step"], 6)
        self.assertEqual(header_a["log_digest"], header_b["log_digest"])
        self.assertEqual(header_a["batch_rng"], header_b["batch_rng"])
        self.assertEqual(straight_log.digest(), resumed_log.digest())

    def test_resume_for_zero_steps(self):
        trainer, _ = self.train(steps=2)
        path = trainer.save(self.workdir / "g.ckpt")
        resumed, _ = resume(path, self.manifest, 0)
        self.assertEqual(resumed.step, 2)
        for (name, a), (_, b) in zip(trainer.generator.named_parameters(), resumed.generator.named_parameters()):
            self.assertTrue(torch.equal(a, b), name)

    def test_resume_on_another_corpus(self):
        trainer, _ = self.train(steps=1)
        path = trainer.save(self.workdir / "g.ckpt")
        other = make_corpus(self.workdir / "other", vocab_size=32, clip_len=64, n_clips=24)
        with self.assertRaisesRegex(CheckpointError, "vocab_size"):
            GeneratorTrainer.from_checkpoint(path, other)

    def test_truncated_checkpoint_names_the_tensor(self):
        trainer, _ = self.train(steps=1)
        path = trainer.save(self.workdir / "g.ckpt")
        last = read_container(path)[0]["tensors"][-1]["name"]
        path.write_bytes(path.read_bytes()[:-8])
        with self.assertRaises(CheckpointError) as ctx:
            load_generator(path)
        self.assertIn(f"'{last}'", str(ctx.exception))
        self.assertIn("truncated", str(ctx.exception))

    def test_non_finite_loss_names_component_and_step(self):
        trainer, _ = self.train(steps=1)
        trainer.targets[:] = float("nan")
        with self.assertRaisesRegex(NumericError, r"Step 2: .*'lara'"):
            trainer.train_step()

    def test_periodic_checkpoint(self):
        out_dir = self.workdir / "run"
        self.train(steps=5, save_every=2, out_dir=out_dir)
        header, _ = read_container(out_dir / LAST_CHECKPOINT)
        self.assertEqual(header["step"], 4)

    def test_default_run_keeps_a_last_checkpoint(self):
        out_dir = self.workdir / "run"
        straight, _ = self.train(steps=5, out_dir=out_dir)
        last = out_dir / LAST_CHECKPOINT
        self.assertEqual(read_container(last)[0]["step"], 4)
        resumed, _ = resume(last, self.manifest, 1)
        for (name, a), (_, b) in zip(straight.generator.named_parameters(), resumed.generator.named_parameters()):
            self.assertTrue(torch.equal(a, b), name)

        disabled = self.workdir / "disabled"
        self.train(steps=4, save_every=0, out_dir=disabled)
        self.assertFalse((disabled / LAST_CHECKPOINT).exists())

    def test_proxy_rows_stay_distinct_after_training(self):
        trainer, _ = self.train()
        generator = trainer.generator.eval()
        tokens = torch.from_numpy(self.manifest.load_all()[:4])
        with torch.no_grad():
            _, hidden = generator.ce(tokens, trainer.emotions[:4])
            rows = generator.proxy(hidden)
        self.assertGreater(float(trainer.targets[:4].std(dim=1).max()), 0.0)
        for clip_rows in rows:
            self.assertGreater(float(torch.pdist(clip_rows).min()), 1e-6)

    def test_clips_longer_than_the_context(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            train_generator(
                self.manifest,
                TrainConfig(**BASE),
                BackboneConfig(d_model=16, n_heads=2, n_layers=1, vocab_size=16, max_len=32),
                CONDITIONING,
                PROXY,
            )
        self.assertIn("max_len", ctx.exception.detail)

    def test_log_file_is_written(self):
        path = self.workdir / "train.jsonl"
        _, log = self.train(log_path=path)
        self.assertEqual(len(path.read_text().splitlines()), len(log.records))


class GeneratorAcceptanceTests(WorkspaceMixin, SimpleTestCase):
    @slow
    def test_alignment_run_learns_and_follows_the_conditioning(self):
        manifest = make_corpus(self.workdir / "corpus", vocab_size=256, clip_len=256, n_clips=2000)
        trainer, log = train_generator(manifest, TrainConfig())
        ce = log.values("ce")
        self.assertLess(np.mean(ce[-100:]), np.mean(ce[:100]))
        lara = log.values("lara")
        self.assertEqual(len(lara), len(ce))
        self.assertTrue(np.all(np.isfinite(lara)))
        self.assertLess(np.mean(lara[-100:]), np.mean(lara[:100]))

        generator = trainer.generator.eval()
        sampling = SamplingConfig(seed=0)
        low = normalize_av(EmotionPoint(1.0, 1.0))
        high = normalize_av(EmotionPoint(9.0, 9.0))
        low_clips = generator.generate([low] * 8, 256, sampling)
        high_clips = generator.generate([high] * 8, 256, sampling)
        low_v = np.mean([estimate_emotion(clip, 256).v_n for clip in low_clips])
        high_v = np.mean([estimate_emotion(clip, 256).v_n for clip in high_clips])
        low_a = np.mean([estimate_emotion(clip, 256).a_n for clip in low_clips])
        high_a = np.mean([estimate_emotion(clip, 256).a_n for clip in high_clips])
        self.assertGreater(high_v - low_v, 0.3)
        self.assertGreater(high_a - low_a, 0.3)


class LongResumeTests(TrainerTestMixin, SimpleTestCase):
    @slow
    def test_resumed_run_matches_after_two_thousand_steps(self):
        straight, straight_log = self.train(steps=2000, eval_every=100)
        half, _ = self.train(steps=1000, eval_every=100)
        resumed, resumed_log = resume(half.save(self.workdir / "half.ckpt"), self.manifest, 1000)
        for (name, a), (_, b) in zip(straight.generator.named_parameters(), resumed.generator.named_parameters()):
            self.assertTrue(torch.equal(a, b), name)
        self.assertEqual(straight_log.digest(), resumed_log.digest())
