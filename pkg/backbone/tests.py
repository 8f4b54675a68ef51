import math

import numpy as np
import torch
from django.test import SimpleTestCase
from rest_framework import serializers
from torch.autograd import gradcheck

from backbone.model import BackboneConfig, SamplingConfig, TokenLM, ce_loss, sample, teacher_forcing_pair
from commons.exceptions import ShapeError
from commons.seeding import configure_torch
from conditioning.encoder import ConditioningConfig, EmotionConditioner


def tiny_config(**overrides):
    return BackboneConfig(**{"d_model": 16, "n_heads": 2, "n_layers": 2, "vocab_size": 11, "max_len": 12, **overrides})


class ForwardTests(SimpleTestCase):
    def setUp(self):
        configure_torch(1)
        torch.manual_seed(0)
        self.config = tiny_config()
        self.model = TokenLM(self.config).eval()
        self.cond = torch.randn(2, 3, 16)

    def test_shapes(self):
        idx = torch.randint(0, 11, (2, 7))
        logits, hidden = self.model(idx, self.cond)
        self.assertEqual(logits.shape, (2, 7, 11))
        self.assertEqual(hidden.shape, (2, 7, 16))

    def test_causality_at_every_depth(self):
        for n_layers in (1, 2, 3):
            torch.manual_seed(n_layers)
            model = TokenLM(tiny_config(n_layers=n_layers)).eval()
            idx = torch.randint(0, 11, (1, 10))
            base, base_hidden = model(idx, self.cond[:1])
            for t in range(10):
                changed = idx.clone()
                changed[0, t] = (changed[0, t] + 1) % 11
                logits, hidden = model(changed, self.cond[:1])
                self.assertTrue(torch.equal(logits[:, :t], base[:, :t]))
                self.assertTrue(torch.equal(hidden[:, :t], base_hidden[:, :t]))
                self.assertFalse(torch.equal(logits[:, t:], base[:, t:]))

    def test_zeroed_cross_attention_ignores_conditioning(self):
        with torch.no_grad():
            for block in self.model.blocks:
                block.cross.c_proj.weight.zero_()
                block.cross.c_proj.bias.zero_()
        idx = torch.randint(0, 11, (1, 6))
        first, _ = self.model(idx, torch.randn(1, 3, 16))
        second, _ = self.model(idx, torch.randn(1, 3, 16))
        self.assertTrue(torch.equal(first, second))

    def test_conditioning_changes_logits(self):
        idx = torch.randint(0, 11, (1, 6))
        first, _ = self.model(idx, torch.randn(1, 3, 16))
        second, _ = self.model(idx, torch.randn(1, 3, 16))
        self.assertFalse(torch.equal(first, second))

    def test_capture_layer(self):
        config = tiny_config(lara_layer=1)
        torch.manual_seed(0)
        model = TokenLM(config).eval()
        idx = torch.randint(0, 11, (1, 5))
        _, hidden = model(idx, self.cond[:1])
        x = model.tok_emb(idx) + model.pos_emb(torch.arange(5))
        self.assertTrue(torch.allclose(hidden, model.blocks[0](x, self.cond[:1])))
        self.assertEqual(tiny_config().capture_layer, 2)

    def test_input_validation(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            self.model(torch.zeros(1, 13, dtype=torch.long), self.cond[:1])
        self.assertIn("tokens", ctx.exception.detail)
        with self.assertRaises(serializers.ValidationError):
            self.model(torch.full((1, 3), 12), self.cond[:1])
        # The start token is a valid input.
        self.model(torch.full((1, 3), 11), self.cond[:1])

    def test_config_validation(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            BackboneConfig(d_model=10, n_heads=4)
        self.assertIn("n_heads", ctx.exception.detail)
        with self.assertRaises(serializers.ValidationError) as ctx:
            BackboneConfig(n_layers=2, lara_layer=3)
        self.assertIn("lara_layer", ctx.exception.detail)


class TeacherForcingTests(SimpleTestCase):
    def test_shift(self):
        tokens = torch.tensor([[3, 1, 4, 1, 5]])
        idx, targets = teacher_forcing_pair(tokens, bos_token=9)
        self.assertEqual(idx.tolist(), [[9, 3, 1, 4, 1]])
        self.assertEqual(targets.tolist(), [[3, 1, 4, 1, 5]])
        # Position t >= 1 holds c_t and is scored against c_{t+1}.
        for t in range(1, 5):
            self.assertEqual(int(idx[0, t]), int(tokens[0, t - 1]))
            self.assertEqual(int(targets[0, t]), int(tokens[0, t]))


class CrossEntropyTests(SimpleTestCase):
    def test_uniform_logits(self):
        logits = torch.zeros(1, 5, 2)
        targets = torch.tensor([[0, 1, 1, 0, 1]])
        self.assertAlmostEqual(float(ce_loss(logits, targets)), math.log(2), delta=1e-7)

    def test_saturated_logits(self):
        targets = torch.tensor([[2, 0, 1]])
        logits = torch.zeros(1, 3, 3)
        logits[0, torch.arange(3), targets[0]] = 1000.0
        self.assertLess(float(ce_loss(logits, targets)), 1e-6)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(4, 3))
        tokens = rng.integers(0, 3, size=5)
        # Scored pairs are (logits_t, c_{t+1}) for t = 1..4.
        expected = -np.mean(
            [logits[t, tokens[t + 1]] - np.log(np.sum(np.exp(logits[t]))) for t in range(4)]
        )
        got = ce_loss(torch.tensor(logits)[None], torch.tensor(tokens[1:])[None])
        self.assertAlmostEqual(float(got), expected, delta=1e-10)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            ce_loss(torch.zeros(1, 4, 3), torch.zeros(1, 5, dtype=torch.long))

    def test_gradcheck(self):
        torch.manual_seed(3)
        logits = torch.randn(1, 6, 5, dtype=torch.float64, requires_grad=True)
        targets = torch.randint(0, 5, (1, 6))
        self.assertTrue(gradcheck(lambda x: ce_loss(x, targets), (logits,), eps=1e-5, rtol=1e-4))

    def test_parameter_gradients_match_finite_differences(self):
        configure_torch(1)
        torch.manual_seed(4)
        config = BackboneConfig(d_model=8, n_heads=2, n_layers=1, vocab_size=5, max_len=6)
        model = TokenLM(config).double()
        conditioner = EmotionConditioner(8, ConditioningConfig(text_tokens=2, av_hidden=4)).double()
        tokens = torch.randint(0, 5, (1, 6))
        idx, targets = teacher_forcing_pair(tokens, config.bos_token)
        emotions = torch.tensor([[0.5, -0.25]], dtype=torch.float64)

        def loss():
            logits, _ = model(idx, conditioner(emotions))
            return ce_loss(logits, targets)

        loss().backward()
        checked = [
            (model.head.weight, (1, 2)),
            (model.blocks[0].attn.c_attn.weight, (3, 4)),
            (model.blocks[0].cross.q_proj.weight, (0, 5)),
            (model.tok_emb.weight, (int(idx[0, 2]), 1)),
            (conditioner.av_encoder.fc_in.weight, (2, 1)),
        ]
        for param, index in checked:
            analytic = float(param.grad[index])
            with torch.no_grad():
                original = float(param[index])
                param[index] = original + 1e-5
                plus = float(loss())
                param[index] = original - 1e-5
                minus = float(loss())
                param[index] = original
            numeric = (plus - minus) / 2e-5
            self.assertLess(abs(numeric - analytic), 1e-4 * max(abs(analytic), 1e-6) + 1e-9)

    def test_conditioning_receives_gradient(self):
        torch.manual_seed(5)
        model = TokenLM(tiny_config())
        conditioner = EmotionConditioner(16, ConditioningConfig())
        tokens = torch.randint(0, 11, (2, 8))
        idx, targets = teacher_forcing_pair(tokens, 11)
        logits, _ = model(idx, conditioner(torch.tensor([[0.5, 0.5], [-0.5, 0.1]])))
        ce_loss(logits, targets).backward()
        self.assertGreater(float(conditioner.av_encoder.fc_in.weight.grad.abs().sum()), 0.0)


class SampleTests(SimpleTestCase):
    def setUp(self):
        configure_torch(1)
        torch.manual_seed(0)
        self.model = TokenLM(tiny_config())
        self.cond = torch.randn(3, 2, 16)

    def test_seeded_determinism(self):
        first = sample(self.model, self.cond, 10, SamplingConfig(top_k=5, seed=7))
        second = sample(self.model, self.cond, 10, SamplingConfig(top_k=5, seed=7))
        np.testing.assert_array_equal(first, second)

    def test_greedy_ignores_seed(self):
        first = sample(self.model, self.cond, 10, SamplingConfig(top_k=1, seed=1))
        second = sample(self.model, self.cond, 10, SamplingConfig(top_k=1, seed=2))
        np.testing.assert_array_equal(first, second)

    def test_contract(self):
        out = sample(self.model, self.cond, 12, SamplingConfig(top_k=11, temperature=0.7))
        self.assertEqual(out.shape, (3, 12))
        self.assertTrue(np.all((out >= 0) & (out < 11)))

    def test_validation(self):
        with self.assertRaises(serializers.ValidationError):
            sample(self.model, self.cond, 13, SamplingConfig())
        with self.assertRaises(serializers.ValidationError):
            sample(self.model, self.cond, 4, SamplingConfig(top_k=12))
        with self.assertRaises(serializers.ValidationError):
            SamplingConfig(temperature=0.0)


class OverfitTests(SimpleTestCase):
    def test_small_batch_is_memorised(self):
        configure_torch(1)
        torch.manual_seed(0)
        config = BackboneConfig(d_model=32, n_heads=4, n_layers=2, vocab_size=16, max_len=16)
        model = TokenLM(config)
        conditioner = EmotionConditioner(32, ConditioningConfig(text_tokens=2, av_hidden=16))
        tokens = torch.randint(0, 16, (8, 16))
        emotions = torch.rand(8, 2) * 2 - 1
        idx, targets = teacher_forcing_pair(tokens, config.bos_token)
        optimizer = torch.optim.AdamW(list(model.parameters()) + list(conditioner.parameters()), lr=3e-3)
        for _ in range(500):
            logits, _ = model(idx, conditioner(emotions))
            loss = ce_loss(logits, targets)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        self.assertLess(float(loss), 0.1)
