import math

import torch
from django.test import SimpleTestCase
from rest_framework import serializers
from torch.autograd import gradcheck

from backbone.model import ce_loss
from commons.exceptions import NumericError, ShapeError
from proxy.network import AlignmentWeights, ProxyConfig, ProxyNetwork, lara_loss, predict_features, total_loss


def tiny_proxy(**overrides):
    config = ProxyConfig(**{"n_queries": 2, "n_layers": 1, "n_heads": 2, "d_model": 8, "d_feat": 4, **overrides})
    return ProxyNetwork(config)


class ProxyNetworkTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)

    def test_output_shape(self):
        proxy = tiny_proxy()
        self.assertEqual(proxy(torch.randn(3, 6, 8)).shape, (3, 2, 4))
        self.assertEqual(predict_features(torch.randn(6, 8), proxy).shape, (2, 4))

    def test_reads_every_position(self):
        proxy = tiny_proxy().eval()
        hidden = torch.randn(1, 6, 8)
        base = proxy(hidden)
        changed = hidden.clone()
        changed[0, 5] += 1.0
        self.assertFalse(torch.equal(base, proxy(changed)))

    def test_identical_queries_give_identical_rows(self):
        proxy = tiny_proxy(n_queries=3).eval()
        with torch.no_grad():
            proxy.queries.copy_(proxy.queries[0].clone().expand(3, -1))
            rows = predict_features(torch.randn(6, 8), proxy)
        torch.testing.assert_close(rows[1], rows[0], rtol=0, atol=1e-6)
        torch.testing.assert_close(rows[2], rows[0], rtol=0, atol=1e-6)

    def test_distinct_queries_give_distinct_rows(self):
        proxy = tiny_proxy(n_queries=3).eval()
        with torch.no_grad():
            rows = predict_features(torch.randn(6, 8), proxy)
        self.assertGreater(float(torch.pdist(rows).min()), 1e-6)

    def test_width_mismatch(self):
        with self.assertRaises(ShapeError):
            tiny_proxy()(torch.randn(1, 6, 7))

    def test_config_validation(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            ProxyConfig(d_model=10, n_heads=4)
        self.assertIn("n_heads", ctx.exception.detail)

    def test_gradcheck(self):
        proxy = tiny_proxy().double().eval()
        hidden = torch.randn(1, 6, 8, dtype=torch.float64, requires_grad=True)
        target = torch.randn(1, 2, 4, dtype=torch.float64)
        self.assertTrue(
            gradcheck(lambda h: lara_loss(proxy(h), target), (hidden,), eps=1e-5, atol=1e-8, rtol=1e-4)
        )

    def test_parameter_gradients_match_finite_differences(self):
        proxy = tiny_proxy().double()
        hidden = torch.randn(1, 6, 8, dtype=torch.float64)
        target = torch.randn(1, 2, 4, dtype=torch.float64)
        lara_loss(proxy(hidden), target).backward()
        for name, param in proxy.named_parameters():
            flat, grad = param.data.view(-1), param.grad.view(-1)
            index = int(torch.argmax(grad.abs()))
            original = float(flat[index])
            flat[index] = original + 1e-5
            plus = float(lara_loss(proxy(hidden), target))
            flat[index] = original - 1e-5
            minus = float(lara_loss(proxy(hidden), target))
            flat[index] = original
            numeric = (plus - minus) / 2e-5
            analytic = float(grad[index])
            self.assertLess(abs(numeric - analytic), 1e-4 * max(abs(analytic), 1e-6) + 1e-9, name)


class LossTests(SimpleTestCase):
    def test_lara_loss_is_mean_squared_error(self):
        m_hat = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
        m_bar = torch.tensor([[1.0, 0.0], [0.0, 4.0]])
        self.assertAlmostEqual(float(lara_loss(m_hat, m_bar)), (4.0 + 9.0) / 4.0)
        self.assertEqual(float(lara_loss(m_bar, m_bar)), 0.0)

    def test_lara_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            lara_loss(torch.zeros(2, 4), torch.zeros(3, 4))

    def test_total_loss(self):
        ce, lara = torch.tensor(2.0), torch.tensor(0.5)
        self.assertEqual(float(total_loss(ce, lara, AlignmentWeights(alpha=100.0))), 52.0)
        self.assertEqual(float(total_loss(ce, lara, AlignmentWeights(alpha=0.0))), 2.0)

    def test_total_loss_names_the_bad_component(self):
        with self.assertRaisesRegex(NumericError, "'lara'"):
            total_loss(torch.tensor(1.0), torch.tensor(math.inf), AlignmentWeights())
        with self.assertRaisesRegex(NumericError, "'ce'"):
            total_loss(torch.tensor(math.nan), torch.tensor(1.0), AlignmentWeights())

    def test_negative_alpha(self):
        with self.assertRaises(serializers.ValidationError):
            AlignmentWeights(alpha=-1.0)

    def test_total_loss_gradcheck(self):
        torch.manual_seed(2)
        proxy = tiny_proxy().double().eval()
        target = torch.randn(1, 2, 4, dtype=torch.float64)
        tokens = torch.randint(0, 5, (1, 6))
        weights = AlignmentWeights(alpha=3.0)

        def objective(logits, hidden):
            return total_loss(ce_loss(logits, tokens), lara_loss(proxy(hidden), target), weights)

        logits = torch.randn(1, 6, 5, dtype=torch.float64, requires_grad=True)
        hidden = torch.randn(1, 6, 8, dtype=torch.float64, requires_grad=True)
        self.assertTrue(gradcheck(objective, (logits, hidden), eps=1e-5, atol=1e-8, rtol=1e-4))
