import torch
from django.test import SimpleTestCase
from torch.autograd import gradcheck

from affect.emotion import NormalizedEmotion
from commons.exceptions import NumericError, ShapeError
from conditioning.encoder import (
    AVEncoder,
    ConditioningConfig,
    EmotionConditioner,
    build_conditioning,
    emotion_tensor,
    encode_emotion,
)


class EncodeEmotionTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)

    def test_zero_weights_give_zero_vector(self):
        encoder = AVEncoder(16)
        for param in encoder.parameters():
            torch.nn.init.zeros_(param)
        out = encode_emotion(NormalizedEmotion(0.3, -0.7), encoder)
        self.assertTrue(torch.equal(out, torch.zeros(16)))

    def test_output_width(self):
        encoder = AVEncoder(24, hidden=8)
        self.assertEqual(encode_emotion(NormalizedEmotion(1, 1), encoder).shape, (24,))

    def test_non_finite_parameters(self):
        encoder = AVEncoder(8)
        with torch.no_grad():
            encoder.fc_out.weight[0, 0] = float("nan")
        with self.assertRaisesRegex(NumericError, "fc_out.weight"):
            encode_emotion(NormalizedEmotion(0, 0), encoder)

    def test_gradients_match_finite_differences(self):
        encoder = AVEncoder(8, hidden=6).double()
        emotion = torch.tensor([[0.25, -0.5]], dtype=torch.float64, requires_grad=True)
        params = list(encoder.parameters())

        def output_sum(x, *weights):
            fc_in_w, fc_in_b, fc_out_w, fc_out_b = weights
            hidden = torch.tanh(x @ fc_in_w.T + fc_in_b)
            return (hidden @ fc_out_w.T + fc_out_b).sum()

        inputs = (emotion, *[p.detach().clone().requires_grad_(True) for p in params])
        self.assertTrue(gradcheck(output_sum, inputs, eps=1e-5, atol=1e-8, rtol=1e-4))
        # The functional restatement is the module itself.
        self.assertTrue(torch.allclose(output_sum(emotion, *params), encoder(emotion).sum()))

    def test_module_gradcheck(self):
        encoder = AVEncoder(8, hidden=6).double()
        emotion = torch.tensor([[0.1, 0.9], [-0.4, 0.2]], dtype=torch.float64, requires_grad=True)
        self.assertTrue(gradcheck(lambda x: encoder(x), (emotion,), eps=1e-5, atol=1e-8, rtol=1e-4))


class BuildConditioningTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(1)
        self.conditioner = EmotionConditioner(16, ConditioningConfig(text_tokens=4, av_hidden=8))

    def test_row_count(self):
        rows = build_conditioning(
            NormalizedEmotion(0.5, 0.5), self.conditioner.text_stub, self.conditioner.av_encoder
        )
        self.assertEqual(rows.shape, (5, 16))

    def test_only_the_last_row_depends_on_emotion(self):
        first = build_conditioning(NormalizedEmotion(0.9, -0.9), self.conditioner.text_stub, self.conditioner.av_encoder)
        second = build_conditioning(NormalizedEmotion(-0.9, 0.9), self.conditioner.text_stub, self.conditioner.av_encoder)
        self.assertTrue(torch.equal(first[:4], second[:4]))
        self.assertFalse(torch.equal(first[4], second[4]))

    def test_batched_matches_single(self):
        emotions = [NormalizedEmotion(0.2, -0.1), NormalizedEmotion(-1, 1)]
        batched = self.conditioner(emotion_tensor(emotions))
        self.assertEqual(batched.shape, (2, self.conditioner.n_rows, 16))
        for i, emotion in enumerate(emotions):
            single = build_conditioning(emotion, self.conditioner.text_stub, self.conditioner.av_encoder)
            self.assertTrue(torch.allclose(batched[i], single, atol=1e-6))

    def test_width_mismatch(self):
        with self.assertRaises(ShapeError):
            build_conditioning(NormalizedEmotion(0, 0), torch.zeros(4, 12), self.conditioner.av_encoder)

    def test_conditioning_is_differentiable(self):
        conditioner = EmotionConditioner(8, ConditioningConfig(text_tokens=2, av_hidden=4)).double()
        emotions = torch.tensor([[0.3, -0.2]], dtype=torch.float64)
        weight = conditioner.av_encoder.fc_in.weight

        def scalar(w):
            hidden = torch.tanh(emotions @ w.T + conditioner.av_encoder.fc_in.bias)
            row = conditioner.av_encoder.fc_out(hidden)
            return (torch.cat([conditioner.text_stub, row], dim=0) ** 2).sum()

        self.assertTrue(gradcheck(scalar, (weight.detach().clone().requires_grad_(True),), eps=1e-5, rtol=1e-4))
