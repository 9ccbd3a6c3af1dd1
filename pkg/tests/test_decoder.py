import pytest
import torch

from lipspeech.config import DecoderConfig
from lipspeech.decoder import AcousticDecoder, AuxMelHead


def tiny_cfg(**overrides):
    base = dict(layers=2, d_t=8, heads=2, conv_kernel=3)
    base.update(overrides)
    return DecoderConfig(**base)


class TestAcousticDecoder:
    def test_shape_preserved(self):
        torch.manual_seed(0)
        dec = AcousticDecoder(DecoderConfig())
        x = torch.randn(1, 240, 384)
        assert dec(x).shape == (1, 240, 384)

    def test_residual_zero_is_identity(self):
        dec = AcousticDecoder(tiny_cfg(use_positional_encoding=False))
        with torch.no_grad():
            for block in dec.blocks:
                block.attn.out.weight.zero_()
                block.attn.out.bias.zero_()
                block.conv_ff.conv2.weight.zero_()
                block.conv_ff.conv2.bias.zero_()
        x = torch.randn(1, 20, 8)
        assert torch.allclose(dec(x), x, atol=1e-6)

    def test_shift_equivariance_without_positions(self):
        # circular conv padding + no positional encoding: full softmax
        # attention and circular convs commute with circular time shifts
        torch.manual_seed(1)
        dec = AcousticDecoder(tiny_cfg(use_positional_encoding=False,
                                       conv_padding_mode="circular")).double()
        x = torch.randn(1, 24, 8, dtype=torch.float64)
        shift = 5
        with torch.no_grad():
            direct = dec(torch.roll(x, shift, dims=1))
            rolled = torch.roll(dec(x), shift, dims=1)
        assert torch.allclose(direct, rolled, atol=1e-8)

    def test_dimension_mismatch_rejected(self):
        dec = AcousticDecoder(tiny_cfg())
        with pytest.raises(ValueError, match="d_t"):
            dec(torch.randn(1, 10, 16))

    def test_global_receptive_field(self):
        # no masking, no recurrence: perturbing one input row moves outputs
        # at other positions too
        torch.manual_seed(2)
        dec = AcousticDecoder(tiny_cfg())
        x = torch.randn(1, 30, 8)
        y = x.clone()
        y[0, 7, 3] += 1.0  # single element: a full-row constant would be
        # cancelled by the pre-norm LayerNorm
        with torch.no_grad():
            delta = (dec(y) - dec(x)).abs().sum(dim=-1).squeeze(0)
        assert (delta > 1e-6).sum() > 1

    def test_one_shot_parallel(self):
        # whole sequence in one call; output has no step dependence on
        # previously "emitted" values (it is a pure function of the input)
        torch.manual_seed(3)
        dec = AcousticDecoder(tiny_cfg())
        x = torch.randn(2, 16, 8)
        a = dec(x)
        b = dec(x)
        assert torch.equal(a, b)

    def test_gradcheck_toy(self):
        torch.manual_seed(4)
        dec = AcousticDecoder(tiny_cfg()).double()
        x = torch.randn(1, 4, 8, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(lambda t: dec(t).sum(), (x,),
                                        eps=1e-6, atol=1e-4, rtol=1e-4)


class TestAuxMelHead:
    def test_projection_shape(self):
        head = AuxMelHead(384)
        x = torch.randn(1, 240, 384)
        assert head(x).shape == (1, 240, 80)

    def test_zero_weights_zero_output(self):
        head = AuxMelHead(16)
        with torch.no_grad():
            head.proj.weight.zero_()
            head.proj.bias.zero_()
        assert torch.all(head(torch.randn(1, 5, 16)) == 0)

    def test_known_matrix_oracle(self):
        torch.manual_seed(5)
        head = AuxMelHead(32)
        w = torch.randn(80, 32)
        with torch.no_grad():
            head.proj.weight.copy_(w)
            head.proj.bias.zero_()
        x = torch.randn(1, 7, 32)
        assert torch.allclose(head(x), x @ w.T, atol=1e-6)
