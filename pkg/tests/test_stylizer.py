"""Stylizer stage tests: encoder, colorization, decoder, meta-smoothing."""

import numpy as np
import pytest

from flowstyle.errors import DimensionError, DomainError, InputError
from flowstyle.stylizer import (
    EncoderSpec,
    StylizerParams,
    build_upscale_kernel,
    colorize,
    decode,
    encode,
    init_stylizer_params,
    load_stylizer_params,
    meta_smooth,
    save_stylizer_params,
    stylize,
)
from flowstyle.synth import smooth_texture
from flowstyle.tensor_core import conv2d, deconv2d, scaled_size


class TestEncoder:
    def test_output_shape(self):
        enc = EncoderSpec(seed=0)
        out = encode(np.zeros((8, 8, 3)), enc)
        assert out.shape == (8, 8, enc.out_channels)

    def test_deterministic(self):
        enc = EncoderSpec(seed=5)
        img = smooth_texture(8, 8, 1)
        assert np.array_equal(encode(img, enc), encode(img, enc))

    def test_same_seed_same_weights(self):
        w1 = EncoderSpec(seed=9).weights()
        w2 = EncoderSpec(seed=9).weights()
        for a, b in zip(w1, w2):
            assert np.array_equal(a, b)

    def test_weights_frozen(self):
        w = EncoderSpec(seed=1).weights()
        with pytest.raises(ValueError):
            w[0][0, 0, 0, 0] = 1.0

    def test_zero_input_zero_features(self):
        enc = EncoderSpec(seed=2)
        out = encode(np.zeros((6, 6, 3)), enc)
        assert np.array_equal(out, np.zeros_like(out))

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            encode(np.zeros((4, 4, 1)), EncoderSpec(seed=0))

    def test_json_round_trip(self):
        enc = EncoderSpec(layers=((4, 3), (7, 3)), seed=11)
        back = EncoderSpec.from_json(enc.to_json())
        assert back == enc


class TestColorize:
    def test_equal_constant_features_cancel(self):
        f = np.full((3, 4, 2), 0.7)
        z = colorize(f, f)
        # exact cancellation up to summation rounding of the position sum
        assert np.abs(z).max() < 1e-12

    def test_two_position_example(self):
        # H*W = 2, C = 1: x = (1, 2), y = (3, 5) -> z = (6, 4)
        x = np.array([[[1.0]], [[2.0]]])
        y = np.array([[[3.0]], [[5.0]]])
        z = colorize(x, y)
        assert np.array_equal(z[:, 0, 0], [6.0, 4.0])

    def test_matches_brute_force_sum(self):
        rng = np.random.default_rng(7)
        fc = rng.random((4, 4, 3))
        fs = rng.random((4, 4, 3))
        z = colorize(fc, fs)
        hw = 16
        for i in range(4):
            for j in range(4):
                for c in range(3):
                    want = sum(
                        fs[m, n, c] - fc[i, j, c] for m in range(4) for n in range(4)
                    )
                    assert abs(z[i, j, c] - want) < 1e-10

    def test_style_scaling_is_linear(self):
        rng = np.random.default_rng(8)
        fc = rng.random((5, 5, 2))
        fs = rng.random((5, 5, 2))
        hw = 25.0
        z1 = colorize(fc, fs)
        z2 = colorize(fc, 3.0 * fs)
        assert np.abs((z2 + hw * fc) - 3.0 * (z1 + hw * fc)).max() < 1e-9

    def test_normalized_variant(self):
        rng = np.random.default_rng(9)
        fc = rng.random((4, 5, 2))
        fs = rng.random((4, 5, 2))
        assert np.abs(colorize(fc, fs, normalized=True) - colorize(fc, fs) / 20.0).max() < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            colorize(np.zeros((3, 3, 2)), np.zeros((3, 3, 3)))


class TestDecoder:
    def test_shape_contract(self):
        params = init_stylizer_params(seed=0)
        out = decode(np.zeros((8, 8, 15)), params)
        assert out.shape == (8, 8, 3)

    def test_zero_everything_gives_half(self):
        params = init_stylizer_params(seed=0)
        params.decoder = [np.zeros_like(k) for k in params.decoder]
        out = decode(np.zeros((4, 4, 15)), params)
        assert np.allclose(out, 0.5, atol=1e-15)

    def test_matches_layerwise_composition(self):
        rng = np.random.default_rng(3)
        params = init_stylizer_params(seed=3)
        z = rng.standard_normal((6, 6, 15))
        got = decode(z, params)
        a = np.maximum(conv2d(z, params.decoder[0], "same"), 0.0)
        h = conv2d(a, params.decoder[1], "same")
        want = 1.0 / (1.0 + np.exp(-h))
        assert np.abs(got - want).max() < 1e-12

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            decode(np.zeros((4, 4, 7)), init_stylizer_params(seed=0))

    def test_output_in_unit_interval(self):
        rng = np.random.default_rng(4)
        out = decode(rng.standard_normal((5, 5, 15)) * 50, init_stylizer_params(seed=4))
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestUpscaleKernel:
    def test_identity_at_one(self):
        meta = np.random.default_rng(0).standard_normal((15, 3, 5, 5))
        got = build_upscale_kernel(1, meta)
        assert got is meta

    def test_doubling(self):
        meta = np.full((2, 1, 3, 3), 0.5)
        assert np.array_equal(build_upscale_kernel(2.0, meta), np.full((2, 1, 3, 3), 1.0))

    def test_halving(self):
        meta = np.random.default_rng(1).standard_normal((2, 2, 3, 3))
        assert np.array_equal(build_upscale_kernel(0.5, meta), 0.5 * meta)

    def test_rejects_nonpositive(self):
        meta = np.ones((1, 1, 1, 1))
        with pytest.raises(DomainError):
            build_upscale_kernel(0.0, meta)
        with pytest.raises(DomainError):
            build_upscale_kernel(-2.0, meta)


def identity_params():
    one = np.ones((1, 1, 1, 1))
    return StylizerParams(decoder=[], meta=one.copy(), smooth=one.copy(), project=one.copy())


class TestMetaSmooth:
    def test_identity_composition(self):
        img = smooth_texture(6, 6, 2, channels=1)
        out = meta_smooth(img, 1.0, identity_params())
        assert np.array_equal(out, img)

    def test_upscale_shape(self):
        params = init_stylizer_params(seed=0)
        out = meta_smooth(smooth_texture(4, 4, 1), 2.0, params)
        assert out.shape == (8, 8, 3)

    @pytest.mark.parametrize("r", [0.5, 1.0, 1.5, 2.0, 3.0])
    def test_dims_follow_round_rule(self, r):
        params = init_stylizer_params(seed=1)
        img = smooth_texture(6, 10, 3)
        out = meta_smooth(img, r, params)
        assert out.shape == (scaled_size(6, r), scaled_size(10, r), 3)

    def test_matches_deconv_then_conv_oracle(self):
        rng = np.random.default_rng(5)
        params = init_stylizer_params(seed=5)
        img = rng.random((5, 5, 3))
        got = meta_smooth(img, 2.0, params)
        up = deconv2d(img, 2.0 * params.meta, 2)
        sm = conv2d(up, params.smooth, "same")
        want = np.clip(conv2d(sm, params.project, "same"), 0.0, 1.0)
        assert np.abs(got - want).max() < 1e-10

    def test_rejects_nonpositive_r(self):
        with pytest.raises(DomainError):
            meta_smooth(np.ones((3, 3, 3)), 0.0, init_stylizer_params(seed=0))


class TestStylize:
    def test_shape_at_unit_scale(self):
        enc = EncoderSpec(seed=0)
        params = init_stylizer_params(seed=0, working_size=16)
        c = smooth_texture(16, 16, 1)
        s = smooth_texture(16, 16, 2)
        out = stylize(c, s, 1.0, enc, params, working_size=16)
        assert out.image.shape == (16, 16, 3)
        assert out.intermediate.shape == (16, 16, 3)

    def test_deterministic(self):
        enc = EncoderSpec(seed=3)
        params = init_stylizer_params(seed=3, working_size=16)
        c = smooth_texture(20, 20, 4)
        s = smooth_texture(20, 20, 5)
        a = stylize(c, s, 1.5, enc, params, working_size=16)
        b = stylize(c, s, 1.5, enc, params, working_size=16)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.intermediate, b.intermediate)

    def test_full_pipeline_contracts(self):
        enc = EncoderSpec(seed=6)
        params = init_stylizer_params(seed=6, working_size=32)
        c = smooth_texture(32, 32, 7)
        s = smooth_texture(32, 32, 8)
        out = stylize(c, s, 2.0, enc, params, working_size=32)
        assert out.image.shape == (64, 64, 3)
        assert out.image.min() >= 0.0 and out.image.max() <= 1.0

    def test_colorize_consistency_inside_pipeline(self):
        # content == style: colorized features must follow S_y - HW*x exactly
        enc = EncoderSpec(seed=9)
        img = smooth_texture(12, 12, 10)
        f = encode(img, enc)
        z = colorize(f, f)
        want = f.sum(axis=(0, 1))[None, None, :] - 144.0 * f
        assert np.abs(z - want).max() < 1e-10


class TestParamsIO:
    def test_round_trip(self, tmp_path):
        params = init_stylizer_params(seed=13)
        path = tmp_path / "params.fsty"
        save_stylizer_params(params, path)
        back = load_stylizer_params(path)
        for (n1, k1), (n2, k2) in zip(params.named_kernels(), back.named_kernels()):
            assert n1 == n2
            assert np.array_equal(k1, k2)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.fsty"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(InputError):
            load_stylizer_params(path)

    def test_validate_rejects_nonfinite(self):
        params = init_stylizer_params(seed=0)
        params.meta[0, 0, 0, 0] = np.inf
        with pytest.raises(DomainError):
            params.validate()
