import numpy as np
import numpy.testing as npt
import pytest

from mixprec.quantizers import (AffineParams, LogParams, QuantScheme,
                                PER_CHANNEL, PER_TENSOR, UNIFORM, LOGARITHMIC,
                                calibrate_uniform, dequantize_log,
                                dequantize_uniform, fake_quant, quantize_log,
                                quantize_uniform, search_log_base)

SQRT2 = np.sqrt(2.0)


class TestCalibrateUniform:
    def test_simple_range(self):
        p = calibrate_uniform(np.array([0.0, 1.0, 2.0, 3.0]), bits=2)
        assert p.scale[0] == 1.0
        assert p.zero_point[0] == 0

    def test_symmetric_range_8bit(self):
        p = calibrate_uniform(np.linspace(-1.0, 1.0, 101), bits=8)
        npt.assert_allclose(p.scale[0], 2.0 / 255.0)
        assert p.zero_point[0] == 128  # round(127.5) away from zero

    def test_degenerate_constant_roundtrips(self):
        samples = np.full(10, 5.0)
        p = calibrate_uniform(samples, bits=8)
        assert p.scale[0] == 1.0
        assert p.zero_point[0] == 0
        back = dequantize_uniform(quantize_uniform(samples, p), p)
        npt.assert_array_equal(back, samples)

    def test_per_channel_slices(self):
        w = np.array([[0.0, 1.0], [-2.0, 2.0], [3.0, 3.0]])
        p = calibrate_uniform(w, bits=4, granularity=PER_CHANNEL, axis=0)
        assert p.scale.shape == (3,)
        npt.assert_allclose(p.scale, [1.0 / 15.0, 4.0 / 15.0, 1.0])

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            calibrate_uniform(np.array([]), bits=4)
        with pytest.raises(ValueError):
            calibrate_uniform(np.array([1.0, np.nan]), bits=4)
        with pytest.raises(ValueError):
            calibrate_uniform(np.ones(3), bits=1)


class TestQuantizeUniform:
    def test_round_and_clip(self):
        p = AffineParams(scale=1.0, zero_point=0, bits=2)
        assert quantize_uniform(np.array(1.4), p) == 1
        assert quantize_uniform(np.array(100.0), p) == 3

    def test_negative_half_rounds_away(self):
        p = AffineParams(scale=2.0 / 255.0, zero_point=128, bits=8)
        assert quantize_uniform(np.array(-0.5), p) == 64  # round(-63.75) = -64

    def test_half_away_from_zero_everywhere(self):
        p = AffineParams(scale=1.0, zero_point=8, bits=4)
        codes = quantize_uniform(np.array([0.5, 1.5, 2.5, -0.5, -1.5]), p)
        npt.assert_array_equal(codes, [9, 10, 11, 7, 6])

    def test_monotone_in_x(self):
        rng = np.random.default_rng(3)
        x = np.sort(rng.uniform(-4, 4, 500))
        p = calibrate_uniform(x, bits=5)
        codes = quantize_uniform(x, p)
        assert np.all(np.diff(codes) >= 0)

    def test_rejects_nonfinite(self):
        p = AffineParams(scale=1.0, zero_point=0, bits=4)
        with pytest.raises(ValueError):
            quantize_uniform(np.array([np.inf]), p)


class TestDequantizeUniform:
    def test_values(self):
        p = AffineParams(scale=1.0, zero_point=0, bits=2)
        assert dequantize_uniform(np.array(1), p) == 1.0
        p = AffineParams(scale=2.0 / 255.0, zero_point=128, bits=8)
        assert dequantize_uniform(np.array(128), p) == 0.0

    def test_code_range_enforced(self):
        p = AffineParams(scale=1.0, zero_point=0, bits=2)
        with pytest.raises(ValueError):
            dequantize_uniform(np.array([4]), p)

    def test_roundtrip_midpoint_bound(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(-3, 5, 2000)
        for bits in (2, 4, 8):
            p = calibrate_uniform(x, bits=bits)
            back = dequantize_uniform(quantize_uniform(x, p), p)
            assert np.max(np.abs(back - x)) <= p.scale[0] / 2 + 1e-12


class TestLogQuantizer:
    def test_exact_powers(self):
        p = LogParams(scale=1.0, base=2.0, bits=4)
        assert quantize_log(np.array(0.25), p) == 2
        assert dequantize_log(np.array(2), p) == 0.25
        assert dequantize_log(np.array(0), p) == 1.0

    def test_sqrt2_base(self):
        p = LogParams(scale=1.0, base=SQRT2, bits=4)
        assert quantize_log(np.array(0.5), p) == 2
        npt.assert_allclose(dequantize_log(np.array(2), p), 0.5)

    def test_zero_maps_to_largest_code(self):
        p = LogParams(scale=1.0, base=2.0, bits=4)
        assert quantize_log(np.array(0.0), p) == 15

    def test_rejects_negative(self):
        p = LogParams(scale=1.0, base=2.0, bits=4)
        with pytest.raises(ValueError):
            quantize_log(np.array(-0.1), p)

    def test_codebook_is_geometric(self):
        for base in (2.0, SQRT2, 2.0 ** 0.25):
            p = LogParams(scale=3.0, base=base, bits=3)
            cb = p.codebook()
            assert len(set(cb.tolist())) == 8
            npt.assert_allclose(cb[:-1] / cb[1:], base)

    def test_all_codes_in_range(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 10, 1000) ** 4  # wide dynamic range, incl. tiny
        for bits in (2, 4, 8):
            p = LogParams(scale=float(x.max()), base=2.0, bits=bits)
            codes = quantize_log(x, p)
            assert codes.min() >= 0 and codes.max() <= p.qmax


class TestSearchLogBase:
    def test_exact_base2_codebook(self):
        samples = np.array([1.0, 0.5, 0.25, 0.125])
        p = search_log_base(samples, bits=4, candidates=[2.0, SQRT2])
        assert p.base == 2.0
        back = dequantize_log(quantize_log(samples, p), p)
        npt.assert_array_equal(back, samples)

    def test_exact_sqrt2_codebook(self):
        samples = np.array([1.0, 2.0 ** -0.5, 0.5, 2.0 ** -1.5])
        p = search_log_base(samples, bits=4, candidates=[2.0, SQRT2])
        assert p.base == SQRT2

    def test_argmin_matches_bruteforce_mse(self):
        rng = np.random.default_rng(19)
        logits = rng.normal(0, 2, (50, 8))
        samples = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        samples = samples.ravel()
        candidates = [2.0, SQRT2, 2.0 ** 0.25]
        for bits in (3, 4, 6):
            chosen = search_log_base(samples, bits, candidates)
            # independent per-candidate MSE via the raw formulas
            best, best_mse = None, np.inf
            for base in sorted(candidates):
                s = samples.max()
                codes = np.clip(np.floor(np.abs(-np.log(samples / s) / np.log(base)) + 0.5)
                                * np.sign(-np.log(samples / s) / np.log(base)),
                                0, 2 ** bits - 1)
                recon = s * base ** (-codes)
                mse = np.mean((recon - samples) ** 2)
                if mse < best_mse:
                    best, best_mse = base, mse
            assert chosen.base == best

    def test_scale_is_sample_max(self):
        samples = np.array([0.1, 0.7, 0.3])
        p = search_log_base(samples, bits=4)
        assert p.scale == 0.7

    def test_rejects_empty_candidates(self):
        with pytest.raises(ValueError):
            search_log_base(np.array([0.5]), 4, candidates=[])


class TestFakeQuant:
    def test_high_bit_error_bound(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, 4096)
        p = calibrate_uniform(x, bits=16)
        out = fake_quant(x, QuantScheme(UNIFORM, p))
        assert np.max(np.abs(out - x)) <= p.scale[0] / 2 + 1e-12

    def test_codebook_values_fixed_points(self):
        p = AffineParams(scale=0.37, zero_point=5, bits=4)
        grid = dequantize_uniform(np.arange(16), p)
        npt.assert_array_equal(fake_quant(grid, QuantScheme(UNIFORM, p)), grid)
        lp = LogParams(scale=2.0, base=SQRT2, bits=4)
        cb = lp.codebook()
        npt.assert_array_equal(fake_quant(cb, QuantScheme(LOGARITHMIC, lp)), cb)

    def test_zero_exact_when_representable(self):
        x = np.array([-1.0, 0.0, 1.0])
        p = calibrate_uniform(x, bits=8)
        out = fake_quant(x, QuantScheme(UNIFORM, p))
        assert out[1] == 0.0

    def test_shape_preserved(self):
        x = np.zeros((3, 4, 5)) + 0.25
        p = LogParams(scale=1.0, base=2.0, bits=4)
        assert fake_quant(x, QuantScheme(LOGARITHMIC, p)).shape == (3, 4, 5)

    def test_kind_params_mismatch_rejected(self):
        p = AffineParams(scale=1.0, zero_point=0, bits=4)
        with pytest.raises(ValueError):
            QuantScheme(LOGARITHMIC, p)


class TestPerChannel:
    def test_identical_channels_match_per_tensor(self):
        rng = np.random.default_rng(7)
        row = rng.uniform(-2, 3, 64)
        w = np.tile(row, (8, 1))
        pc = calibrate_uniform(w, bits=6, granularity=PER_CHANNEL, axis=0)
        pt = calibrate_uniform(w, bits=6, granularity=PER_TENSOR)
        npt.assert_array_equal(pc.scale, np.full(8, pt.scale[0]))
        npt.assert_array_equal(pc.zero_point, np.full(8, pt.zero_point[0]))
        npt.assert_array_equal(
            fake_quant(w, QuantScheme(UNIFORM, pc)),
            fake_quant(w, QuantScheme(UNIFORM, pt)))

    def test_per_channel_roundtrip_bound_per_slice(self):
        rng = np.random.default_rng(23)
        w = rng.normal(0, 1, (6, 40)) * rng.uniform(0.1, 4, (6, 1))
        p = calibrate_uniform(w, bits=5, granularity=PER_CHANNEL, axis=0)
        back = fake_quant(w, QuantScheme(UNIFORM, p))
        err = np.abs(back - w).max(axis=1)
        assert np.all(err <= p.scale / 2 + 1e-12)

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            AffineParams(scale=0.0, zero_point=0, bits=4)
        with pytest.raises(ValueError):
            AffineParams(scale=1.0, zero_point=16, bits=4)
        with pytest.raises(ValueError):
            LogParams(scale=1.0, base=1.0, bits=4)
