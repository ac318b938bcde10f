import numpy as np
import numpy.testing as npt
import pytest

from mixprec.synergy import (DEFAULT_EPSILON, pair_synergy_per_image,
                             synergy_profile)


class TestPairSynergy:
    def test_zero_difference(self):
        assert pair_synergy_per_image(0.4, 0.4, 1e-6) == 1e6

    def test_unit_difference(self):
        assert pair_synergy_per_image(1.0 - 1e-6, 0.0, 1e-6) == 1.0

    def test_direct_value(self):
        npt.assert_allclose(pair_synergy_per_image(0.3, 0.1, 1e-6),
                            1.0 / 0.200001)
        npt.assert_allclose(pair_synergy_per_image(0.3, 0.1, 1e-6), 5.0,
                            atol=1e-4)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = rng.uniform(0, 2, 2)
            assert pair_synergy_per_image(a, b) == pair_synergy_per_image(b, a)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            pair_synergy_per_image(0.1, 0.2, 0.0)
        with pytest.raises(ValueError):
            pair_synergy_per_image(-0.1, 0.2)


class TestSynergyProfile:
    def test_identical_scores_hit_epsilon_cap(self):
        raw = np.tile([0.3, 0.3], (5, 1))
        prof = synergy_profile(raw, [4, 5], epsilon=1e-6)
        npt.assert_allclose(prof.s_hat[0], np.log1p(1e6), atol=1e-9)

    def test_constant_difference_near_one(self):
        raw = np.tile([0.999999 + 1e-6, 1e-6], (3, 1))
        prof = synergy_profile(raw, [0, 1], epsilon=1e-6)
        npt.assert_allclose(prof.s_hat[0], np.log(2), atol=1e-5)

    def test_average_then_log(self):
        # per-image synergies 1, 2, 3 -> mean 2 -> log(3)
        eps = 1e-6
        diffs = np.array([1.0, 0.5, 1.0 / 3.0]) - eps
        raw = np.column_stack([diffs, np.zeros(3)])
        prof = synergy_profile(raw, [7, 8], epsilon=eps)
        npt.assert_allclose(prof.s_hat[0], np.log(3.0), atol=1e-5)

    def test_pairs_follow_layer_order(self):
        raw = np.random.default_rng(1).uniform(0, 1, (4, 5))
        prof = synergy_profile(raw, [2, 4, 5, 9, 10])
        assert prof.pairs == ((2, 4), (4, 5), (5, 9), (9, 10))
        assert prof.s_hat.shape == (4,)
        assert prof.T == 4

    def test_all_entries_finite_positive(self):
        rng = np.random.default_rng(2)
        raw = rng.uniform(0, 3, (8, 6))
        prof = synergy_profile(raw, range(6))
        assert np.all(np.isfinite(prof.s_hat))
        assert np.all(prof.s_hat > 0)

    def test_monotone_in_score_gap(self):
        # shrinking one image's gap strictly increases the pair's synergy
        rng = np.random.default_rng(3)
        for _ in range(200):
            raw = rng.uniform(0, 1, (4, 2))
            base = synergy_profile(raw, [0, 1]).s_hat[0]
            t = rng.integers(0, 4)
            closer = raw.copy()
            closer[t, 1] = closer[t, 0] + 0.5 * (closer[t, 1] - closer[t, 0])
            tightened = synergy_profile(closer, [0, 1]).s_hat[0]
            if closer[t, 1] != raw[t, 1]:
                assert tightened > base

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            synergy_profile(np.zeros((2, 3)), [0, 1])
        with pytest.raises(ValueError):
            synergy_profile(np.zeros(5), [0, 1])
        with pytest.raises(ValueError):
            synergy_profile(np.zeros((2, 2)), [0, 1], epsilon=-1.0)

    def test_default_epsilon(self):
        assert DEFAULT_EPSILON == 1e-6
