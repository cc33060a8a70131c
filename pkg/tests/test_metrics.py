"""MS-SSIM and speedup model tests."""

import math

import numpy as np
import pytest

from flowstyle.errors import DimensionError, DomainError
from flowstyle.metrics import (
    SpeedupInputs,
    ms_ssim,
    ms_ssim_scales,
    per_frame_ratio,
    speedup_approx,
    speedup_curve,
    speedup_exact,
)
from flowstyle.synth import smooth_texture

# reference per-frame stylize/interp seconds by resolution, with their ratios
REFERENCE_TIMINGS = [
    (0.52, 0.0006, 866.7),
    (0.73, 0.002, 365.0),
    (0.99, 0.006, 165.0),
    (1.51, 0.02, 75.5),
]


class TestMsSsim:
    def test_self_similarity_is_one(self):
        x = smooth_texture(64, 64, 1)
        assert abs(ms_ssim(x, x) - 1.0) < 1e-9

    def test_symmetry(self):
        a = smooth_texture(48, 48, 2)
        b = smooth_texture(48, 48, 3)
        assert abs(ms_ssim(a, b) - ms_ssim(b, a)) < 1e-12

    def test_inversion_scores_low(self):
        x = smooth_texture(64, 64, 4, sigma=1.5)
        assert ms_ssim(x, 1.0 - x) < 0.5

    def test_range_on_random_pairs(self):
        rng = np.random.default_rng(5)
        for seed in range(4):
            a = rng.random((32, 32, 3))
            b = rng.random((32, 32, 3))
            v = ms_ssim(a, b)
            assert 0.0 <= v <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            ms_ssim(np.ones((32, 32, 3)), np.ones((33, 32, 3)))

    def test_scale_count_autoreduction(self):
        assert ms_ssim_scales(64, 64) == 3
        assert ms_ssim_scales(512, 256) == 5
        assert ms_ssim_scales(22, 22) == 2
        assert ms_ssim_scales(11, 11) == 1

    def test_too_small_rejected(self):
        with pytest.raises(DimensionError):
            ms_ssim(np.ones((8, 8, 3)), np.ones((8, 8, 3)))

    def test_channel_modes(self):
        a = smooth_texture(32, 32, 6)
        b = smooth_texture(32, 32, 7)
        luma = ms_ssim(a, b, channel_mode="luma")
        mean = ms_ssim(a, b, channel_mode="mean")
        assert 0.0 <= luma <= 1.0 and 0.0 <= mean <= 1.0
        with pytest.raises(DomainError):
            ms_ssim(a, b, channel_mode="rgb")

    def test_small_distortion_scores_high(self):
        x = smooth_texture(64, 64, 8)
        noisy = np.clip(x + 0.005 * np.random.default_rng(0).standard_normal(x.shape), 0, 1)
        assert ms_ssim(x, noisy) > 0.98


class TestSpeedupModel:
    def test_all_keys_means_unity(self):
        s = SpeedupInputs(100, 100, 0.5, 0.001)
        assert speedup_exact(s) == 1.0
        assert speedup_approx(s) == 1.0

    def test_hand_arithmetic_row(self):
        # 300 frames, 10 keys, timings from the 512x256 measurement row
        s = SpeedupInputs(300, 10, 0.52, 0.0006)
        want = 156.0 / 5.374
        assert speedup_exact(s) == pytest.approx(want, rel=1e-12)
        assert speedup_exact(s) == pytest.approx(29.03, abs=0.01)

    @pytest.mark.parametrize("t_d,t_i,ratio", REFERENCE_TIMINGS)
    def test_reference_per_frame_ratios(self, t_d, t_i, ratio):
        assert per_frame_ratio(t_d, t_i) == pytest.approx(ratio, rel=0.005)

    def test_ratio_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            per_frame_ratio(0.0, 0.1)

    def test_approx_is_frame_ratio(self):
        assert speedup_approx(SpeedupInputs(300, 10, 1.0, 0.1)) == 30.0

    def test_exact_below_approx_when_interp_costs(self):
        s = SpeedupInputs(300, 10, 0.52, 0.0006)
        assert speedup_exact(s) < speedup_approx(s)

    def test_gap_small_at_reference_timings(self):
        s = SpeedupInputs(300, 10, 0.52, 0.0006)
        gap = abs(speedup_exact(s) - speedup_approx(s)) / speedup_approx(s)
        assert gap < 0.05

    def test_exact_at_least_one_when_stylize_dominates(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(2, 400))
            keys = int(rng.integers(1, n + 1))
            t_i = float(rng.uniform(1e-4, 0.05))
            t_d = t_i * float(rng.uniform(1.0, 100.0))
            assert speedup_exact(SpeedupInputs(n, keys, t_d, t_i)) >= 1.0 - 1e-12

    def test_strictly_decreasing_in_keys(self):
        values = [
            speedup_exact(SpeedupInputs(300, k, 0.52, 0.0006)) for k in (1, 5, 20, 100, 300)
        ]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_validation(self):
        with pytest.raises(DomainError):
            SpeedupInputs(10, 0, 0.5, 0.001)
        with pytest.raises(DomainError):
            SpeedupInputs(10, 11, 0.5, 0.001)
        with pytest.raises(DomainError):
            SpeedupInputs(10, 5, 0.5, 0.0)


class TestSpeedupCurve:
    def test_interval_one_is_exactly_unity(self):
        rows = speedup_curve(300, [1], 0.52, 0.0006)
        assert rows[0].exact == 1.0
        assert rows[0].key_frames == 300

    def test_monotone_over_intervals(self):
        rows = speedup_curve(300, [1, 5, 10, 30, 60], 0.52, 0.0006)
        ex = [r.exact for r in rows]
        assert all(a < b for a, b in zip(ex, ex[1:]))

    def test_keys_follow_ceiling_rule(self):
        rows = speedup_curve(300, [7], 0.52, 0.0006)
        assert rows[0].key_frames == math.ceil(300 / 7)

    def test_higher_ratio_tracks_approx_closer(self):
        # lower resolution has a larger t_d/t_i ratio and hugs n/keys tighter
        lo_res = speedup_curve(300, [30], 0.52, 0.0006)[0]
        hi_res = speedup_curve(300, [30], 1.51, 0.02)[0]
        gap_lo = abs(lo_res.exact - lo_res.approx) / lo_res.approx
        gap_hi = abs(hi_res.exact - hi_res.approx) / hi_res.approx
        assert gap_lo < gap_hi

    def test_rejects_bad_interval(self):
        with pytest.raises(DomainError):
            speedup_curve(300, [0], 0.5, 0.001)
