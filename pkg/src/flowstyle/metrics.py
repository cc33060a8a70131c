"""Quality and performance metrics.

MS-SSIM follows the standard multi-scale construction: 11x11 Gaussian window
(sigma 1.5), stabilizers k1=0.01 / k2=0.03 at dynamic range 1.0, exponent
weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333), contrast-structure terms
per scale with luminance applied at the coarsest scale, and 2x2 mean-pool
dyadic downsampling. Contrast-structure maps are floored at zero before the
fractional exponents so scores stay real and inside [0, 1]. For frames too
small for 5 scales the scale count is reduced and the weights renormalized
to sum to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .optical_flow import to_luma

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MSSSIM_WINDOW = 11
MSSSIM_SIGMA = 1.5
K1 = 0.01
K2 = 0.03
DYNAMIC_RANGE = 1.0


def _gauss_window(size: int, sigma: float) -> np.ndarray:
    t = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _filter_valid(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    # separable 'valid' filtering of a 2D array
    rows = np.lib.stride_tricks.sliding_window_view(a, len(k), axis=0)
    a = np.tensordot(rows, k, axes=([2], [0]))
    cols = np.lib.stride_tricks.sliding_window_view(a, len(k), axis=1)
    return np.tensordot(cols, k, axes=([2], [0]))


def _downsample2(a: np.ndarray) -> np.ndarray:
    h, w = a.shape[0] // 2 * 2, a.shape[1] // 2 * 2
    a = a[:h, :w]
    return (a[0::2, 0::2] + a[0::2, 1::2] + a[1::2, 0::2] + a[1::2, 1::2]) * 0.25


def _scale_terms(a: np.ndarray, b: np.ndarray, win: np.ndarray):
    c1 = (K1 * DYNAMIC_RANGE) ** 2
    c2 = (K2 * DYNAMIC_RANGE) ** 2
    mu_a = _filter_valid(a, win)
    mu_b = _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a * mu_a
    var_b = _filter_valid(b * b, win) - mu_b * mu_b
    cov = _filter_valid(a * b, win) - mu_a * mu_b
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = np.maximum(cs, 0.0)
    return float((lum * cs).mean()), float(cs.mean())


def ms_ssim_scales(height: int, width: int, max_scales: int = 5) -> int:
    scales = 0
    while scales < max_scales and min(height, width) >= MSSSIM_WINDOW * (1 << scales):
        scales += 1
    if scales == 0:
        raise DimensionError(
            f"frames {height}x{width} too small for an {MSSSIM_WINDOW}px window"
        )
    return scales


def ms_ssim(a: np.ndarray, b: np.ndarray, channel_mode: str = "luma") -> float:
    """Multi-scale structural similarity in [0, 1]; 1.0 means identical.

    channel_mode 'luma' scores the luminance plane (default); 'mean' averages
    the channels instead.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"frame dims differ: {a.shape} vs {b.shape}")
    if channel_mode == "luma":
        pa, pb = to_luma(a), to_luma(b)
    elif channel_mode == "mean":
        pa = a.mean(axis=2) if a.ndim == 3 else a
        pb = b.mean(axis=2) if b.ndim == 3 else b
    else:
        raise DomainError(f"unknown channel_mode {channel_mode!r}")

    scales = ms_ssim_scales(pa.shape[0], pa.shape[1])
    weights = np.array(MSSSIM_WEIGHTS[:scales])
    if scales < len(MSSSIM_WEIGHTS):
        weights = weights / weights.sum()

    win = _gauss_window(MSSSIM_WINDOW, MSSSIM_SIGMA)
    value = 1.0
    for s in range(scales):
        ssim_mean, cs_mean = _scale_terms(pa, pb, win)
        if s == scales - 1:
            value *= ssim_mean ** weights[s]
        else:
            value *= cs_mean ** weights[s]
            pa = _downsample2(pa)
            pb = _downsample2(pb)
    return float(value)


@dataclass(frozen=True)
class SpeedupInputs:
    """Timing model inputs: frame counts plus per-frame stylize/interp seconds."""

    total_frames: int
    key_frames: int
    t_d: float
    t_i: float

    def __post_init__(self):
        if not (1 <= self.key_frames <= self.total_frames):
            raise DomainError(
                f"need 1 <= key_frames <= total_frames, got {self.key_frames}/{self.total_frames}"
            )
        if not (self.t_d > 0 and self.t_i > 0):
            raise DomainError(f"per-frame times must be > 0, got {self.t_d}, {self.t_i}")


def per_frame_ratio(t_d: float, t_i: float) -> float:
    """Per-frame speedup of interpolation over full stylization."""
    if not (t_d > 0 and t_i > 0):
        raise DomainError(f"per-frame times must be > 0, got {t_d}, {t_i}")
    return t_d / t_i


def speedup_exact(s: SpeedupInputs) -> float:
    """Whole-video speedup: n*t_d / (keys*t_d + (n-keys)*t_i)."""
    n, keys = s.total_frames, s.key_frames
    return (n * s.t_d) / (keys * s.t_d + (n - keys) * s.t_i)


def speedup_approx(s: SpeedupInputs) -> float:
    """First-order approximation: total frames over key frames."""
    return s.total_frames / s.key_frames


@dataclass(frozen=True)
class SpeedupRow:
    interval: int
    key_frames: int
    exact: float
    approx: float


def speedup_curve(n: int, intervals, t_d: float, t_i: float):
    """Speedup table over key-frame intervals; keys = ceil(n / interval)."""
    rows = []
    for interval in intervals:
        if interval < 1:
            raise DomainError(f"interval must be >= 1, got {interval}")
        keys = math.ceil(n / interval)
        s = SpeedupInputs(total_frames=n, key_frames=keys, t_d=t_d, t_i=t_i)
        rows.append(
            SpeedupRow(
                interval=int(interval),
                key_frames=keys,
                exact=speedup_exact(s),
                approx=speedup_approx(s),
            )
        )
    return rows


def speedup_rows_to_csv(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("interval,key_frames,exact,approx\n")
        for r in rows:
            fh.write(f"{r.interval},{r.key_frames},{r.exact:.10g},{r.approx:.10g}\n")
