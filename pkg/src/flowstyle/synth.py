"""Seeded synthetic frames: smooth textures, translated copies, drifting
sequences, and content/style pair datasets. Everything is deterministic in
the seed so runs are reproducible end to end.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .tensor_core import bilinear_gather, gaussian_blur2d


def smooth_texture(
    height: int,
    width: int,
    seed: int,
    channels: int = 3,
    sigma: float = 2.0,
    lo: float = 0.15,
    hi: float = 0.85,
) -> np.ndarray:
    """Band-limited random texture in [lo, hi] with gradients everywhere."""
    if height < 1 or width < 1:
        raise DomainError(f"texture dims must be >= 1, got {height}x{width}")
    rng = np.random.default_rng(seed)
    noise = rng.uniform(size=(height, width, channels))
    out = np.empty_like(noise)
    for c in range(channels):
        out[:, :, c] = gaussian_blur2d(noise[:, :, c], sigma)
    span = out.max() - out.min()
    if span == 0:
        return np.full((height, width, channels), (lo + hi) / 2.0)
    return (out - out.min()) / span * (hi - lo) + lo


def translate_frame(frame: np.ndarray, u: float, v: float) -> np.ndarray:
    """Sample frame at (x + u, y + v) with border clamping.

    Used as a synthetic 'intermediate': the ground-truth flow back into the
    original frame is exactly (u, v) under the pipeline's flow convention.
    """
    h, w = frame.shape[0], frame.shape[1]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return bilinear_gather(frame, xs + u, ys + v)


def translating_sequence(
    n_frames: int,
    height: int,
    width: int,
    seed: int,
    step: tuple = (0.2, 0.1),
) -> list:
    """Frames drifting by a constant subpixel step per frame.

    frame[t] samples frame[0] at offset t*step, so frame t relates to frame s
    by a known (t - s) * step displacement.
    """
    base = smooth_texture(height, width, seed)
    out = []
    for t in range(n_frames):
        out.append(translate_frame(base, step[0] * t, step[1] * t))
    return out


def frame_pairs(count: int, size: int, seed: int) -> list:
    """(content, style) texture pairs for training and evaluation.

    Style frames are re-lit variants of the content scene (shared structure,
    shifted levels plus an independent cast), mirroring the photorealistic
    setting where the style image shows a similar scene under different
    light. Scene statistics (smoothness, contrast, brightness, cast
    strength) vary per pair, so a small sample does not represent the whole
    family.
    """
    pairs = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        sigma = rng.uniform(1.2, 5.0)
        mid = rng.uniform(0.35, 0.65)
        span = rng.uniform(0.1, 0.35)
        content = smooth_texture(
            size, size, int(rng.integers(1 << 31)), sigma=sigma,
            lo=mid - span, hi=mid + span,
        )
        cast = smooth_texture(size, size, int(rng.integers(1 << 31)), sigma=4.0)
        gain = rng.uniform(0.7, 1.0)
        level = rng.uniform(-0.12, 0.12)
        cast_strength = rng.uniform(0.1, 0.4)
        style = np.clip(
            gain * content + cast_strength * (cast - 0.5) + level, 0.0, 1.0
        )
        pairs.append((content, style))
    return pairs
