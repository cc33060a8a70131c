"""Dense Lucas-Kanade optical flow.

The flow convention matches the warping stage: a displacement (dx, dy) at
pixel (x, y) of the intermediate frame means

    intermediate(x, y) == key(x + dx, y + dy)

so the warp can sample the (stylized) key frame directly, without negation.
Single-level estimation with a small window; adequate for the sub-3-pixel
displacements this pipeline is exercised on.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, InputError
from .tensor_core import gaussian_blur2d

FLO_MAGIC = 202021.25

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class FlowConfig:
    """Estimator knobs: window size (odd), Tikhonov epsilon, pre-smoothing sigma."""

    window: int = 5
    eps: float = 1e-4
    sigma: float = 1.0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise DomainError(f"window must be odd and >= 3, got {self.window}")
        if not (self.eps > 0):
            raise DomainError(f"eps must be > 0, got {self.eps}")
        if self.sigma < 0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma}")


@dataclass
class FlowField:
    """Per-pixel displacement field; dx/dy are (H, W) float64 arrays."""

    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        self.dx = np.asarray(self.dx, dtype=np.float64)
        self.dy = np.asarray(self.dy, dtype=np.float64)
        if self.dx.ndim != 2 or self.dx.shape != self.dy.shape:
            raise DimensionError(
                f"dx/dy must be matching 2D arrays, got {self.dx.shape} and {self.dy.shape}"
            )
        if not (np.isfinite(self.dx).all() and np.isfinite(self.dy).all()):
            raise DomainError("flow field contains non-finite values")

    @property
    def height(self) -> int:
        return self.dx.shape[0]

    @property
    def width(self) -> int:
        return self.dx.shape[1]


@dataclass(frozen=True)
class FlowStats:
    mean_magnitude: float
    max_magnitude: float


def to_luma(frame: np.ndarray) -> np.ndarray:
    """Collapse a frame to a 2D luminance plane."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 2:
        return frame
    if frame.shape[2] == 1:
        return frame[:, :, 0]
    if frame.shape[2] == 3:
        return frame @ LUMA_WEIGHTS
    return frame.mean(axis=2)


def _central_gradients(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # central differences with edge-clamped sampling (border diffs are halved)
    ap = np.pad(a, 1, mode="edge")
    gx = (ap[1:-1, 2:] - ap[1:-1, :-2]) * 0.5
    gy = (ap[2:, 1:-1] - ap[:-2, 1:-1]) * 0.5
    return gx, gy


def _window_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum of a over a (2r+1)^2 window centered per pixel, zero outside the image."""
    h, w = a.shape
    ap = np.zeros((h + 2 * radius + 1, w + 2 * radius + 1))
    ap[radius + 1:radius + 1 + h, radius + 1:radius + 1 + w] = a
    ii = ap.cumsum(axis=0).cumsum(axis=1)
    size = 2 * radius + 1
    return (
        ii[size:, size:]
        - ii[:-size, size:]
        - ii[size:, :-size]
        + ii[:-size, :-size]
    )


def estimate_flow(
    intermediate: np.ndarray, key: np.ndarray, cfg: FlowConfig = FlowConfig()
) -> FlowField:
    """Windowed least-squares flow from the intermediate frame into the key frame."""
    intermediate = np.asarray(intermediate, dtype=np.float64)
    key = np.asarray(key, dtype=np.float64)
    if intermediate.shape != key.shape:
        raise DimensionError(
            f"frame shapes differ: {intermediate.shape} vs {key.shape}"
        )
    a = to_luma(intermediate)
    b = to_luma(key)
    if cfg.sigma > 0:
        a = gaussian_blur2d(a, cfg.sigma)
        b = gaussian_blur2d(b, cfg.sigma)
    # gradients of the frame average make the temporal difference a midpoint
    # rule: the one-shot solve stays accurate to O(|d|^3) instead of O(|d|^2)
    ix, iy = _central_gradients(0.5 * (a + b))
    it = a - b

    rad = (cfg.window - 1) // 2
    sxx = _window_sum(ix * ix, rad) + cfg.eps
    sxy = _window_sum(ix * iy, rad)
    syy = _window_sum(iy * iy, rad) + cfg.eps
    bx = _window_sum(ix * it, rad)
    by = _window_sum(iy * it, rad)

    det = sxx * syy - sxy * sxy
    dx = (syy * bx - sxy * by) / det
    dy = (sxx * by - sxy * bx) / det
    return FlowField(dx=dx, dy=dy)


def flow_magnitude_stats(f: FlowField) -> FlowStats:
    mag = np.hypot(f.dx, f.dy)
    return FlowStats(mean_magnitude=float(mag.mean()), max_magnitude=float(mag.max()))


def write_flo(f: FlowField, path) -> None:
    """Middlebury .flo: float32 magic, int32 width/height, interleaved (dx, dy)."""
    data = np.empty((f.height, f.width, 2), dtype="<f4")
    data[:, :, 0] = f.dx
    data[:, :, 1] = f.dy
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", f.width, f.height))
        fh.write(data.tobytes())


def read_flo(path) -> FlowField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise InputError(f"{path}: truncated .flo file")
    (magic,) = struct.unpack_from("<f", raw, 0)
    if abs(magic - FLO_MAGIC) > 1e-3:
        raise InputError(f"{path}: bad .flo magic {magic!r}")
    width, height = struct.unpack_from("<ii", raw, 4)
    expect = 12 + 8 * width * height
    if width < 1 or height < 1 or len(raw) < expect:
        raise InputError(f"{path}: inconsistent .flo dimensions {width}x{height}")
    data = np.frombuffer(raw, dtype="<f4", count=2 * width * height, offset=12)
    data = data.reshape(height, width, 2)
    return FlowField(dx=data[:, :, 0].astype(np.float64), dy=data[:, :, 1].astype(np.float64))
