"""Backward warping of stylized key frames into stylized intermediate frames.

Every intermediate frame is produced from the closest preceding key frame
(the governing key); intermediates after the last key keep warping from the
last key. Each warp depends only on its own flow field and key frame, so
frame order never affects results.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionError, InputError
from .optical_flow import FlowField
from .tensor_core import _bilinear_gather_owned


@dataclass
class FrameSequence:
    """Ordered frames plus the sorted list of key-frame indices."""

    frames: list = field(repr=False)
    key_indices: list

    def __post_init__(self):
        n = len(self.frames)
        if n == 0:
            raise InputError("empty frame sequence")
        keys = list(self.key_indices)
        if keys != sorted(set(keys)):
            raise InputError(f"key indices must be strictly increasing, got {keys}")
        if not keys or keys[0] != 0:
            raise InputError("the first frame must be a key frame")
        if keys[-1] >= n:
            raise InputError(f"key index {keys[-1]} out of range for {n} frames")
        self.key_indices = keys

    @property
    def n(self) -> int:
        return len(self.frames)

    @property
    def intermediate_indices(self) -> list:
        keyset = set(self.key_indices)
        return [i for i in range(self.n) if i not in keyset]

    def governing_key(self, p: int) -> int:
        """Position (into key_indices) of the closest key strictly before p."""
        q = bisect_left(self.key_indices, p) - 1
        if q < 0:
            raise InputError(f"frame {p} precedes the first key frame")
        return q


def warp(flow: FlowField, stylized_key: np.ndarray) -> np.ndarray:
    """Backward-warp: output(x, y) = key(x + dx, y + dy), clamped to [0, 1]."""
    stylized_key = np.asarray(stylized_key, dtype=np.float64)
    if stylized_key.ndim != 3:
        raise DimensionError(f"frame must be (H, W, C), got {stylized_key.shape}")
    h, w = stylized_key.shape[0], stylized_key.shape[1]
    if (flow.height, flow.width) != (h, w):
        raise DimensionError(
            f"flow {flow.height}x{flow.width} does not match frame {h}x{w}"
        )
    gx = (flow.dx + np.arange(w, dtype=np.float64)[None, :]).reshape(-1)
    gy = (flow.dy + np.arange(h, dtype=np.float64)[:, None]).reshape(-1)
    out = np.ascontiguousarray(_bilinear_gather_owned(stylized_key, gx, gy))
    out = out.reshape(h, w, stylized_key.shape[2])
    return np.clip(out, 0.0, 1.0, out=out)


def interpolate_sequence(
    keys_stylized: Sequence[np.ndarray],
    flows: Mapping[int, FlowField],
    seq: FrameSequence,
) -> dict[int, np.ndarray]:
    """Warp every intermediate frame from its governing stylized key.

    flows maps global frame index -> FlowField. Returns {global_index: frame}
    in ascending index order.
    """
    if len(keys_stylized) != len(seq.key_indices):
        raise InputError(
            f"expected {len(seq.key_indices)} stylized keys, got {len(keys_stylized)}"
        )
    out: dict[int, np.ndarray] = {}
    for p in seq.intermediate_indices:
        if p not in flows:
            raise InputError(f"missing flow for intermediate frame {p}")
        q = seq.governing_key(p)
        out[p] = warp(flows[p], keys_stylized[q])
    return out
