"""Frame file handling.

Frames on disk are 8-bit PNG or binary PPM (P6). In memory they are float64
(H, W, 3) arrays in [0, 1]. Directory sequences use zero-padded decimal
filenames (e.g. 0000.png ... 0029.png); inconsistent padding is rejected
instead of silently sorted, because lexicographic order would scramble the
sequence.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError

_FRAME_RE = re.compile(r"^(\d+)\.(png|ppm)$", re.IGNORECASE)


def to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 255.0


def write_ppm(path, frame: np.ndarray) -> None:
    raw = to_uint8(frame)
    if raw.ndim == 2:
        raw = np.repeat(raw[:, :, None], 3, axis=2)
    h, w = raw.shape[0], raw.shape[1]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raw[:, :, :3].tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise InputError(f"{path}: not a binary PPM (P6) file")
    # header: magic, width, height, maxval, separated by whitespace/comments
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise InputError(f"{path}: only maxval 255 PPM supported, got {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    if pixels.size != w * h * 3:
        raise InputError(f"{path}: truncated PPM pixel data")
    return from_uint8(pixels.reshape(h, w, 3))


def write_frame(path, frame: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(path, frame)
    elif path.suffix.lower() == ".png":
        raw = to_uint8(frame)
        if raw.ndim == 2:
            raw = np.repeat(raw[:, :, None], 3, axis=2)
        Image.fromarray(raw[:, :, :3], mode="RGB").save(path)
    else:
        raise InputError(f"unsupported frame format: {path.suffix!r} (use .png or .ppm)")


def read_frame(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise InputError(f"frame not found: {path}")
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    if path.suffix.lower() == ".png":
        with Image.open(path) as img:
            return from_uint8(np.asarray(img.convert("RGB")))
    raise InputError(f"unsupported frame format: {path.suffix!r} (use .png or .ppm)")


def list_frame_files(directory) -> list[Path]:
    """Sequence files in index order; enforces uniform zero-padded stems."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"not a directory: {directory}")
    entries = []
    for p in sorted(directory.iterdir()):
        m = _FRAME_RE.match(p.name)
        if m:
            entries.append((int(m.group(1)), len(m.group(1)), p))
    if not entries:
        raise InputError(f"no frames (NNN.png / NNN.ppm) in {directory}")
    widths = {e[1] for e in entries}
    if len(widths) != 1:
        raise InputError(
            f"{directory}: mixed zero-padding widths {sorted(widths)}; "
            "rename frames to a uniform width"
        )
    entries.sort(key=lambda e: e[0])
    indices = [e[0] for e in entries]
    if len(set(indices)) != len(indices):
        raise InputError(f"{directory}: duplicate frame indices")
    return [e[2] for e in entries]


def load_frame_dir(directory) -> tuple[list[np.ndarray], list[Path]]:
    """Load all frames of a directory; dims must be uniform."""
    files = list_frame_files(directory)
    frames = [read_frame(p) for p in files]
    dims = {f.shape for f in frames}
    if len(dims) != 1:
        raise InputError(f"{directory}: mixed frame dimensions {sorted(dims)}")
    return frames, files


def frame_name(index: int, total: int, ext: str = "png") -> str:
    width = max(4, len(str(max(total - 1, 0))))
    return f"{index:0{width}d}.{ext}"


def keys_from_interval(n_frames: int, interval: int) -> list[int]:
    if interval < 1:
        raise InputError(f"key interval must be >= 1, got {interval}")
    return list(range(0, n_frames, interval))


def read_key_indices(path, n_frames: int) -> list[int]:
    """Key index list file: one index per line, '#' comments allowed."""
    keys = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                keys.append(int(text))
            except ValueError:
                raise InputError(f"{path}:{line_no}: not an index: {text!r}") from None
    if not keys or keys != sorted(set(keys)):
        raise InputError(f"{path}: key indices must be unique and ascending")
    if keys[0] != 0:
        raise InputError(f"{path}: frame 0 must be a key frame")
    if keys[-1] >= n_frames:
        raise InputError(f"{path}: key index {keys[-1]} out of range for {n_frames} frames")
    return keys
