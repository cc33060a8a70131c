"""Dense tensor primitives with analytic gradients.

Conventions used throughout the package:

* image / feature tensors are float64 arrays of shape (H, W, C)
* kernels are float64 arrays of shape (out_channels, in_channels, kh, kw)
* convolution pads with zeros; every sampling operation (bilinear_sample,
  resize/rescale) clamps coordinates to the border
* transposed convolution ("deconv") at integer stride r is implemented as
  zero insertion on an r*H x r*W canvas followed by a same-padded
  convolution, so its output is exactly r*H x r*W and the stride-1 case is
  elementwise identical to conv2d with same padding
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, DimensionError, DomainError


def check_tensor3(x: np.ndarray, name: str = "input") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionError(f"{name} must have shape (H, W, C), got {x.shape}")
    if min(x.shape) < 1:
        raise DimensionError(f"{name} has a degenerate dimension: {x.shape}")
    return x


def check_kernel(k: np.ndarray, name: str = "kernel") -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 4:
        raise DimensionError(
            f"{name} must have shape (out_ch, in_ch, kh, kw), got {k.shape}"
        )
    return k


def same_padding(k: np.ndarray) -> tuple[int, int]:
    """Padding that keeps spatial dims under conv2d. Odd kernels only."""
    kh, kw = k.shape[2], k.shape[3]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(
            f"same padding needs odd kernel dims, got {kh}x{kw}"
        )
    return (kh - 1) // 2, (kw - 1) // 2


def _resolve_padding(k: np.ndarray, padding) -> tuple[int, int]:
    if padding == "same":
        return same_padding(k)
    p = int(padding)
    if p < 0:
        raise DomainError(f"padding must be >= 0, got {padding}")
    return p, p


def _window_view(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # (Ho, Wo, C, kh, kw) view over the zero-padded input
    v = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(0, 1))
    return v


_COL_BLOCK_BYTES = 16 << 20


def _conv2d_gemm(xp: np.ndarray, k: np.ndarray, ho: int, wo: int) -> np.ndarray:
    # row-chunked im2col keeps the patch buffer bounded regardless of size
    kh, kw = k.shape[2], k.shape[3]
    kflat = k.reshape(k.shape[0], -1)
    row_bytes = wo * kflat.shape[1] * 8
    block = max(1, _COL_BLOCK_BYTES // max(row_bytes, 1))
    out = np.empty((ho, wo, k.shape[0]))
    for r0 in range(0, ho, block):
        r1 = min(r0 + block, ho)
        view = _window_view(xp[r0:r1 + kh - 1], kh, kw)
        cols = view.reshape((r1 - r0) * wo, -1)
        out[r0:r1] = (cols @ kflat.T).reshape(r1 - r0, wo, k.shape[0])
    return out


def _conv2d_shift(xp: np.ndarray, k: np.ndarray, ho: int, wo: int) -> np.ndarray:
    # shift-accumulate in channels-first layout; wins when out_channels is tiny
    # because GEMM degenerates to a bandwidth-bound GEMV there
    out_c, in_c, kh, kw = k.shape
    xcf = np.ascontiguousarray(xp.transpose(2, 0, 1))
    out = np.zeros((out_c, ho, wo))
    for o in range(out_c):
        acc = out[o]
        for c in range(in_c):
            plane = xcf[c]
            for u in range(kh):
                for v in range(kw):
                    weight = k[o, c, u, v]
                    if weight != 0.0:
                        acc += weight * plane[u:u + ho, v:v + wo]
    return out.transpose(1, 2, 0)


def conv2d(x: np.ndarray, k: np.ndarray, padding="same") -> np.ndarray:
    """2D cross-correlation of an (H, W, Cin) tensor with an (O, Cin, kh, kw) kernel.

    Returns (Ho, Wo, O) with Ho = H + 2p - kh + 1. Zero padding.
    """
    x = check_tensor3(x)
    k = check_kernel(k)
    if k.shape[1] != x.shape[2]:
        raise DimensionError(
            f"kernel expects {k.shape[1]} input channels, tensor has {x.shape[2]}"
        )
    ph, pw = _resolve_padding(k, padding)
    kh, kw = k.shape[2], k.shape[3]
    h, w = x.shape[0], x.shape[1]
    ho, wo = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    if ho < 1 or wo < 1:
        raise DimensionError(
            f"kernel {kh}x{kw} larger than padded input {h + 2 * ph}x{w + 2 * pw}"
        )
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    if k.shape[0] <= 2 and kh * kw > 1:
        return _conv2d_shift(xp, k, ho, wo)
    return _conv2d_gemm(xp, k, ho, wo)


def conv2d_input_grad(g: np.ndarray, input_shape, k: np.ndarray, padding="same") -> np.ndarray:
    """Gradient of conv2d w.r.t. its input, given the output cotangent g."""
    k = check_kernel(k)
    ph, pw = _resolve_padding(k, padding)
    h, w, _ = input_shape
    kh, kw = k.shape[2], k.shape[3]
    # correlate g (padded by kernel-1) with the flipped, channel-swapped kernel
    kt = k[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    gp = np.pad(g, ((kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
    cols = _window_view(gp, kh, kw).reshape(-1, k.shape[0] * kh * kw)
    dxp = (cols @ kt.reshape(kt.shape[0], -1).T).reshape(
        h + 2 * ph, w + 2 * pw, kt.shape[0]
    )
    return dxp[ph:ph + h, pw:pw + w, :]


def conv2d_weight_grad(g: np.ndarray, x: np.ndarray, k_shape, padding="same") -> np.ndarray:
    """Gradient of conv2d w.r.t. the kernel, given the output cotangent g."""
    out_c, in_c, kh, kw = k_shape
    if padding == "same":
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
    else:
        ph = pw = int(padding)
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    ho, wo = g.shape[0], g.shape[1]
    cols = _window_view(xp, kh, kw).reshape(ho * wo, -1)
    dk = g.reshape(ho * wo, out_c).T @ cols
    return dk.reshape(out_c, in_c, kh, kw)


def zero_insert(x: np.ndarray, stride: int) -> np.ndarray:
    """Place x[i, j] at canvas[i*stride, j*stride] on an (r*H, r*W, C) zero canvas."""
    h, w, c = x.shape
    canvas = np.zeros((h * stride, w * stride, c))
    canvas[::stride, ::stride, :] = x
    return canvas


def deconv2d(x: np.ndarray, k: np.ndarray, stride: int) -> np.ndarray:
    """Strided transposed convolution: output is exactly (r*H, r*W, out_ch).

    stride 1 is elementwise identical to conv2d(x, k, "same").
    """
    x = check_tensor3(x)
    k = check_kernel(k)
    if int(stride) != stride or stride < 1:
        raise DomainError(f"deconv stride must be an integer >= 1, got {stride}")
    stride = int(stride)
    if stride == 1:
        return conv2d(x, k, "same")
    return conv2d(zero_insert(x, stride), k, "same")


def deconv2d_input_grad(g: np.ndarray, input_shape, k: np.ndarray, stride: int) -> np.ndarray:
    h, w, c = input_shape
    stride = int(stride)
    canvas_shape = (h * stride, w * stride, c)
    dcanvas = conv2d_input_grad(g, canvas_shape, k, "same")
    return dcanvas[::stride, ::stride, :]


def deconv2d_weight_grad(g: np.ndarray, x: np.ndarray, k_shape, stride: int) -> np.ndarray:
    stride = int(stride)
    xin = x if stride == 1 else zero_insert(x, stride)
    return conv2d_weight_grad(g, xin, k_shape, "same")


def _clamped_taps(coords: np.ndarray, size: int):
    """Clamp continuous coordinates to [0, size-1] and split into taps/weights."""
    c = np.clip(coords, 0.0, size - 1.0)
    lo = np.floor(c).astype(np.intp)
    lo = np.minimum(lo, max(size - 2, 0))
    frac = c - lo
    if size == 1:
        frac = np.zeros_like(frac)
    return lo, frac


def bilinear_sample(x: np.ndarray, at_x: float, at_y: float) -> np.ndarray:
    """4-neighbour bilinear blend at continuous (x=column, y=row); clamps to border.

    Returns one value per channel. Exact at integer in-bounds coordinates.
    """
    x = check_tensor3(x)
    return bilinear_gather(x, np.float64(at_x), np.float64(at_y))


def bilinear_gather(img: np.ndarray, xs, ys) -> np.ndarray:
    """Vectorized bilinear_sample over coordinate arrays of equal shape.

    Returns an array of shape xs.shape + (C,); bit-identical to per-pixel
    bilinear_sample calls.
    """
    out_shape = np.shape(xs) + (img.shape[2],)
    gx = np.array(xs, dtype=np.float64).reshape(-1)
    gy = np.array(ys, dtype=np.float64).reshape(-1)
    return _bilinear_gather_owned(img, gx, gy).reshape(out_shape)


def _bilinear_gather_owned(img: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Bilinear gather returning (n, C); consumes gx/gy as scratch buffers.

    Hot path of warping and rescaling: works in-place on owned buffers and
    gathers all channels per corner in one call, because fresh temporaries
    cost more in page faults than the arithmetic itself.
    """
    h, w, c = img.shape
    np.clip(gx, 0.0, w - 1.0, out=gx)
    np.clip(gy, 0.0, h - 1.0, out=gy)
    # coordinates are non-negative after the clip, so truncation is floor
    x0 = gx.astype(np.intp)
    y0 = gy.astype(np.intp)
    np.minimum(x0, max(w - 2, 0), out=x0)
    np.minimum(y0, max(h - 2, 0), out=y0)
    fx = gx
    fx -= x0
    fy = gy
    fy -= y0
    i00 = y0
    i00 *= w
    i00 += x0
    idx = x0  # scratch index buffer from here on
    dc = 1 if w > 1 else 0
    dr = w if h > 1 else 0
    planes = np.ascontiguousarray(img.transpose(2, 0, 1)).reshape(c, h * w)
    n = i00.size
    g00, g01, g10, g11 = (np.empty((c, n)) for _ in range(4))
    np.take(planes, i00, axis=1, out=g00, mode="clip")
    np.add(i00, dc, out=idx)
    np.take(planes, idx, axis=1, out=g01, mode="clip")
    np.add(i00, dr, out=idx)
    np.take(planes, idx, axis=1, out=g10, mode="clip")
    idx += dc
    np.take(planes, idx, axis=1, out=g11, mode="clip")
    # lerp form a + (b - a) * f is exact at f == 0 and for constant inputs
    g01 -= g00
    g01 *= fx
    g01 += g00
    g11 -= g10
    g11 *= fx
    g11 += g10
    g11 -= g01
    g11 *= fy
    g11 += g01
    return g11.T


def _resize_grid(in_size: int, out_size: int) -> np.ndarray:
    # center-aligned source coordinates; identity when in_size == out_size
    scale = in_size / out_size
    return (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5


def resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize to an explicit (out_h, out_w). Identity when dims match."""
    x = check_tensor3(x)
    if out_h < 1 or out_w < 1:
        raise DomainError(f"resize target must be >= 1x1, got {out_h}x{out_w}")
    h, w, _ = x.shape
    if out_h == h and out_w == w:
        return x.copy()
    gx = _resize_grid(w, out_w)
    gy = _resize_grid(h, out_h)
    xs, ys = np.meshgrid(gx, gy)
    return bilinear_gather(x, xs, ys)


def scaled_size(size: int, r: float) -> int:
    # round half away from zero, matching round(r*H) in the size contract
    return int(math.floor(size * r + 0.5))


def rescale(x: np.ndarray, r: float) -> np.ndarray:
    """Rescale by a positive real factor r to round(r*H) x round(r*W)."""
    x = check_tensor3(x)
    if not (r > 0):
        raise DomainError(f"rescale factor must be > 0, got {r}")
    h, w, _ = x.shape
    oh, ow = scaled_size(h, r), scaled_size(w, r)
    if oh < 1 or ow < 1:
        raise DomainError(f"rescale({r}) of {h}x{w} collapses to {oh}x{ow}")
    return resize(x, oh, ow)


def resize_input_grad(g: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Gradient of resize w.r.t. its input (scatter of the 4 bilinear taps)."""
    out_h, out_w, c = g.shape
    if out_h == in_h and out_w == in_w:
        return g.copy()
    gx = _resize_grid(in_w, out_w)
    gy = _resize_grid(in_h, out_h)
    xs, ys = np.meshgrid(gx, gy)
    x0, fx = _clamped_taps(xs, in_w)
    y0, fy = _clamped_taps(ys, in_h)
    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    fx = fx.ravel()[:, None]
    fy = fy.ravel()[:, None]
    g2 = g.reshape(out_h * out_w, c)
    acc = np.zeros((in_h * in_w, c))
    np.add.at(acc, (y0 * in_w + x0).ravel(), g2 * (1.0 - fx) * (1.0 - fy))
    np.add.at(acc, (y0 * in_w + x1).ravel(), g2 * fx * (1.0 - fy))
    np.add.at(acc, (y1 * in_w + x0).ravel(), g2 * (1.0 - fx) * fy)
    np.add.at(acc, (y1 * in_w + x1).ravel(), g2 * fx * fy)
    return acc.reshape(in_h, in_w, c)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian taps with radius ceil(3*sigma)."""
    if sigma <= 0:
        return np.array([1.0])
    radius = max(1, int(math.ceil(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur2d(a: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a 2D array with edge-clamped borders."""
    if sigma <= 0:
        return a.astype(np.float64, copy=True)
    k = gaussian_kernel1d(sigma)
    r = (len(k) - 1) // 2
    ap = np.pad(a.astype(np.float64), ((r, r), (0, 0)), mode="edge")
    rows = np.lib.stride_tricks.sliding_window_view(ap, len(k), axis=0)
    a1 = rows @ k
    ap = np.pad(a1, ((0, 0), (r, r)), mode="edge")
    cols = np.lib.stride_tricks.sliding_window_view(ap, len(k), axis=1)
    return cols @ k
