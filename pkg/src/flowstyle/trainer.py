"""Loss, analytic gradients, and Adam training of the stylizer parameters.

The encoder stays frozen; gradients are propagated by hand through the fixed
graph (decoder convs -> meta-smoothing -> perceptual + pixel loss), which
keeps training dependency-free and lets the finite-difference suite pin the
math down. Dataset images are used at their native size, i.e. callers prepare
them at the intended working size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, InputError
from .stylizer import (
    EncoderSpec,
    StylizerParams,
    build_upscale_kernel,
    colorize,
    deconv_stride,
    encode,
    relu,
    sigmoid,
)
from .tensor_core import (
    check_tensor3,
    conv2d,
    conv2d_input_grad,
    conv2d_weight_grad,
    deconv2d,
    deconv2d_input_grad,
    deconv2d_weight_grad,
    rescale,
    resize,
    resize_input_grad,
    scaled_size,
)

ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1.0
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch: int = 2
    steps: int = 200
    seed: int = 0
    r_schedule: tuple = (1.0, 2.0)
    normalized_colorize: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError(f"lambda must be >= 0, got {self.lam}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise DomainError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.lr < 0:
            raise DomainError(f"learning rate must be >= 0, got {self.lr}")
        if self.batch < 1:
            raise DomainError(f"batch size must be >= 1, got {self.batch}")
        if not self.r_schedule:
            raise DomainError("r_schedule must not be empty")
        object.__setattr__(self, "r_schedule", tuple(float(r) for r in self.r_schedule))


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    content: float
    style: float


@dataclass(frozen=True)
class TraceRow:
    step: int
    total: float
    content: float
    style: float


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros(cls, params: StylizerParams) -> "AdamState":
        return cls(
            m={name: np.zeros_like(k) for name, k in params.named_kernels()},
            v={name: np.zeros_like(k) for name, k in params.named_kernels()},
            t=0,
        )


@dataclass
class TrainResult:
    params: StylizerParams
    trace: list
    adam: AdamState


def _encode_cached(img: np.ndarray, enc: EncoderSpec):
    """Forward through the frozen encoder, caching pre-activations for backprop."""
    a = img
    pre_acts = []
    shapes = [img.shape]
    for w in enc.weights():
        h = conv2d(a, w, "same")
        pre_acts.append(h)
        a = relu(h)
        shapes.append(a.shape)
    return a, (pre_acts, shapes)


def _encoder_input_grad(g: np.ndarray, cache, enc: EncoderSpec) -> np.ndarray:
    pre_acts, shapes = cache
    weights = enc.weights()
    for i in reversed(range(len(weights))):
        g = g * (pre_acts[i] > 0)
        g = conv2d_input_grad(g, shapes[i], weights[i], "same")
    return g


def perceptual_distance(a: np.ndarray, b: np.ndarray, enc: EncoderSpec) -> float:
    """Mean squared frozen-feature difference plus mean squared pixel difference."""
    a = check_tensor3(a)
    b = check_tensor3(b)
    if a.shape != b.shape:
        raise DimensionError(f"frame dims differ: {a.shape} vs {b.shape}")
    fa = encode(a, enc)
    fb = encode(b, enc)
    return float(np.mean((fa - fb) ** 2) + np.mean((a - b) ** 2))


def loss(
    content: np.ndarray,
    style: np.ndarray,
    stylized: np.ndarray,
    r: float,
    lam: float,
    enc: EncoderSpec,
) -> LossBreakdown:
    """Content + lambda * style perceptual distances against the r-rescaled inputs."""
    tc = rescale(check_tensor3(content, "content"), r)
    ts = rescale(check_tensor3(style, "style"), r)
    stylized = check_tensor3(stylized, "stylized")
    if tc.shape != stylized.shape or ts.shape != stylized.shape:
        raise DimensionError(
            f"rescaled targets {tc.shape}/{ts.shape} do not match output {stylized.shape}"
        )
    c = perceptual_distance(tc, stylized, enc)
    s = perceptual_distance(ts, stylized, enc)
    return LossBreakdown(total=c + lam * s, content=c, style=s)


def _forward_tape(content, style, r, enc, params, normalized):
    tape = {"r": r}
    tc = rescale(content, r)
    ts = rescale(style, r)
    f_c = encode(content, enc)
    f_s = encode(style, enc)
    z = colorize(f_c, f_s, normalized=normalized)

    # decoder
    a = z
    dec_inputs, dec_pre = [], []
    last = len(params.decoder) - 1
    for i, k in enumerate(params.decoder):
        dec_inputs.append(a)
        h = conv2d(a, k, "same")
        dec_pre.append(h)
        a = sigmoid(h) if i == last else relu(h)
    i_cs = a

    # meta-smoothing
    rs = deconv_stride(r)
    k_r = build_upscale_kernel(r, params.meta)
    up = deconv2d(i_cs, k_r, rs)
    th = scaled_size(i_cs.shape[0], r)
    tw = scaled_size(i_cs.shape[1], r)
    resized = up.shape[0] != th or up.shape[1] != tw
    up2 = resize(up, th, tw) if resized else up
    sm = conv2d(up2, params.smooth, "same")
    pr = conv2d(sm, params.project, "same")
    i_cs_r = np.clip(pr, 0.0, 1.0)

    feats, enc_cache = _encode_cached(i_cs_r, enc)
    f_tc = encode(tc, enc)
    f_ts = encode(ts, enc)

    c_term = float(np.mean((feats - f_tc) ** 2) + np.mean((i_cs_r - tc) ** 2))
    s_term = float(np.mean((feats - f_ts) ** 2) + np.mean((i_cs_r - ts) ** 2))

    tape.update(
        dec_inputs=dec_inputs, dec_pre=dec_pre, i_cs=i_cs, rs=rs, k_r=k_r,
        up=up, resized=resized, up2=up2, sm=sm, pr=pr, i_cs_r=i_cs_r,
        feats=feats, enc_cache=enc_cache, f_tc=f_tc, f_ts=f_ts, tc=tc, ts=ts,
    )
    return c_term, s_term, tape


def _backward_tape(tape, params, enc, lam):
    feats, i_cs_r = tape["feats"], tape["i_cs_r"]
    nf, npx = feats.size, i_cs_r.size
    d_feats = (2.0 / nf) * ((feats - tape["f_tc"]) + lam * (feats - tape["f_ts"]))
    d_out = _encoder_input_grad(d_feats, tape["enc_cache"], enc)
    d_out = d_out + (2.0 / npx) * ((i_cs_r - tape["tc"]) + lam * (i_cs_r - tape["ts"]))

    pr = tape["pr"]
    d_pr = d_out * ((pr > 0.0) & (pr < 1.0))
    sm, up2, up, i_cs = tape["sm"], tape["up2"], tape["up"], tape["i_cs"]

    grads = {}
    grads["project"] = conv2d_weight_grad(d_pr, sm, params.project.shape, "same")
    d_sm = conv2d_input_grad(d_pr, sm.shape, params.project, "same")
    grads["smooth"] = conv2d_weight_grad(d_sm, up2, params.smooth.shape, "same")
    d_up2 = conv2d_input_grad(d_sm, up2.shape, params.smooth, "same")
    d_up = resize_input_grad(d_up2, up.shape[0], up.shape[1]) if tape["resized"] else d_up2
    g_kr = deconv2d_weight_grad(d_up, i_cs, params.meta.shape, tape["rs"])
    grads["meta"] = tape["r"] * g_kr
    d_act = deconv2d_input_grad(d_up, i_cs.shape, tape["k_r"], tape["rs"])

    last = len(params.decoder) - 1
    for i in reversed(range(len(params.decoder))):
        pre = tape["dec_pre"][i]
        if i == last:
            s = sigmoid(pre)
            d_h = d_act * s * (1.0 - s)
        else:
            d_h = d_act * (pre > 0)
        x_in = tape["dec_inputs"][i]
        grads[f"decoder.{i}"] = conv2d_weight_grad(d_h, x_in, params.decoder[i].shape, "same")
        if i > 0:
            d_act = conv2d_input_grad(d_h, x_in.shape, params.decoder[i], "same")
    return grads


def sample_loss(content, style, r, enc, params, lam, normalized=False) -> LossBreakdown:
    """Forward-only loss of one (content, style) pair at factor r."""
    c_term, s_term, _ = _forward_tape(content, style, r, enc, params, normalized)
    return LossBreakdown(total=c_term + lam * s_term, content=c_term, style=s_term)


def backward(batch, params: StylizerParams, enc: EncoderSpec, cfg: TrainConfig, r=None):
    """Mean-batch gradients for every learnable kernel, plus the loss breakdown.

    The frozen encoder receives no gradient by construction.
    """
    if not batch:
        raise InputError("empty batch")
    if r is None:
        r = cfg.r_schedule[0]
    grads = {name: np.zeros_like(k) for name, k in params.named_kernels()}
    cont = sty = 0.0
    for content, style in batch:
        c_term, s_term, tape = _forward_tape(
            content, style, r, enc, params, cfg.normalized_colorize
        )
        g = _backward_tape(tape, params, enc, cfg.lam)
        for name in grads:
            grads[name] += g[name]
        cont += c_term
        sty += s_term
    n = len(batch)
    for name in grads:
        grads[name] /= n
    cont /= n
    sty /= n
    return grads, LossBreakdown(total=cont + cfg.lam * sty, content=cont, style=sty)


def adam_step(params: StylizerParams, grads: dict, state: AdamState, cfg: TrainConfig) -> None:
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for name, k in params.named_kernels():
        g = grads[name]
        state.m[name] = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        state.v[name] = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        params.set(name, k - cfg.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS))


def train(
    dataset,
    cfg: TrainConfig,
    params: StylizerParams,
    enc: EncoderSpec,
    adam: AdamState = None,
) -> TrainResult:
    """Adam-optimize a copy of params on (content, style) pairs.

    Batches cycle a seeded shuffle of the dataset; the upscale factor cycles
    cfg.r_schedule per step. Deterministic for a fixed (seed, dataset order).
    """
    if not dataset:
        raise InputError("empty training dataset")
    work = params.copy()
    state = adam if adam is not None else AdamState.zeros(work)
    rng = np.random.default_rng(cfg.seed)
    order = []
    trace = []
    for step in range(cfg.steps):
        batch = []
        for _ in range(cfg.batch):
            if not order:
                order = list(rng.permutation(len(dataset)))
            batch.append(dataset[order.pop(0)])
        r = cfg.r_schedule[step % len(cfg.r_schedule)]
        grads, lb = backward(batch, work, enc, cfg, r=r)
        trace.append(TraceRow(step=step, total=lb.total, content=lb.content, style=lb.style))
        adam_step(work, grads, state, cfg)
    return TrainResult(params=work, trace=trace, adam=state)


def trace_to_csv(trace, path) -> None:
    with open(path, "w") as fh:
        fh.write("step,total,content,style\n")
        for row in trace:
            fh.write(f"{row.step},{row.total:.10g},{row.content:.10g},{row.style:.10g}\n")


ADAM_MAGIC = b"ADM1"


def save_checkpoint(params: StylizerParams, adam: AdamState, path) -> None:
    """Params in the regular binary format with the Adam state appended."""
    import struct

    from .stylizer import PARAMS_MAGIC, PARAMS_VERSION, _write_kernels

    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<I", PARAMS_VERSION))
        _write_kernels(fh, params.named_kernels())
        fh.write(ADAM_MAGIC)
        fh.write(struct.pack("<Q", adam.t))
        _write_kernels(fh, sorted(adam.m.items()))
        _write_kernels(fh, sorted(adam.v.items()))


def load_checkpoint(path):
    """Returns (params, adam state) from a checkpoint file."""
    import struct

    from .stylizer import PARAMS_MAGIC, PARAMS_VERSION, _params_from_named, _read_kernels

    with open(path, "rb") as fh:
        if fh.read(4) != PARAMS_MAGIC:
            raise InputError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != PARAMS_VERSION:
            raise InputError(f"{path}: unsupported version {version}")
        params = _params_from_named(_read_kernels(fh))
        if fh.read(4) != ADAM_MAGIC:
            raise InputError(f"{path}: missing optimizer state section")
        (t,) = struct.unpack("<Q", fh.read(8))
        m = dict(_read_kernels(fh))
        v = dict(_read_kernels(fh))
    return params, AdamState(m=m, v=v, t=t)


def evaluate(dataset, params, enc, lam: float, r: float = 1.0, normalized=False) -> float:
    """Mean total loss of a dataset under fixed params (no training)."""
    if not dataset:
        raise InputError("empty evaluation dataset")
    total = 0.0
    for content, style in dataset:
        total += sample_loss(content, style, r, enc, params, lam, normalized).total
    return total / len(dataset)
