"""Command-line harness.

Subcommands: stylize, flow, interp, run, train, fedsim, bench, compare,
speedup. The `run` pipeline plays both roles of the deployment story in one
process: key frames go through the full stylizer (the simulated edge server),
intermediates are produced by flow warping (the simulated mobile side).
Reports keep measured compute and configured network latency in separate
columns so they can never be conflated.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fedsim as fs
from .errors import FlowstyleError, InputError
from .frame_interp import FrameSequence, warp
from .frame_io import (
    frame_name,
    keys_from_interval,
    list_frame_files,
    load_frame_dir,
    read_frame,
    read_key_indices,
    write_frame,
)
from .metrics import (
    SpeedupInputs,
    ms_ssim,
    per_frame_ratio,
    speedup_curve,
    speedup_exact,
    speedup_approx,
    speedup_rows_to_csv,
)
from .optical_flow import FlowConfig, estimate_flow, flow_magnitude_stats, read_flo, write_flo
from .stylizer import (
    EncoderSpec,
    init_stylizer_params,
    load_stylizer_params,
    save_stylizer_params,
    stylize,
)
from .synth import frame_pairs, smooth_texture, translate_frame
from .tensor_core import resize
from .trainer import TrainConfig, trace_to_csv, train


@dataclass
class PipelineConfig:
    input_dir: str = None
    out_dir: str = None
    style_path: str = None
    key_interval: int = 10
    keys_file: str = None
    scale: float = 1.0
    working_size: int = 64
    seed: int = 0
    flow_window: int = 5
    flow_eps: float = 1e-4
    flow_sigma: float = 1.0
    params_path: str = None
    normalized_colorize: bool = False
    # {"512x256": {"edge": 0.003, "cloud_la": 0.028, ...}} seconds per frame
    latency_table: dict = field(default_factory=dict)
    latency_destination: str = "edge"

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            data = json.load(fh)
        cfg = cls()
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise InputError(f"{path}: unknown config key {key!r}")
            setattr(cfg, key, value)
        return cfg

    def flow_config(self) -> FlowConfig:
        return FlowConfig(window=self.flow_window, eps=self.flow_eps, sigma=self.flow_sigma)


def _resolution_key(frame: np.ndarray) -> str:
    return f"{frame.shape[1]}x{frame.shape[0]}"


def _load_params(cfg: PipelineConfig):
    if cfg.params_path:
        return load_stylizer_params(cfg.params_path)
    return init_stylizer_params(seed=cfg.seed, working_size=cfg.working_size)


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Stylize key frames, interpolate the rest, emit frames + manifest + report."""
    if not cfg.input_dir or not cfg.out_dir:
        raise InputError("run needs an input directory and an output directory")
    if not cfg.style_path:
        raise InputError("run needs a style image (--style)")
    frames, _ = load_frame_dir(cfg.input_dir)
    n = len(frames)
    if cfg.keys_file:
        keys = read_key_indices(cfg.keys_file, n)
    else:
        keys = keys_from_interval(n, cfg.key_interval)
    style = read_frame(cfg.style_path)
    enc = EncoderSpec(seed=cfg.seed)
    params = _load_params(cfg)
    seq = FrameSequence(frames, keys)
    flow_cfg = cfg.flow_config()

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"complete": False, "frames": []}

    try:
        # edge side: full stylization of key frames
        stylized_keys = []
        t0 = time.perf_counter()
        for ki in keys:
            out = stylize(
                frames[ki], style, cfg.scale, enc, params,
                working_size=cfg.working_size,
                normalized_colorize=cfg.normalized_colorize,
            )
            stylized_keys.append(out.image)
        stylize_total = time.perf_counter() - t0

        oh, ow = stylized_keys[0].shape[0], stylized_keys[0].shape[1]

        # flow on the originals, aligned to the stylized resolution
        aligned = [
            f if f.shape[0] == oh and f.shape[1] == ow else resize(f, oh, ow)
            for f in frames
        ]
        inter = seq.intermediate_indices
        flows = {}
        t0 = time.perf_counter()
        for p in inter:
            kq = keys[seq.governing_key(p)]
            flows[p] = estimate_flow(aligned[p], aligned[kq], flow_cfg)
        flow_total = time.perf_counter() - t0

        # mobile side: warp intermediates from their governing keys
        warped = {}
        t0 = time.perf_counter()
        for p in inter:
            warped[p] = warp(flows[p], stylized_keys[seq.governing_key(p)])
        warp_total = time.perf_counter() - t0

        for i in range(n):
            name = frame_name(i, n)
            if i in warped:
                frame, kind = warped[i], "interpolated"
            else:
                frame, kind = stylized_keys[keys.index(i)], "stylized-key"
            write_frame(out_dir / name, frame)
            manifest["frames"].append({"index": i, "output": name, "kind": kind})
        manifest["complete"] = True
    finally:
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)

    res_key = _resolution_key(frames[0])
    latency = cfg.latency_table.get(res_key, {}).get(cfg.latency_destination)
    t_d = stylize_total / len(keys)
    t_i = warp_total / len(inter) if inter else 0.0
    report = {
        "n_frames": n,
        "n_keys": len(keys),
        "n_intermediates": len(inter),
        "input_resolution": res_key,
        "output_resolution": f"{ow}x{oh}",
        "measured": {
            "stylize_total_s": stylize_total,
            "stylize_per_frame_s": t_d,
            "flow_total_s": flow_total,
            "flow_per_frame_s": flow_total / len(inter) if inter else 0.0,
            "warp_total_s": warp_total,
            "warp_per_frame_s": t_i,
        },
        "simulated_latency": {
            "destination": cfg.latency_destination,
            "configured": latency is not None,
            "per_key_frame_s": latency,
            "total_s": latency * len(keys) if latency is not None else None,
            "key_frames": [
                {"index": ki, "latency_s": latency} for ki in keys
            ],
        },
        "speedup": {
            "per_frame_ratio": per_frame_ratio(t_d, t_i) if inter and t_i > 0 else None,
            "exact": speedup_exact(SpeedupInputs(n, len(keys), t_d, t_i))
            if inter and t_i > 0
            else 1.0,
            "approx": speedup_approx(SpeedupInputs(n, len(keys), t_d, max(t_i, 1e-12)))
            if inter
            else 1.0,
        },
    }
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    return report


@dataclass(frozen=True)
class BenchRow:
    resolution: str
    trials: int
    stylize_mean_s: float
    warp_mean_s: float
    measured_ratio: float
    eq6_exact: float
    eq6_approx: float


def bench(
    resolutions,
    trials: int,
    scale: float,
    seed: int,
    video_frames: int = 300,
    key_interval: int = 30,
) -> list:
    """Measure per-frame stylize and warp wall time at each nominal resolution.

    Both operations are timed on frames of the listed resolution; the
    stylizer runs with working size = min(W, H) and the configured upscale
    factor. Eq-6-style whole-video predictions use the measured means.
    """
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    rows = []
    for res in resolutions:
        try:
            w, h = (int(t) for t in res.lower().split("x"))
        except ValueError:
            raise InputError(f"bad resolution {res!r}, expected WxH") from None
        content = smooth_texture(h, w, fs.derive_seed(seed, h, w, 1))
        style = smooth_texture(h, w, fs.derive_seed(seed, h, w, 2))
        moved = translate_frame(content, 0.6, 0.3)
        enc = EncoderSpec(seed=seed)
        working = min(w, h)
        params = init_stylizer_params(seed=seed, working_size=working)
        flow = estimate_flow(moved, content, FlowConfig())

        t0 = time.perf_counter()
        for _ in range(trials):
            stylize(content, style, scale, enc, params, working_size=working)
        t_d = (time.perf_counter() - t0) / trials

        t0 = time.perf_counter()
        for _ in range(trials):
            warp(flow, content)
        t_i = (time.perf_counter() - t0) / trials

        keys = max(1, -(-video_frames // key_interval))
        s = SpeedupInputs(video_frames, keys, t_d, t_i)
        rows.append(
            BenchRow(
                resolution=res,
                trials=trials,
                stylize_mean_s=t_d,
                warp_mean_s=t_i,
                measured_ratio=per_frame_ratio(t_d, t_i),
                eq6_exact=speedup_exact(s),
                eq6_approx=speedup_approx(s),
            )
        )
    return rows


def compare_dirs(dir_a, dir_b) -> tuple:
    """Per-frame MS-SSIM for matching filenames; returns (rows, mean)."""
    files_a = {p.name: p for p in list_frame_files(dir_a)}
    files_b = {p.name: p for p in list_frame_files(dir_b)}
    if set(files_a) != set(files_b):
        only_a = sorted(set(files_a) - set(files_b))
        only_b = sorted(set(files_b) - set(files_a))
        raise InputError(
            f"directories do not match: only in A {only_a[:5]}, only in B {only_b[:5]}"
        )
    rows = []
    for name in sorted(files_a):
        score = ms_ssim(read_frame(files_a[name]), read_frame(files_b[name]))
        rows.append((name, score))
    mean = sum(s for _, s in rows) / len(rows)
    return rows, mean


def _write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cfg_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    for name, attr in [
        ("input", "input_dir"), ("out", "out_dir"), ("style", "style_path"),
        ("key_interval", "key_interval"), ("keys", "keys_file"), ("scale", "scale"),
        ("working_size", "working_size"), ("seed", "seed"), ("params", "params_path"),
    ]:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, attr, value)
    return cfg


def cmd_stylize(args) -> int:
    enc = EncoderSpec(seed=args.seed)
    params = (
        load_stylizer_params(args.params)
        if args.params
        else init_stylizer_params(seed=args.seed, working_size=args.working_size)
    )
    content = read_frame(args.content)
    style = read_frame(args.style)
    out = stylize(content, style, args.scale, enc, params, working_size=args.working_size)
    write_frame(args.out, out.image)
    h, w = out.image.shape[0], out.image.shape[1]
    print(f"stylized {args.content} -> {args.out} ({w}x{h}, r={args.scale})")
    return 0


def cmd_flow(args) -> int:
    frames, _ = load_frame_dir(args.frames)
    n = len(frames)
    keys = read_key_indices(args.keys, n) if args.keys else keys_from_interval(n, args.key_interval)
    seq = FrameSequence(frames, keys)
    out = _outdir(args)
    cfg = FlowConfig(window=args.window, eps=args.eps, sigma=args.sigma)
    rows = []
    for p in seq.intermediate_indices:
        kq = keys[seq.governing_key(p)]
        f = estimate_flow(frames[p], frames[kq], cfg)
        write_flo(f, out / f"{Path(frame_name(p, n)).stem}.flo")
        stats = flow_magnitude_stats(f)
        rows.append((p, kq, f"{stats.mean_magnitude:.6g}", f"{stats.max_magnitude:.6g}"))
    _write_csv(out / "flow_stats.csv", ["frame", "key", "mean_mag", "max_mag"], rows)
    print(f"wrote {len(rows)} flow fields to {out}")
    return 0


def cmd_interp(args) -> int:
    frames, _ = load_frame_dir(args.frames)
    n = len(frames)
    keys = read_key_indices(args.keys, n) if args.keys else keys_from_interval(n, args.key_interval)
    seq = FrameSequence(frames, keys)
    key_files = list_frame_files(args.stylized_keys)
    if len(key_files) != len(keys):
        raise InputError(f"expected {len(keys)} stylized keys, found {len(key_files)}")
    stylized = [read_frame(p) for p in key_files]
    flow_dir = Path(args.flows)
    flows = {}
    for p in seq.intermediate_indices:
        flo = flow_dir / f"{Path(frame_name(p, n)).stem}.flo"
        if not flo.exists():
            raise InputError(f"missing flow file {flo}")
        flows[p] = read_flo(flo)
    out = _outdir(args)
    from .frame_interp import interpolate_sequence

    warped = interpolate_sequence(stylized, flows, seq)
    for p, frame in warped.items():
        write_frame(out / frame_name(p, n), frame)
    print(f"interpolated {len(warped)} frames into {out}")
    return 0


def cmd_run(args) -> int:
    cfg = _cfg_from_args(args)
    report = run_pipeline(cfg)
    m = report["measured"]
    print(
        f"{report['n_frames']} frames: {report['n_keys']} stylized keys "
        f"({m['stylize_per_frame_s']:.4f}s each), {report['n_intermediates']} interpolated "
        f"({m['warp_per_frame_s']:.6f}s each)"
    )
    lat = report["simulated_latency"]
    if lat["configured"]:
        print(
            f"simulated {lat['destination']} latency: {lat['per_key_frame_s']}s per key frame, "
            f"{lat['total_s']:.6g}s total"
        )
    sp = report["speedup"]
    if sp["per_frame_ratio"] is not None:
        print(
            f"speedup: per-frame {sp['per_frame_ratio']:.1f}x, video exact {sp['exact']:.2f}x, "
            f"approx {sp['approx']:.2f}x"
        )
    return 0


def cmd_train(args) -> int:
    out = _outdir(args)
    if args.content_dir and args.style_dir:
        contents, _ = load_frame_dir(args.content_dir)
        styles, _ = load_frame_dir(args.style_dir)
        if len(contents) != len(styles):
            raise InputError("content and style directories must pair up 1:1")
        dataset = list(zip(contents, styles))
    else:
        dataset = frame_pairs(args.pairs, args.size, args.seed)
    cfg = TrainConfig(steps=args.steps, seed=args.seed, lr=args.lr, lam=args.lam,
                      batch=args.batch)
    enc = EncoderSpec(seed=args.seed)
    params = init_stylizer_params(seed=args.seed, working_size=dataset[0][0].shape[0])
    result = train(dataset, cfg, params, enc)
    save_stylizer_params(result.params, out / "params.fsty")
    trace_to_csv(result.trace, out / "loss_trace.csv")
    first, last = result.trace[0], result.trace[-1]
    print(
        f"trained {cfg.steps} steps on {len(dataset)} pairs: "
        f"loss {first.total:.5f} -> {last.total:.5f}"
    )
    return 0


def cmd_fedsim(args) -> int:
    out = _outdir(args)
    # JSON config supplies defaults; explicit flags override
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    edges = args.edges if args.edges is not None else raw.get("edges", 1)
    edge_counts = [int(t) for t in str(edges).split(",")]
    rounds = args.rounds if args.rounds is not None else int(raw.get("rounds", 6))
    images = (
        args.images_per_round
        if args.images_per_round is not None
        else int(raw.get("images_per_round", 64))
    )
    image_size = args.image_size if args.image_size is not None else int(raw.get("image_size", 32))
    pairs = (
        args.pairs_per_edge
        if args.pairs_per_edge is not None
        else int(raw.get("pairs_per_edge", 8))
    )
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    policy = fs.SyncPolicy(images_per_round=images, participants=max(edge_counts))
    cfg = TrainConfig(seed=seed)
    entry = raw.get("latency_table", {}).get(raw.get("resolution", ""), {})
    uplink = float(entry.get("up", 0.0))
    downlink = float(entry.get("down", 0.0))
    for n in edge_counts:
        result = fs.run_simulation(
            n, rounds, policy, cfg, seed,
            image_size=image_size, pairs_per_edge=pairs,
            uplink_s=uplink, downlink_s=downlink,
        )
        fs.loss_curve_to_csv(result.loss_curve, out / f"loss_N{n}.csv")
        with open(out / f"events_N{n}.jsonl", "w") as fh:
            for event in result.events:
                fh.write(json.dumps(event) + "\n")
        print(
            f"N={n}: holdout loss {result.loss_curve[0][1]:.5f} -> {result.loss_curve[-1][1]:.5f}"
        )
    return 0


def cmd_bench(args) -> int:
    out = _outdir(args)
    rows = bench(
        [r.strip() for r in args.resolutions.split(",")],
        args.trials, args.scale, args.seed,
    )
    _write_csv(
        out / "bench.csv",
        ["resolution", "trials", "stylize_mean_s", "warp_mean_s",
         "measured_ratio", "eq6_exact", "eq6_approx"],
        [
            (r.resolution, r.trials, f"{r.stylize_mean_s:.6g}", f"{r.warp_mean_s:.6g}",
             f"{r.measured_ratio:.6g}", f"{r.eq6_exact:.6g}", f"{r.eq6_approx:.6g}")
            for r in rows
        ],
    )
    for r in rows:
        print(
            f"{r.resolution}: stylize {r.stylize_mean_s:.4f}s, warp {r.warp_mean_s:.6f}s, "
            f"ratio {r.measured_ratio:.1f}x"
        )
    return 0


def cmd_compare(args) -> int:
    rows, mean = compare_dirs(args.dir_a, args.dir_b)
    if args.out:
        out = _outdir(args)
        _write_csv(out / "ms_ssim.csv", ["frame", "ms_ssim"],
                   [(name, f"{score:.8f}") for name, score in rows])
    for name, score in rows:
        print(f"{name}: {score:.6f}")
    print(f"mean MS-SSIM over {len(rows)} frames: {mean:.6f}")
    return 0


def cmd_speedup(args) -> int:
    out = _outdir(args) if args.out else None
    if args.pairs:
        rows = []
        for token in args.pairs.split(","):
            try:
                t_d, t_i = (float(v) for v in token.split("/"))
            except ValueError:
                raise InputError(f"bad t_d/t_i pair {token!r}") from None
            rows.append((t_d, t_i, per_frame_ratio(t_d, t_i)))
        for t_d, t_i, ratio in rows:
            print(f"t_d={t_d} t_i={t_i}: per-frame speedup {ratio:.10g}x")
        if out:
            _write_csv(out / "per_frame_speedup.csv", ["t_d", "t_i", "per_frame_speedup"],
                       [(a, b, f"{c:.10g}") for a, b, c in rows])
    if args.td is not None and args.ti is not None:
        intervals = [int(t) for t in args.intervals.split(",")]
        rows = speedup_curve(args.n, intervals, args.td, args.ti)
        for r in rows:
            print(
                f"interval {r.interval}: keys {r.key_frames}, exact {r.exact:.6g}x, "
                f"approx {r.approx:.6g}x"
            )
        if out:
            speedup_rows_to_csv(rows, out / "speedup_curve.csv")
    elif not args.pairs:
        raise InputError("speedup needs --pairs and/or (--td with --ti)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="flowstyle",
        description="Key-frame video stylization with flow-based interpolation",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stylize", help="stylize one frame")
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--working-size", type=int, default=64)
    p.add_argument("--params")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("flow", help="estimate flow fields for intermediates")
    p.add_argument("--frames", required=True)
    p.add_argument("--key-interval", type=int, default=10)
    p.add_argument("--keys")
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("interp", help="warp stylized keys into intermediates")
    p.add_argument("--frames", required=True, help="original frames (for indexing)")
    p.add_argument("--stylized-keys", required=True)
    p.add_argument("--flows", required=True)
    p.add_argument("--key-interval", type=int, default=10)
    p.add_argument("--keys")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("run", help="full pipeline: stylize keys + interpolate")
    p.add_argument("--config", help="JSON PipelineConfig")
    p.add_argument("--input")
    p.add_argument("--style")
    p.add_argument("--key-interval", type=int, dest="key_interval")
    p.add_argument("--keys")
    p.add_argument("--scale", type=float)
    p.add_argument("--working-size", type=int, dest="working_size")
    p.add_argument("--seed", type=int)
    p.add_argument("--params")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train", help="train stylizer parameters")
    p.add_argument("--content-dir")
    p.add_argument("--style-dir")
    p.add_argument("--pairs", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fedsim", help="edge-cloud averaging simulation")
    p.add_argument("--edges", help="edge count, or comma list for curves (default 1)")
    p.add_argument("--rounds", type=int)
    p.add_argument("--images-per-round", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--pairs-per-edge", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON: edges/rounds/images_per_round/seed/latency_table")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fedsim)

    p = sub.add_parser("bench", help="per-frame stylize vs warp timings")
    p.add_argument("--resolutions", default="256x256")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--scale", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare", help="MS-SSIM between two frame directories")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("speedup", help="speedup model tables")
    p.add_argument("--pairs", help="comma list of t_d/t_i, e.g. 0.52/0.0006,1.51/0.02")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--intervals", default="1,2,5,10,30,60")
    p.add_argument("--td", type=float)
    p.add_argument("--ti", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_speedup)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FlowstyleError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
