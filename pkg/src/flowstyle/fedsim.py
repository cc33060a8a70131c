"""Deterministic edge-cloud averaging simulation.

N edge nodes retrain local copies of the stylizer on their own data; after a
fixed per-round image budget the cloud averages all edge parameter sets
coordinate-wise and redistributes the result. The cloud copy doubles as a
backup: a crashed edge restores from it bit-exactly. Latency is accounted
symbolically from configured per-sync values, never by sleeping.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, EdgeUnavailableError, InputError
from .stylizer import EncoderSpec, StylizerParams, init_stylizer_params
from .synth import frame_pairs
from .trainer import TrainConfig, TrainResult, evaluate, train

ACTIVE = "active"
CRASHED = "crashed"


def derive_seed(master: int, *parts: int) -> int:
    """Stable stream-splitting: mixes the master seed with integer tags."""
    x = (master & 0xFFFFFFFFFFFFFFFF) ^ 0x9E3779B97F4A7C15
    for p in parts:
        x ^= (p & 0xFFFFFFFFFFFFFFFF) + 0x9E3779B97F4A7C15 + ((x << 6) & 0xFFFFFFFFFFFFFFFF) + (x >> 2)
        x &= 0xFFFFFFFFFFFFFFFF
        x ^= x >> 30
        x = (x * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        x ^= x >> 27
    return x & 0x7FFFFFFF


@dataclass
class EdgeNode:
    id: int
    params: StylizerParams
    dataset: list = field(repr=False, default_factory=list)
    images_seen: int = 0
    status: str = ACTIVE
    uplink_s: float = 0.0
    downlink_s: float = 0.0


@dataclass
class CloudNode:
    params: StylizerParams
    round: int = 0


@dataclass(frozen=True)
class SyncPolicy:
    images_per_round: int = 4000
    participants: int = 1

    def __post_init__(self):
        if self.images_per_round < 1:
            raise InputError(f"images_per_round must be >= 1, got {self.images_per_round}")
        if self.participants < 1:
            raise InputError(f"participants must be >= 1, got {self.participants}")


def local_round(
    edge: EdgeNode,
    enc: EncoderSpec,
    cfg: TrainConfig,
    images_per_round: int,
    seed: int,
) -> TrainResult:
    """Retrain one edge on its local data for one sync period."""
    if edge.status != ACTIVE:
        raise EdgeUnavailableError(f"edge {edge.id} is crashed")
    steps = math.ceil(images_per_round / cfg.batch)
    local_cfg = replace(cfg, steps=steps, seed=seed)
    result = train(edge.dataset, local_cfg, edge.params, enc)
    edge.params = result.params
    edge.images_seen += steps * cfg.batch
    return result


def aggregate(params_list) -> StylizerParams:
    """Coordinate-wise mean of parameter sets, in list order."""
    if not params_list:
        raise InputError("aggregate needs at least one parameter set")
    first = params_list[0]
    names = [name for name, _ in first.named_kernels()]
    for p in params_list[1:]:
        for name in names:
            if p.get(name).shape != first.get(name).shape:
                raise DimensionError(f"kernel {name} shapes differ across edges")
    if len(params_list) == 1:
        return first.copy()
    out = first.copy()
    for name in names:
        stacked = np.stack([p.get(name) for p in params_list])
        out.set(name, stacked.mean(axis=0))
    return out


def aggregate_edges(edges) -> StylizerParams:
    """Aggregate edge parameters in edge-id order, so the result is invariant
    to how the edge list happens to be ordered."""
    return aggregate([e.params for e in sorted(edges, key=lambda e: e.id)])


def distribute(cloud: CloudNode, edges) -> None:
    """Copy the cloud parameters to every active edge (crashed edges keep theirs)."""
    for edge in edges:
        if edge.status == ACTIVE:
            edge.params = cloud.params.copy()


def crash(edge: EdgeNode) -> None:
    edge.status = CRASHED


def restore(edge: EdgeNode, cloud: CloudNode) -> bool:
    """Restore a crashed edge from the cloud backup; no-op (with a warning) if active."""
    if edge.status == ACTIVE:
        warnings.warn(f"edge {edge.id} is active; restore skipped", RuntimeWarning)
        return False
    edge.params = cloud.params.copy()
    edge.status = ACTIVE
    return True


@dataclass
class SimResult:
    loss_curve: list          # (round, held-out mean total loss)
    events: list              # dicts: round / edge / event / latency_s
    cloud: CloudNode
    edges: list
    traces: dict              # edge id -> list of per-round loss traces


def run_simulation(
    n_edges: int,
    rounds: int,
    policy: SyncPolicy,
    train_cfg: TrainConfig,
    seed: int,
    image_size: int = 32,
    pairs_per_edge: int = 8,
    holdout_pairs: int = 8,
    uplink_s: float = 0.0,
    downlink_s: float = 0.0,
) -> SimResult:
    """Run the full loop: local retrain on every edge, average at the cloud,
    redistribute, and score a fixed held-out set after each round.

    Deterministic in the master seed: edge datasets, the initial model, the
    held-out set, and every local shuffle derive from it.
    """
    if n_edges < 1:
        raise InputError(f"need at least one edge, got {n_edges}")
    if rounds < 1:
        raise InputError(f"need at least one round, got {rounds}")

    enc = EncoderSpec(seed=derive_seed(seed, 1))
    init = init_stylizer_params(seed=derive_seed(seed, 2), working_size=image_size)
    cloud = CloudNode(params=init)
    edges = [
        EdgeNode(
            id=i,
            params=init.copy(),
            dataset=frame_pairs(pairs_per_edge, image_size, derive_seed(seed, 3, i)),
            uplink_s=uplink_s,
            downlink_s=downlink_s,
        )
        for i in range(n_edges)
    ]
    holdout = frame_pairs(holdout_pairs, image_size, derive_seed(seed, 4))
    eval_rs = sorted(set(train_cfg.r_schedule))

    def holdout_loss() -> float:
        # mean of the training objective over the scheduled scale factors
        return sum(
            evaluate(holdout, cloud.params, enc, train_cfg.lam, r=r,
                     normalized=train_cfg.normalized_colorize)
            for r in eval_rs
        ) / len(eval_rs)

    events = []
    traces = {e.id: [] for e in edges}
    loss_curve = [(0, holdout_loss())]
    for rnd in range(1, rounds + 1):
        for edge in sorted(edges, key=lambda e: e.id):
            result = local_round(
                edge, enc, train_cfg, policy.images_per_round,
                seed=derive_seed(seed, 5, rnd, edge.id),
            )
            traces[edge.id].append(result.trace)
            events.append(
                {"round": rnd, "edge": edge.id, "event": "upload", "latency_s": edge.uplink_s}
            )
        cloud.params = aggregate_edges(edges)
        cloud.round += 1
        events.append({"round": rnd, "edge": None, "event": "aggregate", "latency_s": 0.0})
        distribute(cloud, edges)
        for edge in edges:
            events.append(
                {"round": rnd, "edge": edge.id, "event": "download", "latency_s": edge.downlink_s}
            )
        loss_curve.append((rnd, holdout_loss()))
    return SimResult(loss_curve=loss_curve, events=events, cloud=cloud, edges=edges, traces=traces)


def loss_curve_to_csv(curve, path) -> None:
    with open(path, "w") as fh:
        fh.write("round,holdout_loss\n")
        for rnd, value in curve:
            fh.write(f"{rnd},{value:.10g}\n")
