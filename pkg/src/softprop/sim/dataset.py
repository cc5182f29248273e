"""Synthetic sensing records: simulate, observe the marker through the camera, differentiate."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from typing import Optional, Sequence

import numpy as np

from ..learning.dataset import Dataset
from ..vision import CameraModel, MarkerSpec, PoseTracker, compute_motion_features, project_marker
from .network import ElementNetwork
from .protocols import HEIGHT_FRACTIONS, LoadProtocol, run_protocol

SESSION_GAP_S = 1.0  # idle time between protocols on the global clock


def random_protocols(
    n: int,
    seed: int,
    fps: float = 330.0,
    depth_mm=(3.0, 10.0),
    speed_mm_per_s=(10.0, 20.0),
    slow_speed_mm_per_s=(2.0, 5.0),
    slow_fraction: float = 0.5,
    heights=("H2", "H3"),
    max_cycles: int = 2,
) -> list:
    """Cyclic pushes with random direction, height, depth, cycle count and pauses.

    Each push is fast or, with probability ``slow_fraction``, slow; speeds are
    uniform within the matching range.
    """
    rng = np.random.default_rng(seed)
    for h in heights:
        if h not in HEIGHT_FRACTIONS:
            raise ValueError(f"unknown height {h!r}")
    out = []
    for _ in range(n):
        slow = rng.random() < slow_fraction
        out.append(
            LoadProtocol(
                probe="FlatProbe",
                angle_deg=float(rng.choice([0.0, 45.0, 90.0])),
                height=str(rng.choice(list(heights))),
                depth_mm=float(rng.uniform(*depth_mm)),
                speed_mm_per_s=float(rng.uniform(*(slow_speed_mm_per_s if slow else speed_mm_per_s))),
                hold_s=float(rng.choice([0.0, 0.0, rng.uniform(0.1, 1.0)])),
                cycles=int(rng.integers(1, max_cycles + 1)),
                wait_between_s=float(rng.uniform(0.0, 0.5)),
                retract=True,
                fps=fps,
                sample_waypoints=False,
            )
        )
    return out


def scripted_loop_protocol(fps: float = 330.0, speed_mm_per_s: float = 10.0, depth_mm: float = 6.0) -> LoadProtocol:
    """Fixed cyclic push used for the hysteresis loop-area comparison."""
    return LoadProtocol(
        probe="FlatProbe", angle_deg=0.0, height="H2", depth_mm=depth_mm, speed_mm_per_s=speed_mm_per_s,
        cycles=3, wait_between_s=0.5, retract=True, fps=fps, sample_waypoints=False,
    )


def protocol_duration(p: LoadProtocol) -> float:
    return p.waypoints()[-1][0]


def _observe(args):
    net, proto, cam, spec, seed, index, with_nodes, delta_t = args
    if proto.sample_waypoints:
        proto = LoadProtocol(**{**asdict(proto), "sample_waypoints": False})
    frames = run_protocol(net.clone(), proto)
    rng = np.random.default_rng([seed, index])
    tracker = PoseTracker(cam, spec)
    rest_c = net.X0[net.marker_node_set].mean(axis=0)
    # capture p0 from one observation of the unloaded marker
    tracker.update(project_marker(cam, spec, np.eye(3), rest_c - cam.position_mm, rng))
    times = np.array([f.time for f in frames])
    poses = np.empty((len(frames), 6))
    for i, f in enumerate(frames):
        c = rest_c + f.marker_translation
        corners = project_marker(cam, spec, f.marker_rotation, c - cam.position_mm, rng)
        poses[i] = tracker.update(corners)[0].D
    mf = compute_motion_features(times, poses, delta_t)
    nodes = np.array([f.node_positions.ravel() for f in frames]) if with_nodes else None
    return dict(
        t=times,
        probe=np.array([f.probe_position for f in frames]),
        D=mf.D,
        D_dot=mf.D_dot,
        D_ddot=mf.D_ddot,
        warmup=mf.warmup,
        wrench=np.array([f.reaction_wrench for f in frames]),
        nodes=nodes,
    )


def gen_dataset(
    net: ElementNetwork,
    protocols: Sequence[LoadProtocol],
    camera: Optional[CameraModel] = None,
    seed: int = 0,
    splits: Optional[Sequence[str]] = None,
    with_nodes: bool = False,
    delta_t: float = 0.015,
    workers: int = 1,
    max_records_per_protocol: Optional[int] = None,
) -> Dataset:
    """Simulate every protocol on a clone of ``net`` and assemble aligned records.

    Protocol ``i`` is tagged ``splits[i]`` (default all ``"train"``) and placed
    on a global clock after the previous one plus a fixed gap, so timestamps
    are unique across the dataset. Observation noise for protocol ``i`` comes
    from ``default_rng([seed, i])``, which keeps results identical whatever
    the worker count. ``max_records_per_protocol`` keeps an even stride of
    each protocol's frames after the rate features are computed at full rate.
    """
    protocols = list(protocols)
    if not protocols:
        return Dataset.empty(with_nodes)
    cam = camera or CameraModel.for_resolution(640, 360)
    spec = MarkerSpec()
    splits = list(splits) if splits is not None else ["train"] * len(protocols)
    if len(splits) != len(protocols):
        raise ValueError("one split tag per protocol")
    jobs = [(net, p, cam, spec, seed, i, with_nodes, delta_t) for i, p in enumerate(protocols)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_observe, jobs))
    else:
        results = [_observe(j) for j in jobs]
    parts, offset = [], 0.0
    for i, (p, r) in enumerate(zip(protocols, results)):
        if max_records_per_protocol:
            stride = -(-len(r["t"]) // max_records_per_protocol)
            r = {k: (v[::stride] if v is not None else None) for k, v in r.items()}
        n = len(r["t"])
        parts.append(
            Dataset(
                split=np.full(n, splits[i], dtype="<U5"),
                protocol=np.full(n, i),
                t=r["t"] + offset,
                probe_mm=r["probe"],
                warmup=r["warmup"],
                D=r["D"],
                D_dot=r["D_dot"],
                D_ddot=r["D_ddot"],
                wrench=r["wrench"],
                nodes=r["nodes"],
            )
        )
        offset += protocol_duration(p) + SESSION_GAP_S
    ds = Dataset.concat(parts)
    ds.validate()
    return ds


def protocols_to_dicts(protocols) -> list:
    return [asdict(p) for p in protocols]
