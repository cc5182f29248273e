"""Load protocols: probe pushes, step-hold, constant force and cyclic loading.

Heights H1..H4 and face locations L1..L4 are fractions of the scaffold
height and of the face beam length respectively; both default tables live in
the config and can be overridden per call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional, Union

import numpy as np

from ..errors import ConfigError, DomainError, SolverError
from ..io import read_csv_array, write_csv
from .network import ElementNetwork, Load, SimFrame, solve_quasistatic

PROBES = ("FlatProbe", "Roller", "CylindricalRod", "PointForce")
HEIGHT_FRACTIONS = {"H1": 0.3, "H2": 0.4, "H3": 0.5, "H4": 0.85}
LOCATION_FRACTIONS = {"L1": 0.2, "L2": 0.4, "L3": 0.6, "L4": 0.8}
FACE_ANGLES = {"primary": 0.0, "secondary": 90.0}

TRAJECTORY_HEADER = ["t_s", "Dx", "Dy", "Dz", "Drx", "Dry", "Drz", "Fx", "Fy", "Fz", "Tx", "Ty", "Tz", "contact_N"]


def push_direction(alpha_deg: float, tilt_deg: float = 0.0) -> np.ndarray:
    """Unit push direction: α rotates from +x toward -y, γ tilts downward."""
    a, g = np.deg2rad(alpha_deg), np.deg2rad(tilt_deg)
    return np.array([np.cos(g) * np.cos(a), -np.cos(g) * np.sin(a), -np.sin(g)])


def beam_point(net: ElementNetwork, beam_index: int, s: float):
    """Material point at arc fraction ``s`` of a beam as ``(node_ids, weights)``."""
    beam = net.scaffold.beams[beam_index]
    k = int(np.clip(np.searchsorted(beam.s, s) - 1, 0, len(beam.s) - 2))
    f = (s - beam.s[k]) / (beam.s[k + 1] - beam.s[k])
    return [beam.nodes[k], beam.nodes[k + 1]], [1.0 - f, f]


def _arc_at_height(net: ElementNetwork, beam_index: int, z: float) -> float:
    beam = net.scaffold.beams[beam_index]
    zs = net.X0[beam.nodes, 2]
    return float(np.interp(z, zs, beam.s))


def contact_points(net: ElementNetwork, direction, z_mm: float, tol_mm: float = 0.5):
    """Beams first met by a plane advancing along ``direction`` at height ``z_mm``.

    Returns ``(points, beam_ids, origin)`` where ``origin`` is the plane
    coordinate at first touch.
    """
    n = np.asarray(direction, float)
    cand = []
    for bi in range(len(net.scaffold.beams)):
        pt = beam_point(net, bi, _arc_at_height(net, bi, z_mm))
        x = np.dot(pt[1], net.X0[pt[0]])
        cand.append((float(x @ n), bi, pt))
    first = min(c[0] for c in cand)
    chosen = [c for c in cand if c[0] <= first + tol_mm]
    return [c[2] for c in chosen], [c[1] for c in chosen], first


def resolve_height(net: ElementNetwork, height, fractions: Optional[dict] = None) -> float:
    if isinstance(height, str):
        table = fractions or HEIGHT_FRACTIONS
        if height not in table:
            raise ConfigError(f"unknown height label {height!r}", key="height")
        return table[height] * float(net.X0[:, 2].max())
    return float(height)


@dataclass
class LoadProtocol:
    """One loading experiment.

    Each cycle ramps in to ``depth_mm`` at ``speed_mm_per_s`` (or applies
    ``force_N`` for a PointForce), holds ``hold_s``, then, if ``retract``,
    unloads at the same speed and waits ``wait_between_s``. ``fps`` sets the
    frame rate of the emitted trajectory; ramp ends are sampled as extra
    frames unless ``sample_waypoints`` is off.
    """

    probe: str = "FlatProbe"
    angle_deg: float = 0.0
    height: Union[str, float] = "H2"
    tilt_deg: float = 0.0
    depth_mm: float = 5.0
    speed_mm_per_s: float = 3.0
    hold_s: float = 0.0
    cycles: int = 1
    wait_between_s: float = 0.0
    force_N: float = 0.0
    retract: bool = False
    fps: float = 330.0
    force_ramp_s: float = 1e-3
    width_mm: float = 10.0  # FlatProbe contact band along z; other probes touch a line
    sample_waypoints: bool = True  # False keeps frames strictly uniform (camera streams)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.probe not in PROBES:
            raise ConfigError(f"probe must be one of {PROBES}", key="probe")
        if self.depth_mm < 0:
            raise ConfigError("depth must be >= 0", key="depth_mm")
        if self.depth_mm > 0 and not self.speed_mm_per_s > 0:
            raise ConfigError("speed must be > 0 when depth > 0", key="speed_mm_per_s")
        if self.cycles < 1:
            raise ConfigError("cycles must be >= 1", key="cycles")
        if self.hold_s < 0 or self.wait_between_s < 0:
            raise ConfigError("hold and wait times must be >= 0", key="hold_s")
        if not self.fps > 0:
            raise ConfigError("fps must be > 0", key="fps")
        if self.probe == "PointForce" and self.force_N < 0:
            raise ConfigError("force must be >= 0", key="force_N")

    @property
    def force_controlled(self) -> bool:
        return self.probe == "PointForce"

    @classmethod
    def from_dict(cls, d: dict) -> "LoadProtocol":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown protocol keys {sorted(unknown)}", key=sorted(unknown)[0])
        return cls(**d)

    def waypoints(self):
        """Piecewise-linear schedule ``[(t, value), ...]`` of depth (mm) or force (N)."""
        return self._plan()[0]

    def cycle_ends(self):
        """End time of every cycle (after its wait, if any)."""
        return self._plan()[1]

    def _plan(self):
        if self.force_controlled:
            amp, ramp = self.force_N, self.force_ramp_s
        else:
            amp = self.depth_mm
            ramp = self.depth_mm / self.speed_mm_per_s if self.depth_mm > 0 else 0.0
        pts, ends = [(0.0, 0.0)], []
        t = 0.0
        for c in range(self.cycles):
            if ramp > 0:
                t += ramp
                pts.append((t, amp))
            if self.hold_s > 0:
                t += self.hold_s
                pts.append((t, amp))
            if self.retract:
                if ramp > 0:
                    t += ramp
                    pts.append((t, 0.0))
                if self.wait_between_s > 0 and c < self.cycles - 1:
                    t += self.wait_between_s
                    pts.append((t, 0.0))
            ends.append(t)
        return pts, ends

    def schedule(self):
        """Frame times and load values: the fixed-rate grid plus every waypoint."""
        pts = self.waypoints()
        t_end = pts[-1][0]
        grid = np.arange(1, int(math.floor(t_end * self.fps + 1e-9)) + 1) / self.fps
        tw = np.array([p[0] for p in pts])
        extra = tw[1:] if self.sample_waypoints else []
        times = np.unique(np.round(np.concatenate([grid, extra]), 12))
        values = np.interp(times, tw, [p[1] for p in pts])
        return times, values


def protocol_load(net: ElementNetwork, protocol: LoadProtocol, heights: Optional[dict] = None) -> Load:
    n = push_direction(protocol.angle_deg, protocol.tilt_deg)
    z = resolve_height(net, protocol.height, heights)
    if protocol.probe == "FlatProbe" and protocol.width_mm > 0:
        offsets = np.linspace(-0.5, 0.5, 5) * protocol.width_mm
        touched = [contact_points(net, n, z + dz) for dz in offsets]
        origin = min(c[2] for c in touched)
        points = [p for c in touched for p in c[0]]
    else:
        points, _, origin = contact_points(net, n, z)
    friction = 0.0 if protocol.probe == "Roller" else None
    kind = "force" if protocol.force_controlled else "probe"
    return Load(kind=kind, points=points, direction=n, value=0.0, probe_origin=origin, friction=friction)


def run_protocol(
    net: ElementNetwork,
    protocol: LoadProtocol,
    heights: Optional[dict] = None,
    reset: bool = True,
) -> list:
    """Simulate ``protocol`` on ``net`` and return one SimFrame per sample.

    A solver failure re-raises with the frames computed so far attached as
    ``err.partial``.
    """
    protocol.validate()
    if reset:
        net.reset()
    load = protocol_load(net, protocol, heights)
    times, values = protocol.schedule()
    return run_protocol_steps(net, load, net.time + times, values, start_time=net.time)


def run_protocol_steps(net: ElementNetwork, load: Load, times, values, start_time: float = 0.0) -> list:
    """Drive ``load`` through explicit ``(times, values)`` starting at ``start_time``."""
    frames, t_prev = [], start_time
    for t, v in zip(times, values):
        load.value = float(v)
        try:
            frames.append(solve_quasistatic(net, load, float(t - t_prev)))
        except SolverError as err:
            err.partial = frames
            raise
        t_prev = t
    return frames


def frame_row(fr: SimFrame):
    return [fr.time, *fr.marker_pose_true, *fr.reaction_wrench, fr.contact_force]


def write_trajectory_csv(path, frames, nodes_path=None) -> None:
    """Trajectory CSV plus an optional sidecar with one row of node coordinates per frame."""
    write_csv(path, TRAJECTORY_HEADER, (frame_row(f) for f in frames), kind="trajectory")
    if nodes_path is not None:
        n = len(frames[0].node_positions) if frames else 0
        header = ["t_s"] + [f"n{i}_{ax}" for i in range(n) for ax in "xyz"]
        rows = ([f.time, *f.node_positions.ravel()] for f in frames)
        write_csv(nodes_path, header, rows, kind="nodes")


def read_trajectory_csv(path):
    header, arr = read_csv_array(path, expected_kind="trajectory")
    if header != TRAJECTORY_HEADER:
        raise ConfigError(f"{path}: unexpected trajectory header")
    return arr


def read_nodes_csv(path):
    header, arr = read_csv_array(path, expected_kind="nodes")
    return arr[:, 0], arr[:, 1:].reshape(len(arr), -1, 3)


@dataclass
class HysteresisLoop:
    depth: np.ndarray
    force: np.ndarray

    @property
    def work(self) -> float:
        """Net work done by the probe around the loop (N mm)."""
        return float(np.sum(0.5 * (self.force[1:] + self.force[:-1]) * np.diff(self.depth)))

    def branches(self, grid):
        """Loading and unloading force interpolated on a common depth ``grid``."""
        k = int(np.argmax(self.depth))
        up_d, up_f = self.depth[: k + 1], self.force[: k + 1]
        dn_d, dn_f = self.depth[k:][::-1], self.force[k:][::-1]
        up = np.interp(grid, *_monotone(up_d, up_f))
        dn = np.interp(grid, *_monotone(dn_d, dn_f))
        return up, dn


def _monotone(d, f):
    order = np.argsort(d, kind="stable")
    d, f = d[order], f[order]
    keep = np.concatenate([[True], np.diff(d) > 1e-12])
    return d[keep], f[keep]


def loop_mismatch(a: HysteresisLoop, b: HysteresisLoop, n: int = 101) -> float:
    """Largest force gap between two loops on shared depths, relative to the peak force."""
    hi = min(a.depth.max(), b.depth.max())
    grid = np.linspace(0.0, hi, n)
    ua, da = a.branches(grid)
    ub, db = b.branches(grid)
    peak = max(a.force.max(), b.force.max())
    return float(max(np.abs(ua - ub).max(), np.abs(da - db).max()) / peak) if peak > 0 else 0.0


def split_cycles(frames, protocol: LoadProtocol) -> list:
    """Cut a cyclic trajectory into per-cycle (depth, force) loops.

    Each loop starts from the last frame of the previous cycle (or the
    unloaded state), so consecutive loops share their end points.
    """
    t = np.array([f.time for f in frames])
    t = t - (t[0] - protocol.schedule()[0][0]) if len(t) else t
    d = np.concatenate([[0.0], [f.probe_position for f in frames]])
    F = np.concatenate([[0.0], [f.contact_force for f in frames]])
    loops, start = [], 0
    for end_t in protocol.cycle_ends():
        stop = int(np.searchsorted(t, end_t + 1e-9))
        loops.append(HysteresisLoop(d[start : stop + 1], F[start : stop + 1]))
        start = stop
    return loops


@dataclass
class AdaptiveProfile:
    face: str
    locations: list  # labels
    location_mm: np.ndarray
    force_N: float
    kappa: np.ndarray
    d_max: np.ndarray
    l_prime: np.ndarray
    d_tip: np.ndarray
    face_length: float
    profiles: list = field(default_factory=list)  # (arc_mm, displacement) per location


def face_profile(scaffold, face: str, X0, X, direction):
    """Face displacement along ``direction`` versus arc length (mm), averaged over face beams."""
    beams = [scaffold.beams[b] for b in scaffold.faces[face]]
    lengths = [float(np.sum(np.linalg.norm(np.diff(X0[b.nodes], axis=0), axis=1))) for b in beams]
    L = float(np.mean(lengths))
    if not L > 0:
        raise DomainError("face length must be positive")
    s = beams[0].s
    disp = np.mean([(X[b.nodes] - X0[b.nodes]) @ direction for b in beams], axis=0)
    return s * L, disp, L


def adaptive_factor(arc_mm, disp, face_length: float):
    """κ = (D_max − D_tip) / L with the location l′ of the maximum."""
    if not face_length > 0:
        raise DomainError("face length must be positive")
    i = int(np.argmax(disp))
    return (float(disp[i]) - float(disp[-1])) / face_length, float(disp[i]), float(arc_mm[i]), float(disp[-1])


def compute_adaptive_factor(frames: dict, face: str, net: ElementNetwork, locations=None, force_N: float = 0.0):
    """Build an AdaptiveProfile from loaded frames keyed by location label."""
    locations = list(locations or frames.keys())
    n = push_direction(FACE_ANGLES[face])
    out = dict(kappa=[], d_max=[], l_prime=[], d_tip=[], profiles=[])
    L = None
    for lab in locations:
        arc, disp, L = face_profile(net.scaffold, face, net.X0, frames[lab].node_positions, n)
        k, dmax, lp, dtip = adaptive_factor(arc, disp, L)
        for key, v in zip(("kappa", "d_max", "l_prime", "d_tip"), (k, dmax, lp, dtip)):
            out[key].append(v)
        out["profiles"].append((arc, disp))
    fr = [LOCATION_FRACTIONS.get(l, np.nan) if isinstance(l, str) else l for l in locations]
    return AdaptiveProfile(
        face=face,
        locations=locations,
        location_mm=np.asarray(fr, float) * (L or 0.0),
        force_N=force_N,
        kappa=np.asarray(out["kappa"]),
        d_max=np.asarray(out["d_max"]),
        l_prime=np.asarray(out["l_prime"]),
        d_tip=np.asarray(out["d_tip"]),
        face_length=float(L or 0.0),
        profiles=out["profiles"],
    )


def face_loading(net: ElementNetwork, face: str, location, force_N: float, steps: int = 10, locations=None) -> SimFrame:
    """Static point force normal to ``face`` at ``location``, shared by the face beams."""
    table = locations or LOCATION_FRACTIONS
    s = table[location] if isinstance(location, str) else float(location)
    net.reset()
    pts = [beam_point(net, b, s) for b in net.scaffold.faces[face]]
    load = Load(kind="force", points=pts, direction=push_direction(FACE_ANGLES[face]))
    frame = None
    for F in np.linspace(0.0, force_N, steps + 1)[1:]:
        load.value = float(F)
        frame = solve_quasistatic(net, load, 1e9)
    return frame


def adaptive_profile(net: ElementNetwork, face: str, force_N: float = 2.0, locations=None) -> AdaptiveProfile:
    table = locations or LOCATION_FRACTIONS
    frames = {lab: face_loading(net, face, lab, force_N, locations=table) for lab in table}
    prof = compute_adaptive_factor(frames, face, net, list(table), force_N)
    prof.location_mm = np.asarray(list(table.values())) * prof.face_length
    return prof
