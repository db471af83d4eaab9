"""Synthetic urban-canyon scenes: image-method multipath and straight-lane trajectories.

Ground truth per frame mirrors what an estimator can observe: absolute
arrival times carry the trajectory's clock offset, gains follow free space
plus per-bounce reflection loss, and directions are world-frame unit vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .signal import (
    C0,
    ArrayGeometry,
    PathOrder,
    PathParams,
    WaveformConfig,
    angles_from_unit,
    channel_taps,
    delay_window_limits,
    orientation_from_boresight,
)


class StartOutsideLane(ValueError):
    """Trajectory start does not sit on any lane."""


UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Wall:
    """Vertical rectangle: center point, outward unit normal, width and z extent."""

    center: tuple
    normal: tuple
    width: float
    z_max: float
    loss_db: float = 6.0
    z_min: float = 0.0

    def plane_point(self):
        return np.asarray(self.center, dtype=float)

    def unit_normal(self):
        n = np.asarray(self.normal, dtype=float)
        return n / np.linalg.norm(n)

    def contains(self, s: np.ndarray) -> bool:
        n = self.unit_normal()
        c = self.plane_point()
        h_axis = np.cross(UP, n)
        along = float((s - c) @ h_axis)
        return abs(along) <= self.width / 2.0 and self.z_min <= s[2] <= self.z_max


@dataclass(frozen=True)
class Lane:
    y: float
    speed_kmh: float


@dataclass(frozen=True)
class Blockage:
    """Poisson on/off blocking of the direct path."""

    mean_on_s: float = 0.5
    mean_off_s: float = 0.05


@dataclass
class Scene:
    bs_position: tuple = (0.0, -4.0, 4.0)
    bs_boresight: tuple = (0.0, 1.0, -0.35)
    walls: list = field(
        default_factory=lambda: [
            Wall(center=(0.0, 4.5, 4.0), normal=(0.0, -1.0, 0.0), width=80.0, z_max=8.0, loss_db=6.0),
            Wall(center=(0.0, -7.0, 4.0), normal=(0.0, 1.0, 0.0), width=80.0, z_max=8.0, loss_db=6.0),
        ]
    )
    ground_loss_db: float | None = 8.0
    lanes: list = field(
        default_factory=lambda: [
            Lane(1.2, 60.0),
            Lane(2.0, 50.0),
            Lane(2.8, 25.0),
            Lane(3.6, 15.0),
        ]
    )
    vehicle_height: float = 1.0
    carrier: WaveformConfig = field(default_factory=WaveformConfig)
    second_order: bool = True
    blockage: Blockage | None = field(default_factory=Blockage)
    t_off_max: float = 50e-9
    seed: int = 0

    def bs_geometry(self, nx: int, ny: int) -> ArrayGeometry:
        return ArrayGeometry(
            nx=nx,
            ny=ny,
            orientation=orientation_from_boresight(self.bs_boresight),
            origin=np.asarray(self.bs_position, dtype=float),
        )

    # -- JSON round trip -------------------------------------------------

    def to_json(self) -> str:
        d = asdict(self)
        d["walls"] = [asdict(w) for w in self.walls]
        d["lanes"] = [asdict(l) for l in self.lanes]
        d["blockage"] = asdict(self.blockage) if self.blockage else None
        d["carrier"] = asdict(self.carrier)
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        d = json.loads(text)
        d["walls"] = [Wall(**{**w, "center": tuple(w["center"]), "normal": tuple(w["normal"])}) for w in d["walls"]]
        d["lanes"] = [Lane(**l) for l in d["lanes"]]
        d["blockage"] = Blockage(**d["blockage"]) if d.get("blockage") else None
        d["carrier"] = WaveformConfig(**d["carrier"])
        d["bs_position"] = tuple(d["bs_position"])
        d["bs_boresight"] = tuple(d["bs_boresight"])
        return cls(**d)


@dataclass
class TrajectoryFrame:
    t: float
    position: np.ndarray
    velocity: np.ndarray
    heading_yaw: float
    true_paths: list
    blocked: bool = False
    dropped_paths: int = 0


@dataclass
class Trajectory:
    frames: list
    t_off: float
    cfg: WaveformConfig
    seed: int
    start_xy: tuple
    speed_kmh: float


def mirror_point(p: np.ndarray, plane_point: np.ndarray, normal: np.ndarray) -> np.ndarray:
    return p - 2.0 * float((p - plane_point) @ normal) * normal


def _plane_hit(a: np.ndarray, b: np.ndarray, plane_point: np.ndarray, normal: np.ndarray):
    """Intersection of segment a->b with the plane; None if parallel or outside."""
    denom = float((b - a) @ normal)
    if abs(denom) < 1e-15:
        return None
    t = float((plane_point - a) @ normal) / denom
    if not 0.0 < t < 1.0:
        return None
    return a + t * (b - a)


def _path_from_points(bs, rx, points, length, gamma, cfg, order):
    """Assemble PathParams from the bounce chain bs -> points... -> rx."""
    first = points[0] if points else rx
    last = points[-1] if points else bs
    dod = (first - bs) / np.linalg.norm(first - bs)
    doa = (last - rx) / np.linalg.norm(last - rx)
    dod_az, dod_el = angles_from_unit(dod)
    doa_az, doa_el = angles_from_unit(doa)
    amp = cfg.wavelength / (4.0 * np.pi * length) * gamma
    gain = amp * np.exp(-2j * np.pi * cfg.fc * length / C0)
    return PathParams(
        gain=complex(gain),
        toa=length / C0 + cfg.t_off,
        tdoa=0.0,  # re-referenced after the frame's path list is complete
        doa_az=float(doa_az),
        doa_el=float(doa_el),
        dod_az=float(dod_az),
        dod_el=float(dod_el),
        order=order,
    )


def _los_path(bs, rx, cfg):
    length = float(np.linalg.norm(rx - bs))
    return _path_from_points(bs, rx, [], length, 1.0, cfg, PathOrder.LOS), length


def _first_order(bs, rx, plane_point, normal, contains, gamma, cfg):
    if float((bs - plane_point) @ normal) <= 0 or float((rx - plane_point) @ normal) <= 0:
        return None
    img = mirror_point(rx, plane_point, normal)
    s = _plane_hit(bs, img, plane_point, normal)
    if s is None or not contains(s):
        return None
    length = float(np.linalg.norm(img - bs))
    return _path_from_points(bs, rx, [s], length, gamma, cfg, PathOrder.FIRST_ORDER)


def _second_order(bs, rx, w1: Wall, w2: Wall, cfg):
    """Double bounce bs -> w1 -> w2 -> rx via repeated imaging."""
    n1, c1 = w1.unit_normal(), w1.plane_point()
    n2, c2 = w2.unit_normal(), w2.plane_point()
    if float((rx - c2) @ n2) <= 0 or float((bs - c1) @ n1) <= 0:
        return None
    r1 = mirror_point(rx, c2, n2)
    r2 = mirror_point(r1, c1, n1)
    s1 = _plane_hit(bs, r2, c1, n1)
    if s1 is None or not w1.contains(s1):
        return None
    s2 = _plane_hit(s1, r1, c2, n2)
    if s2 is None or not w2.contains(s2):
        return None
    if float((s1 - c2) @ n2) <= 0:
        return None
    gamma = 10.0 ** (-(w1.loss_db + w2.loss_db) / 20.0)
    length = float(np.linalg.norm(r2 - bs))
    return _path_from_points(bs, rx, [s1, s2], length, gamma, cfg, PathOrder.HIGHER_ORDER)


def frame_paths(scene: Scene, rx: np.ndarray, cfg: WaveformConfig, blocked: bool):
    """Image-method path list for one vehicle position; sorted by arrival time."""
    bs = np.asarray(scene.bs_position, dtype=float)
    paths = []
    if not blocked:
        paths.append(_los_path(bs, rx, cfg)[0])
    for w in scene.walls:
        gamma = 10.0 ** (-w.loss_db / 20.0)
        p = _first_order(bs, rx, w.plane_point(), w.unit_normal(), w.contains, gamma, cfg)
        if p is not None:
            paths.append(p)
    if scene.ground_loss_db is not None:
        gamma = 10.0 ** (-scene.ground_loss_db / 20.0)
        p = _first_order(
            bs, rx, np.zeros(3), UP, lambda s: True, gamma, cfg
        )
        if p is not None:
            paths.append(p)
    if scene.second_order:
        for w1 in scene.walls:
            for w2 in scene.walls:
                if w1 is w2:
                    continue
                p = _second_order(bs, rx, w1, w2, cfg)
                if p is not None:
                    paths.append(p)
    lo, hi = delay_window_limits(cfg)
    kept = [p for p in paths if lo <= p.toa - cfg.t_off <= hi]
    dropped = len(paths) - len(kept)
    kept.sort(key=lambda p: p.toa)
    if kept:
        t_min = kept[0].toa
        kept = [replace(p, tdoa=p.toa - t_min) for p in kept]
    return kept, dropped


def _blockage_mask(n: int, tp: float, blockage: Blockage | None, rng) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    if blockage is None:
        return mask
    t, on = 0.0, True
    edges = []
    while t < n * tp:
        dur = rng.exponential(blockage.mean_on_s if on else blockage.mean_off_s)
        edges.append((t, t + dur, on))
        t += dur
        on = not on
    for lo, hi, is_on in edges:
        if not is_on:
            i0, i1 = int(np.ceil(lo / tp)), int(np.ceil(hi / tp))
            mask[max(i0, 0) : min(i1, n)] = True
    return mask


def generate_trajectory(
    scene: Scene,
    start_xy,
    speed_kmh: float,
    duration: float,
    tp: float,
    seed: int = 0,
) -> Trajectory:
    """Straight-lane constant-speed motion sampled every ``tp`` seconds."""
    if speed_kmh <= 0 or duration <= 0:
        raise ValueError("speed and duration must be positive")
    start_xy = np.asarray(start_xy, dtype=float)
    if not any(abs(start_xy[1] - lane.y) <= 0.3 for lane in scene.lanes):
        raise StartOutsideLane(f"y={start_xy[1]} not on a lane")
    rng = np.random.default_rng(seed)
    t_off = float(rng.uniform(0.0, scene.t_off_max))
    cfg = scene.carrier.with_offset(t_off)
    n = int(round(duration / tp))
    speed = speed_kmh / 3.6
    blocked = _blockage_mask(n, tp, scene.blockage, rng)
    frames = []
    for i in range(n):
        t = i * tp
        pos = np.array([start_xy[0] + speed * t, start_xy[1], scene.vehicle_height])
        paths, dropped = frame_paths(scene, pos, cfg, bool(blocked[i]))
        frames.append(
            TrajectoryFrame(
                t=t,
                position=pos,
                velocity=np.array([speed, 0.0, 0.0]),
                heading_yaw=0.0,
                true_paths=paths,
                blocked=bool(blocked[i]),
                dropped_paths=dropped,
            )
        )
    return Trajectory(
        frames=frames,
        t_off=t_off,
        cfg=cfg,
        seed=seed,
        start_xy=tuple(start_xy),
        speed_kmh=speed_kmh,
    )


def frame_to_channel(frame: TrajectoryFrame, scene: Scene, cfg: WaveformConfig, tx, rx):
    """Tap tensor of one frame's true paths."""
    return channel_taps(frame.true_paths, cfg, tx, rx)
