"""Sparsifying dictionaries: full grids for initial access, reduced grids for tracking.

Angular dictionaries are built over per-axis broadside angles (the angle
between the arrival direction and the array axis), which makes the five
dimensions separable: the transmit x/y factors are stored conjugated, the
receive factors plain, and the delay dictionary holds sampled pulse
responses.  Grids keep the physical parameter so every atom index decodes
back to angles/delays exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .signal import (
    ArrayGeometry,
    WaveformConfig,
    axis_response,
    raised_cosine,
    world_from_axis_angles,
    local_axis_angles,
)


class ResolutionTooFine(ValueError):
    """A dictionary would exceed the configured memory cap."""


class EmptyEstimate(ValueError):
    """Reduced dictionaries need at least one previous path."""


class GridKind(str, Enum):
    TX_AZ = "tx_az"
    TX_EL = "tx_el"
    RX_AZ = "rx_az"
    RX_EL = "rx_el"
    DELAY = "delay"


ANGULAR_KINDS = (GridKind.TX_AZ, GridKind.TX_EL, GridKind.RX_AZ, GridKind.RX_EL)

# Columns per dictionary before ResolutionTooFine trips.
DEFAULT_MAX_COLUMNS = 200_000


@dataclass(frozen=True)
class Grid1D:
    """Ordered physical parameters (radians or seconds) of one dictionary axis."""

    values: np.ndarray
    kind: GridKind

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size == 0:
            raise ValueError("grid must be nonempty")
        if v.size > 1 and not np.all(np.diff(v) > 0):
            raise ValueError("grid values must be strictly increasing")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def angular_column(n: int, spacing: float, beta: float, conjugate: bool) -> np.ndarray:
    col = axis_response(n, spacing, np.cos(beta))
    return col.conj() if conjugate else col


def delay_column(t: float, cfg: WaveformConfig) -> np.ndarray:
    """Sampled pulse response: entry d is the pulse at lag ``d*ts - t``."""
    return raised_cosine(np.arange(cfg.nd) * cfg.ts - t, cfg).astype(complex)


def _angular_matrix(n: int, spacing: float, betas: np.ndarray, conjugate: bool):
    cols = axis_response(n, spacing, np.cos(betas))
    return cols.conj() if conjugate else cols


def _delay_matrix(times: np.ndarray, cfg: WaveformConfig):
    lags = np.arange(cfg.nd) * cfg.ts
    return raised_cosine(lags[:, None] - times[None, :], cfg).astype(complex)


@dataclass
class DictionarySet:
    """The five per-dimension dictionaries with their grids and array context.

    Dimension order: tx x-axis, tx y-axis, rx x-axis, rx y-axis, delay.
    Columns are not normalized; the solver divides correlations by column
    norms instead, keeping delay atoms bit-faithful to the pulse response.
    ``seeds`` are multi-indices of the previous estimate's paths on the new
    grids (reduced dictionaries only); the tracking solver starts there.
    """

    psi: list
    grids: list
    tx: ArrayGeometry
    rx: ArrayGeometry
    cfg: WaveformConfig
    seeds: list | None = None

    @property
    def dims(self):
        """Response lengths per dimension."""
        return (self.tx.nx, self.tx.ny, self.rx.nx, self.rx.ny, self.cfg.nd)

    @property
    def sizes(self):
        return tuple(len(g) for g in self.grids)

    @property
    def n_atoms(self) -> int:
        return int(np.prod([len(g) for g in self.grids]))

    def decode(self, index):
        """Physical parameters of a multi-index: (toa, doa_az, doa_el, dod_az, dod_el)."""
        j1, j2, j3, j4, j5 = index
        dod_az, dod_el = world_from_axis_angles(
            self.tx, self.grids[0].values[j1], self.grids[1].values[j2]
        )
        doa_az, doa_el = world_from_axis_angles(
            self.rx, self.grids[2].values[j3], self.grids[3].values[j4]
        )
        return float(self.grids[4].values[j5]), doa_az, doa_el, dod_az, dod_el

    def dump_grids(self) -> dict:
        """Grid values keyed by kind, for debugging dumps."""
        return {g.kind.value: g.values.tolist() for g in self.grids}


def _build_set(grids, tx, rx, cfg):
    sizes = [(tx.nx, tx.spacing, True), (tx.ny, tx.spacing, True),
             (rx.nx, rx.spacing, False), (rx.ny, rx.spacing, False)]
    psi = []
    for (n, spacing, conj), grid in zip(sizes, grids[:4]):
        psi.append(_angular_matrix(n, spacing, grid.values, conj))
    psi.append(_delay_matrix(grids[4].values, cfg))
    return DictionarySet(psi=psi, grids=list(grids), tx=tx, rx=rx, cfg=cfg)


def build_full(
    cfg: WaveformConfig,
    tx: ArrayGeometry,
    rx: ArrayGeometry,
    n_angular=(64, 64, 64, 64),
    n_delay: int = 256,
    max_columns: int = DEFAULT_MAX_COLUMNS,
) -> DictionarySet:
    """Initial-access dictionaries covering [0, pi) per angle axis and [0, nd*ts) in delay."""
    for n in (*n_angular, n_delay):
        if n < 1:
            raise ValueError("grid sizes must be positive")
        if n > max_columns:
            raise ResolutionTooFine(f"{n} columns exceed the cap of {max_columns}")
    grids = [
        Grid1D(np.arange(n) * (np.pi / n), kind)
        for n, kind in zip(n_angular, ANGULAR_KINDS)
    ]
    grids.append(
        Grid1D(np.arange(n_delay) * (cfg.nd * cfg.ts / n_delay), GridKind.DELAY)
    )
    return _build_set(grids, tx, rx, cfg)


def _progression(start: float, stop: float, step: float) -> np.ndarray:
    """start, start+step, ... up to the last point <= stop (tolerant count)."""
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + np.arange(max(n, 1)) * step


def _dedup_sorted(points: np.ndarray, tol: float) -> np.ndarray:
    """Keep sorted points whose gap to the previously kept one is >= tol."""
    kept = [points[0]]
    for p in points[1:]:
        if p - kept[-1] >= tol:
            kept.append(p)
    return np.array(kept)


def reduced_angle_grid(centers, omega: float, d_omega: float) -> np.ndarray:
    """Union of per-path sectors [c-omega, c+omega] sampled at d_omega.

    Overlapping sectors merge; duplicates closer than d_omega/2 are dropped;
    points outside [0, pi] are clipped away.
    """
    pts = np.concatenate([_progression(c - omega, c + omega, d_omega) for c in centers])
    pts = np.sort(pts)
    pts = _dedup_sorted(pts, d_omega / 2.0)
    pts = pts[(pts >= 0.0) & (pts <= np.pi)]
    if pts.size == 0:
        # whole sector fell outside the physical range; keep the nearest edge
        pts = np.array([0.0 if centers[0] < 0 else np.pi])
    return pts


def build_reduced_angular(
    prev,
    omega: float,
    d_omega: float,
    tx: ArrayGeometry,
    rx: ArrayGeometry,
):
    """Reduced angular dictionaries around the previous estimate's directions.

    Returns a list of four (Grid1D, matrix) pairs in dimension order.
    """
    if not prev.paths:
        raise EmptyEstimate("previous estimate has no paths")
    if omega <= 0 or d_omega <= 0:
        raise ValueError("omega and d_omega must be positive")
    tx_centers = [local_axis_angles(tx, p.dod_az, p.dod_el) for p in prev.paths]
    rx_centers = [local_axis_angles(rx, p.doa_az, p.doa_el) for p in prev.paths]
    per_kind = [
        [c[0] for c in tx_centers],
        [c[1] for c in tx_centers],
        [c[0] for c in rx_centers],
        [c[1] for c in rx_centers],
    ]
    spec = [(tx.nx, tx.spacing, True), (tx.ny, tx.spacing, True),
            (rx.nx, rx.spacing, False), (rx.ny, rx.spacing, False)]
    out = []
    for kind, centers, (n, spacing, conj) in zip(ANGULAR_KINDS, per_kind, spec):
        grid = Grid1D(reduced_angle_grid(centers, omega, d_omega), kind)
        out.append((grid, _angular_matrix(n, spacing, grid.values, conj)))
    return out


def build_reduced_delay(
    prev,
    eps: float,
    d_tau: float,
    cfg: WaveformConfig,
    max_span: float | None = None,
):
    """Reduced delay dictionary from the previous reference time.

    The grid runs from the previous minimum arrival to that plus the maximum
    TDoA plus ``eps`` at resolution ``d_tau``.  ``max_span`` optionally caps
    the covered TDoA span to bound runaway growth from spurious paths.
    """
    if not prev.paths:
        raise EmptyEstimate("previous estimate has no paths")
    if eps < 0 or d_tau <= 0:
        raise ValueError("eps must be >= 0 and d_tau > 0")
    t_min = min(p.toa for p in prev.paths)
    tau_max = max(p.tdoa for p in prev.paths)
    if max_span is not None:
        tau_max = min(tau_max, max_span)
    values = _progression(t_min, t_min + tau_max + eps, d_tau)
    grid = Grid1D(values, GridKind.DELAY)
    return grid, _delay_matrix(grid.values, cfg)


def build_reduced(
    prev,
    omega: float,
    d_omega: float,
    eps: float,
    d_tau: float,
    cfg: WaveformConfig,
    tx: ArrayGeometry,
    rx: ArrayGeometry,
    max_span: float | None = None,
) -> DictionarySet:
    """Assemble the full five-dimension reduced dictionary set."""
    angular = build_reduced_angular(prev, omega, d_omega, tx, rx)
    delay_grid, delay_mat = build_reduced_delay(prev, eps, d_tau, cfg, max_span)
    grids = [g for g, _ in angular] + [delay_grid]
    psi = [m for _, m in angular] + [delay_mat]
    seeds = []
    for p in prev.paths:
        bt = local_axis_angles(tx, p.dod_az, p.dod_el)
        br = local_axis_angles(rx, p.doa_az, p.doa_el)
        targets = (bt[0], bt[1], br[0], br[1], p.toa)
        seeds.append(
            tuple(int(np.argmin(np.abs(g.values - v))) for g, v in zip(grids, targets))
        )
    return DictionarySet(psi=psi, grids=grids, tx=tx, rx=rx, cfg=cfg, seeds=seeds)
