"""Training beam design and vehicle panel selection.

Tracking frames steer beam pairs around the previously estimated dominant
directions; initial access sweeps a deterministic coverage pattern over the
front half space of both arrays.  One vehicle panel is active per frame,
picked by received energy.
"""

from __future__ import annotations

from itertools import product

import numpy as np
from scipy.linalg import hadamard

from .signal import (
    ArrayGeometry,
    BeamformerSet,
    PathOrder,
    PathParams,
    WaveformConfig,
    angles_from_unit,
    orientation_from_boresight,
    pilot_matrix,
    steering_vector,
    unit_from_angles,
)

PANEL_YAWS = (np.pi / 4, 3 * np.pi / 4, -3 * np.pi / 4, -np.pi / 4)


def vehicle_panels(position, yaw: float, nx: int, ny: int, spacing: float = 0.5):
    """Four hardtop panels with horizontal boresights at the vehicle diagonals.

    Diagonal mounting keeps the serving direction within ~45 degrees of a
    panel boresight over a whole street pass.
    """
    position = np.asarray(position, dtype=float)
    panels = []
    for rel in PANEL_YAWS:
        b = np.array([np.cos(yaw + rel), np.sin(yaw + rel), 0.0])
        panels.append(
            ArrayGeometry(
                nx=nx,
                ny=ny,
                spacing=spacing,
                orientation=orientation_from_boresight(b),
                origin=position,
            )
        )
    return panels


def select_panel(panels, paths) -> int:
    """Panel index with the highest front-half-space received energy."""
    best, best_e = 0, -1.0
    for i, panel in enumerate(panels):
        boresight = panel.orientation[:, 2]
        e = 0.0
        for p in paths:
            proj = float(unit_from_angles(p.doa_az, p.doa_el) @ boresight)
            e += abs(p.gain) ** 2 * max(0.0, proj) ** 2
        if e > best_e + 1e-18:
            best, best_e = i, e
    return best


def _beam(geom: ArrayGeometry, az: float, el: float) -> np.ndarray:
    v = steering_vector(geom, az, el)
    return (v / np.linalg.norm(v)).reshape(-1, 1)


def _beam_local(geom: ArrayGeometry, az_l: float, el_l: float) -> np.ndarray:
    """Beam steered (az_l, el_l) away from the boresight (local z axis)."""
    d = np.array(
        [np.sin(az_l) * np.cos(el_l), np.sin(el_l), np.cos(az_l) * np.cos(el_l)]
    )
    az, el = angles_from_unit(geom.orientation @ d)
    return _beam(geom, az, el)


def _pilots(cfg: WaveformConfig, m: int):
    """Hadamard-row pilots under a fixed +-1 scrambling overlay.

    Bare Walsh rows have unit autocorrelation at power-of-two lags, which
    makes delay atoms a few taps apart nearly parallel; the deterministic
    scrambler whitens the autocorrelation while keeping rows orthogonal.
    """
    h = hadamard(cfg.q).astype(float)
    scramble = np.random.default_rng(0x5C7A).choice(
        [-1.0, 1.0], size=cfg.q
    )
    return [
        pilot_matrix((h[i % cfg.q] * scramble)[None, :], cfg.nd) for i in range(m)
    ]


def design_tracking_beams(
    prev_estimate,
    tx_geom: ArrayGeometry,
    rx_panel: ArrayGeometry,
    cfg: WaveformConfig,
    m: int = 12,
    n_focus: int = 4,
    anchor=None,
) -> BeamformerSet:
    """Beam pairs around the strongest previously estimated usable paths.

    Paths classified as direct or first order are physically real and carry
    the localization information; leftover rows (mixture artifacts, noise
    fits) only get beams when nothing better exists.  ``anchor`` is an
    optional ((dod_az, dod_el), (doa_az, doa_el)) pair, typically the
    direct-path prediction from dead reckoning, that always receives a beam
    so the direct path cannot fade out of the tracking loop.
    """
    usable = [
        p for p in prev_estimate.paths
        if p.order in (PathOrder.LOS, PathOrder.FIRST_ORDER)
    ]
    rest = [p for p in prev_estimate.paths if p not in usable]
    # rows arrive sorted by contribution strength; keep that order
    paths = (usable + rest)[:n_focus]
    if not paths:
        raise ValueError("previous estimate has no paths")
    if anchor is not None:
        (taz, tel), (raz, rel) = anchor
        anchored = PathParams(
            gain=1.0, toa=0.0, tdoa=0.0,
            doa_az=raz, doa_el=rel, dod_az=taz, dod_el=tel,
        )
        paths = [anchored] + paths[: max(n_focus - 1, 1)]
    d_tx = 1.0 / max(tx_geom.nx, tx_geom.ny)
    d_rx = 1.0 / max(rx_panel.nx, rx_panel.ny)
    deltas = [(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
    precoders, combiners = [], []
    # paths first, offsets second: every focused path gets beams even when
    # m does not cover the full pattern
    combos = [(p, k) for k in range(len(deltas)) for p in paths]
    for i in range(m):
        path, k = combos[i % len(combos)]
        da, de = deltas[k]
        ra, re = deltas[(k + 2) % len(deltas)]
        precoders.append(_beam(tx_geom, path.dod_az + da * d_tx, path.dod_el + de * d_tx))
        combiners.append(_beam(rx_panel, path.doa_az + ra * d_rx, path.doa_el + re * d_rx))
    return BeamformerSet(precoders=precoders, combiners=combiners, pilots=_pilots(cfg, m))


def design_initial_beams(
    tx_geom: ArrayGeometry,
    rx_panel: ArrayGeometry,
    cfg: WaveformConfig,
    m: int = 40,
    seed: int = 0x1A,
) -> BeamformerSet:
    """Unit-modulus pseudo-random phase probes for initial access.

    With no direction prior, incoherent projections identify a sparse
    multipath mixture far more reliably than a steered beam sweep, and the
    link budget easily affords the missing beamforming gain.  Deterministic
    for a fixed seed.
    """
    rng = np.random.default_rng(seed)

    def probe(n):
        v = np.exp(2j * np.pi * rng.random(n))
        return (v / np.linalg.norm(v)).reshape(-1, 1)

    precoders = [probe(tx_geom.n_elements) for _ in range(m)]
    combiners = [probe(rx_panel.n_elements) for _ in range(m)]
    return BeamformerSet(
        precoders=precoders, combiners=combiners, pilots=_pilots(cfg, m)
    )
