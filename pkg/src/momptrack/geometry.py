"""Position solving from classified path parameters.

Single-bounce geometry: a first-order path leaves the base station along its
departure direction, hits an unknown reflection point and reaches the
receiver along the reversed arrival direction.  With TDoA-referenced delays
every usable path satisfies

    p_bs + a * dod = p_rx + b * doa,     a + b = d0 + c * tdoa,

where d0 is the (unknown) total length of the earliest path.  A direct path
contributes ``p_rx = p_bs + (d0 + c*tdoa) * dod``.  The system is linear in
(p_rx, d0, {a}); the linear solution seeds a damped least-squares polish in
squared variables that keeps ranges nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import least_squares

from .signal import C0, PathOrder


class NotLocalizable(ValueError):
    """The path set does not satisfy the localizability rule."""


class LocMode(Enum):
    LOS_GEOMETRIC = "los_geometric"
    NLOS_GEOMETRIC = "nlos_geometric"
    DEAD_RECKONING = "dead_reckoning"


@dataclass
class LocalizationInput:
    bs_position: np.ndarray
    paths: list
    rx_orientation: np.ndarray = field(default_factory=lambda: np.eye(3))
    c: float = C0


@dataclass
class PositionEstimate:
    xyz: np.ndarray
    mode: LocMode
    residual: float = 0.0
    converged: bool = True

    @property
    def xy(self) -> np.ndarray:
        return self.xyz[:2]


def localizable(paths):
    """(bool, mode): one direct plus one reflection, or three reflections."""
    has_los = any(p.order is PathOrder.LOS for p in paths)
    n_first = sum(1 for p in paths if p.order is PathOrder.FIRST_ORDER)
    if has_los and n_first >= 1:
        return True, LocMode.LOS_GEOMETRIC
    if not has_los and n_first >= 3:
        return True, LocMode.NLOS_GEOMETRIC
    return False, LocMode.DEAD_RECKONING


def dead_reckon(prev_xy, speed, tp: float) -> np.ndarray:
    """Constant-velocity update: previous position plus tp times speed."""
    return np.asarray(prev_xy, dtype=float) + tp * np.asarray(speed, dtype=float)


def _usable_paths(paths):
    los = [p for p in paths if p.order is PathOrder.LOS]
    first = [p for p in paths if p.order is PathOrder.FIRST_ORDER]
    return los, first


def _linear_solve(bs, los, first, c):
    """Exact in the noiseless case: the system is linear in (p, d0, {a})."""
    k = len(first)
    rows = 3 * (len(los) + k)
    a = np.zeros((rows, 4 + k))
    b = np.zeros(rows)
    r = 0
    for p in los:
        # p_rx - (d0 + c*tdoa) * dod = p_bs
        a[r : r + 3, 0:3] = np.eye(3)
        a[r : r + 3, 3] = -p.dod_unit
        b[r : r + 3] = bs + c * p.tdoa * p.dod_unit
        r += 3
    for i, p in enumerate(first):
        # p_rx + d0*doa - a_i*(dod + doa) = p_bs - c*tdoa*doa
        a[r : r + 3, 0:3] = np.eye(3)
        a[r : r + 3, 3] = p.doa_unit
        a[r : r + 3, 4 + i] = -(p.dod_unit + p.doa_unit)
        b[r : r + 3] = bs - c * p.tdoa * p.doa_unit
        r += 3
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    return sol[0:3], sol[3], sol[4:]


def _pack(p, d0, ranges):
    return np.concatenate([p, [np.sqrt(max(d0, 1e-6))], np.sqrt(np.maximum(ranges, 1e-6))])


def _residual_and_jac(v, bs, los, first, c):
    p = v[0:3]
    w = v[3]
    us = v[4:]
    n_res = 3 * (len(los) + len(first))
    res = np.zeros(n_res)
    jac = np.zeros((n_res, v.size))
    r = 0
    for path in los:
        total = w * w + c * path.tdoa
        res[r : r + 3] = p - bs - total * path.dod_unit
        jac[r : r + 3, 0:3] = np.eye(3)
        jac[r : r + 3, 3] = -2.0 * w * path.dod_unit
        r += 3
    for i, path in enumerate(first):
        a_len = us[i] * us[i]
        b_len = w * w + c * path.tdoa - a_len
        res[r : r + 3] = bs + a_len * path.dod_unit - p - b_len * path.doa_unit
        jac[r : r + 3, 0:3] = -np.eye(3)
        jac[r : r + 3, 3] = -2.0 * w * path.doa_unit
        jac[r : r + 3, 4 + i] = 2.0 * us[i] * (path.dod_unit + path.doa_unit)
        r += 3
    return res, jac


def solve_position(inp: LocalizationInput, init_xyz=None) -> PositionEstimate:
    """Invert the single-bounce system for the receiver position.

    ``init_xyz`` (for example a dead-reckoned position) is accepted but the
    linear pre-solve normally dominates the initialization.
    """
    ok, mode = localizable(inp.paths)
    if not ok:
        raise NotLocalizable("need direct + 1 reflection, or 3 reflections")
    bs = np.asarray(inp.bs_position, dtype=float)
    los, first = _usable_paths(inp.paths)
    los = los[:1]
    p0, d00, a0 = _linear_solve(bs, los, first, inp.c)
    if init_xyz is not None and not np.all(np.isfinite(p0)):
        p0 = np.asarray(init_xyz, dtype=float)
    v0 = _pack(p0, d00, a0)

    def fun(v):
        return _residual_and_jac(v, bs, los, first, inp.c)[0]

    def jac(v):
        return _residual_and_jac(v, bs, los, first, inp.c)[1]

    result = least_squares(
        fun, v0, jac=jac, method="lm", xtol=1e-10, ftol=1e-12, gtol=1e-12, max_nfev=100 * v0.size
    )
    converged = bool(result.status > 0)
    return PositionEstimate(
        xyz=result.x[0:3],
        mode=mode,
        residual=float(np.linalg.norm(result.fun)),
        converged=converged,
    )
