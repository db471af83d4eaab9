"""The per-frame tracking loop, path-order classification, the constant-velocity
Kalman baseline, and dataset assembly for the sequence corrector.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .dictionaries import DictionarySet, build_full, build_reduced
from .geometry import (
    LocalizationInput,
    LocMode,
    PositionEstimate,
    dead_reckon,
    localizable,
    solve_position,
)
from .momp import estimate_channel
from .signal import ArrayGeometry, ChannelEstimate, MeasurementBatch, PathOrder, WaveformConfig, unit_from_angles


class InsufficientHistory(ValueError):
    """Not enough frames to assemble one sample window."""


@dataclass
class TrackerConfig:
    omega: float = np.deg2rad(15.0)
    d_omega: float = np.deg2rad(0.175)
    eps: float = 0.2e-9
    d_tau: float = 0.01e-9
    n_est: int = 5
    refine_sweeps: int = 3
    full_period: int = 200
    ia_n_angular: tuple = (96, 96, 72, 72)
    ia_n_delay: int = 512
    classify_threshold: float = 0.5  # meters
    solve_residual_gate: float = 1.0  # meters; larger solves count as failed
    solve_jump_gate: float = 2.0  # meters from the assumed position
    bs_standoff: float = 2.0  # solutions this close to the BS are degenerate
    position_bounds: tuple | None = None  # ((lo_x,lo_y,lo_z),(hi_x,hi_y,hi_z))
    max_delay_span: float = 50e-9
    history_c: int = 16
    history_stride: int = 25
    feed_corrected: bool = False
    solver_starts: str = "lean"  # tracking landscapes are single-basin


@dataclass
class TrackerState:
    prev_estimate: ChannelEstimate
    prev_xy: np.ndarray
    prev_z: float
    prev_speed: np.ndarray
    frame_index: int
    history: deque
    panel: int = 0


@dataclass
class FrameInput:
    batch: MeasurementBatch
    rx_panel: ArrayGeometry
    speedometer: np.ndarray
    t: float
    panel_index: int = 0


COLLINEAR_ANGLE = np.deg2rad(5.0)
COLLINEAR_DELAY = 2e-9

# rows below these fractions of the strongest contribution are treated as
# residual-fitting artifacts: near-zero ones stay unlabeled, weak ones can
# never become localization anchors
LIVE_STRENGTH = 1e-3
USABLE_STRENGTH = 0.05


def classify_paths(
    est: ChannelEstimate,
    bs_position,
    assumed_position,
    threshold: float = 0.5,
    c: float = 299792458.0,
):
    """Order labels from geometric consistency against an assumed position.

    The earliest path whose departure ray points at the assumed position is
    the direct candidate; other paths are first order when a single bounce
    with the shared reference range explains both rays and the delay.  Paths
    nearly collinear with the direct one (sidelobe duplicates) carry no
    geometric information and are labeled higher order.
    """
    bs = np.asarray(bs_position, dtype=float)
    pos = np.asarray(assumed_position, dtype=float)
    labels = [PathOrder.UNKNOWN] * len(est.paths)
    strengths = (est.diagnostics or {}).get(
        "strengths", [abs(p.gain) for p in est.paths]
    )
    top = max(strengths, default=0.0)
    live = [
        i for i, p in enumerate(est.paths)
        if abs(p.gain) > 0 and strengths[i] > LIVE_STRENGTH * top
    ]
    if not live:
        return labels
    anchor_ok = [strengths[i] > USABLE_STRENGTH * top for i in range(len(est.paths))]
    # direct candidate: earliest-arrival cluster, strongest contribution that
    # actually points at the assumed position (split atoms tie at the first bin)
    t_min = min(est.paths[i].tdoa for i in live)
    cluster = [i for i in live if est.paths[i].tdoa <= t_min + 0.1e-9]
    cluster.sort(key=lambda i: (-strengths[i], i))
    cand, has_los, p0, dod0 = cluster[0], False, None, None
    for i in cluster:
        if not anchor_ok[i]:
            continue
        p = est.paths[i]
        dod = unit_from_angles(p.dod_az, p.dod_el)
        d_hat = max(0.0, float(dod @ (pos - bs)))
        if float(np.linalg.norm(bs + d_hat * dod - pos)) < threshold:
            cand, has_los, p0, dod0 = i, True, p, dod
            break
    if has_los:
        labels[cand] = PathOrder.LOS
        d0 = float(np.linalg.norm(pos - bs)) - c * p0.tdoa
    else:
        p0 = est.paths[cand]
        dod0 = unit_from_angles(p0.dod_az, p0.dod_el)
        d0 = None
    for i in live:
        if labels[i] is PathOrder.LOS:
            continue
        p = est.paths[i]
        dod = unit_from_angles(p.dod_az, p.dod_el)
        doa = unit_from_angles(p.doa_az, p.doa_el)
        if has_los and i != cand:
            dod_sep = np.arccos(np.clip(float(dod @ dod0), -1.0, 1.0))
            if dod_sep < COLLINEAR_ANGLE and p.tdoa - p0.tdoa < COLLINEAR_DELAY:
                labels[i] = PathOrder.HIGHER_ORDER
                continue
        # least squares bounce point between the two rays
        g = np.array([[1.0, -float(dod @ doa)], [-float(dod @ doa), 1.0]])
        rhs = np.array([float(dod @ (pos - bs)), -float(doa @ (pos - bs))])
        ab, *_ = np.linalg.lstsq(g, rhs, rcond=None)
        a_len, b_len = float(ab[0]), float(ab[1])
        gap = float(np.linalg.norm(bs + a_len * dod - (pos + b_len * doa)))
        if a_len < -threshold or b_len < -threshold:
            labels[i] = PathOrder.HIGHER_ORDER
            continue
        if d0 is None and i == cand:
            # reference reflection defines the range origin
            d0 = a_len + b_len - c * p.tdoa
        length_gap = abs((a_len + b_len) - (d0 + c * p.tdoa)) if d0 is not None else 0.0
        resid = np.hypot(gap, length_gap)
        usable = resid < threshold and anchor_ok[i]
        labels[i] = PathOrder.FIRST_ORDER if usable else PathOrder.HIGHER_ORDER
    return labels


@dataclass
class KfState:
    """Constant-velocity filter over (x, y, vx, vy)."""

    mean: np.ndarray
    cov: np.ndarray
    accel_std: float = 5.0
    meas_std: float = 0.5

    @classmethod
    def from_position(cls, xy, accel_std=5.0, meas_std=0.5):
        mean = np.array([xy[0], xy[1], 0.0, 0.0])
        cov = np.diag([meas_std**2, meas_std**2, 100.0, 100.0])
        return cls(mean=mean, cov=cov, accel_std=accel_std, meas_std=meas_std)


def kf_update(kf: KfState, measured_xy, tp: float):
    """Predict + position-only Joseph-form update; measurement may be None."""
    f = np.eye(4)
    f[0, 2] = tp
    f[1, 3] = tp
    qa = kf.accel_std**2
    q2 = np.array([[tp**4 / 4.0, tp**3 / 2.0], [tp**3 / 2.0, tp**2]]) * qa
    qn = np.zeros((4, 4))
    for axis in range(2):
        idx = np.ix_([axis, axis + 2], [axis, axis + 2])
        qn[idx] = q2
    mean = f @ kf.mean
    cov = f @ kf.cov @ f.T + qn
    if measured_xy is not None:
        h = np.zeros((2, 4))
        h[0, 0] = 1.0
        h[1, 1] = 1.0
        r = np.eye(2) * kf.meas_std**2
        s = h @ cov @ h.T + r
        k = cov @ h.T @ np.linalg.inv(s)
        innov = np.asarray(measured_xy, dtype=float) - h @ mean
        mean = mean + k @ innov
        ikh = np.eye(4) - k @ h
        cov = ikh @ cov @ ikh.T + k @ r @ k.T
    cov = 0.5 * (cov + cov.T)
    new = KfState(mean=mean, cov=cov, accel_std=kf.accel_std, meas_std=kf.meas_std)
    return new, mean[:2].copy()


class Tracker:
    """Per-frame channel tracking with reduced dictionaries and periodic full re-estimation."""

    def __init__(
        self,
        bs_geom: ArrayGeometry,
        cfg: WaveformConfig,
        tcfg: TrackerConfig,
        tp: float,
    ):
        self.bs = bs_geom
        self.cfg = cfg
        self.tcfg = tcfg
        self.tp = tp

    def needs_full(self, frame_index: int) -> bool:
        return frame_index % self.tcfg.full_period == 0

    def full_dictionary(self, rx_panel: ArrayGeometry) -> DictionarySet:
        return build_full(
            self.cfg,
            self.bs,
            rx_panel,
            n_angular=self.tcfg.ia_n_angular,
            n_delay=self.tcfg.ia_n_delay,
        )

    def reduced_dictionary(self, prev: ChannelEstimate, rx_panel: ArrayGeometry) -> DictionarySet:
        return build_reduced(
            prev,
            self.tcfg.omega,
            self.tcfg.d_omega,
            self.tcfg.eps,
            self.tcfg.d_tau,
            self.cfg,
            self.bs,
            rx_panel,
            max_span=self.tcfg.max_delay_span,
        )

    def _classify_and_solve(self, est: ChannelEstimate, assumed_xyz):
        """Label paths and solve, escalating the threshold when the assumed
        position is too coarse, then refining labels with the solved fix."""
        base = self.tcfg.classify_threshold
        pos = None
        for factor in (1.0, 2.0, 4.0):
            labels = classify_paths(est, self.bs.origin, assumed_xyz, base * factor)
            candidate = [replace(p, order=o) for p, o in zip(est.paths, labels)]
            ok, _ = localizable(candidate)
            if not ok:
                continue
            try:
                sol = solve_position(
                    LocalizationInput(bs_position=self.bs.origin, paths=candidate),
                    init_xyz=assumed_xyz,
                )
            except Exception:
                continue
            if self._plausible(sol, assumed_xyz):
                est.paths = candidate
                pos = sol
                break
        if pos is None:
            est.paths = [
                replace(p, order=o)
                for p, o in zip(
                    est.paths, classify_paths(est, self.bs.origin, assumed_xyz, base)
                )
            ]
            return None
        # one refinement round: labels from the solved position at base threshold
        labels = classify_paths(est, self.bs.origin, pos.xyz, base)
        refined = [replace(p, order=o) for p, o in zip(est.paths, labels)]
        ok, _ = localizable(refined)
        if ok:
            try:
                sol = solve_position(
                    LocalizationInput(bs_position=self.bs.origin, paths=refined),
                    init_xyz=pos.xyz,
                )
                if self._plausible(sol, pos.xyz):
                    est.paths = refined
                    pos = sol
            except Exception:
                pass
        return pos

    def _physical(self, sol) -> bool:
        """Reject degenerate or off-road fixes.

        At the BS position every single-bounce equation collapses to zero
        residual, making it a spurious attractor; road bounds come from the
        scene when configured.
        """
        if not np.all(np.isfinite(sol.xyz)):
            return False
        if float(np.linalg.norm(sol.xyz - self.bs.origin)) < self.tcfg.bs_standoff:
            return False
        if self.tcfg.position_bounds is not None:
            lo, hi = self.tcfg.position_bounds
            for v, l, h in zip(sol.xyz, lo, hi):
                if not (l <= v <= h):
                    return False
        return True

    def _plausible(self, sol, assumed_xyz) -> bool:
        return (
            sol.converged
            and self._physical(sol)
            and sol.residual < self.tcfg.solve_residual_gate
            and float(np.linalg.norm(sol.xy - np.asarray(assumed_xyz)[:2]))
            < self.tcfg.solve_jump_gate
        )

    def _reacquire(self, est: ChannelEstimate):
        """Hypothesis-driven relock once anchored classification has failed.

        Dead-reckoning drift can outgrow the classification thresholds, so
        label hypotheses are built from path structure alone (earliest strong
        row direct, or none direct), solved without a position gate, and kept
        only when the solution reproduces a consistent labeling.
        """
        strengths = (est.diagnostics or {}).get(
            "strengths", [abs(p.gain) for p in est.paths]
        )
        top = max(strengths, default=0.0)
        strong = [
            i for i, p in enumerate(est.paths)
            if abs(p.gain) > 0 and strengths[i] >= USABLE_STRENGTH * top
        ]
        if len(strong) < 2:
            return None
        byt = sorted(strong, key=lambda i: est.paths[i].tdoa)
        hypotheses = [{i: (PathOrder.LOS if i == byt[0] else PathOrder.FIRST_ORDER)
                       for i in strong}]
        if len(strong) >= 3:
            hypotheses.append({i: PathOrder.FIRST_ORDER for i in strong})
        base = self.tcfg.classify_threshold

        def overdetermined(paths):
            # relocking without a position prior needs surplus equations:
            # a direct path plus a single reflection fits almost anything
            n_los = sum(1 for p in paths if p.order is PathOrder.LOS)
            n_first = sum(1 for p in paths if p.order is PathOrder.FIRST_ORDER)
            return 3 * n_los + 2 * n_first - 4 >= 2

        best = None
        for hyp in hypotheses:
            candidate = [
                replace(p, order=hyp.get(i, PathOrder.HIGHER_ORDER))
                for i, p in enumerate(est.paths)
            ]
            ok, _ = localizable(candidate)
            if not ok or not overdetermined(candidate):
                continue
            try:
                sol = solve_position(
                    LocalizationInput(bs_position=self.bs.origin, paths=candidate)
                )
            except Exception:
                continue
            if (
                not sol.converged
                or not self._physical(sol)
                or sol.residual > self.tcfg.solve_residual_gate
            ):
                continue
            labels = classify_paths(est, self.bs.origin, sol.xyz, base)
            refined = [replace(p, order=o) for p, o in zip(est.paths, labels)]
            ok2, _ = localizable(refined)
            if not ok2 or not overdetermined(refined):
                continue
            try:
                sol2 = solve_position(
                    LocalizationInput(bs_position=self.bs.origin, paths=refined),
                    init_xyz=sol.xyz,
                )
            except Exception:
                continue
            consistent = (
                sol2.converged
                and self._physical(sol2)
                and sol2.residual < self.tcfg.solve_residual_gate
                and float(np.linalg.norm(sol2.xy - sol.xy)) < 0.5
            )
            if consistent and (best is None or sol2.residual < best[0].residual):
                best = (sol2, refined)
        if best is None:
            return None
        est.paths = best[1]
        return best[0]

    def initial_state(self, inp: FrameInput, start_hint_xy=None, z_hint=None) -> TrackerState:
        """Bootstrap from a full estimate; position from geometry when possible."""
        dset = self.full_dictionary(inp.rx_panel)
        est = estimate_channel(
            inp.batch, dset, self.tcfg.n_est, self.tcfg.refine_sweeps, t=inp.t,
            support_cycles=1,
        )
        z0 = z_hint if z_hint is not None else 1.0
        hint = (
            np.array([start_hint_xy[0], start_hint_xy[1], z0])
            if start_hint_xy is not None
            else self.bs.origin + 8.0 * unit_from_angles(est.paths[0].dod_az, est.paths[0].dod_el)
        )
        sol = self._classify_and_solve(est, hint)
        if sol is not None:
            xy, z = sol.xy, float(sol.xyz[2])
        elif start_hint_xy is not None:
            xy, z = np.asarray(start_hint_xy, dtype=float), z0
        else:
            xy, z = hint[:2], z0
        cap = self.tcfg.history_c * self.tcfg.history_stride
        history = deque(maxlen=cap)
        history.append((inp.t, est, xy.copy()))
        return TrackerState(
            prev_estimate=est,
            prev_xy=np.asarray(xy, dtype=float),
            prev_z=z,
            prev_speed=np.asarray(inp.speedometer, dtype=float),
            frame_index=0,
            history=history,
            panel=inp.panel_index,
        )

    def track_frame(self, state: TrackerState, inp: FrameInput):
        """One loop iteration; degrades to dead reckoning instead of raising."""
        index = state.frame_index + 1
        used_full = self.needs_full(index)
        if used_full:
            dset = self.full_dictionary(inp.rx_panel)
        else:
            dset = self.reduced_dictionary(state.prev_estimate, inp.rx_panel)
        est = estimate_channel(
            inp.batch, dset, self.tcfg.n_est, self.tcfg.refine_sweeps, t=inp.t,
            starts="full" if used_full else self.tcfg.solver_starts,
            support_cycles=1 if used_full else 0,
        )
        est.diagnostics["used_full"] = used_full
        est.diagnostics["panel"] = inp.panel_index
        dr_xy = dead_reckon(state.prev_xy, state.prev_speed, self.tp)
        assumed = np.array([dr_xy[0], dr_xy[1], state.prev_z])
        pos = self._classify_and_solve(est, assumed)
        if pos is None:
            pos = self._reacquire(est)
        if pos is None:
            pos = PositionEstimate(
                xyz=np.array([dr_xy[0], dr_xy[1], state.prev_z]),
                mode=LocMode.DEAD_RECKONING,
                residual=0.0,
                converged=True,
            )
        new_state = TrackerState(
            prev_estimate=est,
            prev_xy=pos.xy.copy(),
            prev_z=float(pos.xyz[2]),
            prev_speed=np.asarray(inp.speedometer, dtype=float),
            frame_index=index,
            history=state.history,
            panel=inp.panel_index,
        )
        new_state.history.append((inp.t, est, pos.xy.copy()))
        return est, pos, new_state


PATH_FEATURES = ("gain_mag", "gain_phase", "tdoa_s", "doa_az", "doa_el", "dod_az", "dod_el")


def path_feature_row(p) -> list:
    return [
        abs(p.gain),
        float(np.angle(p.gain)),
        p.tdoa,
        p.doa_az,
        p.doa_el,
        p.dod_az,
        p.dod_el,
    ]


def assemble_samples(frame_rows: list, c: int, stride: int):
    """Sliding windows over one trajectory's per-frame records.

    ``frame_rows`` are dicts with keys t, Z (n_est x 7), x (2), truth (2).
    Yields dataset dicts with windows of length ``c`` at ``stride`` frames.
    """
    need = (c - 1) * stride + 1
    if len(frame_rows) < need:
        raise InsufficientHistory(f"need at least {need} frames, got {len(frame_rows)}")
    for n in range(need - 1, len(frame_rows)):
        idx = [n - k * stride for k in range(c - 1, -1, -1)]
        window = [frame_rows[i] for i in idx]
        last = window[-1]
        yield {
            "t": last["t"],
            "Z": [w["Z"] for w in window],
            "X": [w["x"] for w in window],
            "target": [
                last["truth"][0] - last["x"][0],
                last["truth"][1] - last["x"][1],
            ],
            "truth": [last["truth"][0], last["truth"][1]],
        }


def split_trajectories(ids: list):
    """3:1 train/test split by whole trajectories: every fourth id is held out."""
    ids = sorted(ids)
    test = set(ids[3::4])
    if not test and len(ids) > 1:
        test = {ids[-1]}
    train = [i for i in ids if i not in test]
    return train, sorted(test)
