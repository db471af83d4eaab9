"""Geometric mmWave channel synthesis and hybrid beamformed measurements.

Conventions used throughout the package:

* World frame: x along the road, y across it, z up.  A unit direction for
  azimuth ``az`` and elevation ``el`` is
  ``[cos(el)cos(az), cos(el)sin(az), sin(el)]``.
* Arrays are uniform rectangular, elements on the local x/y plane with the
  boresight along local z.  ``orientation`` maps local to world coordinates.
* The steering phase of element ``(ix, iy)`` is
  ``2*pi*spacing*(ix*u_x + iy*u_y)`` where ``(u_x, u_y)`` are the first two
  components of the arrival direction expressed in the local frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

C0 = 299792458.0  # propagation speed, m/s

# Pulse tails outside +-4 samples are treated as negligible when sizing the
# delay window; the synthesis itself never truncates the pulse.
DELAY_GUARD_SAMPLES = 4

# Element front-to-back isolation: paths hitting an array from behind keep
# their phase structure but are attenuated.  Without this a planar array
# folds back-side arrivals into the front half space and corrupts estimates.
BACK_LOBE_DB = 25.0


class PathOrder(Enum):
    LOS = "los"
    FIRST_ORDER = "first"
    HIGHER_ORDER = "higher"
    UNKNOWN = "unknown"


class PathOutOfWindow(ValueError):
    """A path delay falls outside the representable tap window."""


class DimensionMismatch(ValueError):
    """Operator and operand shapes disagree."""


def unit_from_angles(az, el):
    """Unit direction vector(s) for azimuth/elevation in radians."""
    az = np.asarray(az, dtype=float)
    el = np.asarray(el, dtype=float)
    return np.stack(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1
    )


def angles_from_unit(k):
    """Inverse of :func:`unit_from_angles`; returns (az, el) in radians."""
    k = np.asarray(k, dtype=float)
    az = np.arctan2(k[..., 1], k[..., 0])
    el = np.arcsin(np.clip(k[..., 2], -1.0, 1.0))
    return az, el


def orientation_from_boresight(boresight, up=(0.0, 0.0, 1.0)):
    """Rotation matrix (local -> world) for an array facing ``boresight``.

    Local z is the boresight, local x is horizontal (perpendicular to ``up``
    and the boresight), local y completes the right-handed frame.
    """
    z = np.asarray(boresight, dtype=float)
    z = z / np.linalg.norm(z)
    x = np.cross(up, z)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        # boresight parallel to up: pick an arbitrary horizontal x
        x = np.array([1.0, 0.0, 0.0])
    else:
        x = x / nx
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform rectangular array: ``nx`` x ``ny`` elements in the local x/y plane."""

    nx: int
    ny: int
    spacing: float = 0.5  # element spacing in wavelengths
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("array needs at least one element per axis")
        r = np.asarray(self.orientation, dtype=float)
        if r.shape != (3, 3) or not np.allclose(r.T @ r, np.eye(3), atol=1e-12):
            raise ValueError("orientation must be orthonormal")
        object.__setattr__(self, "orientation", r)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    def local_direction(self, az, el):
        """World direction (az, el) expressed in the local frame."""
        return self.orientation.T @ unit_from_angles(az, el)


def axis_response(n: int, spacing: float, cosine) -> np.ndarray:
    """1-D array factor for ``n`` elements at direction cosine ``cosine``.

    Columns for an array of ``cosine`` values; a single vector otherwise.
    """
    cosine = np.asarray(cosine, dtype=float)
    phase = 2j * np.pi * spacing * np.arange(n)
    return np.exp(np.multiply.outer(phase, cosine))


def steering_vector(geom: ArrayGeometry, az: float, el: float) -> np.ndarray:
    """Array response ``a_x (kron) a_y`` for a world-frame direction.

    Element ``(ix, iy)`` maps to entry ``ix*ny + iy``; the norm is
    ``sqrt(nx*ny)`` since every entry has unit modulus.
    """
    u = geom.local_direction(az, el)
    ax = axis_response(geom.nx, geom.spacing, u[0])
    ay = axis_response(geom.ny, geom.spacing, u[1])
    return np.kron(ax, ay)


def local_axis_angles(geom: ArrayGeometry, az: float, el: float):
    """Broadside angles (beta_x, beta_y) of a world direction for each array axis.

    ``cos(beta_x)`` / ``cos(beta_y)`` are the direction cosines along the
    local x / y axes; both lie in [0, pi].
    """
    u = geom.local_direction(az, el)
    return float(np.arccos(np.clip(u[0], -1.0, 1.0))), float(
        np.arccos(np.clip(u[1], -1.0, 1.0))
    )


def world_from_axis_angles(geom: ArrayGeometry, beta_x: float, beta_y: float):
    """Invert :func:`local_axis_angles` assuming the front half space (local z >= 0)."""
    ux = np.cos(beta_x)
    uy = np.cos(beta_y)
    uz = np.sqrt(max(0.0, 1.0 - ux * ux - uy * uy))
    k = geom.orientation @ np.array([ux, uy, uz])
    return angles_from_unit(k)


@dataclass(frozen=True)
class PathParams:
    """One propagation path.

    ``toa`` is the absolute time of arrival as observed (clock offset folded
    in); ``tdoa`` is referenced to the earliest path of the same channel.
    Angles are world-frame radians.  The direction-of-arrival vector points
    from the receiver toward the last interaction point.
    """

    gain: complex
    toa: float
    tdoa: float
    doa_az: float
    doa_el: float
    dod_az: float
    dod_el: float
    order: PathOrder = PathOrder.UNKNOWN

    def __post_init__(self):
        if self.tdoa < 0:
            raise ValueError("tdoa must be nonnegative")
        for el in (self.doa_el, self.dod_el):
            if not -np.pi / 2 <= el <= np.pi / 2:
                raise ValueError("elevation outside [-pi/2, pi/2]")

    @property
    def doa_unit(self) -> np.ndarray:
        return unit_from_angles(self.doa_az, self.doa_el)

    @property
    def dod_unit(self) -> np.ndarray:
        return unit_from_angles(self.dod_az, self.dod_el)


@dataclass(frozen=True)
class WaveformConfig:
    """Sampling, pulse and power parameters of the training waveform."""

    fc: float = 73e9
    bandwidth: float = 1e9
    ts: float = 1e-9
    nd: int = 80
    rolloff: float = 0.4
    q: int = 64
    pt_dbm: float = 40.0
    noise_psd: float = 3.18e-11  # noise variance per complex sample (kTB + 9 dB NF)
    t_off: float = 0.0

    def __post_init__(self):
        if abs(self.ts * self.bandwidth - 1.0) > 1e-9:
            raise ValueError("ts must equal 1/bandwidth")
        if self.nd < 1:
            raise ValueError("nd must be >= 1")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError("rolloff outside [0, 1]")

    @property
    def pt(self) -> float:
        """Transmit power in watts."""
        return 10.0 ** ((self.pt_dbm - 30.0) / 10.0)

    @property
    def wavelength(self) -> float:
        return C0 / self.fc

    def with_offset(self, t_off: float) -> "WaveformConfig":
        return replace(self, t_off=t_off)


def raised_cosine(t, cfg: WaveformConfig):
    """Raised-cosine pulse, unit peak, Nyquist zeros at nonzero multiples of ts.

    The removable singularity at ``|t| = ts/(2*rolloff)`` is evaluated
    analytically as ``(pi/4) sinc(1/(2*rolloff))``.
    """
    x = np.asarray(t, dtype=float) / cfg.ts
    b = cfg.rolloff
    if b == 0.0:
        return np.sinc(x) if x.ndim else float(np.sinc(x))
    den = 1.0 - (2.0 * b * x) ** 2
    sing = np.abs(den) < 1e-10
    safe = np.where(sing, 1.0, den)
    out = np.sinc(x) * np.cos(np.pi * b * x) / safe
    out = np.where(sing, (np.pi / 4.0) * np.sinc(1.0 / (2.0 * b)), out)
    return out if out.ndim else float(out)


def delay_window_limits(cfg: WaveformConfig):
    """Admissible range of ``toa - t_off`` for :func:`channel_taps`."""
    return 0.0, (cfg.nd - 1) * cfg.ts - DELAY_GUARD_SAMPLES * cfg.ts


def element_gain(geom: ArrayGeometry, az: float, el: float) -> float:
    """1.0 in the front half space, back-lobe attenuation behind the array."""
    front = float(geom.orientation[:, 2] @ unit_from_angles(az, el))
    return 1.0 if front >= 0.0 else 10.0 ** (-BACK_LOBE_DB / 20.0)


def channel_taps(paths, cfg: WaveformConfig, tx: ArrayGeometry, rx: ArrayGeometry):
    """Tap tensor ``H`` of shape (n_rx, n_tx, nd); linear in the path list."""
    h = np.zeros((rx.n_elements, tx.n_elements, cfg.nd), dtype=complex)
    lo, hi = delay_window_limits(cfg)
    d_times = np.arange(cfg.nd) * cfg.ts
    for p in paths:
        tau = p.toa - cfg.t_off
        if not lo <= tau <= hi:
            raise PathOutOfWindow(
                f"path delay {tau * 1e9:.2f} ns outside [{lo * 1e9:.2f}, {hi * 1e9:.2f}] ns"
            )
        pulse = raised_cosine(d_times - tau, cfg)
        ar = steering_vector(rx, p.doa_az, p.doa_el)
        at = steering_vector(tx, p.dod_az, p.dod_el)
        g = p.gain * element_gain(rx, p.doa_az, p.doa_el) * element_gain(tx, p.dod_az, p.dod_el)
        h += g * np.einsum("r,t,d->rtd", ar, at.conj(), pulse)
    return h


def pilot_matrix(s: np.ndarray, nd: int) -> np.ndarray:
    """Shift-structured pilot: column q stacks ``[s[q]; s[q-1]; ...]`` over nd taps.

    ``s`` has shape (n_s, q); entries with negative time index are zero.
    """
    s = np.atleast_2d(np.asarray(s))
    ns, q = s.shape
    out = np.zeros((ns * nd, q), dtype=s.dtype)
    for d in range(min(nd, q)):
        out[d * ns : (d + 1) * ns, d:] = s[:, : q - d]
    return out


@dataclass
class BeamformerSet:
    """Training precoders/combiners with pilots and noise whiteners.

    ``whiteners[m]`` is the lower-triangular Cholesky factor of
    ``W_m^* W_m``; the whitened combiner is ``W_m L_m^{-*}``.
    """

    precoders: list
    combiners: list
    pilots: list
    whiteners: list = field(default_factory=list)

    def __post_init__(self):
        if not (len(self.precoders) == len(self.combiners) == len(self.pilots)):
            raise DimensionMismatch("precoder/combiner/pilot counts differ")
        for f in self.precoders:
            norms = np.linalg.norm(f, axis=0)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise ValueError("precoder columns must have unit norm")
        if not self.whiteners:
            self.whiteners = [self._cholesky(w) for w in self.combiners]

    @staticmethod
    def _cholesky(w):
        gram = w.conj().T @ w
        return np.linalg.cholesky(gram)

    @property
    def m(self) -> int:
        return len(self.precoders)

    @property
    def n_streams(self) -> int:
        return self.precoders[0].shape[1]

    def whitened_combiner_h(self, m: int) -> np.ndarray:
        """``L_m^{-1} W_m^*``, the adjoint of the whitened combiner."""
        return solve_triangular(
            self.whiteners[m], self.combiners[m].conj().T, lower=True
        )


@dataclass
class MeasurementBatch:
    """Whitened observation blocks for M training frames."""

    blocks: list  # each (n_s, q) complex
    beams: BeamformerSet
    cfg: WaveformConfig
    seed: int | None = None

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def n_samples(self) -> int:
        return sum(b.size for b in self.blocks)

    def stacked(self) -> np.ndarray:
        """Measurements as one vector, column-major per block, frames concatenated."""
        return np.concatenate([b.flatten(order="F") for b in self.blocks])


def _check_measure_shapes(h, bf: BeamformerSet, cfg: WaveformConfig):
    nr, nt, nd = h.shape
    if nd != cfg.nd:
        raise DimensionMismatch("channel tap count differs from cfg.nd")
    for fm, wm, sm in zip(bf.precoders, bf.combiners, bf.pilots):
        ns = fm.shape[1]
        if fm.shape[0] != nt or wm.shape[0] != nr:
            raise DimensionMismatch("beamformer sizes do not match the channel")
        if sm.shape != (ns * nd, cfg.q):
            raise DimensionMismatch("pilot matrix must be (n_s*nd, q)")


def _whitened_noise(bf: BeamformerSet, cfg: WaveformConfig, m: int, rng):
    nr = bf.combiners[m].shape[0]
    scale = np.sqrt(cfg.noise_psd / 2.0)
    n = scale * (
        rng.standard_normal((nr, cfg.q)) + 1j * rng.standard_normal((nr, cfg.q))
    )
    return solve_triangular(
        bf.whiteners[m], bf.combiners[m].conj().T @ n, lower=True
    )


def measure(h, bf: BeamformerSet, cfg: WaveformConfig, rng_seed) -> MeasurementBatch:
    """Whitened received blocks for the channel tensor ``h``; deterministic per seed."""
    _check_measure_shapes(h, bf, cfg)
    nr, nt, nd = h.shape
    rng = np.random.default_rng(rng_seed)
    hbar = h.transpose(0, 2, 1).reshape(nr, nd * nt)  # [H_0, ..., H_{nd-1}]
    sqrt_pt = np.sqrt(cfg.pt)
    blocks = []
    for m in range(bf.m):
        f = bf.precoders[m]
        ns = f.shape[1]
        s3 = bf.pilots[m].reshape(nd, ns, cfg.q)
        x = np.einsum("ts,dsq->dtq", f, s3).reshape(nd * nt, cfg.q)
        sig = sqrt_pt * (bf.whitened_combiner_h(m) @ (hbar @ x))
        blocks.append(sig + _whitened_noise(bf, cfg, m, rng))
    return MeasurementBatch(blocks=blocks, beams=bf, cfg=cfg, seed=rng_seed)


def measure_paths(
    paths, bf: BeamformerSet, cfg: WaveformConfig, tx: ArrayGeometry, rx: ArrayGeometry, rng_seed
) -> MeasurementBatch:
    """Same observable as ``measure(channel_taps(paths, ...))`` without forming H.

    Noise draws follow the same per-frame order, so results agree with the
    tensor route to floating point accuracy for equal seeds.
    """
    rng = np.random.default_rng(rng_seed)
    lo, hi = delay_window_limits(cfg)
    d_times = np.arange(cfg.nd) * cfg.ts
    sqrt_pt = np.sqrt(cfg.pt)
    resp = []
    for p in paths:
        tau = p.toa - cfg.t_off
        if not lo <= tau <= hi:
            raise PathOutOfWindow(f"path delay {tau * 1e9:.2f} ns outside window")
        g = p.gain * element_gain(rx, p.doa_az, p.doa_el) * element_gain(tx, p.dod_az, p.dod_el)
        resp.append(
            (
                g,
                steering_vector(rx, p.doa_az, p.doa_el),
                steering_vector(tx, p.dod_az, p.dod_el),
                raised_cosine(d_times - tau, cfg),
            )
        )
    blocks = []
    for m in range(bf.m):
        f = bf.precoders[m]
        ns = f.shape[1]
        s3 = bf.pilots[m].reshape(cfg.nd, ns, cfg.q)
        wh = bf.whitened_combiner_h(m)
        sig = np.zeros((ns, cfg.q), dtype=complex)
        for gain, ar, at, pulse in resp:
            conv = np.einsum("d,dsq->sq", pulse, s3)
            sig += gain * np.outer(wh @ ar, at.conj() @ f @ conv)
        blocks.append(sqrt_pt * sig + _whitened_noise(bf, cfg, m, rng))
    return MeasurementBatch(blocks=blocks, beams=bf, cfg=cfg, seed=rng_seed)


@dataclass
class ChannelEstimate:
    """Per-frame estimate: fixed number of paths plus the reference time.

    ``t_ref`` is the minimum estimated absolute arrival used for TDoA
    referencing and for anchoring the next frame's reduced delay grid.
    """

    paths: list
    t_ref: float
    t: float = 0.0
    diagnostics: dict | None = None

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    def as_matrix(self) -> np.ndarray:
        """Rows [|gain|, tdoa, doa_az, doa_el, dod_az, dod_el]."""
        return np.array(
            [
                [abs(p.gain), p.tdoa, p.doa_az, p.doa_el, p.dod_az, p.dod_el]
                for p in self.paths
            ]
        )
