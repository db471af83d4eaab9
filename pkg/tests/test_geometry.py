import numpy as np
import pytest

from momptrack.geometry import (
    LocalizationInput,
    LocMode,
    NotLocalizable,
    dead_reckon,
    localizable,
    solve_position,
)
from momptrack.signal import C0, PathOrder, PathParams, angles_from_unit


def mirror(p, plane_point, normal):
    return p - 2.0 * float((p - plane_point) @ normal) * normal


def forward_paths(bs, rx, wall_planes, include_los=True):
    """Independent forward model: lengths, directions and TDoAs from geometry."""
    raw = []
    if include_los:
        d = rx - bs
        length = float(np.linalg.norm(d))
        raw.append((length, d / length, -d / length, PathOrder.LOS))
    for point, normal in wall_planes:
        img = mirror(rx, point, normal)
        direction = img - bs
        t = float((point - bs) @ normal) / float(direction @ normal)
        s = bs + t * direction
        length = float(np.linalg.norm(img - bs))
        dod = (s - bs) / np.linalg.norm(s - bs)
        doa = (s - rx) / np.linalg.norm(s - rx)
        raw.append((length, dod, doa, PathOrder.FIRST_ORDER))
    ref = min(r[0] for r in raw)
    paths = []
    for length, dod, doa, order in raw:
        dod_az, dod_el = angles_from_unit(dod)
        doa_az, doa_el = angles_from_unit(doa)
        paths.append(
            PathParams(
                gain=1.0, toa=length / C0, tdoa=(length - ref) / C0,
                doa_az=float(doa_az), doa_el=float(doa_el),
                dod_az=float(dod_az), dod_el=float(dod_el), order=order,
            )
        )
    return paths


def random_scene(rng, n_walls, include_los):
    bs = np.array([0.0, -4.0, 4.0]) + rng.uniform(-1, 1, 3)
    rx = np.array([rng.uniform(-8, 8), rng.uniform(0.5, 4.0), rng.uniform(0.8, 1.6)])
    planes = []
    offsets = [6.0, -6.5, 0.0]
    normals = [
        np.array([0.0, -1.0, 0.0]),
        np.array([0.0, 1.0, 0.0]),
        np.array([0.0, 0.0, 1.0]),
    ]
    for k in range(n_walls):
        if k < 2:
            point = np.array([0.0, offsets[k] + rng.uniform(-0.5, 0.5), 0.0])
        else:
            point = np.zeros(3)
        planes.append((point, normals[k]))
    return bs, rx, planes


class TestLocalizable:
    def path(self, order):
        return PathParams(
            gain=1.0, toa=0.0, tdoa=0.0, doa_az=0, doa_el=0, dod_az=0, dod_el=0,
            order=order,
        )

    def test_los_plus_first(self):
        ok, mode = localizable([self.path(PathOrder.LOS), self.path(PathOrder.FIRST_ORDER)])
        assert ok and mode is LocMode.LOS_GEOMETRIC

    def test_two_first_without_los(self):
        ok, _ = localizable([self.path(PathOrder.FIRST_ORDER)] * 2)
        assert not ok

    def test_three_first_without_los(self):
        ok, mode = localizable([self.path(PathOrder.FIRST_ORDER)] * 3)
        assert ok and mode is LocMode.NLOS_GEOMETRIC

    def test_empty(self):
        ok, mode = localizable([])
        assert not ok and mode is LocMode.DEAD_RECKONING

    def test_los_only_not_localizable(self):
        ok, _ = localizable([self.path(PathOrder.LOS)])
        assert not ok
        with pytest.raises(NotLocalizable):
            solve_position(
                LocalizationInput(bs_position=np.zeros(3), paths=[self.path(PathOrder.LOS)])
            )


class TestSolvePosition:
    def test_los_one_reflection_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            bs, rx, planes = random_scene(rng, 1, include_los=True)
            paths = forward_paths(bs, rx, planes, include_los=True)
            sol = solve_position(LocalizationInput(bs_position=bs, paths=paths))
            assert sol.mode is LocMode.LOS_GEOMETRIC
            assert np.linalg.norm(sol.xyz - rx) < 1e-6

    def test_nlos_three_reflections_exact(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            bs, rx, planes = random_scene(rng, 3, include_los=False)
            paths = forward_paths(bs, rx, planes, include_los=False)
            sol = solve_position(LocalizationInput(bs_position=bs, paths=paths))
            assert sol.mode is LocMode.NLOS_GEOMETRIC
            assert np.linalg.norm(sol.xyz - rx) < 1e-6

    def test_translation_equivariance(self):
        rng = np.random.default_rng(2)
        bs, rx, planes = random_scene(rng, 2, include_los=True)
        paths = forward_paths(bs, rx, planes, include_los=True)
        shift = np.array([3.0, -1.0, 0.5])
        planes_shifted = [(p + shift, n) for p, n in planes]
        paths_shifted = forward_paths(bs + shift, rx + shift, planes_shifted)
        a = solve_position(LocalizationInput(bs_position=bs, paths=paths))
        b = solve_position(LocalizationInput(bs_position=bs + shift, paths=paths_shifted))
        assert np.allclose(b.xyz - a.xyz, shift, atol=1e-6)

    def test_graceful_degradation_monotone(self):
        rng = np.random.default_rng(3)
        med = {}
        for level in (1.0, 0.5):
            errs = []
            for _ in range(500):
                bs, rx, planes = random_scene(rng, 2, include_los=True)
                paths = forward_paths(bs, rx, planes, include_los=True)
                noisy = []
                for p in paths:
                    noisy.append(
                        PathParams(
                            gain=p.gain,
                            toa=p.toa,
                            tdoa=max(0.0, p.tdoa + (rng.normal(0, 1e-9 * level) if p.tdoa > 0 else 0.0)),
                            doa_az=p.doa_az + rng.normal(0, np.deg2rad(1) * level),
                            doa_el=p.doa_el + rng.normal(0, np.deg2rad(1) * level),
                            dod_az=p.dod_az + rng.normal(0, np.deg2rad(1) * level),
                            dod_el=p.dod_el + rng.normal(0, np.deg2rad(1) * level),
                            order=p.order,
                        )
                    )
                sol = solve_position(LocalizationInput(bs_position=bs, paths=noisy))
                errs.append(np.linalg.norm(sol.xy - rx[:2]))
            med[level] = float(np.median(errs))
        assert np.isfinite(med[1.0])
        assert med[0.5] < med[1.0]


class TestDeadReckon:
    def test_zero_speed(self):
        xy = dead_reckon([1.0, 2.0], [0.0, 0.0], 0.5)
        assert np.array_equal(xy, [1.0, 2.0])

    def test_sixty_kmh_half_ms(self):
        xy = dead_reckon([0.0, 0.0], [16.67, 0.0], 0.5e-3)
        assert xy[0] == pytest.approx(0.008335)
        assert xy[1] == 0.0

    def test_affine_exact(self):
        xy = dead_reckon([10.0, 2.0], [-1.0, 1.0], 1.0)
        assert np.array_equal(xy, [9.0, 3.0])

    def test_bit_exact_affine(self):
        prev = np.array([3.25, -1.5])
        v = np.array([0.1, -0.2])
        tp = 7.8125e-3
        assert np.array_equal(dead_reckon(prev, v, tp), prev + tp * v)
