import numpy as np
import pytest

from momptrack.dictionaries import (
    EmptyEstimate,
    GridKind,
    ResolutionTooFine,
    build_full,
    build_reduced,
    build_reduced_angular,
    build_reduced_delay,
    reduced_angle_grid,
)
from momptrack.signal import (
    ArrayGeometry,
    ChannelEstimate,
    PathParams,
    WaveformConfig,
    local_axis_angles,
)

CFG = WaveformConfig()
TX = ArrayGeometry(nx=4, ny=4)
RX = ArrayGeometry(nx=3, ny=3)


def estimate_with(paths):
    t_ref = min(p.toa for p in paths)
    return ChannelEstimate(paths=paths, t_ref=t_ref)


def path_at(dod=(0.3, 0.1), doa=(-0.4, 0.2), toa=20e-9, tdoa=0.0, gain=1.0):
    return PathParams(
        gain=gain, toa=toa, tdoa=tdoa,
        doa_az=doa[0], doa_el=doa[1], dod_az=dod[0], dod_el=dod[1],
    )


class TestFullGrids:
    def test_two_point_half_open_grid(self):
        d = build_full(CFG, TX, RX, n_angular=(2, 2, 2, 2), n_delay=4)
        for g in d.grids[:4]:
            assert np.allclose(g.values, [0.0, np.pi / 2])

    def test_delay_grid_matches_sample_times(self):
        d = build_full(CFG, TX, RX, n_angular=(2, 2, 2, 2), n_delay=CFG.nd)
        assert np.allclose(d.grids[4].values, np.arange(CFG.nd) * 1e-9)

    def test_delay_column_at_on_grid_time_is_unit_vector(self):
        d = build_full(CFG, TX, RX, n_angular=(2, 2, 2, 2), n_delay=CFG.nd)
        col = d.psi[4][:, 5]  # atom at t = 5*ts
        e6 = np.zeros(CFG.nd)
        e6[5] = 1.0
        assert np.allclose(col, e6, atol=1e-12)

    def test_resolution_cap(self):
        with pytest.raises(ResolutionTooFine):
            build_full(CFG, TX, RX, n_angular=(2, 2, 2, 2), n_delay=10**7)

    def test_index_round_trip(self):
        d = build_full(CFG, TX, RX, n_angular=(3, 3, 3, 3), n_delay=5)
        from momptrack.dictionaries import angular_column, delay_column

        specs = [(TX.nx, TX.spacing, True), (TX.ny, TX.spacing, True),
                 (RX.nx, RX.spacing, False), (RX.ny, RX.spacing, False)]
        for k, (n, sp, conj) in enumerate(specs):
            for j, beta in enumerate(d.grids[k].values):
                assert np.allclose(
                    d.psi[k][:, j], angular_column(n, sp, beta, conj), atol=1e-12
                )
        for j, t in enumerate(d.grids[4].values):
            assert np.allclose(d.psi[4][:, j], delay_column(t, CFG), atol=1e-12)


class TestReducedAngular:
    def test_single_path_three_points(self):
        omega = np.deg2rad(1.0)
        prev = estimate_with([path_at()])
        out = build_reduced_angular(prev, omega, omega, TX, RX)
        (grid, mat) = out[0]
        center = local_axis_angles(TX, 0.3, 0.1)[0]
        assert np.allclose(grid.values, [center - omega, center, center + omega], atol=1e-12)
        assert mat.shape == (TX.nx, 3)

    def test_grid_count_at_experiment_settings(self):
        # 2*15deg sector at 0.175deg resolution: floor(2w/dw) + 1 = 172 points
        omega, d_omega = np.deg2rad(15.0), np.deg2rad(0.175)
        prev = estimate_with([path_at(dod=(0.0, 0.3), doa=(0.2, 0.2))])
        out = build_reduced_angular(prev, omega, d_omega, TX, RX)
        for grid, _ in out:
            assert len(grid) == 172

    def test_merged_sectors_match_bruteforce_union(self):
        omega, d_omega = np.deg2rad(2.0), np.deg2rad(0.5)
        centers = [1.0, 1.02]  # overlap by much more than d_omega
        grid = reduced_angle_grid(centers, omega, d_omega)
        brute = np.sort(
            np.concatenate(
                [c - omega + np.arange(9) * d_omega for c in centers]
            )
        )
        kept = [brute[0]]
        for p in brute[1:]:
            if p - kept[-1] >= d_omega / 2:
                kept.append(p)
        assert np.allclose(grid, kept, atol=1e-12)
        assert np.all(np.diff(grid) >= d_omega / 2 - 1e-12)

    def test_reduction_property_and_size_bound(self):
        omega, d_omega = np.deg2rad(15.0), np.deg2rad(0.5)
        paths = [path_at(), path_at(dod=(0.9, -0.2), doa=(0.1, 0.4), toa=25e-9, tdoa=5e-9)]
        prev = estimate_with(paths)
        out = build_reduced_angular(prev, omega, d_omega, TX, RX)
        tx_centers = [local_axis_angles(TX, p.dod_az, p.dod_el)[0] for p in paths]
        grid = out[0][0]
        for v in grid.values:
            assert min(abs(v - c) for c in tx_centers) <= omega + 1e-12
        per_sector = int(np.floor(2 * omega / d_omega + 1e-9)) + 1
        assert len(grid) <= len(paths) * per_sector

    def test_empty_estimate_raises(self):
        with pytest.raises(EmptyEstimate):
            build_reduced_angular(estimate_with([path_at()]).__class__(paths=[], t_ref=0.0),
                                  0.1, 0.01, TX, RX)


class TestReducedDelay:
    def test_single_path_three_points(self):
        d_tau = 0.01e-9
        prev = estimate_with([path_at(toa=20e-9)])
        grid, mat = build_reduced_delay(prev, eps=2 * d_tau, d_tau=d_tau, cfg=CFG)
        assert len(grid) == 3
        assert np.allclose(grid.values, 20e-9 + np.arange(3) * d_tau, atol=1e-18)
        assert mat.shape == (CFG.nd, 3)

    def test_count_at_experiment_settings(self):
        # tau_max 7 ns, eps 0.2 ns, resolution 0.01 ns: 721 points
        prev = estimate_with(
            [path_at(toa=20e-9), path_at(toa=27e-9, tdoa=7e-9)]
        )
        grid, _ = build_reduced_delay(prev, eps=0.2e-9, d_tau=0.01e-9, cfg=CFG)
        assert len(grid) == 721

    def test_progression_oracle(self):
        prev = estimate_with(
            [path_at(toa=17.3e-9), path_at(toa=21.05e-9, tdoa=3.75e-9)]
        )
        d_tau = 0.05e-9
        grid, _ = build_reduced_delay(prev, eps=0.1e-9, d_tau=d_tau, cfg=CFG)
        expected = 17.3e-9 + np.arange(len(grid)) * d_tau
        assert np.max(np.abs(grid.values - expected)) < 1e-15

    def test_span_cap(self):
        prev = estimate_with(
            [path_at(toa=20e-9), path_at(toa=55e-9, tdoa=35e-9)]
        )
        grid, _ = build_reduced_delay(prev, eps=0.2e-9, d_tau=0.01e-9, cfg=CFG, max_span=10e-9)
        assert grid.values[-1] <= 20e-9 + 10e-9 + 0.2e-9 + 1e-15


class TestComposite:
    def test_build_reduced_assembles_all_dimensions(self):
        prev = estimate_with([path_at()])
        d = build_reduced(prev, np.deg2rad(5), np.deg2rad(1), 0.2e-9, 0.1e-9, CFG, TX, RX)
        assert len(d.psi) == 5
        assert d.sizes[4] == 3
        assert [g.kind for g in d.grids] == [
            GridKind.TX_AZ, GridKind.TX_EL, GridKind.RX_AZ, GridKind.RX_EL, GridKind.DELAY,
        ]
        toa, doa_az, doa_el, dod_az, dod_el = d.decode((0, 0, 0, 0, 1))
        assert toa == pytest.approx(20e-9 + 0.1e-9)

    def test_decode_round_trip_angles(self):
        # a path exactly on the grid decodes back to its own angles
        prev = estimate_with([path_at(dod=(0.3, 0.1), doa=(-0.4, 0.2))])
        d = build_reduced(prev, np.deg2rad(5), np.deg2rad(1), 0.2e-9, 0.1e-9, CFG, TX, RX)
        centers_tx = local_axis_angles(TX, 0.3, 0.1)
        j1 = int(np.argmin(np.abs(d.grids[0].values - centers_tx[0])))
        j2 = int(np.argmin(np.abs(d.grids[1].values - centers_tx[1])))
        centers_rx = local_axis_angles(RX, -0.4, 0.2)
        j3 = int(np.argmin(np.abs(d.grids[2].values - centers_rx[0])))
        j4 = int(np.argmin(np.abs(d.grids[3].values - centers_rx[1])))
        _, doa_az, doa_el, dod_az, dod_el = d.decode((j1, j2, j3, j4, 0))
        assert dod_az == pytest.approx(0.3, abs=1e-9)
        assert dod_el == pytest.approx(0.1, abs=1e-9)
        assert doa_az == pytest.approx(-0.4, abs=1e-9)
        assert doa_el == pytest.approx(0.2, abs=1e-9)
