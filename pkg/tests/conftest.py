"""Shared fixtures: tiny measurement instances and materialized-operator oracles."""

import numpy as np

from momptrack.dictionaries import build_full
from momptrack.signal import (
    ArrayGeometry,
    BeamformerSet,
    PathParams,
    WaveformConfig,
    local_axis_angles,
    pilot_matrix,
    world_from_axis_angles,
)


def random_beams(rng, nt, nr, ns, m, cfg):
    precoders, combiners, pilots = [], [], []
    for _ in range(m):
        f = rng.standard_normal((nt, ns)) + 1j * rng.standard_normal((nt, ns))
        f /= np.linalg.norm(f, axis=0, keepdims=True)
        w = rng.standard_normal((nr, ns)) + 1j * rng.standard_normal((nr, ns))
        s = rng.choice([-1.0, 1.0], size=(ns, cfg.q)) / np.sqrt(ns)
        precoders.append(f)
        combiners.append(w)
        pilots.append(pilot_matrix(s, cfg.nd))
    return BeamformerSet(precoders=precoders, combiners=combiners, pilots=pilots)


def tiny_instance(
    seed=0,
    tx_shape=(2, 1),
    rx_shape=(2, 1),
    nd=12,
    q=8,
    m=2,
    ns=1,
    n_angular=(3, 1, 3, 1),
    n_delay=4,
    noise_psd=0.0,
):
    cfg = WaveformConfig(
        bandwidth=1e9, ts=1e-9, nd=nd, q=q, pt_dbm=30.0, noise_psd=noise_psd
    )
    tx = ArrayGeometry(*tx_shape)
    rx = ArrayGeometry(*rx_shape)
    dset = build_full(cfg, tx, rx, n_angular=n_angular, n_delay=n_delay)
    rng = np.random.default_rng(seed)
    bf = random_beams(rng, tx.n_elements, rx.n_elements, ns, m, cfg)
    return cfg, tx, rx, dset, bf, rng


def valid_atom_indices(dset, rng, count, interior=0.0, distinct_delays=False):
    """Atom indices that decode to physical directions and in-window delays.

    ``interior`` keeps angular indices away from the aliased grid ends;
    ``distinct_delays`` forces well-separated (pulse-orthogonal) supports.
    """
    from momptrack.signal import delay_window_limits

    lo, hi = delay_window_limits(dset.cfg)
    picked = []
    sizes = dset.sizes
    tries = 0
    while len(picked) < count and tries < 100000:
        tries += 1
        j = []
        for i, s in enumerate(sizes):
            if i < 4 and s > 1 and interior > 0:
                low = int(np.ceil(interior * s))
                high = max(low + 1, int(np.floor((1 - interior) * s)))
                j.append(int(rng.integers(low, high)))
            else:
                j.append(int(rng.integers(s)))
        j = tuple(j)
        okt = (
            np.cos(dset.grids[0].values[j[0]]) ** 2
            + np.cos(dset.grids[1].values[j[1]]) ** 2
        ) <= 0.98
        okd = lo <= dset.grids[4].values[j[4]] <= hi
        okr = (
            np.cos(dset.grids[2].values[j[2]]) ** 2
            + np.cos(dset.grids[3].values[j[3]]) ** 2
        ) <= 0.98
        if distinct_delays and any(j[4] == e[4] for e in picked):
            continue
        if (okt or dset.tx.ny == 1) and (okr or dset.rx.ny == 1) and okd and j not in picked:
            picked.append(j)
    return picked


def path_for_atom(dset, j, gain):
    """PathParams that synthesize exactly the atom with multi-index j."""
    tx, rx = dset.tx, dset.rx
    if tx.ny == 1:
        dod_az, dod_el = float(dset.grids[0].values[j[0]]), 0.0
    else:
        dod_az, dod_el = world_from_axis_angles(
            tx, dset.grids[0].values[j[0]], dset.grids[1].values[j[1]]
        )
    if rx.ny == 1:
        doa_az, doa_el = float(dset.grids[2].values[j[2]]), 0.0
    else:
        doa_az, doa_el = world_from_axis_angles(
            rx, dset.grids[2].values[j[2]], dset.grids[3].values[j[3]]
        )
    toa = float(dset.grids[4].values[j[4]])
    return PathParams(
        gain=gain, toa=toa, tdoa=0.0,
        doa_az=doa_az, doa_el=doa_el, dod_az=dod_az, dod_el=dod_el,
    )


def materialize_operator(batch, dset):
    """Explicit measurement matrix over all atoms, lexicographic atom order.

    Built from the definition: per frame, the row block
    ``(S^T (I kron F^T)) kron W_whitened^*`` applied to the flattened
    five-factor outer product.  Independent of the solver's factorized path.
    """
    bf = batch.beams
    cfg = batch.cfg
    sqrt_pt = np.sqrt(cfg.pt)
    nt = bf.precoders[0].shape[0]
    phi_blocks = []
    for m in range(bf.m):
        f = bf.precoders[m]
        s = bf.pilots[m]
        a = s.T @ np.kron(np.eye(cfg.nd), f.T)
        phi_blocks.append(sqrt_pt * np.kron(a, bf.whitened_combiner_h(m)))
    phi = np.vstack(phi_blocks)
    sizes = dset.sizes
    cols = []
    atoms = list(np.ndindex(*sizes))
    for j in atoms:
        t = np.einsum(
            "a,b,c,d,e->eabcd",
            dset.psi[0][:, j[0]],
            dset.psi[1][:, j[1]],
            dset.psi[2][:, j[2]],
            dset.psi[3][:, j[3]],
            dset.psi[4][:, j[4]],
        ).ravel()
        cols.append(phi @ t)
    return np.stack(cols, axis=1), atoms


def omp_oracle(a, y, k):
    """Reference OMP on an explicit matrix with norm-scored selection."""
    norms = np.linalg.norm(a, axis=0)
    sel = []
    r = y.copy()
    sol = np.zeros(0)
    res_norms = []
    for _ in range(k):
        scores = np.abs(a.conj().T @ r) / np.where(norms > 0, norms, np.inf)
        scores[sel] = -np.inf
        sel.append(int(np.argmax(scores)))
        sol, *_ = np.linalg.lstsq(a[:, sel], y, rcond=None)
        r = y - a[:, sel] @ sol
        res_norms.append(float(np.linalg.norm(r)))
    return sel, sol, res_norms
