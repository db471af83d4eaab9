"""Greedy multidimensional pursuit over factorized measurement operators.

The sparse recovery never materializes the Kronecker-structured measurement
matrix.  A candidate atom with multi-index (j1..j5) contributes, per training
frame m,

    sqrt(Pt) * (Wwh_m^* a_r) * ((a_t^* F_m) @ conv(pulse_j5, S_m))

where the transmit factors come pre-conjugated from the dictionary.  Each
greedy selection runs a per-dimension matched-filter initialization followed
by cyclic 1-D argmax sweeps; after every selection all coefficients are refit
jointly by least squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dictionaries import DictionarySet
from .signal import ChannelEstimate, MeasurementBatch, PathParams, PathOrder


class IndexOutOfRange(IndexError):
    """Atom index outside the dictionary grids."""


class RankDeficient(RuntimeError):
    """Selected atoms became linearly dependent beyond recovery."""


NOISE_FLOOR_MARGIN = 1.05

# An accepted atom must keep this fraction of its norm outside the span of
# the atoms already selected; anything closer is dependent beyond tolerance
# and would only blow up the joint refit.
DEPENDENCE_TOL = 0.15

# A joint sweep over the two x-axis dimensions rescues coupled-angle local
# maxima; it only runs when the product grid stays below this cap, so large
# tracking dictionaries keep their one-dimensional evaluation counts.
JOINT_SCAN_CAP = 32768

# Candidates whose measurement-space column energy falls this far below the
# strongest candidate in the same scan are invisible to the training beams;
# selecting them would only amplify noise into huge coefficients.
NORM_FLOOR_REL2 = 1e-4


@dataclass
class MompProblem:
    batch: MeasurementBatch
    dictionary: DictionarySet
    n_paths: int
    refine_sweeps: int = 3
    support_cycles: int = 0  # re-selection passes over the chosen support

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        dims = self.dictionary.dims
        bf = self.batch.beams
        nt = bf.precoders[0].shape[0]
        nr = bf.combiners[0].shape[0]
        if dims[0] * dims[1] != nt or dims[2] * dims[3] != nr:
            raise ValueError("dictionary dims inconsistent with beamformer sizes")


@dataclass
class SparseSolution:
    atoms: list
    coeffs: np.ndarray
    residual_norm: float
    params: list
    diagnostics: dict = field(default_factory=dict)


def predicted_evaluation_count(
    sizes, n_paths: int, refine_sweeps: int, n_starts: int = 6
) -> int:
    """Deterministic worst-case candidate evaluations per solve (seeded starts).

    Per selection: up to ``n_starts`` refinement runs of two sweep rounds
    each, joint tx/rx scans when the product grids are under the cap, the
    delay init scan, and the duplicate guard.  The decimated 4-D angular
    init used without a tracking prior adds its own fixed count on top.
    """
    total = int(np.sum(sizes))
    joint = sum(
        sizes[td] * sizes[rd]
        for td, rd in ((0, 2), (1, 3))
        if sizes[td] * sizes[rd] <= JOINT_SCAN_CAP
    )
    per_selection = (
        sizes[4]
        + n_starts * (2 * refine_sweeps * total + 2 * joint)
        + 5 * total
    )
    return n_paths * int(per_selection)


def _conv_pilots(psi5: np.ndarray, s3: np.ndarray, sqrt_pt: float) -> np.ndarray:
    """Delay-convolved pilots: (n_delay_atoms, n_s, q) for one frame."""
    nd, ns, q = s3.shape
    n5 = psi5.shape[1]
    if ns == 1 and n5 >= 64:
        # contraction over taps is a convolution of each pulse column with the
        # unshifted pilot row s3[0, 0, :]
        length = nd + q - 1
        sf = np.fft.fft(s3[0, 0, :], n=length)
        pf = np.fft.fft(psi5, n=length, axis=0)
        conv = np.fft.ifft(pf * sf[:, None], axis=0)[:q]
        return sqrt_pt * conv.T.reshape(n5, 1, q)
    return sqrt_pt * np.einsum("db,dsq->bsq", psi5, s3)


class _Solver:
    """One pursuit over a fixed batch/dictionary pair.

    Residual- and pilot-projection tensors are cached so 1-D scans cost
    O(M * grid) instead of O(M * grid * q):

    * ``pp[m, b, s, r]`` Gram of the delay-convolved pilots (fixed per solve)
    * ``g[m, b, s, r]``  residual projected on every delay atom (updated
      after each selection)
    """

    def __init__(self, problem: MompProblem, init: str = "matched", starts: str = "full"):
        self.p = problem
        self.init = init
        self.starts_mode = starts
        batch, dset = problem.batch, problem.dictionary
        bf = batch.beams
        cfg = batch.cfg
        self.sizes = dset.sizes
        ntx, nty, nrx, nry, nd = dset.dims
        self.ns = bf.n_streams
        self.q = cfg.q
        sqrt_pt = np.sqrt(cfg.pt)

        self.y = batch.stacked()
        self.r_blocks = np.stack([b for b in batch.blocks])  # (M, ns, q)
        self.f_resh = np.stack(
            [f.reshape(ntx, nty, self.ns) for f in bf.precoders]
        )
        self.wh_resh = np.stack(
            [bf.whitened_combiner_h(m).reshape(self.ns, nrx, nry) for m in range(bf.m)]
        )
        self.s3 = np.stack([s.reshape(nd, self.ns, self.q) for s in bf.pilots])
        self.ss = np.stack(
            [_conv_pilots(dset.psi[4], self.s3[m], sqrt_pt) for m in range(bf.m)]
        )  # (M, n5a, ns, q)
        self.pp = np.einsum("mbsq,mbrq->mbsr", self.ss, self.ss.conj())
        self.g = None
        self.psi = dset.psi
        # axis-projected beamformers: candidate factors per scan become a
        # single small contraction instead of a triple product
        self.tx1p = np.einsum("xa,mxys->mays", self.psi[0], self.f_resh)
        self.tx2p = np.einsum("ya,mxys->maxs", self.psi[1], self.f_resh)
        self.rx3p = np.einsum("xa,msxy->mays", self.psi[2], self.wh_resh)
        self.rx4p = np.einsum("ya,msxy->maxs", self.psi[3], self.wh_resh)
        self.evaluations = 0
        self.residual_curve = []
        self.sweep_counts = []
        self.flags = []
        self.dropped = []

    def set_residual(self, r_blocks):
        self.r_blocks = r_blocks
        self.g = np.einsum("msq,mbrq->mbsr", r_blocks, self.ss.conj())

    # -- factor helpers -------------------------------------------------

    def _tx_vec(self, j1, j2):
        return np.einsum(
            "x,y,mxys->ms", self.psi[0][:, j1], self.psi[1][:, j2], self.f_resh
        )

    def _rx_vec(self, j3, j4):
        return np.einsum(
            "x,y,msxy->ms", self.psi[2][:, j3], self.psi[3][:, j4], self.wh_resh
        )

    def _pilot_gram(self, j5):
        return self.pp[:, j5]

    def _proj(self, r, j5):
        """D_m = R_m P_m^H for the current delay atom."""
        return self.g[:, j5]

    # -- scans ------------------------------------------------------------

    def _mask(self, scores, dim, j, excluded):
        for e in excluded:
            if all(e[i] == j[i] for i in range(5) if i != dim):
                scores[e[dim]] = -np.inf
        return scores

    def _scan(self, dim, j, r, excluded):
        """True 1-D argmax of |<residual, atom>|/||atom|| along one dimension."""
        c = self._rx_vec(j[2], j[3])
        t = self._tx_vec(j[0], j[1])
        d = self._proj(r, j[4])
        k = self._pilot_gram(j[4])
        cn2 = np.einsum("ms,ms->m", c, c.conj()).real
        if dim in (0, 1):
            if dim == 0:
                cand = np.einsum("mays,y->mas", self.tx1p, self.psi[1][:, j[1]])
            else:
                cand = np.einsum("maxs,x->mas", self.tx2p, self.psi[0][:, j[0]])
            num = np.einsum("ms,msr,mar->a", c.conj(), d, cand.conj())
            tkt = np.einsum("mas,msr,mar->ma", cand, k, cand.conj()).real
            nrm2 = np.einsum("ma,m->a", tkt, cn2)
        elif dim in (2, 3):
            if dim == 2:
                cand = np.einsum("mays,y->mas", self.rx3p, self.psi[3][:, j[3]])
            else:
                cand = np.einsum("maxs,x->mas", self.rx4p, self.psi[2][:, j[2]])
            num = np.einsum("mas,msr,mr->a", cand.conj(), d, t.conj())
            tkt = np.einsum("ms,msr,mr->m", t, k, t.conj()).real
            ccn2 = np.einsum("mas,mas->ma", cand, cand.conj()).real
            nrm2 = np.einsum("ma,m->a", ccn2, tkt)
        else:
            num = np.einsum("ms,mbsr,mr->b", c.conj(), self.g, t.conj())
            pn2 = np.einsum("ms,mbsr,mr->mb", t, self.pp, t.conj()).real
            nrm2 = np.einsum("mb,m->b", pn2, cn2)
        self.evaluations += num.size
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.abs(num) / np.sqrt(nrm2)
        scores[~np.isfinite(scores)] = -np.inf
        if nrm2.size and nrm2.max() > 0:
            scores[nrm2 < NORM_FLOOR_REL2 * nrm2.max()] = -np.inf
        self._mask(scores, dim, j, excluded)
        return int(np.argmax(scores))

    def _init_delay(self, r, top: int = 1):
        """Delay indices by Frobenius matched filter, spatial structure marginalized."""
        e = np.einsum("mbsr,mbsr->mb", self.g, self.g.conj()).real
        pn = np.einsum("mbss->mb", self.pp).real
        with np.errstate(divide="ignore", invalid="ignore"):
            sc = np.where(pn > 0, e / pn, -np.inf).sum(axis=0)
        self.evaluations += sc.size
        if top == 1:
            return [int(np.argmax(sc))]
        order = np.argsort(-sc, kind="stable")
        return [int(k) for k in order[:top]]

    def _init_matched(self, r, j5: int | None = None, max_points: int = 24, top: int = 6):
        """Top candidate cells of a decimated joint scan over the angle dimensions.

    Per-dimension marginals are uninformative for single-stream frames (the
    residual enters only through per-frame scalars), so the init scans a
    coarse 4-D angular grid jointly at the given delay atom and returns the
    strongest non-neighboring cells; 1-D sweeps then refine inside each
    basin.  Decimation keeps steps near the array beamwidth.
        """
        j = [0, 0, 0, 0, 0]
        j[4] = self._init_delay(r)[0] if j5 is None else j5
        d = self._proj(r, j[4])
        k = self._pilot_gram(j[4])
        steps = [max(1, int(np.ceil(self.sizes[i] / max_points))) for i in range(4)]
        sel = [np.arange(0, self.sizes[i], steps[i]) for i in range(4)]
        # candidate tx rows and rx columns on the decimated pair grids
        tc = np.einsum("mays,yb->mabs", self.tx1p[:, sel[0]], self.psi[1][:, sel[1]])
        cc = np.einsum("mays,yb->mabs", self.rx3p[:, sel[2]], self.psi[3][:, sel[3]])
        num = np.einsum("mcds,msr,mabr->cdab", cc.conj(), d, tc.conj())
        tkt = np.einsum("mabs,msr,mabr->mab", tc, k, tc.conj()).real
        cn2 = np.einsum("mcds,mcds->mcd", cc, cc.conj()).real
        nrm2 = np.einsum("mcd,mab->cdab", cn2, tkt)
        self.evaluations += num.size
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.abs(num) / np.sqrt(nrm2)
        scores[~np.isfinite(scores)] = -np.inf
        if np.isfinite(scores).any() and nrm2.max() > 0:
            scores[nrm2 < NORM_FLOOR_REL2 * nrm2.max()] = -np.inf
        flat = np.argsort(-scores, axis=None, kind="stable")
        picked = []
        cells = []
        for f in flat[: 64 * top]:
            c_i, d_i, a_i, b_i = np.unravel_index(int(f), scores.shape)
            if not np.isfinite(scores[c_i, d_i, a_i, b_i]):
                break
            cell = (a_i, b_i, c_i, d_i)
            # keep only cells that are not lattice neighbors of a better one
            if any(max(abs(x - y) for x, y in zip(cell, kept)) <= 1 for kept in cells):
                continue
            cells.append(cell)
            picked.append(
                [int(sel[0][a_i]), int(sel[1][b_i]), int(sel[2][c_i]), int(sel[3][d_i]), j[4]]
            )
            if len(picked) >= top:
                break
        return picked or [j]

    def _full_score(self, j, r) -> float:
        col = self._atom_vector(tuple(j))
        nrm = np.linalg.norm(col)
        if nrm == 0.0:
            return -np.inf
        return float(abs(np.vdot(col, _stack_blocks(r))) / nrm)

    def _scan_joint(self, j, r, excluded, tx_dim, rx_dim):
        """Joint argmax over one tx and one rx dimension, others fixed."""
        d = self._proj(r, j[4])
        k = self._pilot_gram(j[4])
        if tx_dim == 0:
            tc = np.einsum("mays,y->mas", self.tx1p, self.psi[1][:, j[1]])
        else:
            tc = np.einsum("maxs,x->mas", self.tx2p, self.psi[0][:, j[0]])
        if rx_dim == 2:
            cc = np.einsum("mays,y->mas", self.rx3p, self.psi[3][:, j[3]])
        else:
            cc = np.einsum("maxs,x->mas", self.rx4p, self.psi[2][:, j[2]])
        num = np.einsum("mas,msr,mbr->ab", cc.conj(), d, tc.conj())
        tkt = np.einsum("mbs,msr,mbr->mb", tc, k, tc.conj()).real
        cn2 = np.einsum("mas,mas->ma", cc, cc.conj()).real
        nrm2 = np.einsum("ma,mb->ab", cn2, tkt)
        self.evaluations += num.size
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.abs(num) / np.sqrt(nrm2)
        scores[~np.isfinite(scores)] = -np.inf
        if nrm2.size and nrm2.max() > 0:
            scores[nrm2 < NORM_FLOOR_REL2 * nrm2.max()] = -np.inf
        other_dims = [dim for dim in range(5) if dim not in (tx_dim, rx_dim)]
        for e in excluded:
            if all(e[dim] == j[dim] for dim in other_dims):
                scores[e[rx_dim], e[tx_dim]] = -np.inf
        a_rx, a_tx = np.unravel_index(int(np.argmax(scores)), scores.shape)
        return int(a_tx), int(a_rx)

    def _refine(self, j, r, excluded):
        """Cyclic 1-D sweeps plus joint tx/rx rescue sweeps for coupled angles."""
        sweeps = 0
        pairs = [
            (td, rd)
            for td, rd in ((0, 2), (1, 3))
            if self.sizes[td] * self.sizes[rd] <= JOINT_SCAN_CAP
        ]
        for round_ in range(2):
            for _ in range(self.p.refine_sweeps):
                changed = False
                for dim in range(5):
                    jd = self._scan(dim, j, r, excluded)
                    if jd != j[dim]:
                        j[dim] = jd
                        changed = True
                sweeps += 1
                if not changed:
                    break
            moved = False
            for td, rd in pairs:
                a_tx, a_rx = self._scan_joint(j, r, excluded, td, rd)
                if (a_tx, a_rx) != (j[td], j[rd]):
                    j[td], j[rd] = a_tx, a_rx
                    moved = True
            if not moved:
                break
        return j, sweeps

    def _init_exhaustive(self, r, excluded):
        """Global argmax by scoring every atom; for small instances and tests."""
        rv = _stack_blocks(r)
        entries = []
        for j in np.ndindex(*self.sizes):
            if tuple(j) in excluded:
                continue
            col = self._atom_vector(j)
            self.evaluations += 1
            nrm = np.linalg.norm(col)
            if nrm == 0.0:
                continue
            entries.append((abs(np.vdot(col, rv)) / nrm, nrm, list(j)))
        if not entries:
            raise RankDeficient("no admissible atom left")
        nrm_max = max(e[1] for e in entries)
        floor = np.sqrt(NORM_FLOOR_REL2) * nrm_max
        best, best_j = -1.0, None
        for score, nrm, j in entries:
            if nrm >= floor and score > best + 1e-15:
                best, best_j = score, j
        return best_j

    def _atom_vector(self, j):
        t = self._tx_vec(j[0], j[1])
        c = self._rx_vec(j[2], j[3])
        blocks = [
            np.outer(c[m], t[m] @ self.ss[m, j[4]]) for m in range(self.r_blocks.shape[0])
        ]
        return np.concatenate([b.flatten(order="F") for b in blocks])

    # -- selection --------------------------------------------------------

    def select_atom(self, r, excluded):
        if self.init == "exhaustive":
            starts = [self._init_exhaustive(r, excluded)]
        elif self.starts_mode == "lean" and self.p.dictionary.seeds:
            # tracking prior: paths barely move between frames, so the
            # previous atoms are inside the right basins; refine from the two
            # that explain the current residual best
            cands = []
            for s in self.p.dictionary.seeds:
                s = list(s)
                if s not in cands:
                    cands.append(s)
            self.evaluations += len(cands)
            cands.sort(key=lambda s: -self._full_score(s, r))
            starts = cands[:2]
            starts.append([s // 2 for s in self.sizes])
        else:
            top5 = self._init_delay(r, top=2)
            starts = self._init_matched(r, j5=top5[0], top=6)
            for b in top5[1:]:
                starts += self._init_matched(r, j5=b, top=2)
            starts.append([s // 2 for s in self.sizes])
        seen, best_j, best_score, best_sweeps = [], None, -np.inf, 0
        for j0 in starts:
            if j0 in seen:
                continue
            seen.append(j0)
            j, sweeps = self._refine(list(j0), r, excluded)
            if tuple(j) in excluded:
                continue
            score = self._full_score(j, r)
            if score > best_score + 1e-12:
                best_j, best_score, best_sweeps = j, score, sweeps
        j = best_j
        guard = 0
        while j is None or tuple(j) in excluded:
            guard += 1
            if guard > 5:
                raise RankDeficient("could not avoid duplicate atom")
            j = j or [s // 2 for s in self.sizes]
            for dim in range(5):
                j[dim] = self._scan(dim, j, r, excluded)
                if tuple(j) not in excluded:
                    break
        self.sweep_counts.append(best_sweeps)
        return tuple(j)


def _ratio_sum(e, n):
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(n > 0, e / n, -np.inf)
    s = s.sum(axis=0)
    nn = n.sum(axis=0)
    if nn.size and nn.max() > 0:
        s[nn < NORM_FLOOR_REL2 * nn.max()] = -np.inf
    return s


def _stack_blocks(r_blocks):
    return np.concatenate([b.flatten(order="F") for b in r_blocks])


def _unstack(vec, like):
    out = np.empty_like(like)
    m, ns, q = like.shape
    step = ns * q
    for i in range(m):
        out[i] = vec[i * step : (i + 1) * step].reshape(ns, q, order="F")
    return out


def apply_atom(batch: MeasurementBatch, index, dset: DictionarySet) -> np.ndarray:
    """Measurement-space column of one dictionary atom, frames stacked."""
    for jk, size in zip(index, dset.sizes):
        if not 0 <= jk < size:
            raise IndexOutOfRange(f"index {tuple(index)} outside grids {dset.sizes}")
    bf = batch.beams
    cfg = batch.cfg
    sqrt_pt = np.sqrt(cfg.pt)
    j1, j2, j3, j4, j5 = index
    tx_col = np.kron(dset.psi[0][:, j1], dset.psi[1][:, j2])  # pre-conjugated
    rx_col = np.kron(dset.psi[2][:, j3], dset.psi[3][:, j4])
    pulse = dset.psi[4][:, j5]
    blocks = []
    for m in range(bf.m):
        f = bf.precoders[m]
        ns = f.shape[1]
        s3 = bf.pilots[m].reshape(cfg.nd, ns, cfg.q)
        conv = np.einsum("d,dsq->sq", pulse, s3)
        col = bf.whitened_combiner_h(m) @ rx_col
        row = tx_col @ f @ conv
        blocks.append(sqrt_pt * np.outer(col, row))
    return np.concatenate([b.flatten(order="F") for b in blocks])


def momp_solve(problem: MompProblem, init: str = "matched", starts: str = "full") -> SparseSolution:
    """Greedy pursuit: exactly ``n_paths`` atoms with joint least-squares refits."""
    solver = _Solver(problem, init=init, starts=starts)
    y = solver.y
    n = y.size
    noise_floor = problem.batch.cfg.noise_psd * n * NOISE_FLOOR_MARGIN
    r_blocks = solver.r_blocks.copy()
    solver.set_residual(r_blocks)
    atoms: list = []
    cols: list = []
    excluded: set = set()
    coeffs = np.zeros(0, dtype=complex)
    residual = y.copy()
    attempts = 0
    while len(atoms) < problem.n_paths:
        attempts += 1
        if attempts > 4 * problem.n_paths:
            raise RankDeficient("too many dependent atoms")
        j = solver.select_atom(r_blocks, excluded)
        col = solver._atom_vector(j)
        if cols:
            a_prev = np.stack(cols, axis=1)
            proj, *_ = np.linalg.lstsq(a_prev, col, rcond=None)
            perp = col - a_prev @ proj
            if np.linalg.norm(perp) < DEPENDENCE_TOL * np.linalg.norm(col):
                excluded.add(j)
                solver.dropped.append(j)
                continue
        trial = cols + [col]
        a = np.stack(trial, axis=1)
        sol, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
        if rank < a.shape[1]:
            excluded.add(j)
            solver.dropped.append(j)
            continue
        atoms.append(j)
        cols.append(col)
        excluded.add(j)
        coeffs = sol
        residual = y - a @ sol
        r_blocks = _unstack(residual, solver.r_blocks)
        solver.set_residual(r_blocks)
        res_energy = float(np.vdot(residual, residual).real)
        solver.residual_curve.append(np.sqrt(res_energy))
        solver.flags.append("below_noise_floor" if res_energy < noise_floor else "")
    # cyclic support refinement: drop one atom at a time and let the greedy
    # step re-pick it against the residual of the others; accept improvements
    for _ in range(problem.support_cycles):
        changed = False
        for i in range(len(atoms)):
            others = [c for k, c in enumerate(cols) if k != i]
            a_o = np.stack(others, axis=1)
            sol_o, *_ = np.linalg.lstsq(a_o, y, rcond=None)
            r_o = y - a_o @ sol_o
            solver.set_residual(_unstack(r_o, solver.r_blocks))
            taken = set(atoms) - {atoms[i]}
            try:
                j_new = solver.select_atom(solver.r_blocks, taken)
            except RankDeficient:
                continue
            if j_new == atoms[i]:
                continue
            col_new = solver._atom_vector(j_new)
            a_n = np.stack(others + [col_new], axis=1)
            sol_n, _, rank_n, _ = np.linalg.lstsq(a_n, y, rcond=None)
            r_n = y - a_n @ sol_n
            if rank_n == a_n.shape[1] and np.linalg.norm(r_n) < np.linalg.norm(residual) * (1 - 1e-9):
                atoms = [a for k, a in enumerate(atoms) if k != i] + [j_new]
                cols = others + [col_new]
                coeffs = sol_n
                residual = r_n
                changed = True
        solver.set_residual(_unstack(residual, solver.r_blocks))
        if changed:
            solver.residual_curve.append(float(np.linalg.norm(residual)))
        else:
            break
    t_sel = [problem.dictionary.grids[4].values[j[4]] for j in atoms]
    t_min = float(min(t_sel))
    params = []
    for j, coeff, t_abs in zip(atoms, coeffs, t_sel):
        toa, doa_az, doa_el, dod_az, dod_el = problem.dictionary.decode(j)
        params.append(
            PathParams(
                gain=complex(coeff),
                toa=toa,
                tdoa=float(t_abs - t_min),
                doa_az=doa_az,
                doa_el=doa_el,
                dod_az=dod_az,
                dod_el=dod_el,
                order=PathOrder.UNKNOWN,
            )
        )
    # contribution amplitude: how much measurement-space energy a row carries;
    # junk atoms can have huge coefficients on near-invisible columns, so raw
    # coefficient magnitude is not a dominance order
    strengths = [float(abs(c) * np.linalg.norm(col)) for c, col in zip(coeffs, cols)]
    diagnostics = {
        "evaluations": solver.evaluations,
        "sweeps": solver.sweep_counts,
        "residual_curve": solver.residual_curve,
        "atoms": [list(j) for j in atoms],
        "dropped": [list(j) for j in solver.dropped],
        "flags": solver.flags,
        "strengths": strengths,
        "init": init,
    }
    return SparseSolution(
        atoms=atoms,
        coeffs=coeffs,
        residual_norm=float(np.linalg.norm(residual)),
        params=params,
        diagnostics=diagnostics,
    )


def estimate_channel(
    batch: MeasurementBatch,
    dset: DictionarySet,
    n_paths: int,
    refine_sweeps: int = 3,
    t: float = 0.0,
    init: str = "matched",
    starts: str = "full",
    support_cycles: int = 0,
) -> ChannelEstimate:
    """Run the pursuit and package rows sorted by descending gain magnitude."""
    problem = MompProblem(
        batch=batch, dictionary=dset, n_paths=n_paths,
        refine_sweeps=refine_sweeps, support_cycles=support_cycles,
    )
    sol = momp_solve(problem, init=init, starts=starts)
    strengths = sol.diagnostics.get("strengths", [abs(p.gain) for p in sol.params])
    order = sorted(range(len(sol.params)), key=lambda i: (-strengths[i], i))
    paths = [sol.params[i] for i in order]
    sol.diagnostics["strengths"] = [strengths[i] for i in order]
    sol.diagnostics["atoms"] = [sol.diagnostics["atoms"][i] for i in order]
    t_ref = min(p.toa for p in paths)
    return ChannelEstimate(paths=paths, t_ref=t_ref, t=t, diagnostics=sol.diagnostics)
