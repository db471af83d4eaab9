"""Evaluation: nearest-rank percentiles and matched path errors."""

from __future__ import annotations

import numpy as np

from .signal import PathOrder, unit_from_angles


class EmptyList(ValueError):
    """Percentile of an empty error list."""


# Matching metric weights: angles in radians weigh 1, TDoA weighs 1 per 7 ns.
TDOA_WEIGHT = 1.0 / 7e-9


def percentile(errors, p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    arr = np.sort(np.asarray(errors, dtype=float))
    if arr.size == 0:
        raise EmptyList("no errors to rank")
    if not 0.0 <= p <= 100.0:
        raise ValueError("percentile outside [0, 100]")
    rank = int(np.ceil(p / 100.0 * arr.size))
    return float(arr[max(rank, 1) - 1])


def angle_between(az1, el1, az2, el2) -> float:
    u = unit_from_angles(az1, el1)
    v = unit_from_angles(az2, el2)
    return float(np.arccos(np.clip(u @ v, -1.0, 1.0)))


def _distance(est, true) -> float:
    ddod = angle_between(est.dod_az, est.dod_el, true.dod_az, true.dod_el)
    ddoa = angle_between(est.doa_az, est.doa_el, true.doa_az, true.doa_el)
    return ddod + ddoa + abs(est.tdoa - true.tdoa) * TDOA_WEIGHT


def match_paths(estimated, truth):
    """One-to-one greedy matching of usable estimated paths to nearest true paths.

    Only estimates labeled direct or first order participate.  Returns a list
    of (ddod_rad, ddoa_rad, dtdoa_s) triples, one per matched estimate.
    """
    usable = [
        p for p in estimated if p.order in (PathOrder.LOS, PathOrder.FIRST_ORDER)
    ]
    if not usable or not truth:
        return []
    pairs = sorted(
        ((_distance(e, t), i, k) for i, e in enumerate(usable) for k, t in enumerate(truth)),
        key=lambda x: x[0],
    )
    taken_e, taken_t = set(), set()
    triples = []
    for _, i, k in pairs:
        if i in taken_e or k in taken_t:
            continue
        taken_e.add(i)
        taken_t.add(k)
        e, t = usable[i], truth[k]
        triples.append(
            (
                angle_between(e.dod_az, e.dod_el, t.dod_az, t.dod_el),
                angle_between(e.doa_az, e.doa_el, t.doa_az, t.doa_el),
                abs(e.tdoa - t.tdoa),
            )
        )
    return triples
