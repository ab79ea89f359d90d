"""Gating, assignment-problem construction, and k-best assignment.

The measurement update reduces the choice among association events under one
prior global hypothesis to a rectangular assignment problem: columns are the
scan's measurements, rows are the existing tracks plus one pseudo-row per
measurement for the track it may start.  Entries are negative log weight
ratios against the all-miss baseline, so the k cheapest assignments are the k
heaviest posterior global hypotheses.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
import numpy as np
from scipy.optimize import linear_sum_assignment

from . import bernoulli, gaussseq
from .density import GlobalHypothesis, PmbmDensity

__all__ = [
    "gate",
    "CostMatrix",
    "Assignment",
    "ScanTables",
    "build_cost_matrix",
    "scan_weight_tables",
    "hungarian_best",
    "murty_kbest",
]

INF = float("inf")
LOG_2PI = math.log(2.0 * math.pi)


def gate(seq, m: gaussseq.ModelLG, z, gate_prob: float) -> bool:
    """Ellipsoidal gate: squared Mahalanobis innovation distance against the
    chi-square quantile at ``gate_prob`` with measurement-dimension dof."""
    if not 0.0 < gate_prob <= 1.0:
        raise ValueError("gate probability must lie in (0, 1]")
    Z = np.asarray(z, dtype=float).reshape(1, -1)
    mask, _ = gaussseq.gate_likelihoods(seq, m, Z, gate_prob)
    return bool(mask[0])


@dataclass(frozen=True)
class Assignment:
    """Column-to-row mapping (-1 for an unassigned column) and its cost."""

    mapping: tuple
    cost: float


@dataclass(frozen=True)
class CostMatrix:
    """Assignment problem for one prior global hypothesis.

    ``matrix`` has one row per existing track followed by one pseudo-row per
    measurement (finite only in its own column), and one column per
    measurement.  ``base`` is the log weight of the all-miss association, so
    a child global's log weight is ``prior + base - cost``.
    """

    matrix: np.ndarray
    track_ids: tuple  # track id per track row
    base: float

    @property
    def n_tracks(self) -> int:
        return len(self.track_ids)

    @property
    def n_meas(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class ScanTables:
    """Per-scan association factors shared by every prior global hypothesis.

    ``ppp_gated[j]`` lists (component index, likelihood) for the undetected
    components that gate with measurement j, reused when the new track for j
    is materialized.
    """

    miss_log: dict  # (track, hyp) -> log miss factor
    det_log: dict  # (track, hyp, j) -> log detection factor (gated only)
    new_log: dict  # j -> log new-track weight
    ppp_gated: dict  # j -> tuple of (ppp component index, likelihood)


def build_cost_matrix(
    p: PmbmDensity,
    g: GlobalHypothesis,
    scan,
    model: gaussseq.ModelLG,
    sensor,
    tables: ScanTables = None,
) -> CostMatrix:
    """Negative log weight ratios for the scan under one prior global.

    Entry (track, j): detection-vs-miss log ratio (infinite when gating
    failed); entry (pseudo-row j, j): negative log of the new-track weight
    (clutter plus detected Poisson mass).  ``tables`` may carry precomputed
    per-hypothesis factors from :func:`scan_weight_tables`.
    """
    if tables is None:
        tables = scan_weight_tables(p, scan, model, sensor)
    miss_log, det_log, new_log = tables.miss_log, tables.det_log, tables.new_log
    m = len(scan)
    chosen = dict(g.choice)
    track_ids = tuple(t.id for t in p.tracks)
    mat = np.full((len(track_ids) + m, m), INF)
    base = 0.0
    for row, tid in enumerate(track_ids):
        hidx = chosen[tid]
        miss = miss_log[(tid, hidx)]
        # a certain detection makes the miss weight zero; floor it so the
        # ratio stays finite (exact child weights are recomputed from the
        # factor tables, the matrix only drives the enumeration order)
        safe_miss = miss if math.isfinite(miss) else -745.0
        base += safe_miss
        for j in range(m):
            if (tid, hidx, j) in det_log:
                ratio = det_log[(tid, hidx, j)] - safe_miss
                if math.isfinite(ratio):
                    mat[row, j] = -ratio
    for j in range(m):
        if new_log[j] > -INF:
            mat[len(track_ids) + j, j] = -new_log[j]
    return CostMatrix(mat, track_ids, base)


def scan_weight_tables(p: PmbmDensity, scan, model: gaussseq.ModelLG, sensor) -> ScanTables:
    """Log factors of every missed/detected/new-track association of a scan.

    Detection factors exist only for (hypothesis, measurement) pairs where at
    least one alive component passes the gate; the new-track weight for a
    measurement sums the gated undetected components only.
    """
    k = p.window.gamma
    pd = sensor.pd
    m = len(scan)
    Z = np.asarray(scan, dtype=float).reshape(m, -1) if m else np.zeros((0, model.nz))
    miss_log: dict = {}
    det_log: dict = {}
    for t in p.tracks:
        for hidx, h in enumerate(t.hypotheses):
            if h.r == 0.0 or h.density is None:
                miss_log[(t.id, hidx)] = 0.0
                continue
            pd_mass = pd * sum(c.weight * c.alive_mass(k) for c in h.density.components)
            miss_log[(t.id, hidx)] = bernoulli._log(1.0 - h.r * pd_mass)
            if m == 0:
                continue
            gated_any = np.zeros(m, dtype=bool)
            evid = np.zeros(m)
            for c in h.density.components:
                a = c.alive_mass(k)
                if a <= 0.0:
                    continue
                mask, liks = gaussseq.gate_likelihoods(c.seq, model, Z, sensor.gate_prob)
                gated_any |= mask
                evid += c.weight * a * liks
            for j in np.flatnonzero(gated_any):
                det_log[(t.id, hidx, int(j))] = bernoulli._log(h.r * pd * evid[j])
    new_log: dict = {}
    ppp_gated: dict = {j: [] for j in range(m)}
    evid = np.zeros(m)
    for idx, c in enumerate(p.ppp.components):
        a = c.alive_mass(k)
        if a <= 0.0 or m == 0:
            continue
        mask, liks = gaussseq.gate_likelihoods(c.seq, model, Z, sensor.gate_prob)
        for j in np.flatnonzero(mask):
            evid[j] += c.weight * a * liks[j]
            ppp_gated[j].append((idx, float(liks[j])))
    for j, z in enumerate(scan):
        lam_fa = sensor.clutter_rate / sensor.region.volume if sensor.region.contains(z) else 0.0
        new_log[j] = bernoulli._log(lam_fa + pd * evid[j])
    return ScanTables(miss_log, det_log, new_log, {j: tuple(v) for j, v in ppp_gated.items()})


# ---------------------------------------------------------------------------
# optimal and k-best assignment
# ---------------------------------------------------------------------------


def _solve(matrix: np.ndarray):
    """Minimum-cost assignment of a rectangular matrix with forbidden (inf)
    entries.  Returns (mapping col->row, cost) or None when infeasible."""
    n_rows, n_cols = matrix.shape
    try:
        rows, cols = linear_sum_assignment(matrix)
    except ValueError:
        return None
    cost = matrix[rows, cols].sum()
    if not np.isfinite(cost):
        return None
    mapping = np.full(n_cols, -1, dtype=int)
    mapping[cols] = rows
    return tuple(int(r) for r in mapping), float(cost)


def hungarian_best(c) -> Assignment:
    """Optimal assignment; among equal-cost optima the lexicographically
    smallest column-to-row mapping is returned."""
    matrix = np.asarray(c.matrix if isinstance(c, CostMatrix) else c, dtype=float)
    best = _solve(matrix)
    if best is None:
        raise ValueError("infeasible assignment problem")
    mapping, cost = best
    # refine column by column: force the smallest row that still attains the
    # optimal cost (exact-equality ties only)
    work = matrix.copy()
    refined = []
    for col in range(matrix.shape[1]):
        chosen = mapping[col]
        for row in sorted(r for r in range(matrix.shape[0]) if np.isfinite(work[r, col])):
            if row == chosen:
                break
            trial = work.copy()
            trial[:, col] = INF
            trial[row, col] = work[row, col]
            sol = _solve(trial)
            if sol is not None and sol[1] == cost:
                chosen = row
                mapping = sol[0]
                break
        refined.append(chosen)
        work[:, col] = INF
        if chosen >= 0:
            work[chosen, col] = matrix[chosen, col]
    return Assignment(tuple(refined), cost)


def murty_kbest(c, M: int, max_gap=None) -> list:
    """Up to M cheapest assignments in nondecreasing cost order.

    Classic partition-of-the-solution-space enumeration: each dequeued
    solution spawns one subproblem per assigned column, forbidding that pair
    and forcing the earlier ones.  Forced pairs leave the subproblem matrix,
    so deeper nodes solve smaller problems.  Ties are ordered by the mapping
    tuple.  When ``max_gap`` is given, enumeration stops at the first
    solution whose cost exceeds the optimum by more than the gap.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    matrix = np.asarray(c.matrix if isinstance(c, CostMatrix) else c, dtype=float)
    n_rows, n_cols = matrix.shape
    if n_cols == 0:
        return [Assignment((), 0.0)]
    first = _solve(matrix)
    if first is None:
        raise ValueError("infeasible assignment problem")
    counter = itertools.count()  # guards against incomparable payloads
    # node: cost, full mapping, tiebreak, active matrix, row/col ids, fixed pairs, fixed cost
    heap = [(first[1], first[0], next(counter), matrix, tuple(range(n_rows)), tuple(range(n_cols)), (), 0.0)]
    best = first[1]
    out: list = []
    while heap and len(out) < M:
        cost, mapping, _, sub, rows, cols, fixed, fcost = heapq.heappop(heap)
        if max_gap is not None and cost - best > max_gap:
            break  # heap yields nondecreasing costs: nothing closer remains
        out.append(Assignment(mapping, cost))
        sub = sub.copy()
        rows_l, cols_l = list(rows), list(cols)
        for col in cols:
            row = mapping[col]
            if row < 0:
                continue
            ci, ri = cols_l.index(col), rows_l.index(row)
            # spawn only when the column keeps another option once this pair
            # is forbidden; clutter-dominated columns rarely do
            if np.isfinite(sub[:, ci]).sum() >= 2:
                child = sub.copy()
                child[ri, ci] = INF
                sol = _solve(child)
                if sol is not None:
                    full = [-1] * n_cols
                    for c_i, r_i in enumerate(sol[0]):
                        if r_i >= 0:
                            full[cols_l[c_i]] = rows_l[r_i]
                    for fc, fr in fixed:
                        full[fc] = fr
                    heapq.heappush(
                        heap,
                        (sol[1] + fcost, tuple(full), next(counter), child, tuple(rows_l), tuple(cols_l), fixed, fcost),
                    )
            # force this pair in later siblings: drop its row and column
            fixed = fixed + ((col, row),)
            fcost += sub[ri, ci]
            sub = np.delete(np.delete(sub, ri, axis=0), ci, axis=1)
            rows_l.pop(ri)
            cols_l.pop(ci)
    return out
