"""The PMBM recursion over sets of trajectories.

Two trackers share one measurement update and differ in prediction:

* all-trajectories mode keeps ended trajectories in the posterior; survival
  only governs whether a trajectory keeps extending, bookkept compactly by a
  per-component death-time pmf;
* current-trajectories mode drops ended trajectories, scaling Bernoulli
  existence and Poisson weights by the survival probability instead.

The update processes a scan jointly: per prior global hypothesis the best
children are enumerated with Murty's algorithm over a cost matrix of negative
log weight ratios, new tracks are spawned per measurement, and the result is
normalized and pruned.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import bernoulli, estimate, gaussseq
from .association import murty_kbest, scan_weight_tables
from .density import (
    GlobalHypothesis,
    LocalHypothesis,
    PmbmDensity,
    PruneThresholds,
    Track,
    normalize,
    prune,
    validate,
)
from .models import BirthModel, SensorModel, SurvivalModel, birth_intensity_at
from .trajectory import BirthDeathPmf, TimeWindow, TrajectoryMixture, birth_death_pmf

__all__ = ["TrackerConfig", "TrackerState", "PmbmTracker", "RunResult"]

INF = float("inf")


@dataclass(frozen=True)
class TrackerConfig:
    # total child hypotheses per scan, split across prior globals by weight;
    # None enumerates every association of every prior global (exact mode)
    murty_budget: Optional[int] = 100
    thresholds: PruneThresholds = field(default_factory=PruneThresholds)
    backend: str = "info"  # moment | info | lscan
    L: int = 1
    prune_enabled: bool = True
    new_component_threshold: float = 1e-3
    r_estimate: Optional[float] = None  # default depends on the mode
    validate_every_step: bool = False


@dataclass(frozen=True)
class TrackerState:
    density: PmbmDensity
    k: int
    next_track_id: int = 0


@dataclass(frozen=True)
class RunResult:
    estimates: tuple  # per scan, a tuple of Trajectory
    final_state: TrackerState
    cycle_times: tuple  # seconds per predict+update+estimate cycle


class PmbmTracker:
    """Recursion driver binding the models, mode, and configuration."""

    def __init__(
        self,
        model: gaussseq.ModelLG,
        birth: BirthModel,
        sensor: SensorModel,
        survival: SurvivalModel,
        mode: str = "all",
        config: TrackerConfig = TrackerConfig(),
    ):
        if mode not in ("all", "current"):
            raise ValueError(f"unknown mode {mode!r}")
        self.model = model
        self.birth = birth
        self.sensor = sensor
        self.survival = survival
        self.mode = mode
        self.config = config

    # -- construction -----------------------------------------------------

    def initial(self) -> TrackerState:
        """Predicted state at scan 0: births only, empty track table."""
        density = PmbmDensity(
            ppp=birth_intensity_at(self.birth, 0, self.config.backend, self.config.L),
            tracks=(),
            global_hyps=(GlobalHypothesis(0.0, ()),),
            window=TimeWindow(0, 0),
            mode=self.mode,
        )
        return TrackerState(density, 0)

    @property
    def r_estimate(self) -> float:
        if self.config.r_estimate is not None:
            return self.config.r_estimate
        return 1.0 if self.mode == "all" else 0.5

    # -- prediction --------------------------------------------------------

    def predict(self, s: TrackerState) -> TrackerState:
        return self.predict_all(s) if self.mode == "all" else self.predict_current(s)

    def predict_all(self, s: TrackerState) -> TrackerState:
        """Extend every component alive at the previous scan; its death-time
        pmf splits between ending there and surviving.  Track counts, weights
        and existence probabilities are unchanged."""
        if s.density.mode != "all":
            raise ValueError("density is not in all-trajectories mode")
        k = s.k + 1
        ps = self.survival.ps
        ppp = bernoulli.predict_mixture(s.density.ppp, self.model, ps, k, "all")
        births = birth_intensity_at(self.birth, k, self.config.backend, self.config.L)
        ppp = TrajectoryMixture(ppp.components + births.components, "intensity")
        tracks = tuple(
            Track(
                t.id,
                tuple(
                    h
                    if h.r == 0.0 or h.density is None
                    else replace(h, density=bernoulli.predict_mixture(h.density, self.model, ps, k, "all"))
                    for h in t.hypotheses
                ),
            )
            for t in s.density.tracks
        )
        density = replace(s.density, ppp=ppp, tracks=tracks, window=TimeWindow(0, k))
        return TrackerState(density, k, s.next_track_id)

    def predict_current(self, s: TrackerState) -> TrackerState:
        """Scale existence and Poisson weights by survival, extend densities."""
        if s.density.mode != "current":
            raise ValueError("density is not in current-trajectories mode")
        k = s.k + 1
        ps = self.survival.ps
        ppp_comps = tuple(
            replace(bernoulli.predict_component(c, self.model, ps, k, "current"), weight=c.weight * ps)
            for c in s.density.ppp.components
        )
        births = birth_intensity_at(self.birth, k, self.config.backend, self.config.L)
        ppp = TrajectoryMixture(ppp_comps + births.components, "intensity")
        tracks = tuple(
            Track(
                t.id,
                tuple(
                    h
                    if h.r == 0.0 or h.density is None
                    else LocalHypothesis(
                        h.log_weight,
                        h.r * ps,
                        bernoulli.predict_mixture(h.density, self.model, ps, k, "current"),
                        h.meas_history,
                    )
                    for h in t.hypotheses
                ),
            )
            for t in s.density.tracks
        )
        density = replace(s.density, ppp=ppp, tracks=tracks, window=TimeWindow(0, k))
        return TrackerState(density, k, s.next_track_id)

    # -- update -------------------------------------------------------------

    def update(self, s: TrackerState, scan) -> TrackerState:
        """Joint measurement update of one scan (a list of measurements).

        An empty scan is informative (it applies the missed-detection
        update); use ``scan=None`` in :meth:`run` logs for steps with no data.
        """
        if scan is None:
            raise ValueError("update requires a scan; skip the step for missing data")
        scan = [np.asarray(z, dtype=float).reshape(-1) for z in scan]
        if any(not np.all(np.isfinite(z)) for z in scan):
            raise ValueError("scan contains non-finite coordinates")
        p = s.density
        k = s.k
        m = len(scan)
        tables = scan_weight_tables(p, scan, self.model, self.sensor)
        miss_log, det_log, new_log = tables.miss_log, tables.det_log, tables.new_log
        track_ids = [t.id for t in p.tracks]

        # enumerate children of every prior global on a reduced problem:
        # measurements gated by no chosen hypothesis can only start their own
        # track, and tracks gating nothing can only miss, so neither needs a
        # place in the assignment matrix
        weights = np.array([g.log_weight for g in p.global_hyps])
        weights = np.exp(weights - weights.max()) if len(weights) else weights
        weights = weights / weights.sum() if len(weights) else weights
        det_by_hyp: dict = {}
        for tid, hidx, j in det_log:
            det_by_hyp.setdefault((tid, hidx), set()).add(j)
        chosen_children = []  # (child log weight, prior choice dict, {tid: j}, new js)
        for g, w in zip(p.global_hyps, weights):
            if self.config.murty_budget is None:
                budget = sys.maxsize
            else:
                budget = max(1, math.ceil(w * self.config.murty_budget))
            chosen = dict(g.choice)
            miss_total = sum(miss_log[(tid, chosen[tid])] for tid in track_ids)
            contested: set = set()
            rows = []
            for tid in track_ids:
                js = det_by_hyp.get((tid, chosen[tid]))
                if js:
                    rows.append(tid)
                    contested |= js
            cols = sorted(contested)
            forced = [j for j in range(m) if j not in contested]
            forced_logw = sum(new_log[j] for j in forced)
            base = g.log_weight + miss_total + forced_logw
            if not math.isfinite(base):
                continue  # some measurement is impossible under this global
            mat = np.full((len(rows) + len(cols), len(cols)), INF)
            for r_i, tid in enumerate(rows):
                miss = miss_log[(tid, chosen[tid])]
                safe_miss = miss if math.isfinite(miss) else -745.0
                for c_i, j in enumerate(cols):
                    d = det_log.get((tid, chosen[tid], j))
                    if d is not None and math.isfinite(d - safe_miss):
                        mat[r_i, c_i] = -(d - safe_miss)
            for c_i, j in enumerate(cols):
                if math.isfinite(new_log[j]):
                    mat[len(rows) + c_i, c_i] = -new_log[j]
            # children further than the prune floor below this global's best
            # would be dropped right away, so stop enumerating there
            gap = -math.log(self.config.thresholds.global_w) if self.config.prune_enabled else None
            try:
                assignments = murty_kbest(mat, budget, max_gap=gap)
            except ValueError:
                continue  # no feasible association under this global
            for a in assignments:
                detected = {}
                new_js = list(forced)
                logw = base
                for c_i, row in enumerate(a.mapping):
                    j = cols[c_i]
                    if row < len(rows):
                        tid = rows[row]
                        detected[tid] = j
                        logw += det_log[(tid, chosen[tid], j)] - miss_log[(tid, chosen[tid])]
                    else:
                        new_js.append(j)
                        logw += new_log[j]
                if math.isfinite(logw):
                    chosen_children.append((logw, chosen, detected, tuple(sorted(new_js))))
        if not chosen_children:
            raise ValueError("no feasible association for the scan")

        # trim by the same relative threshold and cap that pruning would
        # apply, before materializing hypotheses
        if self.config.prune_enabled:
            best = max(c[0] for c in chosen_children)
            floor = best + math.log(self.config.thresholds.global_w)
            chosen_children = [c for c in chosen_children if c[0] >= floor]
            chosen_children.sort(key=lambda c: (-c[0], sorted(c[2].items()), c[3]))
            chosen_children = chosen_children[: max(self.config.thresholds.cap_M, 1)]

        # materialize each distinct child hypothesis once
        needed = set()
        for _, chosen, detected, _ in chosen_children:
            for tid in track_ids:
                needed.add((tid, chosen[tid], detected.get(tid)))
        needed = sorted(needed, key=lambda t: (t[0], t[1], -1 if t[2] is None else t[2]))
        child_cache = {}
        for tid, parent, assoc in needed:
            h = p.track_by_id(tid).hypotheses[parent]
            if assoc is None:
                child = bernoulli.miss_update(h, self.sensor.pd, k)
            else:
                child = bernoulli.detect_update(
                    h,
                    self.model,
                    self.sensor.pd,
                    scan[assoc],
                    (k, assoc),
                    self.config.new_component_threshold,
                )
            child_cache[(tid, parent, assoc)] = child

        realized_new = sorted({j for _, _, _, new_js in chosen_children for j in new_js})
        new_track_ids = {j: s.next_track_id + j for j in range(m)}
        new_pairs = {
            j: bernoulli.new_track_hypotheses(
                p.ppp,
                self.model,
                self.sensor,
                scan[j],
                (k, j),
                self.config.new_component_threshold,
                gated=tables.ppp_gated[j],
            )
            for j in realized_new
        }

        # assemble the new track table and the child choice maps
        needed_by_track: dict = {}
        for key in needed:
            needed_by_track.setdefault(key[0], []).append(key)
        tracks = []
        index_of = {}
        for t in p.tracks:
            keys = needed_by_track[t.id]
            hyps = tuple(child_cache[key] for key in keys)
            index_of.update({key: i for i, key in enumerate(keys)})
            tracks.append(Track(t.id, hyps))
        for j in realized_new:
            no_exist, exist = new_pairs[j]
            tracks.append(Track(new_track_ids[j], (no_exist, exist)))

        globals_ = []
        for logw, chosen, detected, new_js in chosen_children:
            choice = [
                (tid, index_of[(tid, chosen[tid], detected.get(tid))]) for tid in track_ids
            ]
            for j in realized_new:
                choice.append((new_track_ids[j], 1 if j in new_js else 0))
            globals_.append(GlobalHypothesis(logw, tuple(choice)))

        density = replace(
            p,
            ppp=bernoulli.thin_ppp(p.ppp, self.sensor.pd, k),
            tracks=tuple(tracks),
            global_hyps=tuple(globals_),
            measurement_record=p.measurement_record + ((k, m),),
        )
        density = normalize(density)
        if self.config.prune_enabled:
            density = prune(density, self.config.thresholds)
        if self.config.validate_every_step:
            validate(density)
        return TrackerState(density, k, s.next_track_id + m)

    # -- driving ------------------------------------------------------------

    def step(self, s: TrackerState, scan) -> TrackerState:
        """Predict to the next scan time and update when data is present."""
        s = self.predict(s)
        if scan is not None:
            s = self.update(s, scan)
        return s

    def estimate(self, s: TrackerState, r_e: Optional[float] = None):
        return estimate.extract_set(s.density, self.r_estimate if r_e is None else r_e)

    def run(self, scans) -> RunResult:
        """Process scans for steps 0..len(scans)-1 and extract per-step
        estimates.  ``scans[k]`` may be None for a step with no data."""
        estimates = []
        times = []
        state = self.initial()
        for k, scan in enumerate(scans):
            t0 = time.perf_counter()
            if k > 0:
                state = self.predict(state)
            if scan is not None:
                state = self.update(state, scan)
            estimates.append(self.estimate(state))
            times.append(time.perf_counter() - t0)
        return RunResult(tuple(estimates), state, tuple(times))

    # -- inspection ---------------------------------------------------------

    def epsilon_bookkeeping(self, s: TrackerState, track_id: int, hyp_index: int) -> BirthDeathPmf:
        """Compact death-time bookkeeping of one hypothesis as a (b, e) pmf.

        Only meaningful in all-trajectories mode, where runs of missed
        detections are carried as a pmf instead of materialized components.
        """
        if self.mode != "all":
            raise ValueError("death-time bookkeeping exists only in all-trajectories mode")
        h = s.density.track_by_id(track_id).hypotheses[hyp_index]
        if h.density is None:
            raise ValueError("hypothesis carries no density")
        return birth_death_pmf(h.density)
