"""Shared glue for comparing tracker states against the reference oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from trajpmbm import gaussseq as gs
from trajpmbm.density import GlobalHypothesis, LocalHypothesis, PmbmDensity, Track, TrajectoryMixture
from trajpmbm.models import BirthComponent, BirthModel, Rectangle, SensorModel, SurvivalModel
from trajpmbm.tracker import PmbmTracker, TrackerConfig, TrackerState
from trajpmbm.trajectory import MixtureComponent, TimeWindow, birth_death_pmf

SCALAR_REGION = Rectangle(-50.0, 50.0, -1.0, 1.0)


def scalar_setup(ps=0.9, pd=0.9, clutter_rate=1.0, birth_w=0.3, mode="all", backend="moment", exact=True):
    """1-d tracker; ``exact`` disables pruning and exhausts the enumeration."""
    model = gs.ModelLG(F=[[1.0]], Q=[[1.0]], H=[[1.0]], R=[[1.0]])
    birth = BirthModel((BirthComponent(birth_w, [0.0], [[4.0]]),))
    sensor = SensorModel(pd=pd, clutter_rate=clutter_rate, region=SCALAR_REGION, gate_prob=1.0)
    cfg = TrackerConfig(
        murty_budget=None if exact else 100,
        backend=backend,
        prune_enabled=not exact,
        new_component_threshold=0.0 if exact else 1e-3,
    )
    return PmbmTracker(model, birth, sensor, SurvivalModel(ps), mode=mode, config=cfg)


def tracker_global_table(state: TrackerState):
    """Canonical view keyed by the chosen measurement histories: per global,
    (weight, {history: (r, alive-conditioned last mean, (b, e) pmf)})."""
    p, k = state.density, state.k
    out = {}
    for g in p.global_hyps:
        info = {}
        for tid, hidx in g.choice:
            h = p.track_by_id(tid).hypotheses[hidx]
            if h.r <= 0.0 or h.density is None:
                continue
            pmf = birth_death_pmf(h.density).as_dict()
            num, den = 0.0, 0.0
            for c in h.density.components:
                a = c.alive_mass(k)
                if a > 0.0:
                    m, _ = gs.last_state_moments(c.seq)
                    num = num + c.weight * a * m
                    den += c.weight * a
            mean = num / den if den > 0 else None
            info[h.meas_history] = (h.r, mean, pmf)
        out[frozenset(info)] = (math.exp(g.log_weight), info)
    return out


def assert_tables_match(actual, expected, tol=1e-9):
    assert set(actual) == set(expected)
    for key in expected:
        w_a, info_a = actual[key]
        w_e, info_e = expected[key]
        assert w_a == pytest.approx(w_e, abs=tol)
        assert set(info_a) == set(info_e)
        for hist in info_e:
            r_a, mean_a, pmf_a = info_a[hist]
            r_e, mean_e, pmf_e = info_e[hist]
            assert r_a == pytest.approx(r_e, abs=tol)
            if mean_e is None:
                assert mean_a is None
            else:
                np.testing.assert_allclose(mean_a, mean_e, atol=tol)
            assert set(pmf_a) == set(pmf_e)
            for be in pmf_e:
                assert pmf_a[be] == pytest.approx(pmf_e[be], abs=tol)
