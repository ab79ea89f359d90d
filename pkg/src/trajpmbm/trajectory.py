"""Core trajectory types: time windows, trajectories, birth/death pmfs, mixtures.

A trajectory is a tuple (beta, epsilon, states): the discrete birth step, the
step of the most recent state, and the state sequence in between.  Densities
over single trajectories are represented as weighted mixtures whose components
each pin a (b, e) window and carry a Gaussian state-sequence density for it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "TimeWindow",
    "Trajectory",
    "BirthDeathPmf",
    "MixtureComponent",
    "TrajectoryMixture",
    "birth_death_pmf",
    "materialize_mixture",
    "prune_mixture",
    "GridSurrogate",
    "trajectory_set_integral",
]

PMF_TOL = 1e-12
DENSITY_WEIGHT_TOL = 1e-9


def _frozen_array(x, dtype=float) -> np.ndarray:
    a = np.array(x, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeWindow:
    """Closed interval of consecutive time steps [alpha, gamma]."""

    alpha: int
    gamma: int

    def __post_init__(self):
        if not (0 <= self.alpha <= self.gamma):
            raise ValueError(f"invalid time window [{self.alpha}, {self.gamma}]")

    @property
    def length(self) -> int:
        return self.gamma - self.alpha + 1

    def steps(self) -> range:
        return range(self.alpha, self.gamma + 1)

    def contains(self, other: "TimeWindow") -> bool:
        return self.alpha <= other.alpha and other.gamma <= self.gamma

    def intersects(self, other: "TimeWindow") -> bool:
        return self.alpha <= other.gamma and other.alpha <= self.gamma


@dataclass(frozen=True)
class Trajectory:
    """Single trajectory: birth step, last step, and the state sequence.

    ``states`` has shape (length, n_x) with length == epsilon - beta + 1.
    """

    beta: int
    epsilon: int
    states: np.ndarray

    def __post_init__(self):
        if self.beta > self.epsilon:
            raise ValueError("birth step after last step")
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if states.shape[0] != self.length:
            raise ValueError(
                f"state sequence of length {states.shape[0]} does not cover "
                f"steps {self.beta}..{self.epsilon}"
            )
        states = states.copy()
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @property
    def length(self) -> int:
        return self.epsilon - self.beta + 1

    def state_at(self, k: int) -> np.ndarray:
        if not self.beta <= k <= self.epsilon:
            raise KeyError(f"step {k} outside trajectory {self.beta}..{self.epsilon}")
        return self.states[k - self.beta]


@dataclass(frozen=True)
class BirthDeathPmf:
    """Probability mass function over (beta, epsilon) pairs."""

    support: tuple  # ((beta, epsilon), mass) pairs, sorted

    def __post_init__(self):
        items = tuple(sorted(((int(b), int(e)), float(m)) for (b, e), m in dict(self.support).items()))
        total = 0.0
        for (b, e), m in items:
            if b > e or b < 0:
                raise ValueError(f"invalid support pair ({b}, {e})")
            if not -PMF_TOL <= m <= 1.0 + PMF_TOL:
                raise ValueError(f"mass {m} outside [0, 1]")
            total += m
        if abs(total - 1.0) > PMF_TOL:
            raise ValueError(f"total mass {total} != 1")
        object.__setattr__(self, "support", items)

    def mass(self, beta: int, epsilon: int) -> float:
        return dict(self.support).get((beta, epsilon), 0.0)

    def as_dict(self) -> dict:
        return dict(self.support)

    def argmax(self) -> tuple:
        """Highest-mass pair; ties broken toward smaller epsilon, then smaller beta."""
        best = max(self.support, key=lambda kv: (kv[1], -kv[0][1], -kv[0][0]))
        return best[0]

    def epsilon_marginal(self) -> dict:
        out: dict = {}
        for (b, e), m in self.support:
            out[e] = out.get(e, 0.0) + m
        return out


@dataclass(frozen=True)
class MixtureComponent:
    """One mixture component: weight, a state-sequence density, and optionally
    a deferred death-time pmf.

    The sequence density spans steps b..e.  When ``eps_pmf`` is set, the
    component compactly stands for the sub-mixture over death times: mass
    eps_pmf[eps] is placed on the trajectory ending at ``eps`` whose sequence
    density is the marginal of ``seq`` over the discarded tail steps.  A
    ``None`` pmf is a point mass at e.
    """

    weight: float
    seq: object  # a gaussseq density (moment, information or L-scan form)
    eps_pmf: Optional[tuple] = None  # ((eps, mass), ...) sorted by eps

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("negative mixture weight")
        if self.eps_pmf is not None:
            items = tuple(sorted((int(e), float(m)) for e, m in dict(self.eps_pmf).items()))
            total = sum(m for _, m in items)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"death-time pmf sums to {total}")
            for e, _ in items:
                if not self.b <= e <= self.e:
                    raise ValueError(f"death-time {e} outside component window {self.b}..{self.e}")
            object.__setattr__(self, "eps_pmf", items)

    @property
    def b(self) -> int:
        return self.seq.window.alpha

    @property
    def e(self) -> int:
        return self.seq.window.gamma

    def alive_mass(self, k: int) -> float:
        """Probability that the trajectory is still alive at step k."""
        if self.eps_pmf is None:
            return 1.0 if self.e == k else 0.0
        return dict(self.eps_pmf).get(k, 0.0)


@dataclass(frozen=True)
class TrajectoryMixture:
    """Weighted mixture of (b, e)-pinned sequence densities.

    ``kind`` is "density" (weights sum to one) or "intensity" (weights are
    nonnegative masses, e.g. a Poisson process intensity).  Duplicate (b, e)
    pairs are allowed and are never merged implicitly.
    """

    components: tuple
    kind: str = "density"

    def __post_init__(self):
        comps = tuple(self.components)
        if self.kind not in ("density", "intensity"):
            raise ValueError(f"unknown mixture kind {self.kind!r}")
        if self.kind == "density":
            if not comps:
                raise ValueError("empty density mixture")
            total = sum(c.weight for c in comps)
            if abs(total - 1.0) > DENSITY_WEIGHT_TOL:
                raise ValueError(f"density weights sum to {total}")
        object.__setattr__(self, "components", comps)

    @property
    def total_weight(self) -> float:
        return sum(c.weight for c in self.components)

    def is_empty(self) -> bool:
        return len(self.components) == 0


def birth_death_pmf(mix: TrajectoryMixture) -> BirthDeathPmf:
    """Pmf over (beta, epsilon) implied by a density mixture.

    Components carrying a deferred death-time pmf spread their weight over the
    pmf's support.  Rejects intensity-kind mixtures: a pmf is only defined for
    normalized densities.
    """
    if mix.kind != "density":
        raise ValueError("birth/death pmf undefined for an intensity")
    if mix.is_empty():
        raise ValueError("empty mixture")
    masses: dict = {}
    for c in mix.components:
        if c.eps_pmf is None:
            key = (c.b, c.e)
            masses[key] = masses.get(key, 0.0) + c.weight
        else:
            for e, m in c.eps_pmf:
                key = (c.b, e)
                masses[key] = masses.get(key, 0.0) + c.weight * m
    total = sum(masses.values())
    return BirthDeathPmf(tuple((k, m / total) for k, m in masses.items()))


def materialize_mixture(mix: TrajectoryMixture) -> TrajectoryMixture:
    """Expand deferred death-time pmfs into explicit (b, e) components.

    Each deferred component (w, seq over b..e, pmf) becomes one component per
    death time eps with weight w * pmf[eps] and the sequence marginalized to
    b..eps.  Explicit components pass through unchanged.
    """
    from . import gaussseq  # local import: gaussseq depends on this module

    out = []
    for c in mix.components:
        if c.eps_pmf is None:
            out.append(c)
            continue
        for e, m in c.eps_pmf:
            if m <= 0.0:
                continue
            if e == c.e:
                seq = c.seq
            else:
                seq = gaussseq.marginalize_steps(c.seq, TimeWindow(c.b, e))
            out.append(MixtureComponent(c.weight * m, seq))
    return TrajectoryMixture(tuple(out), mix.kind)


def prune_mixture(mix: TrajectoryMixture, threshold: float = 1e-3) -> TrajectoryMixture:
    """Drop components below ``threshold`` of the mixture total; densities are
    renormalized afterwards.  Never drops every component."""
    total = mix.total_weight
    if total <= 0.0 or not mix.components:
        return mix
    kept = [c for c in mix.components if c.weight >= threshold * total]
    if not kept:
        kept = [max(mix.components, key=lambda c: c.weight)]
    if mix.kind == "density":
        s = sum(c.weight for c in kept)
        kept = [MixtureComponent(c.weight / s, c.seq, c.eps_pmf) for c in kept]
    return TrajectoryMixture(tuple(kept), mix.kind)


@dataclass(frozen=True)
class GridSurrogate:
    """Finite discretization of the trajectory space, for test-side integrals.

    ``points`` is a (G, n_x) grid of base states with shared cell volume, and
    ``windows`` lists the (b, e) pairs to sum over.  A trajectory atom is a
    (b, e) pair plus one grid point per step.
    """

    points: np.ndarray
    cell_volume: float
    windows: tuple

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise ValueError("empty grid")
        object.__setattr__(self, "points", _frozen_array(pts))
        object.__setattr__(self, "windows", tuple((int(b), int(e)) for b, e in self.windows))

    def atoms(self):
        """Yield (Trajectory, volume) pairs for every atom of the surrogate."""
        for b, e in self.windows:
            nu = e - b + 1
            vol = self.cell_volume**nu
            for combo in itertools.product(range(len(self.points)), repeat=nu):
                yield Trajectory(b, e, self.points[list(combo)]), vol


def trajectory_set_integral(
    f: Callable[[Sequence[Trajectory]], float],
    max_cardinality: int,
    surrogate: GridSurrogate,
) -> float:
    """Set integral of ``f`` approximated on a discrete surrogate.

    Sums f over the empty set plus, for each cardinality n up to
    ``max_cardinality``, 1/n! times the sum of f over ordered n-tuples of
    surrogate atoms weighted by their cell volumes.  ``f`` receives a list of
    trajectories (the n-argument form of the set function).  Only intended for
    verifying normalization of small set densities in tests.
    """
    if max_cardinality < 0:
        raise ValueError("max_cardinality must be >= 0")
    atoms = list(surrogate.atoms())
    total = f([])
    for n in range(1, max_cardinality + 1):
        contrib = 0.0
        for tup in itertools.product(atoms, repeat=n):
            vol = math.prod(v for _, v in tup)
            contrib += f([t for t, _ in tup]) * vol
        total += contrib / math.factorial(n)
    return total
