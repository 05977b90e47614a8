"""Empirical perturbation probes and random-ensemble genericity studies.

Probes sample games from a metric ball around the model, re-solve them and
measure how far the equilibrium of interest sits from the perturbed
equilibrium set. This is evidence only: a profile shrinking with the radius
corroborates essentiality, a profile bounded away from zero speaks against
it, and neither is a proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .equilibrium import Equilibrium, find_all_equilibria, set_distance
from .model import GameModel, Polynomial, default_metric_resolution, simplex_grid

EVIDENCE_NOTE = (
    "Sampled displacements are evidence, not proof: shrinking values corroborate "
    "essentiality, values bounded away from zero suggest a knife-edge equilibrium."
)

# Coarser than the interactive defaults: a probe re-solves hundreds of games.
PROBE_SEARCH = {"grid_resolution": 8, "mixed_grid_resolution": 4, "weight_seeds": 2}
DEFAULT_DELTAS = (1e-1, 1e-2, 1e-3)


def _rate_minima(model: GameModel, grid: np.ndarray) -> dict:
    return {k: float(np.min(p(grid))) for k, p in model.rates.items()}


def sample_perturbed_game(model: GameModel, delta: float, seed, grid_resolution: int | None = None) -> GameModel:
    """Random game within ``game_distance <= delta`` of ``model``.

    Shifts the constant coefficient of every reward by ``U(-delta/2, delta/2)``
    and of every present off-diagonal rate by ``U(-1, 1) * delta / (2 (S-1))``,
    so a diagonal entry moves by at most ``delta/2``. Negative rate shifts are
    clipped at the rate's grid minimum, which keeps the grid nonnegative.
    ``seed`` may be an int or a sequence accepted by ``numpy.random.default_rng``.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        return model
    if grid_resolution is None:
        grid_resolution = default_metric_resolution(model.S)
    rng = np.random.default_rng(seed)
    rate_bound = delta / (2 * (model.S - 1))
    minima = _rate_minima(model, simplex_grid(model.S, grid_resolution))
    rates = {}
    for key, p in model.rates.items():
        shift = max(rng.uniform(-1.0, 1.0) * rate_bound, -max(minima[key], 0.0))
        rates[key] = p.shift(shift)
    rewards = {}
    for i in range(model.S):
        for a in range(model.A):
            p = model.rewards.get((i, a), Polynomial.constant(0.0, model.S))
            rewards[(i, a)] = p.shift(rng.uniform(-0.5, 0.5) * delta)
    return model.replace(rates=rates, rewards=rewards)


@dataclass
class ProbeRow:
    delta: float
    samples: int
    max_displacement: float | None
    mean_displacement: float | None
    failures: int

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "samples": self.samples,
            "max_displacement": self.max_displacement,
            "mean_displacement": self.mean_displacement,
            "failures": self.failures,
        }


@dataclass
class ProbeProfile:
    deltas: list[float]
    rows: list[ProbeRow]
    seed: int
    note: str = EVIDENCE_NOTE

    def row(self, delta: float) -> ProbeRow:
        for r in self.rows:
            if r.delta == delta:
                return r
        raise KeyError(delta)

    def to_json(self) -> dict:
        return {"deltas": list(self.deltas), "seed": self.seed, "rows": [r.to_json() for r in self.rows], "note": self.note}


def _check_deltas(deltas) -> list[float]:
    deltas = [float(x) for x in deltas]
    if any(not x > 0 for x in deltas):
        raise ValueError("deltas must be positive")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")
    return deltas


def probe(
    model: GameModel,
    eq: Equilibrium,
    deltas=DEFAULT_DELTAS,
    samples: int = 100,
    seed: int = 0,
    search_opts: dict | None = None,
    workers: int | None = None,
) -> ProbeProfile:
    """Displacement of ``eq`` from the equilibrium sets of sampled nearby games.

    Sample ``s`` at ladder position ``k`` uses seed ``(seed, k, s)``; results are
    identical for any worker count.
    """
    deltas = _check_deltas(deltas)
    if samples < 0:
        raise ValueError("samples must be nonnegative")
    if samples == 0:
        return ProbeProfile(deltas, [], seed)
    opts = {**PROBE_SEARCH, **(search_opts or {}), "warn": False}
    target = eq.vector

    def one(job):
        k, s = job
        game = sample_perturbed_game(model, deltas[k], [seed, k, s])
        found = find_all_equilibria(game, **opts)
        return set_distance(target, found) if len(found) else None

    jobs = [(k, s) for k in range(len(deltas)) for s in range(samples)]
    results = pmap(one, jobs, workers)
    rows = []
    for k, delta in enumerate(deltas):
        vals = [r for (kk, _), r in zip(jobs, results) if kk == k and r is not None]
        rows.append(
            ProbeRow(
                delta,
                samples,
                float(max(vals)) if vals else None,
                float(np.mean(vals)) if vals else None,
                samples - len(vals),
            )
        )
    return ProbeProfile(deltas, rows, seed)


@dataclass
class FamilySpec:
    """Random affine games: every rate and reward is linear in ``m`` with values
    at the simplex vertices drawn uniformly from the given ranges."""

    states: tuple[int, int] = (2, 2)
    actions: tuple[int, int] = (1, 2)
    beta: float = 0.5
    rate_range: tuple[float, float] = (0.2, 2.0)
    reward_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        for name in ("states", "actions"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < (2 if name == "states" else 1):
                raise ValueError(f"bad {name} range {lo, hi}")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.rate_range[0] < 0 or self.rate_range[0] > self.rate_range[1]:
            raise ValueError("rate range must be nonnegative and ordered")
        if self.reward_range[0] > self.reward_range[1]:
            raise ValueError("reward range must be ordered")

    @classmethod
    def from_dict(cls, doc: dict) -> "FamilySpec":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()})

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "actions": list(self.actions),
            "beta": self.beta,
            "rate_range": list(self.rate_range),
            "reward_range": list(self.reward_range),
        }


def random_affine_game(spec: FamilySpec, rng: np.random.Generator) -> GameModel:
    S = int(rng.integers(spec.states[0], spec.states[1] + 1))
    A = int(rng.integers(spec.actions[0], spec.actions[1] + 1))
    rates = {}
    for i in range(S):
        for j in range(S):
            if i != j:
                for a in range(A):
                    rates[(i, j, a)] = Polynomial.linear(rng.uniform(*spec.rate_range, size=S))
    rewards = {(i, a): Polynomial.linear(rng.uniform(*spec.reward_range, size=S)) for i in range(S) for a in range(A)}
    return GameModel(S, A, spec.beta, rates, rewards)


@dataclass
class GameStudy:
    label: str
    states: int
    actions: int
    equilibria: int
    continuum: bool
    final_max_displacement: float | None
    corroborated: bool
    probes: list[ProbeProfile] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "states": self.states,
            "actions": self.actions,
            "equilibria": self.equilibria,
            "continuum": self.continuum,
            "final_max_displacement": self.final_max_displacement,
            "corroborated": self.corroborated,
            "probes": [p.to_json() for p in self.probes],
        }


@dataclass
class EnsembleReport:
    family: FamilySpec
    count: int
    seed: int
    deltas: list[float]
    samples: int
    threshold: float
    games: list[GameStudy]
    injected: list[GameStudy]
    note: str = EVIDENCE_NOTE

    @property
    def corroborated_fraction(self) -> float | None:
        if not self.games:
            return None
        return sum(g.corroborated for g in self.games) / len(self.games)

    @property
    def injected_flagged(self) -> list[bool]:
        return [not g.corroborated for g in self.injected]

    def to_json(self) -> dict:
        return {
            "family": self.family.to_json(),
            "count": self.count,
            "seed": self.seed,
            "deltas": list(self.deltas),
            "samples": self.samples,
            "threshold": self.threshold,
            "corroborated_fraction": self.corroborated_fraction,
            "games": [g.to_json() for g in self.games],
            "injected": [dict(g.to_json(), flagged=not g.corroborated) for g in self.injected],
            "note": self.note,
        }


def study_game(
    model: GameModel,
    label: str,
    deltas,
    samples: int,
    seed: int,
    threshold: float,
    search_opts: dict | None = None,
    workers: int | None = None,
) -> GameStudy:
    """Probe every equilibrium; corroborated when all finish within ``threshold``."""
    opts = {**PROBE_SEARCH, **(search_opts or {})}
    eqs = find_all_equilibria(model, **opts, warn=False)
    profiles = [probe(model, e, deltas, samples, seed, opts, workers) for e in eqs]
    finals = [p.rows[-1].max_displacement for p in profiles if p.rows]
    worst = None if not finals or None in finals else float(max(finals))
    ok = bool(len(eqs)) and not eqs.continuum and worst is not None and worst <= threshold
    if samples == 0:
        ok = False
    return GameStudy(label, model.S, model.A, len(eqs), eqs.continuum, worst, ok, profiles)


def ensemble_genericity_study(
    family: FamilySpec,
    count: int,
    seed: int = 0,
    deltas=(1e-2, 1e-3),
    samples: int = 10,
    threshold: float = 0.05,
    injected=(),
    search_opts: dict | None = None,
    workers: int | None = None,
) -> EnsembleReport:
    """Fraction of random games whose equilibria all survive small perturbations.

    ``injected`` holds ``(label, model)`` pairs, typically knife-edge fixtures,
    probed the same way to confirm the probe flags them.
    """
    deltas = _check_deltas(deltas)
    if count < 0:
        raise ValueError("count must be nonnegative")
    games = []
    for g in range(count):
        model = random_affine_game(family, np.random.default_rng([seed, g]))
        games.append(study_game(model, f"game-{g + 1}", deltas, samples, seed, threshold, search_opts, workers))
    inj = [study_game(m, label, deltas, samples, seed, threshold, search_opts, workers) for label, m in injected]
    return EnsembleReport(family, count, seed, deltas, samples, threshold, games, inj)

