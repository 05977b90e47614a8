"""Parametric finite-state mean field games.

A game is described by polynomial rate fields ``Q[i, j, a](m)`` and reward
fields ``r[i, a](m)`` on the probability simplex over states. Only the
off-diagonal rates are stored; every diagonal is the negated row sum, so the
row-sum half of the generator condition holds by construction.

Indices are 0-based in the Python API. Files and reports use 1-based indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement
from typing import Iterable, Mapping

import numpy as np

SIMPLEX_TOL = 1e-12
GENERATOR_SLACK = 1e-12


class ModelError(ValueError):
    """Invalid game model or model input."""


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial ``sum_k c_k prod_i m_i**e_{k,i}`` in ``nvars`` variables.

    Terms are kept in canonical form: exponent vectors sorted, duplicates merged
    and exact-zero coefficients dropped.
    """

    nvars: int
    exps: tuple[tuple[int, ...], ...] = ()
    coefs: tuple[float, ...] = ()

    def __post_init__(self):
        merged: dict[tuple[int, ...], float] = {}
        for e, c in zip(self.exps, self.coefs):
            e = tuple(int(x) for x in e)
            if len(e) != self.nvars:
                raise ModelError(f"exponent vector {e} has length {len(e)}, expected {self.nvars}")
            if any(x < 0 for x in e):
                raise ModelError(f"negative exponent in {e}")
            merged[e] = merged.get(e, 0.0) + float(c)
        keys = sorted(k for k, v in merged.items() if v != 0.0)
        object.__setattr__(self, "exps", tuple(keys))
        object.__setattr__(self, "coefs", tuple(merged[k] for k in keys))

    @classmethod
    def constant(cls, value: float, nvars: int) -> "Polynomial":
        return cls(nvars, ((0,) * nvars,), (float(value),))

    @classmethod
    def linear(cls, weights: Iterable[float], const: float = 0.0) -> "Polynomial":
        """``const + sum_i w_i m_i``."""
        weights = list(weights)
        n = len(weights)
        exps = [(0,) * n] + [tuple(int(k == i) for k in range(n)) for i in range(n)]
        return cls(n, tuple(exps), (const, *weights))

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[Iterable[int], float]], nvars: int) -> "Polynomial":
        terms = list(terms)
        return cls(nvars, tuple(tuple(e) for e, _ in terms), tuple(c for _, c in terms))

    @property
    def terms(self) -> list[tuple[tuple[int, ...], float]]:
        return list(zip(self.exps, self.coefs))

    @property
    def is_zero(self) -> bool:
        return not self.coefs

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.exps), default=0)

    def constant_term(self) -> float:
        zero = (0,) * self.nvars
        return dict(self.terms).get(zero, 0.0)

    def shift(self, delta: float) -> "Polynomial":
        """Return the polynomial plus a constant."""
        zero = (0,) * self.nvars
        return Polynomial(self.nvars, self.exps + (zero,), self.coefs + (float(delta),))

    def scale(self, factor: float) -> "Polynomial":
        return Polynomial(self.nvars, self.exps, tuple(factor * c for c in self.coefs))

    def __add__(self, other: "Polynomial") -> "Polynomial":
        if other.nvars != self.nvars:
            raise ModelError("polynomials over different variable counts")
        return Polynomial(self.nvars, self.exps + other.exps, self.coefs + other.coefs)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + other.scale(-1.0)

    def __call__(self, m) -> float | np.ndarray:
        """Evaluate at a point (shape ``(S,)``) or at a batch of points (``(n, S)``)."""
        m = np.asarray(m, dtype=float)
        if not self.coefs:
            return 0.0 if m.ndim == 1 else np.zeros(m.shape[0])
        e = np.array(self.exps, dtype=float)
        c = np.array(self.coefs)
        if m.ndim == 1:
            return float(c @ np.prod(m[None, :] ** e, axis=1))
        return np.prod(m[:, None, :] ** e[None], axis=2) @ c


def simplex_grid(S: int, resolution: int) -> np.ndarray:
    """All points of the simplex with coordinates in ``{0, 1/n, ..., 1}``.

    Rows are ordered lexicographically by their integer compositions.
    """
    if resolution < 1:
        raise ValueError("grid resolution must be >= 1")
    pts = []
    for cuts in combinations_with_replacement(range(resolution + 1), S - 1):
        bounds = (0,) + cuts + (resolution,)
        pts.append([bounds[k + 1] - bounds[k] for k in range(S)])
    return np.array(pts, dtype=float) / resolution


def default_metric_resolution(S: int) -> int:
    if S <= 3:
        return 50
    if S <= 5:
        return 20
    return 8


def check_distribution(m, S: int | None = None, name: str = "m") -> np.ndarray:
    """Validate a point of the simplex and return it as a float array."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 1 or (S is not None and m.shape[0] != S):
        raise ModelError(f"{name} must be a vector of length {S}")
    if np.any(m < -SIMPLEX_TOL) or abs(m.sum() - 1.0) > SIMPLEX_TOL * max(1, m.size):
        raise ModelError(f"{name} is not a probability vector: {m}")
    return m


def check_strategy(pi, S: int, A: int) -> np.ndarray:
    """Validate a row-stochastic ``S x A`` strategy matrix."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (S, A):
        raise ModelError(f"strategy must have shape {(S, A)}, got {pi.shape}")
    if np.any(pi < -SIMPLEX_TOL) or np.any(np.abs(pi.sum(axis=1) - 1.0) > SIMPLEX_TOL * max(1, A)):
        raise ModelError("strategy rows must be probability vectors")
    return pi


def deterministic_matrix(d, A: int) -> np.ndarray:
    """One-hot ``S x A`` matrix of a deterministic strategy (0-based actions)."""
    d = np.asarray(d, dtype=int)
    if np.any(d < 0) or np.any(d >= A):
        raise ModelError(f"action index out of range in {d.tolist()}")
    pi = np.zeros((d.size, A))
    pi[np.arange(d.size), d] = 1.0
    return pi


@dataclass(frozen=True)
class GameModel:
    """Finite mean field game with polynomial rates and rewards.

    ``rates`` maps ``(i, j, a)`` with ``i != j`` to the rate polynomial; missing
    entries are zero. ``rewards`` maps ``(i, a)`` to the reward polynomial.
    """

    S: int
    A: int
    beta: float
    rates: Mapping[tuple[int, int, int], Polynomial] = field(default_factory=dict)
    rewards: Mapping[tuple[int, int], Polynomial] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.S) != self.S or self.S < 2:
            raise ModelError("need at least two states")
        if int(self.A) != self.A or self.A < 1:
            raise ModelError("need at least one action")
        rates = {}
        for (i, j, a), p in self.rates.items():
            if not (0 <= i < self.S and 0 <= j < self.S and 0 <= a < self.A):
                raise ModelError(f"rate index {(i, j, a)} out of range")
            if i == j:
                raise ModelError(f"diagonal rate {(i, j, a)} must not be given; it is the negated row sum")
            if p.nvars != self.S:
                raise ModelError(f"rate {(i, j, a)} has {p.nvars} variables, expected {self.S}")
            if not p.is_zero:
                rates[(int(i), int(j), int(a))] = p
        rewards = {}
        for (i, a), p in self.rewards.items():
            if not (0 <= i < self.S and 0 <= a < self.A):
                raise ModelError(f"reward index {(i, a)} out of range")
            if p.nvars != self.S:
                raise ModelError(f"reward {(i, a)} has {p.nvars} variables, expected {self.S}")
            if not p.is_zero:
                rewards[(int(i), int(a))] = p
        object.__setattr__(self, "rates", dict(sorted(rates.items())))
        object.__setattr__(self, "rewards", dict(sorted(rewards.items())))
        object.__setattr__(self, "beta", float(self.beta))

    def rate(self, i: int, j: int, a: int) -> Polynomial:
        if i == j:
            raise ModelError("diagonal rates are derived; use eval_rate")
        return self.rates.get((i, j, a), Polynomial(self.S))

    def reward(self, i: int, a: int) -> Polynomial:
        return self.rewards.get((i, a), Polynomial(self.S))

    def replace(self, **changes) -> "GameModel":
        fields = dict(S=self.S, A=self.A, beta=self.beta, rates=self.rates, rewards=self.rewards)
        fields.update(changes)
        return GameModel(**fields)

    @cached_property
    def _compiled(self) -> "_CompiledFields":
        return _CompiledFields(self)

    def rate_tensor(self, m) -> np.ndarray:
        """``Q[i, j, a](m)`` as an ``(S, S, A)`` array, diagonal included."""
        return self._compiled.rates(np.asarray(m, dtype=float))

    def reward_matrix(self, m) -> np.ndarray:
        """``r[i, a](m)`` as an ``(S, A)`` array."""
        return self._compiled.rewards(np.asarray(m, dtype=float))

    def rate_tensor_grad(self, m) -> np.ndarray:
        """Derivatives ``dQ[i, j, a]/dm_k`` as an ``(S, S, A, S)`` array."""
        return self._compiled.rates_grad(np.asarray(m, dtype=float))

    def reward_matrix_grad(self, m) -> np.ndarray:
        """Derivatives ``dr[i, a]/dm_k`` as an ``(S, A, S)`` array."""
        return self._compiled.rewards_grad(np.asarray(m, dtype=float))

    def rate_tensor_batch(self, points: np.ndarray) -> np.ndarray:
        """Rates at many points, shape ``(n, S, S, A)``."""
        return self._compiled.rates_batch(np.asarray(points, dtype=float))

    def reward_matrix_batch(self, points: np.ndarray) -> np.ndarray:
        """Rewards at many points, shape ``(n, S, A)``."""
        return self._compiled.rewards_batch(np.asarray(points, dtype=float))


class _CompiledFields:
    """All fields of a model as one coefficient matrix over a shared monomial basis."""

    def __init__(self, model: GameModel):
        S, A = model.S, model.A
        basis = sorted({e for p in (*model.rates.values(), *model.rewards.values()) for e in p.exps})
        if not basis:
            basis = [(0,) * S]
        index = {e: k for k, e in enumerate(basis)}
        self.S, self.A = S, A
        self.exps = np.array(basis, dtype=float)
        self.rate_coef = np.zeros((S, S, A, len(basis)))
        for (i, j, a), p in model.rates.items():
            for e, c in p.terms:
                self.rate_coef[i, j, a, index[e]] += c
        self.reward_coef = np.zeros((S, A, len(basis)))
        for (i, a), p in model.rewards.items():
            for e, c in p.terms:
                self.reward_coef[i, a, index[e]] += c
        # d/dm_k m^e = e_k m^(e - e_k)
        self.dfactor = self.exps.T.copy()  # (S, K)
        self.dexps = np.maximum(self.exps[None, :, :] - np.eye(S)[:, None, :], 0.0)  # (S, K, S)
        self._diag = np.arange(S)

    def monomials(self, m: np.ndarray) -> np.ndarray:
        return np.prod(m[None, :] ** self.exps, axis=1)

    def _close(self, Q: np.ndarray) -> np.ndarray:
        # diagonal entries of the coefficient tensor are zero, so the row sum is over off-diagonals
        d = self._diag
        Q[..., d, d, :] = -Q.sum(axis=-2)[..., d, :]
        return Q

    def rates(self, m: np.ndarray) -> np.ndarray:
        return self._close(self.rate_coef @ self.monomials(m))

    def rewards(self, m: np.ndarray) -> np.ndarray:
        return self.reward_coef @ self.monomials(m)

    def monomials_grad(self, m: np.ndarray) -> np.ndarray:
        # (K, S)
        return (self.dfactor * np.prod(m[None, None, :] ** self.dexps, axis=2)).T

    def rates_grad(self, m: np.ndarray) -> np.ndarray:
        G = np.einsum("ijak,kl->ijal", self.rate_coef, self.monomials_grad(m))
        d = self._diag
        G[d, d] = -G.sum(axis=1)
        return G

    def rewards_grad(self, m: np.ndarray) -> np.ndarray:
        return np.einsum("iak,kl->ial", self.reward_coef, self.monomials_grad(m))

    def rates_batch(self, pts: np.ndarray) -> np.ndarray:
        mon = np.prod(pts[:, None, :] ** self.exps[None], axis=2)  # (n, K)
        return self._close(np.einsum("ijak,nk->nija", self.rate_coef, mon))

    def rewards_batch(self, pts: np.ndarray) -> np.ndarray:
        mon = np.prod(pts[:, None, :] ** self.exps[None], axis=2)
        return np.einsum("iak,nk->nia", self.reward_coef, mon)


def eval_rate(model: GameModel, i: int, j: int, a: int, m) -> float:
    """Rate ``Q[i, j, a](m)``; the diagonal is the negated off-diagonal row sum."""
    _check_index(i, model.S, "state")
    _check_index(j, model.S, "state")
    _check_index(a, model.A, "action")
    m = check_distribution(m, model.S)
    if i != j:
        return float(model.rate(i, j, a)(m))
    return -sum(float(model.rate(i, k, a)(m)) for k in range(model.S) if k != i)


def eval_reward(model: GameModel, i: int, a: int, m) -> float:
    _check_index(i, model.S, "state")
    _check_index(a, model.A, "action")
    m = check_distribution(m, model.S)
    return float(model.reward(i, a)(m))


def _check_index(k, n, what):
    if not (0 <= int(k) < n):
        raise IndexError(f"{what} index {k} out of range 0..{n - 1}")


def effective_generator(model: GameModel, pi, m) -> np.ndarray:
    """Generator of an agent using stationary strategy ``pi`` at population ``m``.

    ``Q^pi(m)[i, j] = sum_a Q[i, j, a](m) pi[i, a]``.
    """
    pi = check_strategy(pi, model.S, model.A)
    m = check_distribution(m, model.S)
    return mixed_generator(model.rate_tensor(m), pi)


def mixed_generator(Q: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Contract an ``(S, S, A)`` rate tensor with a strategy matrix (no validation)."""
    return np.einsum("ija,ia->ij", Q, pi)


def deterministic_generator(Q: np.ndarray, d) -> np.ndarray:
    S = Q.shape[0]
    return Q[np.arange(S), :, np.asarray(d)]


@dataclass
class ValidationReport:
    passed: bool
    failures: list[str]
    worst_violation: float
    worst_location: dict | None
    grid_resolution: int
    grid_points: int

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "failures": list(self.failures),
            "worst_violation": self.worst_violation,
            "worst_location": self.worst_location,
            "grid_resolution": self.grid_resolution,
            "grid_points": self.grid_points,
        }


def validate(model: GameModel, grid_resolution: int | None = None) -> ValidationReport:
    """Check the generator and discount conditions on a uniform simplex grid.

    Reports every failure instead of raising. ``worst_violation`` is the most
    negative off-diagonal rate seen (0 when none is negative).
    """
    if grid_resolution is None:
        grid_resolution = default_metric_resolution(model.S)
    if grid_resolution < 1:
        raise ValueError("grid resolution must be >= 1")
    failures = []
    if not (0.0 < model.beta < 1.0) or not np.isfinite(model.beta):
        failures.append(f"discount out of range: beta={model.beta!r} not in (0, 1)")
    grid = simplex_grid(model.S, grid_resolution)
    Q = model.rate_tensor_batch(grid)
    R = model.reward_matrix_batch(grid)
    off = Q.copy()
    idx = np.arange(model.S)
    off[:, idx, idx, :] = np.inf
    worst = float(off.min()) if model.S > 1 else 0.0
    location = None
    if worst < -GENERATOR_SLACK:
        n, i, j, a = np.unravel_index(np.argmin(off), off.shape)
        location = {"m": grid[n].tolist(), "from": int(i) + 1, "to": int(j) + 1, "action": int(a) + 1}
        failures.append(
            f"negative rate {worst:.6g} for {int(i) + 1}->{int(j) + 1} under action {int(a) + 1} "
            f"at m={np.round(grid[n], 12).tolist()}"
        )
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(R))):
        failures.append("non-finite rate or reward on the grid")
    return ValidationReport(
        passed=not failures,
        failures=failures,
        worst_violation=min(worst, 0.0),
        worst_location=location,
        grid_resolution=grid_resolution,
        grid_points=len(grid),
    )


def game_distance(model_a: GameModel, model_b: GameModel, grid_resolution: int | None = None) -> float:
    """Grid approximation of the sup-norm distance between two games.

    ``max |Q - Q'| + max |r - r'|`` with the maxima over all entries and all
    points of the uniform simplex grid (vertices included).
    """
    if (model_a.S, model_a.A) != (model_b.S, model_b.A):
        raise ModelError("games have different state or action counts")
    if grid_resolution is None:
        grid_resolution = default_metric_resolution(model_a.S)
    grid = simplex_grid(model_a.S, grid_resolution)
    dq = np.abs(model_a.rate_tensor_batch(grid) - model_b.rate_tensor_batch(grid)).max()
    dr = np.abs(model_a.reward_matrix_batch(grid) - model_b.reward_matrix_batch(grid)).max()
    return float(dq + dr)
