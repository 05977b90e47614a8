"""The individual agent's discounted control problem at a frozen population.

For a deterministic stationary strategy ``d`` the value vector solves
``(beta I - Q^d(m)) V = r^d(m)``. Optimal values come from Howard policy
iteration; optimal strategies are returned as whole per-state argmax sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from ._parallel import pmap
from .model import (
    GameModel,
    check_distribution,
    check_strategy,
    deterministic_generator,
    deterministic_matrix,
    mixed_generator,
)

DEFAULT_OPT_TOL = 1e-7
DEFAULT_CAP = 4096


class SolverError(RuntimeError):
    pass


class CapExceeded(RuntimeError):
    """Enumeration would exceed the configured cap."""


@dataclass(frozen=True)
class OptimalStrategySet:
    """Per-state optimal action sets and the optimal value ``V*``.

    The optimal deterministic strategies are exactly the Cartesian product of
    ``per_state_actions``.
    """

    per_state_actions: tuple[tuple[int, ...], ...]
    value: np.ndarray
    action_values: np.ndarray  # r[i,a] + sum_j Q[i,j,a] V*_j

    @property
    def size(self) -> int:
        return math.prod(len(s) for s in self.per_state_actions)

    @property
    def is_singleton(self) -> bool:
        return all(len(s) == 1 for s in self.per_state_actions)

    def contains(self, d) -> bool:
        return all(int(a) in acts for a, acts in zip(d, self.per_state_actions))


def all_deterministic(S: int, A: int, cap: int | None = DEFAULT_CAP) -> np.ndarray:
    """Every deterministic strategy, lexicographic order, shape ``(A**S, S)``."""
    if cap is not None and A**S > cap:
        raise CapExceeded(f"{A}**{S} = {A ** S} deterministic strategies exceed the cap {cap}")
    return np.array(list(product(range(A), repeat=S)), dtype=int).reshape(-1, S)


def solve_values(Q: np.ndarray, R: np.ndarray, beta: float, d) -> np.ndarray:
    """Value of ``d`` given evaluated rates ``(S, S, A)`` and rewards ``(S, A)``."""
    S = Q.shape[0]
    d = np.asarray(d, dtype=int)
    M = beta * np.eye(S) - deterministic_generator(Q, d)
    rhs = R[np.arange(S), d]
    try:
        V = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular value system for strategy {d.tolist()}") from exc
    if not np.all(np.isfinite(V)):
        raise SolverError(f"non-finite value for strategy {d.tolist()}")
    return V


def solve_values_many(Q: np.ndarray, R: np.ndarray, beta: float, strategies: np.ndarray) -> np.ndarray:
    """Values of many deterministic strategies at once, shape ``(N, S)``."""
    S = Q.shape[0]
    rows = np.arange(S)
    Qd = Q[rows[None, :], :, strategies]  # (N, S, S)
    M = beta * np.eye(S)[None] - Qd
    rhs = R[rows[None, :], strategies]
    try:
        return np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SolverError("singular value system") from exc


def action_values(Q: np.ndarray, R: np.ndarray, V: np.ndarray) -> np.ndarray:
    return R + np.einsum("ija,j->ia", Q, V)


def value_of_deterministic(model: GameModel, d, m) -> np.ndarray:
    """Discounted value per starting state of deterministic strategy ``d`` at ``m``."""
    m = check_distribution(m, model.S)
    d = np.asarray(d, dtype=int)
    deterministic_matrix(d, model.A)  # range check
    Q, R = model.rate_tensor(m), model.reward_matrix(m)
    V = solve_values(Q, R, model.beta, d)
    M = model.beta * np.eye(model.S) - deterministic_generator(Q, d)
    rhs = R[np.arange(model.S), d]
    if np.abs(M @ V - rhs).max() > 1e-10 * (1 + np.abs(rhs).max()):
        raise SolverError("value system solved with excessive residual; the model is likely invalid")
    return V


def value_of_strategy(model: GameModel, pi, m) -> np.ndarray:
    """Value of a mixed stationary strategy (generator and reward averaged by ``pi``)."""
    m = check_distribution(m, model.S)
    pi = check_strategy(pi, model.S, model.A)
    Q, R = model.rate_tensor(m), model.reward_matrix(m)
    M = model.beta * np.eye(model.S) - mixed_generator(Q, pi)
    return np.linalg.solve(M, (R * pi).sum(axis=1))


def optimal_sets_from(Q: np.ndarray, R: np.ndarray, V: np.ndarray, beta: float, tol: float):
    q = action_values(Q, R, V)
    bv = beta * V
    thresh = bv - tol * (1 + np.abs(bv))
    sets = tuple(tuple(int(a) for a in np.flatnonzero(q[i] >= thresh[i])) for i in range(Q.shape[0]))
    return sets, q


def _policy_iteration(Q, R, beta, max_rounds):
    S = Q.shape[0]
    d = R.argmax(axis=1)
    for _ in range(max_rounds):
        V = solve_values(Q, R, beta, d)
        q = action_values(Q, R, V)
        current = q[np.arange(S), d]
        best = q.argmax(axis=1)
        improve = q[np.arange(S), best] > current + 1e-13 * (1 + np.abs(current))
        if not improve.any():
            return V, True
        d = np.where(improve, best, d)
    return None, False


def optimal_value(model: GameModel, m, tol: float = DEFAULT_OPT_TOL, cap: int = DEFAULT_CAP) -> OptimalStrategySet:
    """Optimal value ``V*`` at ``m`` and the per-state optimal action sets.

    An action is optimal in state ``i`` when its Bellman action value is within
    ``tol * (1 + |beta V*_i|)`` of ``beta V*_i``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = check_distribution(m, model.S)
    return _optimal_value(model.rate_tensor(m), model.reward_matrix(m), model.beta, tol, cap)


def _optimal_value(Q, R, beta, tol=DEFAULT_OPT_TOL, cap=DEFAULT_CAP) -> OptimalStrategySet:
    S, A = R.shape
    V, ok = _policy_iteration(Q, R, beta, S * A + 10)
    if not ok:
        # degenerate numerics: fall back to the pointwise max over all strategies
        strategies = all_deterministic(S, A, cap)
        V = solve_values_many(Q, R, beta, strategies).max(axis=0)
    sets, q = optimal_sets_from(Q, R, V, beta, tol)
    return OptimalStrategySet(sets, V, q)


def optimal_deterministic_set(model: GameModel, m, tol: float = DEFAULT_OPT_TOL, cap: int = DEFAULT_CAP) -> list[tuple[int, ...]]:
    """All optimal deterministic strategies at ``m`` (product of the per-state sets)."""
    m = check_distribution(m, model.S)
    Q, R = model.rate_tensor(m), model.reward_matrix(m)
    opt = _optimal_value(Q, R, model.beta, tol, cap)
    if opt.size > cap:
        raise CapExceeded(
            f"{opt.size} optimal strategies exceed the cap {cap}; use optimal_value().per_state_actions"
        )
    out = [tuple(d) for d in product(*opt.per_state_actions)]
    bound = 10 * tol * (1 + np.abs(opt.value).max()) / model.beta
    for d in out:
        if np.abs(solve_values(Q, R, model.beta, d) - opt.value).max() > bound:
            raise SolverError(f"strategy {d} in the optimal product does not attain V*")
    return out


def support_sets(pi: np.ndarray, threshold: float = 1e-12) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(a) for a in np.flatnonzero(row > threshold)) for row in pi)


def is_strategy_optimal(model: GameModel, pi, m, tol: float = DEFAULT_OPT_TOL) -> bool:
    """True iff every action played with positive probability is optimal in its state."""
    pi = check_strategy(pi, model.S, model.A)
    opt = optimal_value(model, m, tol)
    return all(set(s) <= set(o) for s, o in zip(support_sets(pi), opt.per_state_actions))


def value_gap(model: GameModel, m, d, cap: int = DEFAULT_CAP) -> float:
    """Smallest pointwise advantage of ``d`` over every other deterministic strategy.

    Positive only if ``d`` is the unique optimal deterministic strategy. The
    converse can fail when some state cannot reach a state where the
    competitor deviates; the gap is then 0 there.
    """
    m = check_distribution(m, model.S)
    d = np.asarray(d, dtype=int)
    deterministic_matrix(d, model.A)
    Q, R = model.rate_tensor(m), model.reward_matrix(m)
    return _value_gap(Q, R, model.beta, d, cap)


def _value_gap(Q, R, beta, d, cap=DEFAULT_CAP) -> float:
    S, A = R.shape
    strategies = all_deterministic(S, A, cap)
    others = strategies[np.any(strategies != d[None, :], axis=1)]
    if len(others) == 0:
        return math.inf
    Vd = solve_values(Q, R, beta, d)
    return float((Vd[None, :] - solve_values_many(Q, R, beta, others)).min())


@dataclass
class MonteCarloEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    x0_mean: float
    x0_stderr: float
    horizon: float
    truncation_bound: float
    paths: int
    seed: int

    def to_json(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "stderr": self.stderr.tolist(),
            "x0_mean": self.x0_mean,
            "x0_stderr": self.x0_stderr,
            "horizon": self.horizon,
            "truncation_bound": self.truncation_bound,
            "paths": self.paths,
            "seed": self.seed,
        }


def default_horizon(reward_range: float, beta: float, target: float = 1e-5) -> float:
    """Horizon after which the discounted tail ``r e^{-beta T} / beta`` is below ``target``."""
    if reward_range <= 0:
        return 1.0
    return float(max(1.0, math.ceil(math.log(reward_range / (beta * target)) / beta)))


MC_BATCH = 10_000


def _simulate_batch(G, rr, beta, horizon, start, n, rng) -> np.ndarray:
    S = G.shape[0]
    exit_rate = np.maximum(-np.diag(G), 0.0)
    jump = np.maximum(G - np.diag(np.diag(G)), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cum = np.cumsum(jump, axis=1) / exit_rate[:, None]
    cum[exit_rate == 0] = 1.0
    cum[:, -1] = 1.0
    state = np.full(n, start)
    t = np.zeros(n)
    acc = np.zeros(n)
    active = np.arange(n)
    while active.size:
        s = state[active]
        lam = exit_rate[s]
        with np.errstate(divide="ignore"):
            tau = rng.standard_exponential(active.size) / lam
        t0 = t[active]
        t1 = np.minimum(t0 + tau, horizon)
        acc[active] += rr[s] * (np.exp(-beta * t0) - np.exp(-beta * t1)) / beta
        t[active] = t1
        alive = t1 < horizon
        active = active[alive]
        if not active.size:
            break
        u = rng.random(active.size)
        state[active] = (u[:, None] >= cum[state[active]]).sum(axis=1).clip(max=S - 1)
    return acc


def monte_carlo_value(
    model: GameModel,
    pi,
    m,
    x0=None,
    horizon: float | None = None,
    paths: int = 100_000,
    seed: int = 0,
    workers: int | None = None,
) -> MonteCarloEstimate:
    """Simulate the discounted reward integral for every starting state.

    Holding times are exponential with the exit rates of ``Q^pi(m)``; jumps go
    to ``j`` with probability proportional to ``Q^pi(m)[i, j]``. Paths are run
    in batches seeded by ``(seed, start, batch)`` so the result is independent
    of how batches are scheduled.
    """
    if paths < 1:
        raise ValueError("paths must be >= 1")
    S = model.S
    m = check_distribution(m, S)
    pi = check_strategy(pi, S, model.A)
    x0 = np.full(S, 1.0 / S) if x0 is None else check_distribution(x0, S, "x0")
    Q, R = model.rate_tensor(m), model.reward_matrix(m)
    G = mixed_generator(Q, pi)
    rr = (R * pi).sum(axis=1)
    rmax = float(np.abs(rr).max())
    if horizon is None:
        horizon = default_horizon(rmax, model.beta)
    nb = -(-paths // MC_BATCH)
    jobs = [(s, b, min(MC_BATCH, paths - b * MC_BATCH)) for s in range(S) for b in range(nb)]

    def run(job):
        s, b, n = job
        return _simulate_batch(G, rr, model.beta, horizon, s, n, np.random.default_rng([seed, s, b]))

    results = pmap(run, jobs, workers)
    mean, se = np.zeros(S), np.zeros(S)
    for s in range(S):
        samples = np.concatenate(results[s * nb : (s + 1) * nb])
        mean[s] = samples.mean()
        se[s] = samples.std(ddof=1) / math.sqrt(samples.size) if samples.size > 1 else 0.0
    return MonteCarloEstimate(
        mean=mean,
        stderr=se,
        x0_mean=float(x0 @ mean),
        x0_stderr=float(math.sqrt(np.sum((x0 * se) ** 2))),
        horizon=float(horizon),
        truncation_bound=rmax * math.exp(-model.beta * horizon) / model.beta,
        paths=paths,
        seed=seed,
    )
