"""Stationary mean field equilibria: search, verification and set distances.

Deterministic equilibria come from enumerating every deterministic strategy
and keeping the stationary points at which it is optimal. Mixed equilibria
come from support enumeration: on a fixed support the stationarity and
per-state indifference equations form a square system that is solved by
multi-start Newton.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from ._newton import dedup, projected_newton
from ._parallel import pmap
from .mdp import (
    DEFAULT_CAP,
    DEFAULT_OPT_TOL,
    _optimal_value,
    _value_gap,
    all_deterministic,
    support_sets,
)
from .model import (
    GameModel,
    check_distribution,
    check_strategy,
    deterministic_matrix,
    mixed_generator,
    simplex_grid,
)
from .stationary import (
    CONTINUUM_FRACTION,
    DEDUP_RADIUS,
    DEFAULT_TOL,
    ContinuumWarning,
    default_seed_resolution,
    project_simplex,
    stationary_points,
)

VERIFY_TOL = 1e-8
MIN_WEIGHT = 1e-9
DEFAULT_MAX_EXTRA = 4


@dataclass
class EquilibriumDiagnostics:
    residual: float
    optimal: bool
    margins: list  # per state: worst supported action value minus best unsupported one (None if all supported)
    indifference: list  # per state: spread of action values over the support
    value: np.ndarray
    value_gap: float | None
    passed: bool

    def to_json(self) -> dict:
        return {
            "stationarity_residual": self.residual,
            "optimal": self.optimal,
            "margins": self.margins,
            "indifference": self.indifference,
            "value": self.value.tolist(),
            "value_gap": self.value_gap,
            "passed": self.passed,
        }


@dataclass
class Equilibrium:
    m: np.ndarray
    pi: np.ndarray
    kind: str  # "deterministic" or "mixed"
    support: tuple[tuple[int, ...], ...]
    diagnostics: EquilibriumDiagnostics

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.m, self.pi.ravel()])

    @property
    def strategy(self) -> tuple[int, ...] | None:
        """Action per state for deterministic equilibria."""
        if self.kind != "deterministic":
            return None
        return tuple(int(s[0]) for s in self.support)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "m": self.m.tolist(),
            "pi": self.pi.tolist(),
            "support": [[a + 1 for a in s] for s in self.support],
            "diagnostics": self.diagnostics.to_json(),
        }


@dataclass
class EquilibriumSet:
    items: list[Equilibrium]
    dedup_radius: float = DEDUP_RADIUS
    continuum: bool = False
    warnings: list[str] = field(default_factory=list)
    search_metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, k):
        return self.items[k]

    def to_json(self) -> dict:
        return {
            "count": len(self.items),
            "continuum": self.continuum,
            "warnings": list(self.warnings),
            "dedup_radius": self.dedup_radius,
            "search": self.search_metadata,
            "equilibria": [e.to_json() for e in self.items],
        }


def verify_equilibrium(
    model: GameModel, m, pi, tol: float = VERIFY_TOL, opt_tol: float = DEFAULT_OPT_TOL, cap: int = DEFAULT_CAP
) -> EquilibriumDiagnostics:
    """Check stationarity of ``m`` under ``pi`` and optimality of ``pi`` at ``m``."""
    m = check_distribution(m, model.S)
    pi = check_strategy(pi, model.S, model.A)
    Q, R = model.rate_tensor(m), model.reward_matrix(m)
    residual = float(np.abs(m @ mixed_generator(Q, pi)).max())
    opt = _optimal_value(Q, R, model.beta, opt_tol, cap)
    supp = support_sets(pi)
    q = opt.action_values
    margins, spread = [], []
    for i, s in enumerate(supp):
        off = [a for a in range(model.A) if a not in s]
        lo = q[i, list(s)].min()
        margins.append(float(lo - q[i, off].max()) if off else None)
        spread.append(float(q[i, list(s)].max() - lo))
    optimal = all(set(s) <= set(o) for s, o in zip(supp, opt.per_state_actions))
    gap = None
    if all(len(s) == 1 for s in supp) and model.A**model.S <= cap:
        gap = _value_gap(Q, R, model.beta, np.array([s[0] for s in supp]), cap)
        gap = None if not np.isfinite(gap) else gap
    return EquilibriumDiagnostics(
        residual=residual,
        optimal=optimal,
        margins=margins,
        indifference=spread,
        value=opt.value,
        value_gap=gap,
        passed=residual <= tol and optimal,
    )


@dataclass
class _SearchOutcome:
    items: list
    continuum: bool = False
    warnings: list = field(default_factory=list)


def _deterministic_search(model, grid_resolution, tol, opt_tol, cap) -> _SearchOutcome:
    strategies = all_deterministic(model.S, model.A, cap)

    def solve(d):
        pi = deterministic_matrix(d, model.A)
        sps = stationary_points(model, pi, grid_resolution, tol, warn=False)
        out = _SearchOutcome([])
        kept = []
        for m in sps.points:
            opt = _optimal_value(model.rate_tensor(m), model.reward_matrix(m), model.beta, opt_tol, cap)
            if opt.contains(d):
                kept.append(m)
        if sps.continuum and kept:
            out.continuum = True
            out.warnings.append(f"strategy {[a + 1 for a in d]}: continuum of stationary points")
        for m in kept:
            diag = verify_equilibrium(model, m, pi, VERIFY_TOL, opt_tol, cap)
            if diag.passed:
                out.items.append(Equilibrium(m, pi, "deterministic", tuple((int(a),) for a in d), diag))
        return out

    return _merge(pmap(solve, strategies))


def _merge(outcomes) -> _SearchOutcome:
    merged = _SearchOutcome([])
    for o in outcomes:
        merged.items.extend(o.items)
        merged.continuum |= o.continuum
        merged.warnings.extend(o.warnings)
    return merged


def find_deterministic_equilibria(
    model: GameModel,
    grid_resolution: int | None = None,
    tol: float = DEFAULT_TOL,
    opt_tol: float = DEFAULT_OPT_TOL,
    cap: int = DEFAULT_CAP,
) -> list[Equilibrium]:
    """Equilibria whose strategy is deterministic, in strategy-enumeration order."""
    out = _deterministic_search(model, grid_resolution, tol, opt_tol, cap)
    for w in out.warnings:
        warnings.warn(w, ContinuumWarning, stacklevel=2)
    return out.items


def enumerate_supports(S: int, A: int, max_extra: int = DEFAULT_MAX_EXTRA) -> list[tuple[tuple[int, ...], ...]]:
    """Supports with at least one mixing state and ``sum(|A_i| - 1) <= max_extra``.

    Ordered by total size, then lexicographically.
    """
    subsets = [c for k in range(1, A + 1) for c in combinations(range(A), k)]
    out = [
        supp
        for supp in product(subsets, repeat=S)
        if 1 <= sum(len(s) - 1 for s in supp) <= max_extra
    ]
    return sorted(out, key=lambda s: (sum(len(x) for x in s), s))


class _SupportSystem:
    """Square system in ``(m, weights)`` for one support."""

    def __init__(self, model: GameModel, support):
        self.model = model
        self.support = support
        S, A = model.S, model.A
        self.rows = np.array([i for i, s in enumerate(support) for _ in s])
        self.cols = np.array([a for s in support for a in s])
        self.nw = len(self.rows)
        self.d0 = np.array([s[0] for s in support])
        self.pairs = [(i, s[0], a) for i, s in enumerate(support) for a in s[1:]]
        self.S, self.A = S, A

    def strategy(self, w):
        pi = np.zeros((self.S, self.A))
        pi[self.rows, self.cols] = w
        return pi

    def split(self, z):
        return z[: self.S], z[self.S :]

    def project(self, z):
        m, w = self.split(z)
        w = np.clip(w, 0.0, None)
        sums = np.bincount(self.rows, weights=w, minlength=self.S)
        counts = np.bincount(self.rows, minlength=self.S)
        safe = sums[self.rows] > 0
        w = np.where(safe, w / np.where(safe, sums[self.rows], 1.0), 1.0 / counts[self.rows])
        return np.concatenate([project_simplex(m), w])

    def _values(self, Q, R):
        S = self.S
        Qd = Q[np.arange(S), :, self.d0]
        M = self.model.beta * np.eye(S) - Qd
        V = np.linalg.solve(M, R[np.arange(S), self.d0])
        return M, V

    def F(self, z):
        m, w = self.split(z)
        Q, R = self.model.rate_tensor(m), self.model.reward_matrix(m)
        G = mixed_generator(Q, self.strategy(w))
        _, V = self._values(Q, R)
        q = R + np.einsum("ija,j->ia", Q, V)
        indiff = [q[i, a] - q[i, a0] for i, a0, a in self.pairs]
        wsum = np.bincount(self.rows, weights=w, minlength=self.S) - 1.0
        return np.concatenate([(m @ G)[: self.S - 1], [m.sum() - 1.0], wsum, indiff])

    def J(self, z):
        S = self.S
        m, w = self.split(z)
        pi = self.strategy(w)
        Q, R = self.model.rate_tensor(m), self.model.reward_matrix(m)
        dQ, dR = self.model.rate_tensor_grad(m), self.model.reward_matrix_grad(m)
        G = mixed_generator(Q, pi)
        dG = np.einsum("ijak,ia->ijk", dQ, pi)
        stat_m = G.T + np.einsum("i,ijk->jk", m, dG)
        stat_w = (m[self.rows, None] * Q[self.rows, :, self.cols]).T  # (S, nw)
        M, V = self._values(Q, R)
        idx = np.arange(S)
        dQd = dQ[idx, :, self.d0, :]  # (S, S, S): d Q^{d0}[i, j] / dm_k
        drd = dR[idx, self.d0, :]
        dV = np.linalg.solve(M, drd + np.einsum("ijk,j->ik", dQd, V))  # (S, S): dV_i/dm_k
        dq = dR + np.einsum("ijak,j->iak", dQ, V) + np.einsum("ija,jk->iak", Q, dV)
        n = S + self.nw
        Jm = np.zeros((n, n))
        Jm[: S - 1, :S] = stat_m[: S - 1]
        Jm[: S - 1, S:] = stat_w[: S - 1]
        Jm[S - 1, :S] = 1.0
        Jm[S + self.rows, S + np.arange(self.nw)] = 1.0
        for r, (i, a0, a) in enumerate(self.pairs):
            Jm[2 * S + r, :S] = dq[i, a] - dq[i, a0]
        return Jm


def _mixed_support_search(model, support, seeds_m, weight_seeds, seed_index, tol, opt_tol, cap) -> _SearchOutcome:
    system = _SupportSystem(model, support)
    rng = np.random.default_rng([seed_index, 7919])
    uniform = np.concatenate([np.full(len(s), 1.0 / len(s)) for s in support])
    found = []
    starts = 0
    for m0 in seeds_m:
        # fresh random weights per start, so a continuum in the weights shows up as many distinct limits
        wseeds = [uniform] + [
            np.concatenate([rng.dirichlet(np.ones(len(s))) for s in support]) for _ in range(weight_seeds - 1)
        ]
        for w0 in wseeds:
            starts += 1
            with np.errstate(all="ignore"):
                try:
                    res = projected_newton(system.F, system.J, np.concatenate([m0, w0]), system.project, tol, max_iter=60)
                except np.linalg.LinAlgError:
                    continue
            if not res.residual <= tol:
                continue
            m, w = system.split(res.x)
            if w.min() < MIN_WEIGHT:
                continue
            pi = system.strategy(w)
            opt = _optimal_value(model.rate_tensor(m), model.reward_matrix(m), model.beta, opt_tol, cap)
            if not all(set(s) <= set(o) for s, o in zip(support, opt.per_state_actions)):
                continue
            diag = verify_equilibrium(model, m, pi, VERIFY_TOL, opt_tol, cap)
            if diag.passed:
                found.append(Equilibrium(m, pi, "mixed", tuple(support), diag))
    keep = dedup([e.vector for e in found], DEDUP_RADIUS)
    out = _SearchOutcome([found[k] for k in keep])
    if len(out.items) > 1 and len(out.items) > CONTINUUM_FRACTION * starts:
        out.continuum = True
        label = [[a + 1 for a in s] for s in support]
        out.warnings.append(f"support {label}: continuum of mixed equilibria ({len(out.items)} distinct from {starts} starts)")
    return out


def _mixed_search(model, supports, max_extra, grid_resolution, tol, opt_tol, cap, weight_seeds):
    if supports == "all":
        supports = enumerate_supports(model.S, model.A, max_extra)
    supports = [tuple(tuple(sorted(int(a) for a in s)) for s in supp) for supp in supports]
    supports = [s for s in supports if any(len(x) > 1 for x in s)]
    if grid_resolution is None:
        grid_resolution = max(2, default_seed_resolution(model.S) // 2)
    seeds_m = simplex_grid(model.S, grid_resolution)
    outcomes = pmap(
        lambda ks: _mixed_support_search(model, ks[1], seeds_m, weight_seeds, ks[0], tol, opt_tol, cap),
        list(enumerate(supports)),
    )
    return _merge(outcomes), supports, grid_resolution


def find_mixed_equilibria(
    model: GameModel,
    supports="all",
    max_extra: int = DEFAULT_MAX_EXTRA,
    grid_resolution: int | None = None,
    tol: float = DEFAULT_TOL,
    opt_tol: float = DEFAULT_OPT_TOL,
    cap: int = DEFAULT_CAP,
    weight_seeds: int = 3,
) -> list[Equilibrium]:
    """Equilibria with at least one genuinely mixing state.

    ``supports`` is ``"all"`` or a list of per-state action tuples. Supports
    that mix nowhere are skipped (they are deterministic).
    """
    out, _, _ = _mixed_search(model, supports, max_extra, grid_resolution, tol, opt_tol, cap, weight_seeds)
    for w in out.warnings:
        warnings.warn(w, ContinuumWarning, stacklevel=2)
    return out.items


def find_all_equilibria(
    model: GameModel,
    grid_resolution: int | None = None,
    mixed_grid_resolution: int | None = None,
    tol: float = DEFAULT_TOL,
    opt_tol: float = DEFAULT_OPT_TOL,
    cap: int = DEFAULT_CAP,
    max_extra: int = DEFAULT_MAX_EXTRA,
    weight_seeds: int = 3,
    warn: bool = True,
) -> EquilibriumSet:
    """Union of the deterministic and mixed searches, deduplicated in max norm over ``(m, pi)``."""
    det = _deterministic_search(model, grid_resolution, tol, opt_tol, cap)
    mixed, supports, mres = _mixed_search(model, "all", max_extra, mixed_grid_resolution, tol, opt_tol, cap, weight_seeds)
    items = det.items + mixed.items
    keep = dedup([e.vector for e in items], DEDUP_RADIUS)
    out = EquilibriumSet(
        items=[items[k] for k in keep],
        dedup_radius=DEDUP_RADIUS,
        continuum=det.continuum or mixed.continuum,
        warnings=det.warnings + mixed.warnings,
        search_metadata={
            "grid_resolution": grid_resolution or default_seed_resolution(model.S),
            "mixed_grid_resolution": mres,
            "tol": tol,
            "cap": cap,
            "max_extra": max_extra,
            "strategies_examined": model.A**model.S,
            "supports_examined": len(supports),
        },
    )
    if not out.items:
        out.warnings.append("no equilibrium found although one always exists; refine the seed grids")
    if warn:
        for w in out.warnings:
            warnings.warn(w, ContinuumWarning if out.continuum else RuntimeWarning, stacklevel=2)
    return out


def _as_vectors(obj) -> list[np.ndarray]:
    if isinstance(obj, EquilibriumSet):
        return [e.vector for e in obj.items]
    out = []
    for x in obj:
        if isinstance(x, Equilibrium):
            out.append(x.vector)
        else:
            out.append(np.atleast_1d(np.asarray(x, dtype=float)).ravel())
    return out


def _point_vector(point) -> np.ndarray:
    if isinstance(point, Equilibrium):
        return point.vector
    if isinstance(point, tuple) and len(point) == 2:
        m, pi = point
        return np.concatenate([np.asarray(m, dtype=float).ravel(), np.asarray(pi, dtype=float).ravel()])
    return np.atleast_1d(np.asarray(point, dtype=float)).ravel()


def set_distance(point, eqset) -> float:
    """Max-norm distance from ``(m, pi)`` to the nearest member of a set."""
    vecs = _as_vectors(eqset)
    if not vecs:
        raise ValueError("distance to an empty set")
    p = _point_vector(point)
    return float(min(np.abs(v - p).max() for v in vecs))


def hausdorff(set_a, set_b) -> float:
    """Hausdorff distance between two finite sets in the max norm."""
    a, b = _as_vectors(set_a), _as_vectors(set_b)
    if not a or not b:
        raise ValueError("Hausdorff distance needs nonempty sets")
    D = np.array([[np.abs(x - y).max() for y in b] for x in a])
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))
