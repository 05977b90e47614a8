"""Population side: distributions with ``m^T Q^pi(m) = 0``."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from ._newton import dedup, projected_newton
from .model import (
    GameModel,
    check_distribution,
    check_strategy,
    mixed_generator,
    simplex_grid,
)

DEFAULT_TOL = 1e-10
DEDUP_RADIUS = 1e-6
FD_STEP = 1e-6
EDGE_TOL = 1e-12
CONTINUUM_FRACTION = 0.25


class IrreducibilityError(ValueError):
    pass


class ContinuumWarning(UserWarning):
    """Solutions do not look isolated."""


def default_seed_resolution(S: int) -> int:
    if S <= 3:
        return 20
    if S <= 5:
        return 8
    return 4


def stationary_residual(model: GameModel, pi, m) -> np.ndarray:
    """``(sum_i m_i Q^pi(m)[i, j])_j``; zero exactly at stationary points."""
    pi = check_strategy(pi, model.S, model.A)
    m = check_distribution(m, model.S)
    return m @ mixed_generator(model.rate_tensor(m), pi)


def communicating_classes(G: np.ndarray) -> list[list[int]]:
    adj = (G > EDGE_TOL).astype(int)
    np.fill_diagonal(adj, 0)
    n, labels = connected_components(adj, directed=True, connection="strong")
    return [sorted(np.flatnonzero(labels == k).tolist()) for k in range(n)]


def is_irreducible(G) -> bool:
    """Strong connectivity of the graph with an edge ``i -> j`` when ``G[i, j] > 1e-12``."""
    G = np.asarray(G, dtype=float)
    return len(communicating_classes(G)) == 1


def _require_irreducible(G, where=""):
    classes = communicating_classes(G)
    if len(classes) > 1:
        named = ", ".join("{" + ", ".join(str(i + 1) for i in c) + "}" for c in classes)
        raise IrreducibilityError(f"irreducibility violated{where}: communicating classes {named}")


def invariant_distribution(G: np.ndarray) -> np.ndarray:
    """Solve ``x^T G = 0, sum x = 1`` by replacing the last balance equation with the normalization."""
    S = G.shape[0]
    Qt = G.T.copy()
    Qt[-1, :] = 1.0
    rhs = np.zeros(S)
    rhs[-1] = 1.0
    try:
        return np.linalg.solve(Qt, rhs)
    except np.linalg.LinAlgError as exc:
        raise IrreducibilityError("singular normalized balance system") from exc


def x_map(model: GameModel, pi, m) -> np.ndarray:
    """Invariant distribution of the agent's chain when the population is frozen at ``m``.

    Raises:
        IrreducibilityError: ``Q^pi(m)`` is reducible or the system is singular.
    """
    pi = check_strategy(pi, model.S, model.A)
    m = check_distribution(m, model.S)
    G = mixed_generator(model.rate_tensor(m), pi)
    _require_irreducible(G)
    return invariant_distribution(G)


def tangent_basis(S: int) -> np.ndarray:
    """Orthonormal Helmert basis of ``{v : sum v = 0}``, shape ``(S, S-1)``."""
    U = np.zeros((S, S - 1))
    for k in range(1, S):
        U[:k, k - 1] = 1.0
        U[k, k - 1] = -float(k)
        U[:, k - 1] /= np.sqrt(k * (k + 1))
    return U


def fixed_point_jacobian(model: GameModel, pi, m, step: float = FD_STEP):
    """Jacobian of ``m -> m - x(m)`` on the simplex tangent space.

    Central differences along an orthonormal tangent basis. Returns the
    ``(S-1, S-1)`` matrix and its smallest singular value.
    """
    pi = check_strategy(pi, model.S, model.A)
    m = check_distribution(m, model.S)
    U = tangent_basis(model.S)

    def g(p):
        G = mixed_generator(model.rate_tensor(p), pi)
        _require_irreducible(G, f" near m={np.round(m, 12).tolist()}")
        return p - invariant_distribution(G)

    g(m)
    cols = [(g(m + step * u) - g(m - step * u)) / (2 * step) for u in U.T]
    J = U.T @ np.column_stack(cols)
    return J, float(np.linalg.svd(J, compute_uv=False).min())


@dataclass
class StationaryPointSet:
    points: list[np.ndarray]
    residuals: list[float]
    seeds_used: int
    dedup_radius: float
    grid_resolution: int
    continuum: bool = False
    warnings: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.points)


def _stationary_system(model: GameModel, pi: np.ndarray):
    S = model.S

    def F(m):
        G = mixed_generator(model.rate_tensor(m), pi)
        return np.append((m @ G)[: S - 1], m.sum() - 1.0)

    def J(m):
        G = mixed_generator(model.rate_tensor(m), pi)
        dG = np.einsum("ijak,ia->ijk", model.rate_tensor_grad(m), pi)
        full = G.T + np.einsum("i,ijk->jk", m, dG)  # d(m^T G)_j / dm_k
        return np.vstack([full[: S - 1], np.ones(S)])

    return F, J


def project_simplex(m: np.ndarray) -> np.ndarray:
    m = np.clip(m, 0.0, None)
    s = m.sum()
    return m / s if s > 0 else np.full(m.size, 1.0 / m.size)


def stationary_points(
    model: GameModel,
    pi,
    grid_resolution: int | None = None,
    tol: float = DEFAULT_TOL,
    dedup_radius: float = DEDUP_RADIUS,
    warn: bool = True,
) -> StationaryPointSet:
    """Multi-start Newton search for all stationary points of ``Q^pi(.)``.

    Every point of the uniform simplex grid seeds one Newton run. Converged
    points (residual ``<= tol``) are deduplicated in seed order. Completeness
    is heuristic; refine the grid if in doubt.
    """
    pi = check_strategy(pi, model.S, model.A)
    if grid_resolution is None:
        grid_resolution = default_seed_resolution(model.S)
    if grid_resolution < 2:
        raise ValueError("grid resolution must be >= 2")
    seeds = simplex_grid(model.S, grid_resolution)
    F, J = _stationary_system(model, pi)
    found = []
    for seed in seeds:
        res = projected_newton(F, J, seed, project_simplex, tol)
        if res.residual <= tol:
            found.append(res.x)
    keep = dedup(found, dedup_radius)
    points = [found[k] for k in keep]
    residuals = [float(np.abs(stationary_residual(model, pi, p)).max()) for p in points]
    out = StationaryPointSet(points, residuals, len(seeds), dedup_radius, grid_resolution)
    if not points:
        out.warnings.append("no stationary point found; refine the seed grid")
    elif len(points) > 1 and len(points) > CONTINUUM_FRACTION * len(seeds):
        out.continuum = True
        out.warnings.append(
            f"continuum of stationary points: {len(points)} distinct limits from {len(seeds)} seeds"
        )
    for w in out.warnings if warn else ():
        warnings.warn(w, ContinuumWarning if out.continuum else RuntimeWarning, stacklevel=2)
    return out
