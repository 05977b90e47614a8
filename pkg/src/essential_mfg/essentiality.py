"""Sufficient criteria for essential equilibria and certified perturbation radii.

Two routes certify an equilibrium:

* uniqueness: the only equilibrium of a game is essential;
* characterization (deterministic equilibria only): the strategy is the unique
  optimal one at ``m`` and ``m`` is an essential stationary point of ``Q^d``.

Verdicts are tri-state. Nothing here ever claims an equilibrium is
non-essential; the probes in :mod:`essential_mfg.probing` give evidence only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import Equilibrium, EquilibriumSet
from .mdp import DEFAULT_CAP, DEFAULT_OPT_TOL, _optimal_value, _value_gap, all_deterministic
from .model import GameModel, check_distribution, default_metric_resolution, deterministic_matrix, simplex_grid
from .stationary import (
    IrreducibilityError,
    fixed_point_jacobian,
    invariant_distribution,
    is_irreducible,
    stationary_points,
)

CERTIFIED = "certified"
NOT_CERTIFIED = "not-certified"
INAPPLICABLE = "inapplicable"

INF_MARGIN = 0.99
SUP_MARGIN = 1.01
DELTA_MARGIN = 0.99
SIGMA_MIN = 1e-6
STATIONARY_CHECK_TOL = 1e-8
DEFAULT_EPSILON = 0.05


@dataclass
class Verdict:
    status: str
    criterion: str
    reason: str = ""
    details: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    def to_json(self) -> dict:
        return {"status": self.status, "criterion": self.criterion, "reason": self.reason, "details": self.details}


def check_unique_criterion(model: GameModel, eqset: EquilibriumSet) -> Verdict:
    """Certify when the search returned exactly one equilibrium.

    Uniqueness is only as good as the search; the caps used are recorded.
    """
    details = {"equilibria_found": len(eqset), "search": dict(eqset.search_metadata)}
    if eqset.continuum:
        return Verdict(INAPPLICABLE, "unique", "equilibrium set looks like a continuum", details)
    if len(eqset) == 1:
        return Verdict(CERTIFIED, "unique", "single equilibrium found (relative to search completeness)", details)
    return Verdict(NOT_CERTIFIED, "unique", f"{len(eqset)} equilibria found", details)


@dataclass
class PerturbationConstants:
    """Grid extrema behind the value-perturbation bound, with safety margins applied.

    ``L1 = inf ||beta I - Q^d(m)||``, ``L2 = sup ||beta I - Q^d|| * sup ||(beta I - Q^d)^-1||``,
    ``L3 = inf ||r^d(m)||`` and ``L4 = sup ||V^d(m)||`` over all deterministic
    ``d`` and grid points ``m``, in the max-row-sum norm and for rewards
    shifted by ``reward_shift`` so they are strictly positive.
    """

    L1: float
    L2: float
    L3: float
    L4: float
    inverse_norm_sup: float
    grid_resolution: int
    reward_shift: float
    raw: dict

    def to_json(self) -> dict:
        return {
            "L1": self.L1,
            "L2": self.L2,
            "L3": self.L3,
            "L4": self.L4,
            "inverse_norm_sup": self.inverse_norm_sup,
            "grid_resolution": self.grid_resolution,
            "reward_shift": self.reward_shift,
            "raw": dict(self.raw),
        }


def _row_norm(M: np.ndarray) -> np.ndarray:
    return np.abs(M).sum(axis=-1).max(axis=-1)


def perturbation_constants(
    model: GameModel, grid_resolution: int | None = None, cap: int = DEFAULT_CAP
) -> PerturbationConstants:
    if grid_resolution is None:
        grid_resolution = default_metric_resolution(model.S)
    S = model.S
    grid = simplex_grid(S, grid_resolution)
    strategies = all_deterministic(S, model.A, cap)
    Q = model.rate_tensor_batch(grid)  # (n, S, S, A)
    R = model.reward_matrix_batch(grid)  # (n, S, A)
    rmin = float(R.min())
    shift = 0.0 if rmin > 0 else -rmin + 1.0
    R = R + shift
    rows = np.arange(S)
    Qd = Q[:, rows[None, :], :, strategies]  # (N, S, n, S) after advanced indexing
    Qd = np.moveaxis(Qd, 2, 0)  # (n, N, S, S)
    M = model.beta * np.eye(S) - Qd
    rd = R[:, rows[None, :], strategies]  # (n, N, S)
    Minv = np.linalg.inv(M)
    V = np.einsum("...ij,...j->...i", Minv, rd)
    if not (np.all(np.isfinite(Minv)) and np.all(np.isfinite(V))):
        raise ArithmeticError("non-finite inverse or value on the grid")
    normM, normInv = _row_norm(M), _row_norm(Minv)
    normR, normV = np.abs(rd).max(axis=-1), np.abs(V).max(axis=-1)
    raw = {
        "inf_norm_M": float(normM.min()),
        "sup_norm_M": float(normM.max()),
        "sup_norm_Minv": float(normInv.max()),
        "inf_norm_r": float(normR.min()),
        "sup_norm_V": float(normV.max()),
    }
    raw["L2"] = raw["sup_norm_M"] * raw["sup_norm_Minv"]
    return PerturbationConstants(
        L1=INF_MARGIN * raw["inf_norm_M"],
        L2=(SUP_MARGIN * raw["sup_norm_M"]) * (SUP_MARGIN * raw["sup_norm_Minv"]),
        L3=INF_MARGIN * raw["inf_norm_r"],
        L4=SUP_MARGIN * raw["sup_norm_V"],
        inverse_norm_sup=SUP_MARGIN * raw["sup_norm_Minv"],
        grid_resolution=grid_resolution,
        reward_shift=shift,
        raw=raw,
    )


def certified_delta(model: GameModel, gamma: float, constants: PerturbationConstants) -> float:
    """Game distance below which every ``V^d(m)`` moves by at most ``gamma``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    c = constants
    S = model.S
    first = 1.0 / (2 * S * c.inverse_norm_sup)
    second = gamma * c.L1 * c.L3 / (2 * c.L2 * c.L4 * (S * c.L3 + c.L1))
    return DELTA_MARGIN * min(first, second)


def ball_points(m, epsilon: float, per_axis: int | None = None) -> np.ndarray:
    """Lattice points of the closed max-norm ball around ``m`` inside the simplex.

    The first ``S-1`` coordinates move on a lattice of spacing ``epsilon/n``;
    the last one absorbs the normalization.
    """
    m = np.asarray(m, dtype=float)
    S = m.size
    if per_axis is None:
        per_axis = max(2, int(round(2000 ** (1 / (S - 1)) / 2)))
    ticks = np.linspace(-epsilon, epsilon, 2 * per_axis + 1)
    mesh = np.stack(np.meshgrid(*([ticks] * (S - 1)), indexing="ij"), -1).reshape(-1, S - 1)
    offsets = np.hstack([mesh, -mesh.sum(axis=1, keepdims=True)])
    pts = m[None, :] + offsets
    ok = (np.abs(offsets).max(axis=1) <= epsilon * (1 + 1e-12)) & (pts.min(axis=1) >= 0)
    pts = np.clip(pts[ok], 0.0, None)
    return pts / pts.sum(axis=1, keepdims=True)


def ball_boundary(points: np.ndarray, m, epsilon: float) -> np.ndarray:
    d = np.abs(points - np.asarray(m)[None, :]).max(axis=1)
    return points[d >= epsilon * (1 - 1e-9)]


class PersistenceError(ValueError):
    pass


@dataclass
class PersistenceCertificate:
    gamma: float
    delta: float
    epsilon: float
    ball_size: int
    retries: int

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "ball_points": self.ball_size,
            "retries": self.retries,
        }


def strategy_persistence_radius(
    model: GameModel,
    m,
    d,
    epsilon: float = DEFAULT_EPSILON,
    constants: PerturbationConstants | None = None,
    per_axis: int | None = None,
    max_retries: int = 5,
    opt_tol: float = DEFAULT_OPT_TOL,
    cap: int = DEFAULT_CAP,
) -> PersistenceCertificate:
    """Ball and game radius on which ``d`` stays the unique optimal strategy.

    The ball radius is halved until uniqueness and a positive value gap hold
    at every ball lattice point. ``gamma`` is the smallest gap seen;
    ``delta`` is the certified radius for ``gamma / 3``.

    Raises:
        PersistenceError: ``d`` is not the unique optimal strategy at ``m`` or
            no ball passes within ``max_retries`` halvings.
    """
    m = check_distribution(m, model.S)
    d = np.asarray(d, dtype=int)
    deterministic_matrix(d, model.A)
    opt = _optimal_value(model.rate_tensor(m), model.reward_matrix(m), model.beta, opt_tol, cap)
    if not (opt.is_singleton and opt.contains(d)):
        raise PersistenceError(f"strategy {[a + 1 for a in d]} is not the unique optimal strategy at m")
    eps = epsilon
    for attempt in range(max_retries + 1):
        pts = ball_points(m, eps, per_axis)
        gaps = []
        for p in pts:
            Q, R = model.rate_tensor(p), model.reward_matrix(p)
            o = _optimal_value(Q, R, model.beta, opt_tol, cap)
            if not (o.is_singleton and o.contains(d)):
                break
            g = _value_gap(Q, R, model.beta, d, cap)
            if not g > 0:
                break
            gaps.append(g)
        else:
            gamma = float(min(gaps))
            if math.isinf(gamma):  # only one deterministic strategy exists
                gamma = float(np.abs(opt.value).max() + 1.0)
            if constants is None:
                constants = perturbation_constants(model, cap=cap)
            return PersistenceCertificate(gamma, certified_delta(model, gamma / 3, constants), eps, len(pts), attempt)
        eps /= 2
    raise PersistenceError(f"uniqueness fails on every ball down to radius {eps * 2:.3g}")


def essential_stationary_check(
    model: GameModel,
    d,
    m,
    grid_resolution: int | None = None,
    seed_resolution: int | None = None,
) -> Verdict:
    """Certify ``m`` as an essential stationary point of ``Q^d``.

    Criterion A: ``Q^d`` irreducible on the whole grid and a single stationary
    point found. Criterion B: the tangent Jacobian of ``m - x(m)`` has smallest
    singular value above 1e-6 (isolated point of nonzero index). The verdict's
    ``criterion`` names every one that holds, e.g. ``"A+B"``.
    """
    m = check_distribution(m, model.S)
    d = np.asarray(d, dtype=int)
    pi = deterministic_matrix(d, model.A)
    Q = model.rate_tensor(m)
    G = Q[np.arange(model.S), :, d]
    residual = float(np.abs(m @ G).max())
    if residual > STATIONARY_CHECK_TOL:
        raise ValueError(f"m is not stationary for this strategy (residual {residual:.3g})")
    if grid_resolution is None:
        grid_resolution = default_metric_resolution(model.S)
    grid = simplex_grid(model.S, grid_resolution)
    Qg = np.einsum("nija,ia->nij", model.rate_tensor_batch(grid), pi)
    irreducible_everywhere = all(is_irreducible(g) for g in Qg)
    sps = stationary_points(model, pi, seed_resolution, warn=False)
    unique_point = len(sps) == 1 and not sps.continuum and np.abs(sps.points[0] - m).max() < 1e-6
    details = {
        "irreducible_on_grid": irreducible_everywhere,
        "stationary_points_found": len(sps),
        "continuum": sps.continuum,
        "criterion_A": irreducible_everywhere and unique_point,
    }
    try:
        _, sigma = fixed_point_jacobian(model, pi, m)
        details["jacobian_sigma_min"] = sigma
        details["criterion_B"] = sigma > SIGMA_MIN
    except IrreducibilityError as exc:
        details["jacobian_sigma_min"] = None
        details["criterion_B"] = False
        details["jacobian_error"] = str(exc)
    fired = [c for c in ("A", "B") if details[f"criterion_{c}"]]
    if fired:
        reasons = {
            "A": "irreducible everywhere with a unique stationary point",
            "B": "isolated stationary point with nonsingular fixed-point Jacobian",
        }
        return Verdict(CERTIFIED, "+".join(fired), "; ".join(reasons[c] for c in fired), details)
    return Verdict(NOT_CERTIFIED, "stationary", "neither stationary-point criterion holds", details)


def stationary_persistence_radius(
    model: GameModel, d, m, epsilon: float, other_points=(), per_axis: int | None = None
) -> tuple[float | None, str]:
    """Rate-perturbation radius keeping a stationary point of ``Q^d`` within ``epsilon`` of ``m``.

    Degree argument on the ball: if ``|m' - x(m')| >= eta`` on the ball
    boundary and every admissible perturbation moves ``x`` by less than
    ``eta`` there, the perturbed map keeps a fixed point inside. The movement
    of ``x`` is bounded with the normalized balance matrix and the standard
    linear-system perturbation bound. Only balls inside the open simplex and
    free of other stationary points are handled; otherwise ``None`` is
    returned with the reason.
    """
    m = np.asarray(m, dtype=float)
    S = model.S
    if m.min() <= epsilon:
        return None, "ball meets the simplex boundary"
    for p in other_points:
        if 0 < np.abs(np.asarray(p) - m).max() <= epsilon:
            return None, "another stationary point lies in the ball"
    d = np.asarray(d, dtype=int)
    pts = ball_points(m, epsilon, per_axis)
    pi = deterministic_matrix(d, model.A)
    Q = np.einsum("nija,ia->nij", model.rate_tensor_batch(pts), pi)
    inv_norms = []
    for G in Q:
        if not is_irreducible(G):
            return None, "generator reducible inside the ball"
        Qt = G.T.copy()
        Qt[-1, :] = 1.0
        inv_norms.append(_row_norm(np.linalg.inv(Qt)))
    K = SUP_MARGIN * float(max(inv_norms))
    boundary = ball_boundary(pts, m, epsilon)
    Qb = np.einsum("nija,ia->nij", model.rate_tensor_batch(boundary), pi)
    eta = INF_MARGIN * min(float(np.abs(p - invariant_distribution(G)).max()) for p, G in zip(boundary, Qb))
    if not eta > 0:
        return None, "fixed-point map vanishes on the ball boundary"
    return DELTA_MARGIN * eta / (K * S * (1 + eta)), "degree bound"


def check_characterization(
    model: GameModel,
    eq: Equilibrium,
    epsilon: float = DEFAULT_EPSILON,
    constants: PerturbationConstants | None = None,
    seed_resolution: int | None = None,
    cap: int = DEFAULT_CAP,
) -> Verdict:
    """Unique optimal deterministic strategy plus an essential stationary point."""
    if eq.kind != "deterministic":
        return Verdict(INAPPLICABLE, "characterization", "no conclusion is available for mixed equilibria")
    d = np.array(eq.strategy)
    details: dict = {}
    try:
        cert = strategy_persistence_radius(model, eq.m, d, epsilon, constants, cap=cap)
    except PersistenceError as exc:
        return Verdict(NOT_CERTIFIED, "characterization", f"strategy uniqueness: {exc}", details)
    details["strategy"] = cert.to_json()
    stat = essential_stationary_check(model, d, eq.m, seed_resolution=seed_resolution)
    details["stationary"] = stat.to_json()
    if not stat.certified:
        return Verdict(NOT_CERTIFIED, "characterization", f"stationary point: {stat.reason}", details)
    sps = stationary_points(model, deterministic_matrix(d, model.A), seed_resolution, warn=False)
    delta2, why = stationary_persistence_radius(model, d, eq.m, cert.epsilon, sps.points)
    details["stationary_delta"] = delta2
    details["stationary_delta_method"] = why
    details["strategy_delta"] = cert.delta
    details["certified_radius"] = None if delta2 is None else min(cert.delta, delta2)
    return Verdict(CERTIFIED, "characterization", f"unique optimal strategy and stationary criterion {stat.criterion}", details)


@dataclass
class EssentialityReport:
    equilibrium: Equilibrium
    unique_criterion: Verdict
    characterization_criterion: Verdict
    certified_radius: float | None
    probe: object | None = None

    @property
    def status(self) -> str:
        if self.unique_criterion.certified or self.characterization_criterion.certified:
            return "essential-certified"
        return NOT_CERTIFIED

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "equilibrium": self.equilibrium.to_json(),
            "unique_criterion": self.unique_criterion.to_json(),
            "characterization_criterion": self.characterization_criterion.to_json(),
            "certified_radius": self.certified_radius,
            "probe": None if self.probe is None else self.probe.to_json(),
        }


def classify(
    model: GameModel,
    eqset: EquilibriumSet,
    epsilon: float = DEFAULT_EPSILON,
    seed_resolution: int | None = None,
    cap: int = DEFAULT_CAP,
) -> list[EssentialityReport]:
    """Run both criteria on every equilibrium of a search result."""
    unique = check_unique_criterion(model, eqset)
    constants = None
    if any(e.kind == "deterministic" for e in eqset):
        constants = perturbation_constants(model, cap=cap)
    reports = []
    for eq in eqset:
        char = check_characterization(model, eq, epsilon, constants, seed_resolution, cap)
        radius = char.details.get("certified_radius") if char.certified else None
        reports.append(EssentialityReport(eq, unique, char, radius))
    return reports
