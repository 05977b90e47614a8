import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from essential_mfg.model import (
    GameModel,
    ModelError,
    Polynomial,
    deterministic_generator,
    effective_generator,
    eval_rate,
    eval_reward,
    game_distance,
    simplex_grid,
    validate,
)

from conftest import const, constant_game, random_polynomial_game


def naive_eval(poly, m):
    total = 0.0
    for e, c in poly.terms:
        term = c
        for mi, ei in zip(m, e):
            term *= mi**ei
        total += term
    return total


def test_polynomial_canonical_form():
    p = Polynomial(2, ((1, 0), (0, 0), (1, 0), (0, 1)), (1.0, 2.0, 2.0, 0.0))
    assert p.terms == [((0, 0), 2.0), ((1, 0), 3.0)]
    assert Polynomial(2, ((1, 0), (1, 0)), (1.0, -1.0)).is_zero
    with pytest.raises(ModelError):
        Polynomial(2, ((1,),), (1.0,))
    with pytest.raises(ModelError):
        Polynomial(2, ((-1, 0),), (1.0,))


def test_eval_rate_examples():
    rates = {
        (0, 1, 0): const(2.0),
        (1, 0, 0): Polynomial.from_terms([((1, 0), 3.0)], 2),
        (0, 1, 1): Polynomial.from_terms([((0, 0), -1.0), ((0, 1), 2.0)], 2),
    }
    model = GameModel(2, 2, 0.5, rates, {})
    assert eval_rate(model, 0, 1, 0, [0.3, 0.7]) == 2.0
    assert eval_rate(model, 1, 0, 0, [0.5, 0.5]) == pytest.approx(1.5, abs=1e-15)
    assert eval_rate(model, 0, 1, 1, [1 / 3, 2 / 3]) == pytest.approx(1 / 3, abs=1e-15)
    # diagonal is the negated row sum
    assert eval_rate(model, 0, 0, 0, [0.3, 0.7]) == -2.0
    with pytest.raises(IndexError):
        eval_rate(model, 2, 0, 0, [0.5, 0.5])


def test_eval_reward_examples():
    rewards = {
        (0, 0): const(1.0),
        (1, 0): Polynomial.from_terms([((1, 0), 5.0)], 2),
        (1, 1): Polynomial.from_terms([((2, 0), 1.0)], 2),
    }
    model = GameModel(2, 2, 0.5, {(0, 1, 0): const(1.0)}, rewards)
    assert eval_reward(model, 0, 0, [0.4, 0.6]) == 1.0
    assert eval_reward(model, 1, 0, [0.2, 0.8]) == pytest.approx(1.0, abs=1e-15)
    assert eval_reward(model, 1, 1, [0.5, 0.5]) == 0.25
    assert eval_reward(model, 0, 1, [0.5, 0.5]) == 0.0
    with pytest.raises(IndexError):
        eval_reward(model, 0, 2, [0.5, 0.5])


@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_evaluation_matches_naive(seed, S):
    rng = np.random.default_rng(seed)
    model = random_polynomial_game(rng, S, 2)
    m = rng.dirichlet(np.ones(S))
    Q, R = model.rate_tensor(m), model.reward_matrix(m)
    for (i, j, a), p in model.rates.items():
        ref = naive_eval(p, m)
        assert abs(Q[i, j, a] - ref) <= 1e-13 * max(1.0, abs(ref))
    for (i, a), p in model.rewards.items():
        ref = naive_eval(p, m)
        assert abs(R[i, a] - ref) <= 1e-13 * max(1.0, abs(ref))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    model = random_polynomial_game(rng, 3, 2, degree=3)
    m = np.array([0.2, 0.5, 0.3])
    h = 1e-6
    dQ, dR = model.rate_tensor_grad(m), model.reward_matrix_grad(m)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fdQ = (model.rate_tensor(m + e) - model.rate_tensor(m - e)) / (2 * h)
        fdR = (model.reward_matrix(m + e) - model.reward_matrix(m - e)) / (2 * h)
        assert np.allclose(dQ[..., k], fdQ, atol=1e-7)
        assert np.allclose(dR[..., k], fdR, atol=1e-7)


def test_effective_generator_examples():
    M1 = np.array([[-1.0, 1.0], [2.0, -2.0]])
    M2 = np.array([[-3.0, 3.0], [0.5, -0.5]])
    model = constant_game([M1, M2], np.zeros((2, 2)))
    m = [0.4, 0.6]
    assert np.allclose(effective_generator(model, [[0.5, 0.5], [0.5, 0.5]], m), (M1 + M2) / 2)
    assert np.allclose(effective_generator(model, [[1, 0], [0, 1]], m), [M1[0], M2[1]])
    one = constant_game([M1], np.zeros((2, 1)))
    assert np.allclose(effective_generator(one, [[1.0], [1.0]], m), M1)
    assert np.allclose(deterministic_generator(model.rate_tensor(m), [1, 0]), [M2[0], M1[1]])


@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.integers(1, 3))
def test_effective_generator_is_conservative(seed, S, A):
    rng = np.random.default_rng(seed)
    model = random_polynomial_game(rng, S, A)
    pi = rng.dirichlet(np.ones(A), size=S)
    G = effective_generator(model, pi, rng.dirichlet(np.ones(S)))
    assert np.abs(G.sum(axis=1)).max() <= 1e-12
    off = G[~np.eye(S, dtype=bool)]
    assert off.min() >= -1e-12


def test_effective_generator_rejects_bad_inputs(ref_dom):
    with pytest.raises(ValueError):
        effective_generator(ref_dom, [[0.7, 0.7], [1, 0]], [0.5, 0.5])
    with pytest.raises(ValueError):
        effective_generator(ref_dom, [[1, 0], [1, 0]], [0.6, 0.6])


def test_simplex_grid():
    g = simplex_grid(3, 4)
    assert len(g) == 15
    assert np.allclose(g.sum(axis=1), 1.0)
    assert {tuple(x) for x in simplex_grid(2, 1)} == {(0.0, 1.0), (1.0, 0.0)}


def test_validate_examples():
    ok = constant_game([[[-1, 1], [1, -1]]], [[0.0], [0.0]])
    for n in (1, 5, 50):
        assert validate(ok, n).passed
    bad = GameModel(2, 1, 0.5, {(0, 1, 0): Polynomial.linear([1.0, 0.0], -0.5), (1, 0, 0): const(1.0)}, {})
    rep = validate(bad, 10)
    assert not rep.passed
    assert rep.worst_violation == pytest.approx(-0.5)
    assert rep.worst_location["m"] == [0.0, 1.0]
    assert (rep.worst_location["from"], rep.worst_location["to"]) == (1, 2)
    rep = validate(ok.replace(beta=1.0))
    assert not rep.passed and "discount out of range" in rep.failures[0]


def test_game_model_checks():
    with pytest.raises(ModelError):
        GameModel(1, 1, 0.5, {}, {})
    with pytest.raises(ModelError):
        GameModel(2, 1, 0.5, {(0, 0, 0): const(1.0)}, {})
    with pytest.raises(ModelError):
        GameModel(2, 1, 0.5, {(0, 1, 1): const(1.0)}, {})


def test_game_distance_examples():
    base = constant_game([[[-1, 1], [1, -1]]], [[1.0], [0.0]])
    assert game_distance(base, base) == 0.0
    shifted = base.replace(rewards={**base.rewards, (1, 0): const(0.3)})
    assert game_distance(base, shifted) == pytest.approx(0.3)
    more = base.replace(rates={**base.rates, (0, 1, 0): const(1.0) + Polynomial.linear([2.0, 0.0])})
    # the term also appears on the diagonal; the max entry difference is 2 at m = (1, 0)
    assert game_distance(base, more) == pytest.approx(2.0)
    with pytest.raises(ModelError):
        game_distance(base, constant_game([[[-1, 1], [1, -1]]] * 2, np.zeros((2, 2))))


def test_game_distance_monotone_in_grid():
    rng = np.random.default_rng(0)
    a, b = random_polynomial_game(rng, 2, 2, degree=3), random_polynomial_game(rng, 2, 2, degree=3)
    assert game_distance(a, b, 2) <= game_distance(a, b, 4) <= game_distance(a, b, 8)


@given(st.integers(0, 2**32 - 1))
def test_game_distance_pseudometric(seed):
    rng = np.random.default_rng(seed)
    S = int(rng.integers(2, 4))
    x, y, z = (random_polynomial_game(rng, S, 2) for _ in range(3))
    dxy, dyx = game_distance(x, y, 6), game_distance(y, x, 6)
    assert dxy >= 0 and dxy == dyx
    assert game_distance(x, x, 6) == 0.0
    assert dxy <= game_distance(x, z, 6) + game_distance(z, y, 6) + 1e-10
