import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from essential_mfg.equilibrium import (
    Equilibrium,
    EquilibriumSet,
    enumerate_supports,
    find_all_equilibria,
    find_deterministic_equilibria,
    find_mixed_equilibria,
    hausdorff,
    set_distance,
    verify_equilibrium,
)
from essential_mfg.model import Polynomial
from essential_mfg.stationary import ContinuumWarning, stationary_residual

from conftest import constant_game
from oracles import Affine2x2, brute_force_equilibria


def test_verify_examples(ref_1a, ref_dom):
    assert verify_equilibrium(ref_1a, [2 / 3, 1 / 3], [[1.0], [1.0]]).passed
    # stationary point of the dominated strategy
    diag = verify_equilibrium(ref_dom, [2 / 3, 1 / 3], [[0, 1], [0, 1]])
    assert not diag.passed and not diag.optimal
    assert min(x for x in diag.margins if x is not None) < 0
    off = np.array([2 / 3 + 0.1, 1 / 3 - 0.1])
    diag = verify_equilibrium(ref_1a, off, [[1.0], [1.0]])
    assert not diag.passed
    assert diag.residual == pytest.approx(np.abs(stationary_residual(ref_1a, [[1.0], [1.0]], off)).max())


def test_deterministic_examples(ref_1a, ref_dom):
    eqs = find_deterministic_equilibria(ref_1a)
    assert len(eqs) == 1 and np.allclose(eqs[0].m, [2 / 3, 1 / 3])
    eqs = find_deterministic_equilibria(ref_dom)
    assert [e.strategy for e in eqs] == [(0, 0)]
    assert np.allclose(eqs[0].m, [2 / 3, 1 / 3])
    assert eqs[0].diagnostics.value_gap == pytest.approx(2 / 7)


def test_ref_2x2_matches_brute_force(ref_2x2):
    game = Affine2x2(
        rate_v=[[[1.5, 0.5], [2.5, 1.5]], [[0.25, 2.25], [1.25, 3.25]]],
        reward_v=[[[0.0, 1.0], [-0.2, 0.8]], [[0.8, -0.2], [0.6, -0.4]]],
        beta=0.5,
    )
    for m in ([0.3, 0.7], [0.9, 0.1]):
        assert np.allclose(game.model().rate_tensor(m), ref_2x2.rate_tensor(m))
        assert np.allclose(game.model().reward_matrix(m), ref_2x2.reward_matrix(m))
    oracle = brute_force_equilibria(game, 200)
    found = find_all_equilibria(ref_2x2)
    assert len(oracle) == len(found) == 1
    assert abs(found[0].m[0] - oracle[0][0]) < 1e-3
    assert found[0].support == oracle[0][2]


def test_enumerate_supports():
    # only supports that mix somewhere: 3 * 3 - 4 pure ones
    assert len(enumerate_supports(2, 2)) == 5
    assert len(enumerate_supports(2, 3, max_extra=1)) == 2 * 3 * 3
    assert all(sum(len(x) - 1 for x in supp) <= 1 for supp in enumerate_supports(3, 2, max_extra=1))


def test_mixed_skips_pure_supports(ref_2x2):
    assert find_mixed_equilibria(ref_2x2, supports=[((0,), (1,))]) == []


def test_mixed_continuum_for_indifference(ref_ind):
    with pytest.warns(ContinuumWarning):
        eqs = find_mixed_equilibria(ref_ind, supports=[((0, 1), (0,))])
    assert len(eqs) > 1
    for e in eqs:
        assert verify_equilibrium(ref_ind, e.m, e.pi).passed


def test_find_all_indifference_warns(ref_ind):
    with pytest.warns(ContinuumWarning):
        out = find_all_equilibria(ref_ind)
    assert out.continuum


def test_knife_equilibria(ref_knife):
    out = find_all_equilibria(ref_knife)
    kinds = sorted((e.kind, tuple(np.round(e.m, 6))) for e in out)
    assert kinds == [("deterministic", (0.5, 0.5)), ("mixed", (0.333333, 0.666667))]
    mixed = next(e for e in out if e.kind == "mixed")
    assert np.allclose(mixed.pi, [[0.5, 0.5], [1.0, 0.0]], atol=1e-6)


def test_crossing_mixed_equilibrium():
    # state 1: action 1 leaves at rate 1, action 2 at rate 3 and pays 0.4 - 4 m1.
    # With V = (0.8, 1.2) under d = (1, 1) the actions tie at m1 = 0.3, where the
    # balance 1 / (4 - 2w) = 0.3 gives weight w = 1/3 on action 1.
    swap = [[-1.0, 1.0], [1.0, -1.0]]
    fast = [[-3.0, 3.0], [1.0, -1.0]]
    base = constant_game([swap, fast], [[0.0, 0.0], [1.0, 0.0]])
    model = base.replace(rewards={**base.rewards, (0, 1): Polynomial.linear([-4.0, 0.0], 0.4)})
    game = Affine2x2(
        rate_v=[[[1, 1], [3, 3]], [[1, 1], [1, 1]]],
        reward_v=[[[0, 0], [-3.6, 0.4]], [[1, 1], [0, 0]]],
        beta=0.5,
    )
    oracle = [o for o in brute_force_equilibria(game, 400) if len(o[2][0]) == 2 or len(o[2][1]) == 2]
    assert len(oracle) == 1 and oracle[0][0] == pytest.approx(0.3)
    assert oracle[0][1][0] == pytest.approx([1 / 3, 2 / 3])
    eqs = find_mixed_equilibria(model)
    assert len(eqs) == 1
    assert abs(eqs[0].m[0] - oracle[0][0]) < 1e-6
    assert np.allclose(eqs[0].pi, oracle[0][1], atol=1e-6)
    everything = find_all_equilibria(model)
    assert sorted(round(e.m[0], 6) for e in everything) == [0.25, 0.3, 0.5]


@settings(max_examples=8)
@given(st.integers(0, 2**32 - 1))
def test_all_results_verify(seed):
    game = Affine2x2.random(np.random.default_rng(seed))
    model = game.model()
    out = find_all_equilibria(model, grid_resolution=10, warn=False)
    for e in out:
        assert verify_equilibrium(model, e.m, e.pi, tol=1e-8).passed
    vecs = [e.vector for e in out]
    for i in range(len(vecs)):
        for j in range(i):
            assert np.abs(vecs[i] - vecs[j]).max() >= out.dedup_radius


def test_dominant_fixture_has_no_mixed(ref_dom):
    assert find_mixed_equilibria(ref_dom) == []
    assert len(find_all_equilibria(ref_dom)) == 1


def test_metadata(ref_2x2):
    out = find_all_equilibria(ref_2x2)
    meta = out.search_metadata
    assert meta["strategies_examined"] == 4 and meta["supports_examined"] == 5
    assert meta["grid_resolution"] == 20


def test_unique_search_is_silent():
    model = constant_game([[[-1, 1], [1, -1]]], [[0.0], [0.0]])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert len(find_all_equilibria(model)) == 1


def test_set_distance_examples():
    assert set_distance([0.0, 1.0], [[0.0, 1.0], [1.0, 0.0]]) == 0.0
    assert set_distance([0.0], [[0.3]]) == pytest.approx(0.3)
    assert set_distance([0.0], [[0.5], [-0.2]]) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        set_distance([0.0], [])


def test_set_distance_accepts_equilibria(ref_1a):
    out = find_all_equilibria(ref_1a)
    e = out[0]
    assert set_distance(e, out) == 0.0
    assert set_distance((e.m, e.pi), out) == 0.0
    assert set_distance((e.m + [0.1, -0.1], e.pi), out) == pytest.approx(0.1)


def test_hausdorff_examples():
    X = [[0.0, 1.0], [2.0, 3.0]]
    assert hausdorff(X, X) == 0.0
    assert hausdorff([[0.0]], [[1.0]]) == 1.0
    assert hausdorff([[0.0]], [[0.0], [0.7]]) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        hausdorff([], X)


@given(st.integers(0, 2**32 - 1))
def test_hausdorff_metric_properties(seed):
    rng = np.random.default_rng(seed)
    A, B, C = (rng.normal(size=(int(rng.integers(1, 6)), 3)) for _ in range(3))
    assert hausdorff(A, B) == hausdorff(B, A)
    assert hausdorff(A, A) == 0.0
    assert hausdorff(A, B) <= hausdorff(A, C) + hausdorff(C, B) + 1e-12


def test_equilibrium_set_json(ref_knife):
    out = find_all_equilibria(ref_knife)
    doc = out.to_json()
    assert doc["count"] == 2
    assert doc["equilibria"][1]["support"] == [[1, 2], [1]]
    assert isinstance(out, EquilibriumSet) and isinstance(out[0], Equilibrium)
