import itertools

import numpy as np
import pytest

from retroselect.chem import parse_smiles
from retroselect.scoring import (ProductInReactants, QueryVector, ReactionScorer,
                                 best_permutation, cosine64, phi, psi,
                                 reaction_score)


def unit(vec):
    vec = np.asarray(vec, dtype=np.float64)
    return vec / np.linalg.norm(vec)


def test_psi_stub_identities(rng):
    key = rng.standard_normal(8)
    query = QueryVector.start(key)
    assert psi(query, key) == pytest.approx(1.0)
    assert psi(query, -key) == pytest.approx(-1.0)


def test_psi_zero_convention():
    assert psi(QueryVector.start(np.zeros(4)), np.ones(4)) == 0.0


def test_phi_conventions(rng):
    h_p = rng.standard_normal(6)
    assert phi([], h_p) == 0.0
    assert phi([h_p], h_p) == pytest.approx(1.0)
    a, b = rng.standard_normal(6), rng.standard_normal(6)
    assert phi([a, b], h_p) == phi([b, a], h_p)


def test_phi_type_bias_shifts_query(rng):
    h_p = rng.standard_normal(6)
    g = rng.standard_normal(6)
    bias = rng.standard_normal(6)
    assert phi([g], h_p, v_bias=bias) == pytest.approx(cosine64(g + bias, h_p))


def test_incremental_query_matches_recompute(rng):
    f_p = rng.standard_normal(8)
    gs = [rng.standard_normal(8) for _ in range(4)]
    query = QueryVector.start(f_p)
    for i, g in enumerate(gs):
        query = query.subtract(g, i)
    direct = f_p - np.sum(gs, axis=0)
    assert np.abs(query.vector - direct).max() < 1e-5
    assert query.given_ids == (0, 1, 2, 3)


def test_best_permutation_empty_is_halt_only(rng):
    f_p = rng.standard_normal(5)
    halt = rng.standard_normal(5)
    order, total = best_permutation(f_p, {}, {}, halt)
    assert order == ()
    assert total == pytest.approx(cosine64(f_p, halt))


def test_best_permutation_single(rng):
    f_p = rng.standard_normal(5)
    halt = rng.standard_normal(5)
    g = {7: rng.standard_normal(5)}
    h = {7: rng.standard_normal(5)}
    order, total = best_permutation(f_p, g, h, halt)
    assert order == (7,)
    expected = cosine64(f_p, h[7]) + cosine64(f_p - g[7], halt)
    assert total == pytest.approx(expected)


def test_best_permutation_matches_enumeration_oracle(rng):
    for _ in range(10):
        f_p = rng.standard_normal(6)
        halt = rng.standard_normal(6)
        ids = [3, 11, 42]
        g = {i: rng.standard_normal(6) for i in ids}
        h = {i: rng.standard_normal(6) for i in ids}
        order, total = best_permutation(f_p, g, h, halt)
        best = -np.inf
        for perm in itertools.permutations(ids):
            query = f_p.copy()
            value = 0.0
            for chosen in perm:
                value += cosine64(query, h[chosen])
                query = query - g[chosen]
            value += cosine64(query, halt)
            best = max(best, value)
        assert total == pytest.approx(best, abs=1e-12)
        assert set(order) == set(ids)


def test_greedy_path_above_threshold(rng):
    ids = list(range(7))
    f_p = rng.standard_normal(4)
    halt = rng.standard_normal(4)
    g = {i: rng.standard_normal(4) for i in ids}
    h = {i: rng.standard_normal(4) for i in ids}
    order, total = best_permutation(f_p, g, h, halt, perm_threshold=5)
    assert sorted(order) == ids
    again, total2 = best_permutation(f_p, g, h, halt, perm_threshold=5)
    assert order == again and total == total2


def test_reaction_score_empty_set(rng):
    f_p = rng.standard_normal(5)
    h_p = rng.standard_normal(5)
    halt = rng.standard_normal(5)
    scored = reaction_score(f_p, h_p, {}, {}, halt)
    assert scored.score == pytest.approx(cosine64(f_p, halt) / 2.0)
    assert scored.reactant_ids == ()


def test_reaction_score_bounded(rng):
    for _ in range(50):
        n = int(rng.integers(0, 5))
        ids = list(range(n))
        f_p, h_p, halt = (rng.standard_normal(6) for _ in range(3))
        g = {i: rng.standard_normal(6) for i in ids}
        h = {i: rng.standard_normal(6) for i in ids}
        scored = reaction_score(f_p, h_p, g, h, halt)
        assert -1.0 <= scored.score <= 1.0


def test_reaction_score_order_invariant_bitwise(rng):
    f_p, h_p, halt = (rng.standard_normal(6) for _ in range(3))
    ids = [9, 2, 31, 17]
    g = {i: rng.standard_normal(6) for i in ids}
    h = {i: rng.standard_normal(6) for i in ids}
    baseline = None
    for perm in itertools.permutations(ids):
        g_shuffled = {i: g[i] for i in perm}
        h_shuffled = {i: h[i] for i in perm}
        scored = reaction_score(f_p, h_p, g_shuffled, h_shuffled, halt)
        if baseline is None:
            baseline = scored
        else:
            assert scored.score == baseline.score  # exact equality
            assert scored.reactant_ids == baseline.reactant_ids
            assert scored.best_order == baseline.best_order


def test_reaction_score_product_exclusion(rng):
    f_p, h_p, halt = (rng.standard_normal(4) for _ in range(3))
    g = {5: rng.standard_normal(4)}
    h = {5: rng.standard_normal(4)}
    with pytest.raises(ProductInReactants):
        reaction_score(f_p, h_p, g, h, halt, product_id=5)


def test_zero_type_bias_matches_untyped(rng):
    f_p, h_p, halt = (rng.standard_normal(6) for _ in range(3))
    ids = [1, 4]
    g = {i: rng.standard_normal(6) for i in ids}
    h = {i: rng.standard_normal(6) for i in ids}
    plain = reaction_score(f_p, h_p, g, h, halt)
    biased = reaction_score(f_p, h_p, g, h, halt,
                            u_bias=np.zeros(6), v_bias=np.zeros(6))
    assert plain.score == biased.score


def test_reaction_scorer_molecule_level(tiny_params):
    scorer = ReactionScorer(tiny_params)
    product = parse_smiles("CC(=O)OCC")
    reactants = [parse_smiles("CCO"), parse_smiles("CC(=O)O")]
    scored = scorer.reaction_score(product, reactants)
    assert -1.0 <= scored.score <= 1.0
    flipped = scorer.reaction_score(product, list(reversed(reactants)))
    assert flipped.score == scored.score
    with pytest.raises(ProductInReactants):
        scorer.reaction_score(product, [parse_smiles("CC(=O)OCC")])
