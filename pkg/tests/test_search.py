import itertools

import numpy as np
import pytest

from retroselect.chem import canonical_form, parse_smiles
from retroselect.encoder import ModelDims, init_params
from retroselect.index import CandidateIndex
from retroselect.scoring import ScoredSet, cosine64
from retroselect.search import beam_search, rank, route_search


def synthetic_world(rng, n=8, d=6):
    """Random keys/queries detached from any molecule."""
    params = init_params(1, ModelDims(d=d, n_layers=1, n_types=1))
    params.tensors["halt_key"].data[:] = rng.standard_normal(d).astype(np.float32)
    raw = rng.standard_normal((n, d)).astype(np.float32)
    index = CandidateIndex.from_raw_keys(
        raw, np.arange(n), halt_key=params.tensors["halt_key"].data)
    g_pool = rng.standard_normal((n, d)).astype(np.float32)
    f_p = rng.standard_normal(d)
    return params, index, g_pool, f_p


def test_beam_explores_all_subsets(rng):
    params, index, g_pool, f_p = synthetic_world(rng)
    done = beam_search(None, index, params, g_pool, beam=200, n_max=2,
                       f_product=f_p)
    got = {tuple(sorted(h.chosen)) for h in done}
    expected = {()} | {(i,) for i in range(8)} \
        | set(itertools.combinations(range(8), 2))
    assert got == expected
    assert all(h.done for h in done)


def test_beam_never_selects_excluded_or_duplicates(rng):
    params, index, g_pool, f_p = synthetic_world(rng)
    done = beam_search(None, index, params, g_pool, beam=50, n_max=3,
                       exclude_ids={2, 5}, f_product=f_p)
    for hyp in done:
        assert 2 not in hyp.chosen and 5 not in hyp.chosen
        assert len(set(hyp.chosen)) == len(hyp.chosen)


def test_beam_monotone_in_width(rng):
    params, index, g_pool, f_p = synthetic_world(rng)
    small = beam_search(None, index, params, g_pool, beam=2, n_max=2,
                        f_product=f_p)
    large = beam_search(None, index, params, g_pool, beam=6, n_max=2,
                        f_product=f_p)
    small_sets = {tuple(sorted(h.chosen)) for h in small}
    large_sets = {tuple(sorted(h.chosen)) for h in large}
    assert small_sets <= large_sets


def test_beam_requires_halt_index(rng, tiny_params):
    mols = [parse_smiles("CCO")]
    index = CandidateIndex.build(tiny_params, mols)  # no halt row
    with pytest.raises(ValueError):
        beam_search(parse_smiles("CCOC"), index, tiny_params,
                    np.zeros((1, tiny_params.dims.d), np.float32))


def test_beam_cum_psi_includes_halt(rng):
    params, index, g_pool, f_p = synthetic_world(rng, n=3)
    done = beam_search(None, index, params, g_pool, beam=50, n_max=1,
                       f_product=f_p)
    halt = params.tensors["halt_key"].data
    empty = next(h for h in done if h.chosen == ())
    assert empty.cum_psi == pytest.approx(cosine64(np.asarray(f_p, float), halt))


def test_rank_matches_exhaustive_scoring(rng):
    params, index, g_pool, f_p = synthetic_world(rng)
    h_p = rng.standard_normal(6)
    halt = params.tensors["halt_key"].data
    done = beam_search(None, index, params, g_pool, beam=200, n_max=2,
                       f_product=f_p)
    ranked = rank(None, done, params, index, g_pool,
                  f_product=f_p, h_product=h_p)
    # Oracle: enumerate every subset, score by the overall formula, sort.
    oracle = []
    for size in range(0, 3):
        for subset in itertools.combinations(index.ids.tolist(), size):
            best = -np.inf if subset else 0.0
            for perm in itertools.permutations(subset):
                query = np.asarray(f_p, dtype=np.float64).copy()
                value = 0.0
                for chosen in perm:
                    value += cosine64(query, index.keys[chosen])
                    query = query - g_pool[chosen].astype(np.float64)
                best = max(best, value)
            final_query = np.asarray(f_p, dtype=np.float64).copy()
            for chosen in subset:
                final_query = final_query - g_pool[chosen].astype(np.float64)
            psi_sum = (best if subset else 0.0) + cosine64(final_query, halt)
            total = np.zeros(6)
            for chosen in subset:
                total = total + g_pool[chosen].astype(np.float64)
            forward = cosine64(total, h_p)
            score = (psi_sum + forward) / (len(subset) + 2)
            oracle.append((tuple(subset), score))
    oracle.sort(key=lambda pair: (-pair[1], len(pair[0]), pair[0]))
    assert [s.reactant_ids for s in ranked] == [o[0] for o in oracle]
    # Scores agree to summation-order rounding (order equality is exact).
    assert np.allclose([s.score for s in ranked], [o[1] for o in oracle],
                       rtol=1e-12, atol=0)


def test_ranked_scores_bounded_and_sorted(rng):
    params, index, g_pool, f_p = synthetic_world(rng)
    done = beam_search(None, index, params, g_pool, beam=20, n_max=2,
                       f_product=f_p)
    ranked = rank(None, done, params, index, g_pool,
                  f_product=f_p, h_product=rng.standard_normal(6))
    scores = [s.score for s in ranked]
    assert scores == sorted(scores, reverse=True)
    assert all(-1.0 <= s <= 1.0 for s in scores)
    sets = [s.reactant_ids for s in ranked]
    assert len(sets) == len(set(sets))


# --- route search ---

class StubPredictor:
    """Planted single-step predictions keyed by canonical product form."""

    def __init__(self, table, forms):
        self.table = table
        self.form_of_id = dict(enumerate(forms))
        self.id_of_form = {f: i for i, f in self.form_of_id.items()}
        self.calls = 0

    def predict(self, mol, k, rxn_type=None):
        self.calls += 1
        entries = self.table.get(canonical_form(mol), [])
        return [ScoredSet(tuple(sorted(self.id_of_form[f] for f in forms)),
                          score, ())
                for forms, score in entries[:k]]


def test_route_target_already_available():
    blocks = {canonical_form(parse_smiles("CCO"))}
    stub = StubPredictor({}, [])
    route = route_search(parse_smiles("OCC"), blocks, stub)
    assert route is not None and route.solved
    assert route.cost == 0.0 and route.steps == ()
    assert stub.calls == 0


def test_route_two_level_planted():
    c, o, co = (canonical_form(parse_smiles(s)) for s in ("C", "O", "CO"))
    target = canonical_form(parse_smiles("CCO"))
    forms = [c, o, co]
    table = {
        target: [((co, c), 0.9)],
        co: [((c, o), 0.8)],
    }
    stub = StubPredictor(table, forms)
    route = route_search(parse_smiles("CCO"), {c, o}, stub, max_expansions=10)
    assert route is not None and route.solved
    assert len(route.steps) == 2
    assert route.cost == pytest.approx((1 - 0.9) + (1 - 0.8))
    for step in route.steps:
        for form in step.reactant_forms:
            assert form in {c, o, co}
    # Every leaf of the finished route is a building block.
    produced = {step.product_form for step in route.steps}
    leaves = {f for step in route.steps for f in step.reactant_forms} - produced
    assert leaves <= {c, o}


def test_route_fails_within_budget():
    c = canonical_form(parse_smiles("C"))
    target = canonical_form(parse_smiles("CCO"))
    dead_end = canonical_form(parse_smiles("CN"))
    # Predictions never reach a building block.
    table = {target: [((dead_end,), 0.5)], dead_end: [((target,), 0.5)]}
    stub = StubPredictor(table, [c, dead_end, target])
    route = route_search(parse_smiles("CCO"), {c}, stub, max_expansions=5)
    assert route is None
    assert stub.calls <= 5
