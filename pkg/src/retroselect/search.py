"""Beam-search prediction of ranked reactant sets and multi-step routes.

Beam search selects candidates sequentially by the backward score against
the key index (one matrix product per round), banking a hypothesis whenever
it selects the halt row. Banked hypotheses are deduplicated as id sets and
re-ranked by the full permutation-maximized overall score.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .chem import Molecule, canonical_form, featurize, pack
from .encoder import ParamStore, embed_graphs, embed_matrix, type_bias
from .index import CandidateIndex, EmptyIndex
from .scoring import QueryVector, ScoredSet, cosine64, reaction_score


@dataclass
class Hypothesis:
    """Partial reactant selection: chosen ids, running query, score sum."""

    chosen: tuple[int, ...]
    query: QueryVector
    cum_psi: float
    done: bool = False

    @property
    def id_set(self) -> frozenset:
        return frozenset(self.chosen)


def beam_search(product: Molecule | None, index: CandidateIndex, params: ParamStore,
                g_pool: np.ndarray, beam: int = 200, n_max: int = 4,
                rxn_type: int | None = None,
                exclude_ids: set[int] | None = None,
                f_product: np.ndarray | None = None) -> list[Hypothesis]:
    """Completed hypotheses for one product, deduplicated as id sets.

    ``g_pool`` holds raw reactant-query embeddings aligned with the index
    candidate rows. The product's own pool id (if any) must be passed in
    ``exclude_ids``; chosen ids are excluded from later rounds. Hypotheses
    still live at depth ``n_max`` are finalized with a forced halt term.
    ``f_product`` overrides the product-query embedding (synthetic tests).
    """
    if not index.includes_halt:
        raise ValueError("beam search needs an index built with the halt key")
    if index.keys.shape[0] == 0 or index.n_candidates == 0:
        raise EmptyIndex("empty candidate index")
    if beam < 1 or n_max < 1:
        raise ValueError("beam and n_max must be >= 1")
    if g_pool.shape[0] != index.n_candidates:
        raise ValueError("g_pool rows must match index candidates")

    if f_product is None:
        f_embs = embed_graphs(pack([featurize(product)]), params, "eval", heads=("f",))
        f_product = f_embs["f"].data[0]
    f_p = np.asarray(f_product, dtype=np.float64)
    u_bias = type_bias(params, "u", rxn_type)
    root = Hypothesis((), QueryVector.start(f_p, u_bias=u_bias), 0.0)
    exclude_ids = set(exclude_ids or ())

    cand_ids = index.ids
    halt_row = index.keys.shape[0] - 1
    row_of = {int(mol_id): row for row, mol_id in enumerate(cand_ids)}
    banked: dict[frozenset, Hypothesis] = {}

    def bank(hyp: Hypothesis, halt_psi: float) -> None:
        done = Hypothesis(hyp.chosen, hyp.query, hyp.cum_psi + halt_psi, True)
        key = done.id_set
        kept = banked.get(key)
        if kept is None or done.cum_psi > kept.cum_psi:
            banked[key] = done

    live = [root]
    for _depth in range(1, n_max + 1):
        queries = np.stack([h.query.vector for h in live])
        norms = np.linalg.norm(queries, axis=1)
        safe = np.where(norms < 1e-12, 1.0, norms)
        scores = (queries / safe[:, None]).astype(np.float32) @ index.keys.T
        scores = scores.astype(np.float64)
        scores[norms < 1e-12] = 0.0

        extensions = []  # (total, hyp_index, candidate_id, psi)
        for hyp_index, hyp in enumerate(live):
            row_scores = scores[hyp_index]
            bank(hyp, float(row_scores[halt_row]))
            blocked = exclude_ids.union(hyp.chosen)
            for mol_id in blocked:
                row = row_of.get(mol_id)
                if row is not None:
                    row_scores[row] = -np.inf
            order = np.lexsort((cand_ids, -row_scores[:index.n_candidates]))
            for row in order[:beam]:
                value = float(row_scores[row])
                if value == -np.inf:
                    break
                extensions.append((hyp.cum_psi + value, hyp_index,
                                   int(cand_ids[row]), value))
        if not extensions:
            break
        extensions.sort(key=lambda e: (-e[0], e[1], e[2]))
        next_live = []
        for total, hyp_index, mol_id, _psi in extensions[:beam]:
            parent = live[hyp_index]
            query = parent.query.subtract(g_pool[row_of[mol_id]], mol_id)
            next_live.append(Hypothesis(parent.chosen + (mol_id,), query, total))
        live = next_live

    # Depth cap reached: force a halt step on whatever is still live.
    for hyp in live:
        halt_psi = cosine64(hyp.query.vector, params.tensors["halt_key"].data)
        bank(hyp, halt_psi)
    return list(banked.values())


def rank(product: Molecule | None, hypotheses: list[Hypothesis], params: ParamStore,
         index: CandidateIndex, g_pool: np.ndarray,
         rxn_type: int | None = None, perm_threshold: int = 5,
         f_product: np.ndarray | None = None,
         h_product: np.ndarray | None = None) -> list[ScoredSet]:
    """Rescore completed hypotheses with the overall reaction score and sort
    descending; ties prefer fewer reactants, then lexicographic ids."""
    if f_product is None or h_product is None:
        embs = embed_graphs(pack([featurize(product)]), params, "eval",
                            heads=("f", "h"))
        f_product = embs["f"].data[0] if f_product is None else f_product
        h_product = embs["h"].data[0] if h_product is None else h_product
    f_p = np.asarray(f_product, dtype=np.float64)
    h_p = np.asarray(h_product, dtype=np.float64)
    halt_key = params.tensors["halt_key"].data
    u_bias = type_bias(params, "u", rxn_type)
    v_bias = type_bias(params, "v", rxn_type)
    row_of = {int(mol_id): row for row, mol_id in enumerate(index.ids)}
    scored = []
    for hyp in hypotheses:
        ids = sorted(hyp.chosen)
        g_by_id = {i: g_pool[row_of[i]] for i in ids}
        h_by_id = {i: index.keys[row_of[i]] for i in ids}
        scored.append(reaction_score(f_p, h_p, g_by_id, h_by_id, halt_key,
                                     u_bias=u_bias, v_bias=v_bias,
                                     perm_threshold=perm_threshold))
    scored.sort(key=lambda s: (-s.score, len(s.reactant_ids), s.reactant_ids))
    return scored


class Predictor:
    """Read-only prediction engine over one parameter/index snapshot."""

    def __init__(self, params: ParamStore, candidates: list[Molecule],
                 candidate_ids=None, forms: list[str] | None = None,
                 index: CandidateIndex | None = None,
                 g_pool: np.ndarray | None = None,
                 beam: int = 200, n_max: int = 4, perm_threshold: int = 5):
        self.params = params
        if candidate_ids is None:
            candidate_ids = np.arange(len(candidates), dtype=np.int64)
        self.candidate_ids = np.asarray(candidate_ids, dtype=np.int64)
        if index is None:
            index = CandidateIndex.build(params, candidates, self.candidate_ids,
                                         include_halt=True)
        self.index = index.with_halt(params)
        if g_pool is None:
            g_pool = embed_matrix(candidates, params, "g")
        self.g_pool = g_pool
        self.forms = forms if forms is not None \
            else [canonical_form(m) for m in candidates]
        self.id_of_form = {form: int(mol_id)
                           for form, mol_id in zip(self.forms, self.candidate_ids)}
        self.form_of_id = {int(mol_id): form
                           for form, mol_id in zip(self.forms, self.candidate_ids)}
        self.beam = beam
        self.n_max = n_max
        self.perm_threshold = perm_threshold

    def predict(self, product: Molecule, k: int,
                rxn_type: int | None = None) -> list[ScoredSet]:
        """Top-k scored reactant sets for one product."""
        exclude = set()
        own_id = self.id_of_form.get(canonical_form(product))
        if own_id is not None:
            exclude.add(own_id)
        hypotheses = beam_search(product, self.index, self.params, self.g_pool,
                                 beam=self.beam, n_max=self.n_max,
                                 rxn_type=rxn_type, exclude_ids=exclude)
        ranked = rank(product, hypotheses, self.params, self.index, self.g_pool,
                      rxn_type=rxn_type, perm_threshold=self.perm_threshold)
        return ranked[:k]

    def predict_forms(self, product: Molecule, k: int,
                      rxn_type: int | None = None) -> list[tuple[str, ...]]:
        """Top-k reactant sets as sorted canonical SMILES tuples."""
        return [tuple(sorted(self.form_of_id[i] for i in s.reactant_ids))
                for s in self.predict(product, k, rxn_type)]


# --- multi-step route search ---

@dataclass
class RouteStep:
    product_form: str
    reactant_forms: tuple[str, ...]
    score: float


@dataclass
class RouteNode:
    """Best-first search node: molecules still to synthesize plus the
    reactions chosen so far; cost is the sum of per-reaction (1 - score)."""

    open_forms: frozenset
    steps: tuple[RouteStep, ...] = ()
    cost: float = 0.0

    @property
    def solved(self) -> bool:
        return not self.open_forms


def route_search(product: Molecule, building_blocks: set[str],
                 predictor: Predictor, max_expansions: int = 100,
                 k_per_step: int = 5) -> RouteNode | None:
    """Best-first multi-step search down to building blocks.

    ``building_blocks`` holds canonical forms available as starting
    materials (must be a subset of the predictor's candidate pool). Each
    expansion replaces the lexicographically first open molecule with the
    reactant sets proposed for it; returns the solved node or None after
    ``max_expansions`` expansions.
    """
    product_form = canonical_form(product)
    start_open = frozenset() if product_form in building_blocks \
        else frozenset([product_form])
    counter = 0
    heap: list[tuple[float, int, RouteNode]] = []
    heapq.heappush(heap, (0.0, counter, RouteNode(start_open)))
    visited: set[frozenset] = set()
    expansions = 0
    while heap:
        cost, _, node = heapq.heappop(heap)
        if node.solved:
            return node
        if node.open_forms in visited:
            continue
        if expansions >= max_expansions:
            # Budget spent: keep draining for already-found solved nodes.
            continue
        visited.add(node.open_forms)
        expansions += 1
        target_form = min(node.open_forms)
        mol = _molecule_for(predictor, target_form)
        for scored in predictor.predict(mol, k_per_step):
            forms = tuple(sorted(predictor.form_of_id[i]
                                 for i in scored.reactant_ids))
            new_open = set(node.open_forms)
            new_open.discard(target_form)
            new_open.update(f for f in forms if f not in building_blocks)
            child = RouteNode(
                frozenset(new_open),
                node.steps + (RouteStep(target_form, forms, scored.score),),
                node.cost + (1.0 - scored.score))
            if child.open_forms not in visited:
                counter += 1
                heapq.heappush(heap, (child.cost, counter, child))
    return None


def _molecule_for(predictor: Predictor, form: str) -> Molecule:
    from .chem import parse_smiles
    return parse_smiles(form, allow_fragments=True)
