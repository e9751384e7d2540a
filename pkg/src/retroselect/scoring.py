"""Reaction scoring: backward selection score, forward synthesizability
score, and the permutation-maximized overall score.

The overall score of a product P against a reactant set of size n averages
n+2 cosines: the best-order sum of per-step selection scores (halt step
last), plus the forward score. It is therefore bounded in [-1, 1] and
independent of the order and number of reactants. All arithmetic here is
float64 over eval-mode embeddings.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

ZERO_NORM_EPS = 1e-12
PERM_THRESHOLD = 5


class ProductInReactants(ValueError):
    pass


def cosine64(a: np.ndarray, b: np.ndarray) -> float:
    """Float64 cosine with the zero-norm-gives-zero convention."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < ZERO_NORM_EPS or nb < ZERO_NORM_EPS:
        return 0.0
    return float(a @ b) / (na * nb)


@dataclass
class QueryVector:
    """Product query f(P) (+u bias) minus the g-embeddings chosen so far."""

    vector: np.ndarray
    product_id: int | None = None
    given_ids: tuple[int, ...] = ()

    @classmethod
    def start(cls, f_product: np.ndarray, product_id: int | None = None,
              u_bias: np.ndarray | None = None) -> "QueryVector":
        vec = np.asarray(f_product, dtype=np.float64).copy()
        if u_bias is not None:
            vec += np.asarray(u_bias, dtype=np.float64)
        return cls(vec, product_id, ())

    def subtract(self, g_vector: np.ndarray, chosen_id: int) -> "QueryVector":
        return QueryVector(self.vector - np.asarray(g_vector, dtype=np.float64),
                           self.product_id, self.given_ids + (chosen_id,))


@dataclass
class ScoredSet:
    reactant_ids: tuple[int, ...]   # sorted
    score: float
    best_order: tuple[int, ...]     # permutation achieving the psi maximum


def psi(query: QueryVector | np.ndarray, key: np.ndarray) -> float:
    """Backward selection score: cosine of the running query with a key."""
    vec = query.vector if isinstance(query, QueryVector) else query
    return cosine64(vec, key)


def phi(reactant_g_embeddings, product_h: np.ndarray,
        v_bias: np.ndarray | None = None) -> float:
    """Forward synthesizability score: cosine of summed reactant queries
    (plus optional type bias) with the product key."""
    total = np.zeros(np.asarray(product_h).shape[0], dtype=np.float64)
    for vec in reactant_g_embeddings:
        total += np.asarray(vec, dtype=np.float64)
    if v_bias is not None:
        total += np.asarray(v_bias, dtype=np.float64)
    return cosine64(total, product_h)


def best_permutation(f_product: np.ndarray,
                     g_by_id: dict[int, np.ndarray],
                     h_by_id: dict[int, np.ndarray],
                     halt_key: np.ndarray,
                     u_bias: np.ndarray | None = None,
                     perm_threshold: int = PERM_THRESHOLD) -> tuple[tuple[int, ...], float]:
    """Order of the reactant ids maximizing the summed selection scores.

    The halt term is always last and uses the query after all subtractions,
    so it is order-independent. Exhaustive for n <= perm_threshold, greedy
    beyond; ties break toward the lexicographically smallest id sequence.
    """
    ids = sorted(g_by_id)
    start = QueryVector.start(f_product, u_bias=u_bias)
    final_vec = start.vector - sum((np.asarray(g_by_id[i], dtype=np.float64)
                                    for i in ids), np.zeros_like(start.vector))
    halt_term = cosine64(final_vec, halt_key)
    if not ids:
        return (), halt_term
    if len(ids) <= perm_threshold:
        best_order: tuple[int, ...] | None = None
        best_sum = -np.inf
        for perm in itertools.permutations(ids):
            vec = start.vector.copy()
            total = 0.0
            for chosen in perm:
                total += cosine64(vec, h_by_id[chosen])
                vec -= np.asarray(g_by_id[chosen], dtype=np.float64)
            if total > best_sum:
                best_sum = total
                best_order = perm
        assert best_order is not None
        return best_order, best_sum + halt_term
    # Greedy fallback: repeatedly take the highest-scoring remaining reactant.
    vec = start.vector.copy()
    remaining = list(ids)
    order: list[int] = []
    total = 0.0
    while remaining:
        scored = [(cosine64(vec, h_by_id[i]), -i) for i in remaining]
        best = max(range(len(remaining)), key=lambda j: scored[j])
        chosen = remaining.pop(best)
        total += scored[best][0]
        vec -= np.asarray(g_by_id[chosen], dtype=np.float64)
        order.append(chosen)
    return tuple(order), total + halt_term


def reaction_score(f_product: np.ndarray,
                   h_product: np.ndarray,
                   g_by_id: dict[int, np.ndarray],
                   h_by_id: dict[int, np.ndarray],
                   halt_key: np.ndarray,
                   u_bias: np.ndarray | None = None,
                   v_bias: np.ndarray | None = None,
                   product_id: int | None = None,
                   perm_threshold: int = PERM_THRESHOLD) -> ScoredSet:
    """Overall score (psi_sum + phi) / (n + 2) for one candidate reactant set."""
    ids = tuple(sorted(g_by_id))
    if product_id is not None and product_id in g_by_id:
        raise ProductInReactants(f"product id {product_id} appears in reactant set")
    order, psi_sum = best_permutation(f_product, g_by_id, h_by_id, halt_key,
                                      u_bias, perm_threshold)
    forward = phi([g_by_id[i] for i in ids], h_product, v_bias)
    value = (psi_sum + forward) / (len(ids) + 2)
    return ScoredSet(ids, value, order)


class ReactionScorer:
    """Molecule-level scoring with an embedding cache keyed by canonical form."""

    def __init__(self, params):
        from .chem import canonical_form
        from .encoder import embed_molecule, type_bias
        self.params = params
        self._canonical = canonical_form
        self._embed = embed_molecule
        self._type_bias = type_bias
        self._cache: dict[tuple[str, str], np.ndarray] = {}

    def embedding(self, mol, head: str) -> np.ndarray:
        key = (head, self._canonical(mol))
        if key not in self._cache:
            self._cache[key] = self._embed(mol, head, self.params).vector
        return self._cache[key]

    def reaction_score(self, product, reactants: list,
                       rxn_type: int | None = None,
                       perm_threshold: int = PERM_THRESHOLD) -> ScoredSet:
        product_form = self._canonical(product)
        forms = []
        for mol in reactants:
            form = self._canonical(mol)
            if form == product_form:
                raise ProductInReactants(f"product {product_form} is its own reactant")
            forms.append(form)
        # Dense local ids in canonical order make tie-breaks deterministic.
        ordered = sorted(set(forms))
        by_form = {form: i for i, form in enumerate(ordered)}
        mols_by_id = {by_form[self._canonical(m)]: m for m in reactants}
        g_by_id = {i: self.embedding(m, "g") for i, m in mols_by_id.items()}
        h_by_id = {i: self.embedding(m, "h") for i, m in mols_by_id.items()}
        return reaction_score(
            self.embedding(product, "f"), self.embedding(product, "h"),
            g_by_id, h_by_id, self.params.tensors["halt_key"].data,
            u_bias=self._type_bias(self.params, "u", rxn_type),
            v_bias=self._type_bias(self.params, "v", rxn_type),
            perm_threshold=perm_threshold)
