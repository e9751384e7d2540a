"""Canonical SMILES via iterative neighborhood-invariant refinement.

The canonical form is the lexicographically smallest SMILES obtainable by
refining atom invariants to a stable partition and, whenever a tie class
survives refinement, branching on each member of the first tie class. The
branch set is isomorphism-invariant, so isomorphic molecules always map to
the same string; the form is also idempotent under re-parse.
"""

from __future__ import annotations

from .mol import Molecule
from .writer import write_smiles

# Order in the initial invariant; also the tie-break order between elements.
_ELEMENT_ORDER = (
    "C N O S F Cl Br I P B Si Sn Se Zn Cu Mg H".split())
_ELEMENT_RANK = {sym: i for i, sym in enumerate(_ELEMENT_ORDER)}


def canonical_form(mol: Molecule) -> str:
    """Deterministic SMILES equal for all isomorphic renumberings of mol."""
    if mol._canonical is None:
        ranks = _refine(mol, _initial_ranks(mol))
        mol._canonical = _best_string(mol, ranks)
    return mol._canonical


def canonical_ranks(mol: Molecule) -> list[int]:
    """Stable-refinement ranks (possibly with ties), exposed for tests."""
    return _refine(mol, _initial_ranks(mol))


def _initial_ranks(mol: Molecule) -> list[int]:
    keys = []
    for atom in mol.atoms:
        element_rank = _ELEMENT_RANK.get(atom.element, len(_ELEMENT_ORDER))
        keys.append((element_rank, atom.element, atom.formal_charge,
                     atom.total_h, atom.aromatic, atom.degree, atom.in_ring))
    return _dense(keys)


def _dense(keys: list) -> list[int]:
    order = {key: rank for rank, key in enumerate(sorted(set(keys)))}
    return [order[key] for key in keys]


def _refine(mol: Molecule, ranks: list[int]) -> list[int]:
    adjacency = mol.adjacency
    n_classes = len(set(ranks))
    while True:
        keys = []
        for idx in range(len(mol.atoms)):
            neighborhood = sorted((bond.order, ranks[u]) for u, bond in adjacency[idx])
            keys.append((ranks[idx], tuple(neighborhood)))
        new_ranks = _dense(keys)
        new_count = len(set(new_ranks))
        if new_count == n_classes:
            return new_ranks
        ranks = new_ranks
        n_classes = new_count


def _best_string(mol: Molecule, ranks: list[int]) -> str:
    n = len(mol.atoms)
    if len(set(ranks)) == n:
        order = sorted(range(n), key=ranks.__getitem__)
        pieces = write_smiles(mol, order).split(".")
        return ".".join(sorted(pieces))
    # Branch on every member of the lowest-ranked tie class; the class is
    # determined by invariant values only, so the branch set is invariant.
    tie_rank = min(r for r in ranks if ranks.count(r) > 1)
    members = [idx for idx in range(n) if ranks[idx] == tie_rank]
    best: str | None = None
    for pick in members:
        split = [2 * r - (1 if idx == pick else 0) for idx, r in enumerate(ranks)]
        candidate = _best_string(mol, _refine(mol, _dense(split)))
        if best is None or candidate < best:
            best = candidate
    assert best is not None
    return best
