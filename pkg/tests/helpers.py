"""Shared test oracles and utilities."""

from __future__ import annotations

import random

import networkx as nx

from retroselect.chem import Molecule

# Diverse corpus used across parser/canonical/encoder tests: chains, rings,
# fused aromatics, charges, bracket atoms, multi-valent S/P, halogens.
CORPUS_SMILES = [
    "CCO",
    "OCC",
    "C",
    "O",
    "[NH4+]",
    "c1ccccc1",
    "c1ccncc1",
    "c1ccc2ccccc2c1",
    "c1cc[nH]c1",
    "c1ccoc1",
    "c1ccsc1",
    "CC(=O)O",
    "CC(=O)OC1=CC=CC=C1C(=O)O",
    "N#Cc1ccccc1",
    "C1CCCCC1",
    "C1CC2CCC1CC2",
    "CC(C)(C)OC(=O)NC",
    "ClCCl",
    "FC(F)(F)c1ccccc1",
    "O=S(=O)(O)O",
    "OP(=O)(O)O",
    "C[Si](C)(C)C",
    "[O-]C(=O)C",
    "[Zn+2]",
    "Brc1ccc(I)cc1",
    "C/C=C/C(=O)O",
    "F[C@@H](Cl)Br",
    "CC1=CC(=O)C=CC1=O",
    "C(#N)c1ncccc1",
    "CSC",
    "CN1CCC[C@H]1c1cccnc1",
    "COc1cc2c(cc1OC)CCN2",
]


def to_networkx(mol: Molecule) -> nx.Graph:
    graph = nx.Graph()
    for idx, atom in enumerate(mol.atoms):
        graph.add_node(idx, label=(atom.element, atom.formal_charge,
                                   atom.total_h, atom.aromatic))
    for bond in mol.bonds:
        graph.add_edge(bond.a, bond.b, order=bond.order)
    return graph


def isomorphic(a: Molecule, b: Molecule) -> bool:
    """Exact labeled-graph isomorphism via the networkx VF2 oracle."""
    return nx.is_isomorphic(
        to_networkx(a), to_networkx(b),
        node_match=lambda x, y: x["label"] == y["label"],
        edge_match=lambda x, y: x["order"] == y["order"])


def random_permutation(n: int, rng: random.Random) -> list[int]:
    order = list(range(n))
    rng.shuffle(order)
    return order


def relative_error(a, b, floor: float = 1.0) -> float:
    """|a-b| / max(floor, |a|, |b|); floor=1 keeps near-zero values honest."""
    return abs(a - b) / max(floor, abs(a), abs(b))
