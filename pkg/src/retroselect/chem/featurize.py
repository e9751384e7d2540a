"""Fixed-width atom/bond feature vectors for the graph encoder.

Atom rows concatenate: element one-hot over 16 symbols plus an "other"
bucket, degree one-hot 0..5, formal charge one-hot -2..+2, hydrogen-count
one-hot 0..4, an aromatic flag and a ring flag (35 columns total). Bond
rows concatenate a bond-order one-hot and a ring flag (5 columns). Values
outside a one-hot range clamp to the nearest bin and bump a warning count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mol import AROMATIC, DOUBLE, SINGLE, TRIPLE, Molecule

ELEMENTS = ("C", "N", "O", "S", "F", "Cl", "Br", "I",
            "P", "B", "Si", "Sn", "Se", "Zn", "Cu", "Mg")
_ELEMENT_INDEX = {sym: i for i, sym in enumerate(ELEMENTS)}
_OTHER_INDEX = len(ELEMENTS)

D_ATOM = len(ELEMENTS) + 1 + 6 + 5 + 5 + 2  # 35
D_BOND = 4 + 1

_BOND_INDEX = {SINGLE: 0, DOUBLE: 1, TRIPLE: 2, AROMATIC: 3}


@dataclass
class FeatureBundle:
    """Featurized molecule: node matrix plus paired directed edges.

    Each undirected bond contributes two consecutive directed edges
    (a->b then b->a) with identical bond features.
    """

    atom_features: np.ndarray      # [n_atoms, D_ATOM] float32
    bond_features: np.ndarray      # [2 * n_bonds, D_BOND] float32
    edge_src: np.ndarray           # [2 * n_bonds] int64
    edge_dst: np.ndarray           # [2 * n_bonds] int64
    clamp_warnings: int = 0

    @property
    def n_atoms(self) -> int:
        return self.atom_features.shape[0]


@dataclass
class PackedGraphs:
    """Several FeatureBundles packed into one disjoint graph batch."""

    atom_features: np.ndarray
    bond_features: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    mol_ids: np.ndarray            # [n_atoms] segment id of each atom row
    n_mols: int
    clamp_warnings: int = 0


def featurize(mol: Molecule) -> FeatureBundle:
    n = len(mol.atoms)
    atom_rows = np.zeros((n, D_ATOM), dtype=np.float32)
    warnings = 0
    for idx, atom in enumerate(mol.atoms):
        element = _ELEMENT_INDEX.get(atom.element)
        if element is None:
            element = _OTHER_INDEX
            warnings += 1
        row = atom_rows[idx]
        row[element] = 1.0
        offset = len(ELEMENTS) + 1
        degree, clamped = _clamp(atom.degree, 0, 5)
        warnings += clamped
        row[offset + degree] = 1.0
        offset += 6
        charge, clamped = _clamp(atom.formal_charge, -2, 2)
        warnings += clamped
        row[offset + charge + 2] = 1.0
        offset += 5
        hydrogens, clamped = _clamp(atom.total_h, 0, 4)
        warnings += clamped
        row[offset + hydrogens] = 1.0
        offset += 5
        row[offset] = 1.0 if atom.aromatic else 0.0
        row[offset + 1] = 1.0 if atom.in_ring else 0.0

    n_edges = 2 * len(mol.bonds)
    bond_rows = np.zeros((n_edges, D_BOND), dtype=np.float32)
    src = np.zeros(n_edges, dtype=np.int64)
    dst = np.zeros(n_edges, dtype=np.int64)
    for bidx, bond in enumerate(mol.bonds):
        feature = np.zeros(D_BOND, dtype=np.float32)
        feature[_BOND_INDEX[bond.order]] = 1.0
        feature[4] = 1.0 if bond.in_ring else 0.0
        bond_rows[2 * bidx] = feature
        bond_rows[2 * bidx + 1] = feature
        src[2 * bidx], dst[2 * bidx] = bond.a, bond.b
        src[2 * bidx + 1], dst[2 * bidx + 1] = bond.b, bond.a
    return FeatureBundle(atom_rows, bond_rows, src, dst, warnings)


def pack(bundles: list[FeatureBundle]) -> PackedGraphs:
    """Concatenate bundles into one batch with offset edge indices."""
    if not bundles:
        return PackedGraphs(
            np.zeros((0, D_ATOM), np.float32), np.zeros((0, D_BOND), np.float32),
            np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64), 0)
    atom_features = np.concatenate([b.atom_features for b in bundles])
    bond_features = np.concatenate([b.bond_features for b in bundles])
    src_parts, dst_parts, mol_parts = [], [], []
    offset = 0
    for mol_id, bundle in enumerate(bundles):
        src_parts.append(bundle.edge_src + offset)
        dst_parts.append(bundle.edge_dst + offset)
        mol_parts.append(np.full(bundle.n_atoms, mol_id, dtype=np.int64))
        offset += bundle.n_atoms
    return PackedGraphs(
        atom_features, bond_features,
        np.concatenate(src_parts), np.concatenate(dst_parts),
        np.concatenate(mol_parts), len(bundles),
        sum(b.clamp_warnings for b in bundles))


def _clamp(value: int, low: int, high: int) -> tuple[int, int]:
    if value < low:
        return low, 1
    if value > high:
        return high, 1
    return value, 0
