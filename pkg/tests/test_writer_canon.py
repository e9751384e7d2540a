import random

import pytest

from retroselect.chem import (canonical_form, disjoint_union, parse_smiles,
                              write_smiles)

from helpers import CORPUS_SMILES, isomorphic, random_permutation


def test_round_trip_identity():
    mol = parse_smiles("CCO")
    again = parse_smiles(write_smiles(mol))
    assert isomorphic(mol, again)


def test_reversed_order_writes_isomorphic():
    mol = parse_smiles("CCO")
    text = write_smiles(mol, [2, 1, 0])
    assert text.startswith("O")
    assert isomorphic(mol, parse_smiles(text))


def test_hundred_permutations_of_twelve_atom_molecule():
    mol = parse_smiles("CCC(=O)Oc1ccccc1N")  # 12 heavy atoms
    assert len(mol.atoms) == 12
    rng = random.Random(7)
    seen = set()
    for _ in range(100):
        order = random_permutation(len(mol.atoms), rng)
        text = write_smiles(mol, order)
        seen.add(text)
        assert isomorphic(mol, parse_smiles(text)), text
    assert len(seen) > 10  # distinct renderings, same graph


@pytest.mark.parametrize("smiles", CORPUS_SMILES)
def test_round_trip_corpus(smiles):
    mol = parse_smiles(smiles)
    again = parse_smiles(write_smiles(mol))
    assert isomorphic(mol, again)


def test_canonical_merges_renderings():
    assert canonical_form(parse_smiles("OCC")) == canonical_form(parse_smiles("CCO"))
    assert canonical_form(parse_smiles("C(O)C")) == canonical_form(parse_smiles("CCO"))


@pytest.mark.parametrize("smiles", CORPUS_SMILES)
def test_canonical_idempotent(smiles):
    form = canonical_form(parse_smiles(smiles))
    assert canonical_form(parse_smiles(form, allow_fragments=True)) == form


@pytest.mark.parametrize("smiles", CORPUS_SMILES)
def test_canonical_invariant_under_permutation(smiles):
    mol = parse_smiles(smiles)
    base = canonical_form(mol)
    rng = random.Random(hash(smiles) & 0xFFFF)
    for _ in range(50):
        order = random_permutation(len(mol.atoms), rng)
        rewritten = parse_smiles(write_smiles(mol, order))
        assert canonical_form(rewritten) == base


def test_canonical_multi_fragment_sorted():
    a = disjoint_union(parse_smiles("CCO"), parse_smiles("C"))
    b = disjoint_union(parse_smiles("C"), parse_smiles("CCO"))
    assert canonical_form(a) == canonical_form(b)
    assert "." in canonical_form(a)


def test_symmetric_molecules_canonicalize():
    # High-symmetry graphs exercise the tie-break branching.
    ring = "C1" + "C" * 10 + "C1"
    base = canonical_form(parse_smiles(ring))
    mol = parse_smiles(ring)
    rng = random.Random(3)
    for _ in range(10):
        order = random_permutation(len(mol.atoms), rng)
        assert canonical_form(parse_smiles(write_smiles(mol, order))) == base


def test_writer_rejects_bad_permutation():
    mol = parse_smiles("CCO")
    with pytest.raises(Exception):
        write_smiles(mol, [0, 1])
