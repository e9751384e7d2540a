"""Synthetic fragment-grammar worlds for smoke training and evaluation.

Products are built by joining 2-3 small random fragments with single bonds
at atoms that still have free valence, so the ground-truth "reactants" of a
product are exactly its fragments. Worlds are written as ordinary reaction
and candidate files and loaded back through the regular data path.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field

from .chem import Atom, Bond, Molecule, SINGLE, DOUBLE, canonical_form, write_smiles
from .data import Corpus, load_corpus

_ELEMENT_BUDGET = {"C": 4, "N": 3, "O": 2, "S": 2}
_ELEMENT_CHOICES = "CCCCCCCNNOOS"


def random_fragment(rng: random.Random, min_atoms: int = 3,
                    max_atoms: int = 8) -> Molecule:
    """Random neutral fragment with valence-respecting bonds."""
    n = rng.randint(min_atoms, max_atoms)
    first = rng.choice(_ELEMENT_CHOICES)
    atoms = [Atom(first)]
    bonds: list[Bond] = []
    free = [_ELEMENT_BUDGET[first]]
    for _ in range(n - 1):
        anchors = [j for j, slack in enumerate(free) if slack >= 1]
        if not anchors:
            break
        anchor = rng.choice(anchors)
        element = rng.choice(_ELEMENT_CHOICES)
        budget = _ELEMENT_BUDGET[element]
        order = SINGLE
        if free[anchor] >= 2 and budget >= 2 and rng.random() < 0.15:
            order = DOUBLE
        new_idx = len(atoms)
        atoms.append(Atom(element))
        bonds.append(Bond(anchor, new_idx, order))
        free[anchor] -= order
        free.append(budget - order)
    if len(atoms) >= 4 and rng.random() < 0.35:
        open_atoms = [j for j, slack in enumerate(free) if slack >= 1]
        bonded = {(b.a, b.b) for b in bonds}
        pairs = [(a, b) for i, a in enumerate(open_atoms)
                 for b in open_atoms[i + 1:] if (a, b) not in bonded]
        if pairs:
            a, b = rng.choice(pairs)
            bonds.append(Bond(a, b, SINGLE))
    mol = Molecule(atoms, bonds).finalize()
    mol.source_text = write_smiles(mol)
    return mol


def glue_fragments(fragments: list[Molecule], rng: random.Random) -> Molecule | None:
    """Join fragments into one molecule by single bonds at free-valence atoms.

    Returns None when some junction has no attachment point left.
    """
    atoms: list[Atom] = []
    bonds: list[Bond] = []
    offsets = []
    for frag in fragments:
        offsets.append(len(atoms))
        for a in frag.atoms:
            atoms.append(Atom(a.element, a.formal_charge, a.explicit_h, a.aromatic))
        for b in frag.bonds:
            bonds.append(Bond(b.a + offsets[-1], b.b + offsets[-1], b.order))
    used = [0] * len(atoms)
    for k in range(1, len(fragments)):
        left_atoms = [offsets[j] + i for j in range(k)
                      for i, a in enumerate(fragments[j].atoms)
                      if a.implicit_h - used[offsets[j] + i] >= 1]
        right_atoms = [offsets[k] + i for i, a in enumerate(fragments[k].atoms)
                       if a.implicit_h - used[offsets[k] + i] >= 1]
        if not left_atoms or not right_atoms:
            return None
        left = rng.choice(left_atoms)
        right = rng.choice(right_atoms)
        bonds.append(Bond(left, right, SINGLE))
        used[left] += 1
        used[right] += 1
    mol = Molecule(atoms, bonds).finalize()
    mol.source_text = write_smiles(mol)
    return mol


@dataclass
class ToyWorld:
    """Generated corpus files plus bookkeeping for experiments."""

    directory: str
    reaction_paths: dict[str, str]
    candidates_path: str
    distractors_path: str | None = None
    building_block_forms: set[str] = field(default_factory=set)

    def load(self, include_distractors: bool = False) -> Corpus:
        candidates = self.candidates_path
        if include_distractors:
            if not self.distractors_path:
                raise ValueError("world has no distractor file")
            merged = os.path.join(self.directory, "candidates_enlarged.txt")
            with open(merged, "w", encoding="utf-8") as out:
                for path in (self.candidates_path, self.distractors_path):
                    with open(path, "r", encoding="utf-8") as src:
                        out.write(src.read())
            candidates = merged
        return load_corpus(self.reaction_paths, candidates_path=candidates)


def _unique_fragments(rng: random.Random, count: int, taken: set[str],
                      min_atoms: int = 3, max_atoms: int = 8,
                      max_tries: int = 50) -> list[Molecule]:
    out: list[Molecule] = []
    while len(out) < count:
        for _ in range(max_tries):
            frag = random_fragment(rng, min_atoms, max_atoms)
            form = canonical_form(frag)
            if form not in taken:
                taken.add(form)
                out.append(frag)
                break
        else:
            raise RuntimeError("could not generate enough distinct fragments")
    return out


def make_memorization_world(directory: str, seed: int = 0,
                            n_fragments: int = 300, n_reactions: int = 100,
                            n_distractors: int = 900,
                            val_fraction: float = 0.15,
                            with_types: bool = False) -> ToyWorld:
    """Fragment-grammar world: ~n_reactions products of 2-3 joined fragments
    over a pool of n_fragments candidates, plus unused distractor fragments."""
    os.makedirs(directory, exist_ok=True)
    rng = random.Random(seed)
    taken: set[str] = set()
    fragments = _unique_fragments(rng, n_fragments, taken)

    lines: list[str] = []
    seen_products: set[str] = set()
    guard = 0
    while len(lines) < n_reactions:
        guard += 1
        if guard > 50 * n_reactions:
            raise RuntimeError("could not assemble enough distinct reactions")
        parts = rng.sample(fragments, rng.choice([2, 2, 3]))
        product = glue_fragments(parts, rng)
        if product is None:
            continue
        form = canonical_form(product)
        if form in taken or form in seen_products:
            continue
        seen_products.add(form)
        reactant_text = ".".join(canonical_form(p) for p in parts)
        line = f"{reactant_text}>>{form}"
        if with_types:
            line += f"\t{rng.randint(1, 3)}"
        lines.append(line)

    n_val = max(1, int(len(lines) * val_fraction))
    paths = {
        "train": os.path.join(directory, "train.txt"),
        "val": os.path.join(directory, "val.txt"),
    }
    with open(paths["train"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(paths["val"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines[:n_val]) + "\n")

    candidates_path = os.path.join(directory, "candidates.txt")
    with open(candidates_path, "w", encoding="utf-8") as fh:
        for frag in fragments:
            fh.write(canonical_form(frag) + "\n")

    distractors = _unique_fragments(rng, n_distractors, taken)
    distractors_path = os.path.join(directory, "distractors.txt")
    with open(distractors_path, "w", encoding="utf-8") as fh:
        for frag in distractors:
            fh.write(canonical_form(frag) + "\n")

    return ToyWorld(directory, paths, candidates_path, distractors_path)


def make_route_world(directory: str, seed: int = 0, n_blocks: int = 40,
                     n_intermediates: int = 25, n_targets: int = 50) -> ToyWorld:
    """Two-level world: intermediates are joined pairs of building blocks,
    targets join an intermediate with one more block. Intermediates are in
    the candidate pool but are not building blocks, so recovering a target
    takes a two-step route."""
    os.makedirs(directory, exist_ok=True)
    rng = random.Random(seed)
    taken: set[str] = set()
    blocks = _unique_fragments(rng, n_blocks, taken, min_atoms=3, max_atoms=6)

    intermediates: list[tuple[Molecule, list[Molecule]]] = []
    guard = 0
    while len(intermediates) < n_intermediates:
        guard += 1
        if guard > 50 * n_intermediates:
            raise RuntimeError("could not build enough intermediates")
        parts = rng.sample(blocks, 2)
        inter = glue_fragments(parts, rng)
        if inter is None or canonical_form(inter) in taken:
            continue
        taken.add(canonical_form(inter))
        intermediates.append((inter, parts))

    targets: list[tuple[Molecule, Molecule, Molecule]] = []
    guard = 0
    while len(targets) < n_targets:
        guard += 1
        if guard > 50 * n_targets:
            raise RuntimeError("could not build enough targets")
        inter, _ = intermediates[rng.randrange(len(intermediates))]
        block = blocks[rng.randrange(len(blocks))]
        target = glue_fragments([inter, block], rng)
        if target is None or canonical_form(target) in taken:
            continue
        taken.add(canonical_form(target))
        targets.append((target, inter, block))

    lines = []
    for inter, parts in intermediates:
        reactant_text = ".".join(canonical_form(p) for p in parts)
        lines.append(f"{reactant_text}>>{canonical_form(inter)}")
    for target, inter, block in targets:
        reactant_text = ".".join([canonical_form(inter), canonical_form(block)])
        lines.append(f"{reactant_text}>>{canonical_form(target)}")

    paths = {
        "train": os.path.join(directory, "train.txt"),
        "val": os.path.join(directory, "val.txt"),
        "test": os.path.join(directory, "test.txt"),
    }
    with open(paths["train"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(paths["val"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines[:max(1, len(lines) // 5)]) + "\n")
    with open(paths["test"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(f"{canonical_form(i)}.{canonical_form(b)}>>{canonical_form(t)}"
                           for t, i, b in targets) + "\n")

    candidates_path = os.path.join(directory, "candidates.txt")
    with open(candidates_path, "w", encoding="utf-8") as fh:
        for mol in blocks + [inter for inter, _ in intermediates]:
            fh.write(canonical_form(mol) + "\n")

    block_forms = {canonical_form(b) for b in blocks}
    return ToyWorld(directory, paths, candidates_path,
                    building_block_forms=block_forms)
