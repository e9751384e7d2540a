"""SMILES emission from a molecular graph.

``write_smiles`` performs a DFS guided by an atom priority order, so the
same graph can be rendered under many different atom orderings; every
rendering re-parses to an isomorphic graph.
"""

from __future__ import annotations

from .errors import ChemError
from .mol import AROMATIC, AROMATIC_OK, BOND_SYMBOL, SINGLE, Atom, Bond, Molecule

_BARE_OK = frozenset(["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"])
_BARE_AROMATIC_OK = frozenset(["B", "C", "N", "O", "P", "S"])


def write_smiles(mol: Molecule, start_order: list[int] | None = None) -> str:
    """Emit SMILES for ``mol``; fragments are joined with dots.

    ``start_order`` is a permutation of atom indices used as DFS priority:
    each component starts at its highest-priority atom and neighbors are
    visited in priority order. Defaults to the natural order 0..n-1.
    """
    n = len(mol.atoms)
    if start_order is None:
        priority = list(range(n))
    else:
        if sorted(start_order) != list(range(n)):
            raise ChemError("start_order is not a permutation of atom indices")
        priority = [0] * n
        for rank, idx in enumerate(start_order):
            priority[idx] = rank

    visited = [False] * n
    pieces = []
    for start in sorted(range(n), key=lambda i: priority[i]):
        if not visited[start]:
            pieces.append(_emit_component(mol, start, priority, visited))
    return ".".join(pieces)


def _emit_component(mol: Molecule, start: int, priority: list[int],
                    visited: list[bool]) -> str:
    # DFS with visit-on-pop marking: edges to already-visited atoms become
    # ring closures, everything else becomes a tree edge.
    children: dict[int, list[tuple[int, Bond]]] = {}
    ring_bonds: list[Bond] = []
    seen_bonds: set[int] = set()
    preorder_pos: dict[int, int] = {}
    stack: list[tuple[int, Bond | None, int | None]] = [(start, None, None)]
    while stack:
        v, via, parent = stack.pop()
        if visited[v]:
            if via is not None and id(via) not in seen_bonds:
                seen_bonds.add(id(via))
                ring_bonds.append(via)
            continue
        visited[v] = True
        preorder_pos[v] = len(preorder_pos)
        children[v] = []
        if via is not None:
            seen_bonds.add(id(via))
            children[parent].append((v, via))
        neighbors = sorted(mol.adjacency[v], key=lambda item: priority[item[0]])
        for u, bond in reversed(neighbors):
            if id(bond) not in seen_bonds:
                stack.append((u, bond, v))

    # Ring digits open at the earlier-emitted endpoint and close at the later
    # one; a digit frees up once its ring closes.
    opens: dict[int, list[tuple[int, Bond]]] = {}
    closes: dict[int, list[tuple[int, Bond]]] = {}
    for bond in ring_bonds:
        first, second = sorted((bond.a, bond.b), key=preorder_pos.__getitem__)
        opens.setdefault(first, []).append((preorder_pos[second], bond))
        closes.setdefault(second, []).append((preorder_pos[first], bond))
    for events in opens.values():
        events.sort(key=lambda item: item[0])
    for events in closes.values():
        events.sort(key=lambda item: item[0])

    digit_free = list(range(1, 100))
    bond_digit: dict[int, int] = {}
    out: list[str] = []
    emit_stack: list[tuple[str, object, Bond | None]] = [("atom", start, None)]
    while emit_stack:
        kind, payload, via = emit_stack.pop()
        if kind == "text":
            out.append(payload)  # type: ignore[arg-type]
            continue
        v: int = payload  # type: ignore[assignment]
        if via is not None:
            out.append(_bond_text(mol, via))
        out.append(_atom_text(mol.atoms[v]))
        for _, bond in closes.get(v, []):
            digit = bond_digit.pop(id(bond))
            digit_free.append(digit)
            digit_free.sort()
            out.append(_digit_text(digit))
        for _, bond in opens.get(v, []):
            if not digit_free:
                raise ChemError("more than 99 simultaneously open ring bonds")
            digit = digit_free.pop(0)
            bond_digit[id(bond)] = digit
            out.append(_bond_text(mol, bond) + _digit_text(digit))
        kids = children.get(v, [])
        for i in range(len(kids) - 1, -1, -1):
            u, bond = kids[i]
            if i == len(kids) - 1:
                emit_stack.append(("atom", u, bond))
            else:
                emit_stack.append(("text", ")", None))
                emit_stack.append(("atom", u, bond))
                emit_stack.append(("text", "(", None))
    return "".join(out)


def _digit_text(digit: int) -> str:
    return str(digit) if digit < 10 else f"%{digit:02d}"


def _bond_text(mol: Molecule, bond: Bond) -> str:
    a, b = mol.atoms[bond.a], mol.atoms[bond.b]
    default = AROMATIC if (a.aromatic and b.aromatic) else SINGLE
    if bond.order == default:
        return ""
    if bond.order == SINGLE:
        return "-"
    return BOND_SYMBOL[bond.order]


def _atom_text(atom: Atom) -> str:
    bare = (atom.formal_charge == 0 and atom.explicit_h is None
            and (atom.element in _BARE_AROMATIC_OK if atom.aromatic
                 else atom.element in _BARE_OK))
    symbol = atom.element.lower() if atom.aromatic else atom.element
    if bare:
        return symbol
    if atom.aromatic and atom.element not in AROMATIC_OK:
        raise ChemError(f"element {atom.element} cannot be written aromatic")
    h = atom.total_h
    h_text = "" if h == 0 else ("H" if h == 1 else f"H{h}")
    c = atom.formal_charge
    if c == 0:
        c_text = ""
    elif c in (1, -1):
        c_text = "+" if c == 1 else "-"
    else:
        c_text = f"{'+' if c > 0 else '-'}{abs(c)}"
    return f"[{symbol}{h_text}{c_text}]"
