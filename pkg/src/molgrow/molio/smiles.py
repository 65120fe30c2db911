"""SMILES subset: parser and round-trip-stable writer.

Supported: organic-subset atoms, bracket atoms of the table elements with
charge/H-count/@/@@ marks, branches, ring closures 1-9, bond symbols - = #,
aromatic lowercase. Not supported: isotopes, atom classes, wildcards,
directional bonds, dot-disconnected fragments.

Tetrahedral marks are stored as R/S under a fixed local convention: neighbour
priority is the refinement rank (phantom hydrogen lowest), and the label is S
exactly when the '@' tag agrees with an even permutation from written order
to descending priority. The writer inverts the same rule, so labels survive
a parse/write/parse cycle even though they are not CIP-calibrated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..errors import SmilesError
from .elements import (
    AROMATIC_OK,
    DEFAULT_VALENCE,
    ORDER_VALUE,
    ORGANIC_SUBSET,
    hybridization_label,
    implied_hydrogens,
    pi_increment,
)
from .graph import Atom, Bond, MolGraph, _non_bridge_flags, morgan_ranks

_BOND_SYMBOLS = {"-": "single", "=": "double", "#": "triple"}
_SYMBOL_FOR = {"single": "-", "double": "=", "triple": "#"}

_H_SENTINEL = "H"


@dataclass
class _AtomDraft:
    element: str
    aromatic: bool = False
    charge: int = 0
    h_count: int | None = None  # None = assign implicitly (bare atom)
    chiral_tag: str | None = None
    nbrs: list = field(default_factory=list)  # atom idx, "H", or ["ring", digit]


def parse_smiles(text: str) -> MolGraph:
    """Parse one molecule; raises SmilesError with the offending position."""
    atoms: list[_AtomDraft] = []
    bonds: list[list] = []  # [i, j, symbol-or-None]
    prev: int | None = None
    pending: str | None = None
    branch_stack: list[int | None] = []
    ring_open: dict[str, tuple[int, str | None, list]] = {}

    def fail(msg: str, pos: int):
        raise SmilesError(msg, text, pos)

    def connect(a: int, b: int, symbol: str | None):
        bonds.append([a, b, symbol])
        atoms[a].nbrs.append(b)
        atoms[b].nbrs.append(a)

    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in _BOND_SYMBOLS:
            if pending is not None:
                fail("two consecutive bond symbols", i)
            pending = ch
            i += 1
        elif ch == "(":
            if prev is None:
                fail("branch before any atom", i)
            if pending is not None:
                fail("bond symbol before '('", i)
            branch_stack.append(prev)
            i += 1
        elif ch == ")":
            if not branch_stack:
                fail("unmatched ')'", i)
            if pending is not None:
                fail("dangling bond symbol before ')'", i)
            prev = branch_stack.pop()
            i += 1
        elif ch.isdigit():
            if ch == "0":
                fail("ring closure digit must be 1-9", i)
            if prev is None:
                fail("ring closure before any atom", i)
            if ch in ring_open:
                o_atom, o_sym, placeholder = ring_open.pop(ch)
                if o_atom == prev:
                    fail("ring closure to the same atom", i)
                if o_sym is not None and pending is not None and o_sym != pending:
                    fail("conflicting bond symbols on ring closure", i)
                symbol = o_sym if o_sym is not None else pending
                bonds.append([o_atom, prev, symbol])
                placeholder[0] = "resolved"
                placeholder[1] = prev
                atoms[prev].nbrs.append(o_atom)
            else:
                placeholder = ["ring", None]
                atoms[prev].nbrs.append(placeholder)
                ring_open[ch] = (prev, pending, placeholder)
            pending = None
            i += 1
        elif ch == "[":
            draft, i = _parse_bracket(text, i)
            idx = _add_atom(atoms, draft)
            if prev is not None:
                connect(prev, idx, pending)
            _maybe_add_h_sentinel(draft)
            pending = None
            prev = idx
        elif ch.isalpha():
            draft, i = _parse_bare_atom(text, i)
            idx = _add_atom(atoms, draft)
            if prev is not None:
                connect(prev, idx, pending)
            pending = None
            prev = idx
        else:
            fail(f"unexpected character {ch!r}", i)

    if branch_stack:
        fail("unclosed branch", n - 1)
    if ring_open:
        digit = sorted(ring_open)[0]
        fail(f"unclosed ring bond {digit}", n - 1)
    if pending is not None:
        fail("dangling bond symbol at end of input", n - 1)
    if not atoms:
        fail("empty SMILES", 0)

    return _finalize(atoms, bonds, text)


def _add_atom(atoms: list[_AtomDraft], draft: _AtomDraft) -> int:
    atoms.append(draft)
    return len(atoms) - 1


def _maybe_add_h_sentinel(draft: _AtomDraft) -> None:
    # the bracket hydrogen occupies the slot right after the incoming bond
    if draft.chiral_tag is not None and draft.h_count == 1:
        draft.nbrs.append(_H_SENTINEL)


def _parse_bare_atom(text: str, i: int) -> tuple[_AtomDraft, int]:
    for two in ("Cl", "Br"):
        if text.startswith(two, i):
            return _AtomDraft(element=two), i + 2
    ch = text[i]
    if ch in ORGANIC_SUBSET:
        return _AtomDraft(element=ch), i + 1
    if ch in AROMATIC_OK:
        return _AtomDraft(element=ch.upper(), aromatic=True), i + 1
    raise SmilesError(f"unsupported element or token {ch!r}", text, i)


def _parse_bracket(text: str, start: int) -> tuple[_AtomDraft, int]:
    i = start + 1
    n = len(text)

    def fail(msg: str, pos: int):
        raise SmilesError(msg, text, pos)

    if i < n and text[i].isdigit():
        fail("isotope labels are not supported", i)

    element = None
    aromatic = False
    if i < n and text[i].isupper():
        if i + 1 < n and text[i + 1].islower() and text[i : i + 2] in DEFAULT_VALENCE:
            element = text[i : i + 2]
            i += 2
        else:
            element = text[i]
            i += 1
    elif i < n and text[i] in AROMATIC_OK:
        element = text[i].upper()
        aromatic = True
        i += 1
    else:
        fail("expected element symbol in bracket", i)
    if element not in DEFAULT_VALENCE:
        fail(f"unsupported element {element!r}", start + 1)

    chiral = None
    if i < n and text[i] == "@":
        chiral = "@"
        i += 1
        if i < n and text[i] == "@":
            chiral = "@@"
            i += 1

    h_count = 0
    if i < n and text[i] == "H":
        i += 1
        h_count = 1
        if i < n and text[i].isdigit():
            h_count = int(text[i])
            i += 1

    charge = 0
    if i < n and text[i] in "+-":
        sign = 1 if text[i] == "+" else -1
        i += 1
        if i < n and text[i].isdigit():
            charge = sign * int(text[i])
            i += 1
        else:
            charge = sign
            while i < n and text[i] in "+-":
                if (text[i] == "+") != (sign > 0):
                    fail("mixed charge symbols", i)
                charge += sign
                i += 1

    if i >= n or text[i] != "]":
        fail("expected ']'", i if i < n else n - 1)
    return _AtomDraft(element, aromatic, charge, h_count, chiral), i + 1


def _finalize(drafts: list[_AtomDraft], raw_bonds: list[list], text: str) -> MolGraph:
    n = len(drafts)
    provisional = [Bond(i=b[0], j=b[1], order="single") for b in raw_bonds]
    ring_flags = _non_bridge_flags(n, provisional)

    orders: list[str] = []
    for (a, b, symbol), in_ring in zip(raw_bonds, ring_flags):
        if symbol is not None:
            orders.append(_BOND_SYMBOLS[symbol])
        elif drafts[a].aromatic and drafts[b].aromatic and in_ring:
            orders.append("aromatic")
        else:
            orders.append("single")

    aromatic_bond_at = [False] * n
    for (a, b, _), order in zip(raw_bonds, orders):
        if order == "aromatic":
            aromatic_bond_at[a] = aromatic_bond_at[b] = True
    for idx, d in enumerate(drafts):
        if d.aromatic and not aromatic_bond_at[idx]:
            raise SmilesError(
                f"aromatic atom {idx} ({d.element.lower()}) is not in an aromatic ring", text
            )

    order_sum = [0] * n
    sigma_degree = [0] * n
    pi_orders = [0] * n
    for (a, b, _), order in zip(raw_bonds, orders):
        for idx in (a, b):
            order_sum[idx] += ORDER_VALUE[order]
            sigma_degree[idx] += 1
            if order == "double":
                pi_orders[idx] += 1
            elif order == "triple":
                pi_orders[idx] += 2

    n_hydrogens = []
    for idx, d in enumerate(drafts):
        if d.h_count is not None:
            n_hydrogens.append(d.h_count)
        else:
            n_hydrogens.append(
                implied_hydrogens(d.element, d.aromatic, order_sum[idx], sigma_degree[idx])
            )

    def pi_beyond(idx: int, minus: int) -> bool:
        # pi character an atom has aside from the bond under consideration
        return drafts[idx].aromatic or (pi_orders[idx] - minus) > 0

    atoms = []
    for idx, d in enumerate(drafts):
        atoms.append(
            Atom(
                element=d.element,
                formal_charge=d.charge,
                n_radical=0,
                hybridization=hybridization_label(
                    d.element, d.aromatic, pi_orders[idx], sigma_degree[idx], n_hydrogens[idx]
                ),
                aromatic=d.aromatic,
                n_hydrogens=n_hydrogens[idx],
                chirality="none",
            )
        )
    bonds = []
    for (a, b, _), order in zip(raw_bonds, orders):
        own_pi = {"double": 1, "triple": 2}.get(order, 0)
        conj = order == "aromatic" or (pi_beyond(a, own_pi) and pi_beyond(b, own_pi))
        bonds.append(Bond(i=a, j=b, order=order, conjugated=conj))

    graph = MolGraph(atoms, bonds, role="ligand")

    tagged = [i for i, d in enumerate(drafts) if d.chiral_tag is not None]
    if not tagged:
        return graph

    ranks = morgan_ranks(graph)
    labels = {}
    for idx in tagged:
        label = _chirality_label(drafts[idx], ranks)
        if label is not None:
            labels[idx] = label
    if not labels:
        return graph
    atoms = [
        replace(a, chirality=labels.get(i, "none")) for i, a in enumerate(graph.atoms)
    ]
    return MolGraph(atoms, list(graph.bonds), role="ligand")


def _neighbor_sequence(draft: _AtomDraft) -> list:
    seq = []
    for entry in draft.nbrs:
        if isinstance(entry, list):
            seq.append(entry[1])  # resolved ring partner
        else:
            seq.append(entry)
    return seq


def _chirality_label(draft: _AtomDraft, ranks: list[int]) -> str | None:
    seq = _neighbor_sequence(draft)
    if len(seq) != 4:
        return None

    def priority(x):
        return -1 if x == _H_SENTINEL else ranks[x]

    prios = [priority(x) for x in seq]
    if len(set(prios)) != 4:
        return None  # refinement cannot order the neighbours; mark is meaningless
    return _label_from_order(seq, prios, draft.chiral_tag)


def _label_from_order(seq: list, prios: list[int], tag: str) -> str:
    by_priority = [x for _, x in sorted(zip(prios, seq), key=lambda t: -t[0])]
    positions = {x: k for k, x in enumerate(by_priority)}
    perm = [positions[x] for x in seq]
    even = _parity(perm) == 0
    return "S" if (tag == "@") == even else "R"


def _tag_from_order(seq: list, prios: list[int], label: str) -> str:
    by_priority = [x for _, x in sorted(zip(prios, seq), key=lambda t: -t[0])]
    positions = {x: k for k, x in enumerate(by_priority)}
    perm = [positions[x] for x in seq]
    even = _parity(perm) == 0
    return "@" if (label == "S") == even else "@@"


def _parity(perm: list[int]) -> int:
    inv = 0
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                inv += 1
    return inv % 2


# ------------------------------------------------------------------ writer


def write_smiles(g: MolGraph, root: int | None = None, ranks: list[int] | None = None) -> str:
    return write_smiles_with_order(g, root=root, ranks=ranks)[0]


def write_smiles_with_order(
    g: MolGraph, root: int | None = None, ranks: list[int] | None = None
) -> tuple[str, list[int]]:
    """Serialize a connected graph; also return atoms in emission order.

    Neighbour exploration follows (rank, index), so passing a total-order
    ranking makes the output canonical for that ranking. The emission order
    equals the atom numbering a re-parse will assign.
    """
    if g.n_atoms == 0:
        raise SmilesError("cannot write an empty graph")
    if len(g.connected_components()) != 1:
        raise SmilesError("disconnected graphs are outside the writable subset")
    for idx, a in enumerate(g.atoms):
        if a.n_radical:
            raise SmilesError(f"atom {idx} carries radical electrons; not writable")
        if a.element not in DEFAULT_VALENCE:
            raise SmilesError(f"element {a.element!r} is not writable")
        if a.aromatic and a.element.lower() not in AROMATIC_OK:
            raise SmilesError(f"element {a.element!r} cannot be written aromatic")

    if ranks is None:
        ranks = morgan_ranks(g)
    if root is None:
        root = min(range(g.n_atoms), key=lambda i: (ranks[i], i))

    # spanning tree with deterministic child order; remaining bonds close rings
    parent: dict[int, tuple[int, int] | None] = {root: None}
    children: dict[int, list[tuple[int, int]]] = {i: [] for i in range(g.n_atoms)}
    tree_bonds: set[int] = set()
    stack = [root]
    seen = {root}
    while stack:
        v = stack.pop()
        nbrs = sorted(g.neighbors(v), key=lambda t: (ranks[t[0]], t[0]))
        # reversed push so the lowest-ranked neighbour is explored first
        for w, bi in reversed(nbrs):
            if w not in seen:
                seen.add(w)
                parent[w] = (v, bi)
                children[v].append((w, bi))
                tree_bonds.add(bi)
                stack.append(w)
    for v in children:
        children[v].sort(key=lambda t: (ranks[t[0]], t[0]))

    ring_bonds = [bi for bi in range(len(g.bonds)) if bi not in tree_bonds]
    ring_partner: dict[int, list[tuple[int, int]]] = {i: [] for i in range(g.n_atoms)}
    for bi in ring_bonds:
        b = g.bonds[bi]
        ring_partner[b.i].append((b.j, bi))
        ring_partner[b.j].append((b.i, bi))
    for v in ring_partner:
        ring_partner[v].sort(key=lambda t: (ranks[t[0]], t[0]))

    digit_of: dict[int, str] = {}
    free_digits = [str(d) for d in range(1, 10)]
    emitted_nbrs: dict[int, list] = {i: [] for i in range(g.n_atoms)}
    order_out: list[int] = []
    tokens: list[str] = []

    def bond_token(bi: int) -> str:
        b = g.bonds[bi]
        if b.order == "aromatic":
            return ""
        if b.order == "single":
            both_aromatic = g.atoms[b.i].aromatic and g.atoms[b.j].aromatic
            return "-" if both_aromatic else ""
        return _SYMBOL_FOR[b.order]

    def emit_atom(v: int) -> None:
        order_out.append(v)
        par = parent[v]
        if par is not None:
            emitted_nbrs[v].append(par[0])
        a = g.atoms[v]
        uses_h_slot = a.chirality != "none" and a.n_hydrogens == 1
        if uses_h_slot:
            emitted_nbrs[v].append(_H_SENTINEL)
        for w, bi in ring_partner[v]:
            emitted_nbrs[v].append(w)
        for w, _ in children[v]:
            emitted_nbrs[v].append(w)
        tokens.append(("ATOM", v))
        for w, bi in ring_partner[v]:
            if bi in digit_of:
                tokens.append(digit_of.pop(bi))
                free_digits.insert(0, tokens[-1])
                free_digits.sort()
            else:
                if not free_digits:
                    raise SmilesError("more than nine simultaneously open rings")
                d = free_digits.pop(0)
                digit_of[bi] = d
                tokens.append(bond_token(bi) + d)

    def emit_subtree(v: int) -> None:
        emit_atom(v)
        kids = children[v]
        for k, (w, bi) in enumerate(kids):
            last = k == len(kids) - 1
            if not last:
                tokens.append("(")
            tokens.append(bond_token(bi))
            emit_subtree(w)
            if not last:
                tokens.append(")")

    emit_subtree(root)

    text_parts = []
    for tok in tokens:
        if isinstance(tok, tuple):
            text_parts.append(_atom_text(g, tok[1], ranks, emitted_nbrs[tok[1]]))
        else:
            text_parts.append(tok)
    return "".join(text_parts), order_out


def _atom_text(g: MolGraph, v: int, ranks: list[int], emitted: list) -> str:
    a = g.atoms[v]
    symbol = a.element.lower() if a.aromatic else a.element

    chiral_tag = None
    if a.chirality != "none" and len(emitted) == 4:
        prios = [-1 if x == _H_SENTINEL else ranks[x] for x in emitted]
        if len(set(prios)) == 4:
            chiral_tag = _tag_from_order(emitted, prios, a.chirality)

    bare_ok = (
        a.element in ORGANIC_SUBSET
        and a.formal_charge == 0
        and chiral_tag is None
        and a.n_hydrogens
        == implied_hydrogens(a.element, a.aromatic, g.bond_order_sum(v), g.degree(v))
    )
    if bare_ok:
        return symbol

    parts = ["[", symbol]
    if chiral_tag:
        parts.append(chiral_tag)
    if a.n_hydrogens == 1:
        parts.append("H")
    elif a.n_hydrogens > 1:
        parts.append(f"H{a.n_hydrogens}")
    q = a.formal_charge
    if q == 1:
        parts.append("+")
    elif q == -1:
        parts.append("-")
    elif q > 1:
        parts.append(f"+{q}")
    elif q < -1:
        parts.append(f"-{-q}")
    parts.append("]")
    return "".join(parts)


def load_smiles_corpus(path) -> list[str]:
    """Read a one-molecule-per-line corpus; '#' comments and blanks skipped."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line)
    return out
