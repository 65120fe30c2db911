"""Molecular graph containers and topology utilities.

All types are immutable after construction. A MolGraph recomputes ring
membership itself (a bond is in a ring exactly when it is not a bridge), so
the ``in_ring`` flag is always consistent with the topology regardless of
what the caller supplied.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..errors import ValenceError
from .elements import (
    ORDER_VALUE,
    allowed_valence,
    hybridization_label,
    implied_hydrogens,
    pi_increment,
)

CHIRALITIES = ("none", "R", "S")


@dataclass(frozen=True)
class Atom:
    element: str
    formal_charge: int = 0
    n_radical: int = 0
    hybridization: str = "sp3"
    aromatic: bool = False
    n_hydrogens: int = 0
    chirality: str = "none"
    coords: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    order: str
    conjugated: bool = False
    in_ring: bool = False
    rotatable: bool = False

    def other(self, atom_idx: int) -> int:
        return self.j if atom_idx == self.i else self.i


class MolGraph:
    """Atoms plus covalent bonds with derived adjacency and ring flags."""

    __slots__ = ("atoms", "bonds", "role", "_adj")

    def __init__(self, atoms: list[Atom], bonds: list[Bond], role: str = "ligand"):
        if role not in ("ligand", "protein", "motif"):
            raise ValueError(f"unknown graph role {role!r}")
        n = len(atoms)
        seen_pairs: set[tuple[int, int]] = set()
        for b in bonds:
            if b.i == b.j:
                raise ValueError(f"bond joins atom {b.i} to itself")
            if not (0 <= b.i < n and 0 <= b.j < n):
                raise ValueError(f"bond ({b.i}, {b.j}) out of range for {n} atoms")
            pair = (min(b.i, b.j), max(b.i, b.j))
            if pair in seen_pairs:
                raise ValueError(f"duplicate bond between atoms {pair}")
            seen_pairs.add(pair)
            if b.order not in ORDER_VALUE:
                raise ValueError(f"unknown bond order {b.order!r}")

        ring_flags = _non_bridge_flags(n, bonds)
        self.atoms: tuple[Atom, ...] = tuple(atoms)
        self.bonds: tuple[Bond, ...] = tuple(
            replace(b, in_ring=flag) for b, flag in zip(bonds, ring_flags)
        )
        self.role = role

        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for bi, b in enumerate(self.bonds):
            adj[b.i].append((b.j, bi))
            adj[b.j].append((b.i, bi))
        self._adj = tuple(tuple(v) for v in adj)

        _check_valences(self)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self, idx: int) -> tuple[tuple[int, int], ...]:
        """(neighbour index, bond index) pairs in bond-insertion order."""
        return self._adj[idx]

    def degree(self, idx: int) -> int:
        return len(self._adj[idx])

    def bond_order_sum(self, idx: int) -> int:
        """Sum of bond orders at an atom, aromatic counted as one."""
        return sum(ORDER_VALUE[self.bonds[bi].order] for _, bi in self._adj[idx])

    def open_valence(self, idx: int) -> int:
        """Bonding slots still free at an atom (hydrogens are not slots here:
        an atom with spare capacity beyond bonds+H can accept a new bond)."""
        a = self.atoms[idx]
        cap = allowed_valence(a.element, a.formal_charge)
        if cap is None:
            return 0
        used = (
            self.bond_order_sum(idx)
            + pi_increment(a.element, a.aromatic, self.degree(idx), a.n_hydrogens)
            + a.n_hydrogens
        )
        return max(0, cap - used)

    def can_accept_bond(self, idx: int) -> bool:
        """True when the atom can take one more single bond, giving up an
        implicit hydrogen if no free slot remains."""
        return self.open_valence(idx) > 0 or self.atoms[idx].n_hydrogens > 0

    def atom_in_ring(self, idx: int) -> bool:
        return any(self.bonds[bi].in_ring for _, bi in self._adj[idx])

    def connected_components(self) -> list[list[int]]:
        seen = [False] * self.n_atoms
        comps = []
        for start in range(self.n_atoms):
            if seen[start]:
                continue
            stack, comp = [start], []
            seen[start] = True
            while stack:
                v = stack.pop()
                comp.append(v)
                for w, _ in self._adj[v]:
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def with_role(self, role: str) -> "MolGraph":
        return MolGraph(list(self.atoms), list(self.bonds), role)


def _non_bridge_flags(n: int, bonds: list[Bond]) -> list[bool]:
    """True per bond when it lies on a cycle (iterative bridge finding)."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for bi, b in enumerate(bonds):
        adj[b.i].append((b.j, bi))
        adj[b.j].append((b.i, bi))

    disc = [-1] * n
    low = [0] * n
    ptr = [0] * n
    flags = [True] * len(bonds)
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        frames: list[tuple[int, int]] = [(root, -1)]
        while frames:
            v, parent_bond = frames[-1]
            if disc[v] == -1:
                disc[v] = low[v] = timer
                timer += 1
            descended = False
            while ptr[v] < len(adj[v]):
                w, bi = adj[v][ptr[v]]
                ptr[v] += 1
                if bi == parent_bond:
                    continue
                if disc[w] == -1:
                    frames.append((w, bi))
                    descended = True
                    break
                low[v] = min(low[v], disc[w])
            if not descended:
                frames.pop()
                if parent_bond != -1:
                    u = bonds[parent_bond].other(v)
                    low[u] = min(low[u], low[v])
                    if low[v] > disc[u]:
                        flags[parent_bond] = False
    return flags


def _check_valences(g: MolGraph) -> None:
    for idx, atom in enumerate(g.atoms):
        if atom.n_hydrogens < 0:
            raise ValenceError(f"atom {idx} ({atom.element}) has negative hydrogen count")
        cap = allowed_valence(atom.element, atom.formal_charge)
        if cap is None:
            continue
        used = (
            g.bond_order_sum(idx)
            + pi_increment(atom.element, atom.aromatic, g.degree(idx), atom.n_hydrogens)
            + atom.n_hydrogens
        )
        if used > cap:
            raise ValenceError(
                f"atom {idx} ({atom.element}, charge {atom.formal_charge:+d}) uses "
                f"valence {used}, allowed {cap}"
            )


def morgan_ranks(g: MolGraph, seed_colors: dict[int, int] | None = None) -> list[int]:
    """Permutation-invariant atom ranks by iterative neighbourhood refinement.

    Atoms start from their local attribute tuple (optionally perturbed by
    ``seed_colors``) and are repeatedly re-coloured by their sorted
    neighbourhood signatures until the partition stabilises. Equal ranks mean
    refinement could not distinguish the atoms.
    """
    n = g.n_atoms
    initial = []
    for idx, a in enumerate(g.atoms):
        extra = seed_colors.get(idx, 0) if seed_colors else 0
        initial.append(
            (a.element, a.formal_charge, a.aromatic, a.n_hydrogens, g.degree(idx), extra)
        )
    order = sorted(set(initial))
    colors = [order.index(t) for t in initial]

    for _ in range(n):
        signatures = []
        for idx in range(n):
            nbr = sorted(
                (g.bonds[bi].order, colors[w]) for w, bi in g.neighbors(idx)
            )
            signatures.append((colors[idx], tuple(nbr)))
        palette = sorted(set(signatures))
        new_colors = [palette.index(s) for s in signatures]
        if len(set(new_colors)) == len(set(colors)):
            colors = new_colors
            break
        colors = new_colors
    return colors


def from_topology(
    elements: list[str],
    bonds: list[tuple],
    charges: list[int] | None = None,
    coords: list[tuple[float, float, float]] | None = None,
    role: str = "ligand",
) -> MolGraph:
    """Build a graph from elements plus explicit heavy-atom bonds.

    Each bond is (i, j, order) or (i, j, order, rotatable). Aromatic flags
    come from aromatic bond orders, hydrogen counts fill to the default
    valence, and hybridization/conjugation follow the same rules the SMILES
    parser applies, so all construction paths agree on derived attributes.
    Rotatable flags left unspecified default to acyclic single bonds whose
    two ends each have another heavy neighbour.
    """
    n = len(elements)
    charges = charges if charges is not None else [0] * n
    pairs = [(int(b[0]), int(b[1]), str(b[2])) for b in bonds]
    explicit_rot = [bool(b[3]) if len(b) == 4 else None for b in bonds]

    provisional = [Bond(i=i, j=j, order="single") for i, j, _ in pairs]
    ring_flags = _non_bridge_flags(n, provisional)

    aromatic = [False] * n
    order_sum = [0] * n
    sigma_degree = [0] * n
    pi_orders = [0] * n
    for i, j, order in pairs:
        for idx in (i, j):
            order_sum[idx] += ORDER_VALUE[order]
            sigma_degree[idx] += 1
            if order == "double":
                pi_orders[idx] += 1
            elif order == "triple":
                pi_orders[idx] += 2
            if order == "aromatic":
                aromatic[idx] = True

    n_hydrogens = [
        implied_hydrogens(elements[idx], aromatic[idx], order_sum[idx], sigma_degree[idx])
        for idx in range(n)
    ]

    def pi_beyond(idx: int, minus: int) -> bool:
        return aromatic[idx] or (pi_orders[idx] - minus) > 0

    atoms = []
    for idx in range(n):
        atoms.append(
            Atom(
                element=elements[idx],
                formal_charge=charges[idx],
                hybridization=hybridization_label(
                    elements[idx], aromatic[idx], pi_orders[idx],
                    sigma_degree[idx], n_hydrogens[idx],
                ),
                aromatic=aromatic[idx],
                n_hydrogens=n_hydrogens[idx],
                coords=None if coords is None else coords[idx],
            )
        )

    built = []
    for (i, j, order), in_ring, rot in zip(pairs, ring_flags, explicit_rot):
        own_pi = {"double": 1, "triple": 2}.get(order, 0)
        conj = order == "aromatic" or (pi_beyond(i, own_pi) and pi_beyond(j, own_pi))
        if rot is None:
            rot = (
                order == "single"
                and not in_ring
                and sigma_degree[i] >= 2
                and sigma_degree[j] >= 2
            )
        built.append(Bond(i=i, j=j, order=order, conjugated=conj, rotatable=rot))

    return MolGraph(atoms, built, role=role)


def with_coords(g: MolGraph, coords) -> MolGraph:
    """Copy of the graph with positions attached, one (x, y, z) per atom."""
    if len(coords) != g.n_atoms:
        raise ValueError(f"{len(coords)} coordinate rows for {g.n_atoms} atoms")
    atoms = [
        replace(a, coords=(float(c[0]), float(c[1]), float(c[2])))
        for a, c in zip(g.atoms, coords)
    ]
    return MolGraph(atoms, list(g.bonds), role=g.role)


def induced_subgraph(
    g: MolGraph, atom_indices: list[int], role: str = "motif"
) -> tuple[MolGraph, dict[int, int]]:
    """Copy the subgraph on the given atoms, preserving atom/bond attributes.

    Returns the new graph and the old->new index map. Ring flags are
    recomputed by construction; other derived attributes carry over so a
    fragment keeps the chemistry of its parent context.
    """
    index_map = {old: new for new, old in enumerate(atom_indices)}
    atoms = [g.atoms[i] for i in atom_indices]
    bonds = []
    for b in g.bonds:
        if b.i in index_map and b.j in index_map:
            bonds.append(replace(b, i=index_map[b.i], j=index_map[b.j]))
    return MolGraph(atoms, bonds, role), index_map
