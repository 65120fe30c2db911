"""Stochastic decomposition of molecules into motifs.

Rule set: bonds between ring-system atoms and chain atoms are cut, except
that exocyclic double-bonded oxygen stays with its ring. Ring fragments
become motifs whole. Chain fragments are eaten iteratively: a seed atom is
drawn with weight (heavy degree + sum of bond orders, measured on the
intact molecule), a topological radius is drawn uniformly from
{0..max_radius}, and the motif grows shell-by-shell either through a
single randomly chosen seed bond (directional) or through all of them
(isotropic); its peripheral bonds are then cut and the member atoms leave
the pool.

Every cut bond is a bridge, so the motif adjacency always forms a tree on
a connected molecule.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import MotifSizeError
from ..molio import MolGraph, induced_subgraph, morgan_ranks
from ..molio.elements import hybridization_label
from .canon import canonical_key
from .policy import ShredPolicy

MAX_MOTIF_ATOMS = 20


@dataclass(frozen=True)
class Motif:
    """A fragment plus the atom through which it bonds to a growing core."""

    graph: MolGraph
    attachment_atom: int

    def __post_init__(self) -> None:
        g = self.graph
        if g.role != "motif":
            raise ValueError("motif graphs must carry role='motif'")
        if len(g.connected_components()) != 1:
            raise ValueError("motif graph must be connected")
        if not 0 <= self.attachment_atom < g.n_atoms:
            raise ValueError(f"attachment atom {self.attachment_atom} out of range")
        if not g.can_accept_bond(self.attachment_atom):
            raise ValueError("attachment atom cannot accept another bond")
        if g.n_atoms > MAX_MOTIF_ATOMS:
            raise MotifSizeError(
                f"motif has {g.n_atoms} heavy atoms (cap {MAX_MOTIF_ATOMS})"
            )


@dataclass(frozen=True)
class MotifEdge:
    """One cut bond: which motifs it joined and through which atoms."""

    motif_a: int
    motif_b: int
    atom_a: int  # original atom index inside motif_a
    atom_b: int  # original atom index inside motif_b
    order: str


@dataclass(frozen=True)
class ShredResult:
    source: MolGraph
    motif_atoms: tuple[tuple[int, ...], ...]  # original indices, per motif
    edges: tuple[MotifEdge, ...]

    @property
    def n_motifs(self) -> int:
        return len(self.motif_atoms)

    def adjacency(self) -> np.ndarray:
        mat = np.zeros((self.n_motifs, self.n_motifs), dtype=bool)
        for e in self.edges:
            mat[e.motif_a, e.motif_b] = mat[e.motif_b, e.motif_a] = True
        return mat

    def motif_graph(self, k: int) -> tuple[MolGraph, dict[int, int]]:
        """Standalone fragment graph for motif k plus original->local map."""
        graph, index_map = induced_subgraph(self.source, list(self.motif_atoms[k]))
        return as_fragment(graph), index_map

    def observations(self) -> list[Motif]:
        """One Motif per (motif, incident cut bond): what the vocabulary counts.

        A fragment with no cut bonds (whole single-fragment molecule) is
        observed once through its first bond-capable atom in canonical
        order, or not at all if every valence is saturated.
        """
        incident: list[list[int]] = [[] for _ in range(self.n_motifs)]
        for e in self.edges:
            incident[e.motif_a].append(e.atom_a)
            incident[e.motif_b].append(e.atom_b)

        out: list[Motif] = []
        for k in range(self.n_motifs):
            graph, index_map = self.motif_graph(k)
            if incident[k]:
                for orig_atom in incident[k]:
                    out.append(Motif(graph, index_map[orig_atom]))
            else:
                ranks = morgan_ranks(graph)
                capable = [
                    i for i in range(graph.n_atoms) if graph.can_accept_bond(i)
                ]
                if capable:
                    # tie-break by key so the choice is permutation invariant
                    top = min(ranks[i] for i in capable)
                    tied = [i for i in capable if ranks[i] == top]
                    attachment = min(
                        tied, key=lambda i: canonical_key(graph, i)
                    )
                    out.append(Motif(graph, attachment))
        return out


def as_fragment(g: MolGraph) -> MolGraph:
    """Recompute derived attributes as if the graph stood alone.

    Hydrogen counts and aromatic flags are preserved (open valences from
    cut bonds survive; ring systems are never split), but hybridization
    and conjugation are re-derived from the fragment's own bonds, and
    stereo labels that lost a neighbour to a cut are dropped. This makes a
    fragment's features independent of the molecule it came from, so equal
    keys imply equal model inputs.
    """
    n = g.n_atoms
    pi_orders = [0] * n
    for b in g.bonds:
        credit = {"double": 1, "triple": 2}.get(b.order, 0)
        pi_orders[b.i] += credit
        pi_orders[b.j] += credit

    def pi_beyond(idx: int, minus: int) -> bool:
        return g.atoms[idx].aromatic or (pi_orders[idx] - minus) > 0

    ranks = morgan_ranks(g)
    atoms = []
    for idx, atom in enumerate(g.atoms):
        chirality = atom.chirality
        if chirality != "none":
            partners = g.degree(idx) + atom.n_hydrogens
            priorities = [ranks[w] for w, _ in g.neighbors(idx)]
            if atom.n_hydrogens == 1:
                priorities.append(-1)
            if (
                partners != 4
                or atom.n_hydrogens > 1
                or len(set(priorities)) != len(priorities)
            ):
                chirality = "none"
        atoms.append(
            replace(
                atom,
                hybridization=hybridization_label(
                    atom.element, atom.aromatic, pi_orders[idx],
                    g.degree(idx), atom.n_hydrogens,
                ),
                chirality=chirality,
            )
        )

    bonds = []
    for b in g.bonds:
        own_pi = {"double": 1, "triple": 2}.get(b.order, 0)
        conj = b.order == "aromatic" or (
            pi_beyond(b.i, own_pi) and pi_beyond(b.j, own_pi)
        )
        bonds.append(replace(b, conjugated=conj))
    return MolGraph(atoms, bonds, role="motif")


def _seed_weights(g: MolGraph) -> np.ndarray:
    w = np.array(
        [g.degree(i) + g.bond_order_sum(i) for i in range(g.n_atoms)],
        dtype=np.float64,
    )
    return np.maximum(w, 1.0)  # isolated atoms still need a draw


def _grow_from_seed(
    seed: int,
    remaining: set[int],
    adj: list[list[int]],
    radius: int,
    first_bond_only: int | None,
) -> set[int]:
    member = {seed}
    if radius == 0:
        return member
    if first_bond_only is not None:
        frontier = {first_bond_only} & remaining
        member |= frontier
        depth = 1
    else:
        frontier = {w for w in adj[seed] if w in remaining}
        member |= frontier
        depth = 1
    while depth < radius and frontier:
        nxt = set()
        for v in frontier:
            for w in adj[v]:
                if w in remaining and w not in member:
                    nxt.add(w)
        member |= nxt
        frontier = nxt
        depth += 1
    return member


def shred(
    g: MolGraph,
    policy: ShredPolicy,
    rng: np.random.Generator | None = None,
) -> ShredResult:
    if rng is None:
        rng = np.random.default_rng(policy.rng_seed)
    n = g.n_atoms

    ring_side = [False] * n
    for b in g.bonds:
        if b.in_ring:
            ring_side[b.i] = ring_side[b.j] = True
    # exocyclic =O travels with its ring
    for b in g.bonds:
        if b.order == "double" and not b.in_ring:
            for o_end, ring_end in ((b.i, b.j), (b.j, b.i)):
                if (
                    g.atoms[o_end].element == "O"
                    and not ring_side[o_end]
                    and ring_side[ring_end]
                ):
                    ring_side[o_end] = True

    cut = [
        bi
        for bi, b in enumerate(g.bonds)
        if ring_side[b.i] != ring_side[b.j]
    ]
    cut_set = set(cut)

    # fragments after the ring/chain cuts
    adj_frag: list[list[int]] = [[] for _ in range(n)]
    for bi, b in enumerate(g.bonds):
        if bi not in cut_set:
            adj_frag[b.i].append(b.j)
            adj_frag[b.j].append(b.i)
    frag_of = [-1] * n
    fragments: list[list[int]] = []
    for start in range(n):
        if frag_of[start] != -1:
            continue
        comp = [start]
        frag_of[start] = len(fragments)
        stack = [start]
        while stack:
            v = stack.pop()
            for w in adj_frag[v]:
                if frag_of[w] == -1:
                    frag_of[w] = len(fragments)
                    comp.append(w)
                    stack.append(w)
        fragments.append(sorted(comp))

    weights = _seed_weights(g)
    motif_atoms: list[tuple[int, ...]] = []
    motif_of = [-1] * n

    for frag in fragments:
        if any(ring_side[v] for v in frag):
            if len(frag) > MAX_MOTIF_ATOMS:
                raise MotifSizeError(
                    f"ring system of {len(frag)} atoms exceeds cap {MAX_MOTIF_ATOMS}"
                )
            for v in frag:
                motif_of[v] = len(motif_atoms)
            motif_atoms.append(tuple(frag))
            continue

        remaining = set(frag)
        while remaining:
            pool = sorted(remaining)
            w = weights[pool]
            seed = pool[int(rng.choice(len(pool), p=w / w.sum()))]
            radius = int(rng.integers(0, policy.max_radius + 1))
            first_bond_only = None
            if rng.random() < policy.directional_prob:
                nbrs = sorted(w for w in adj_frag[seed] if w in remaining)
                if nbrs:
                    first_bond_only = nbrs[int(rng.integers(len(nbrs)))]
            member = _grow_from_seed(
                seed, remaining, adj_frag, radius, first_bond_only
            )
            for v in sorted(member):
                motif_of[v] = len(motif_atoms)
            motif_atoms.append(tuple(sorted(member)))
            remaining -= member

    # peripheral chain bonds join the ring/chain cuts in the adjacency
    edges = []
    for bi, b in enumerate(g.bonds):
        if bi in cut_set or motif_of[b.i] != motif_of[b.j]:
            edges.append(
                MotifEdge(
                    motif_a=motif_of[b.i],
                    motif_b=motif_of[b.j],
                    atom_a=b.i,
                    atom_b=b.j,
                    order=b.order,
                )
            )

    return ShredResult(source=g, motif_atoms=tuple(motif_atoms), edges=tuple(edges))
