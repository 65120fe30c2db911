"""Canonical motif identity.

A motif's key is its fragment serialized with a canonical atom order,
rooted at the attachment atom. The order comes from neighbourhood
refinement with the attachment given a distinguished initial colour;
remaining colour ties are broken by individualization: each tied atom of
the first non-singleton class is provisionally made unique, refinement
recurses, and the lexicographically smallest serialization wins. Equal
keys therefore coincide exactly with attachment-preserving isomorphism.
"""

from __future__ import annotations

import hashlib

from ..molio import MolGraph, morgan_ranks, write_smiles_with_order

# attachment colour 1; individualized atoms get colours from 2 upward
_ATTACHMENT_COLOR = 1

# 64-bit keys: ample for desk-scale vocabularies, collision-checked in tests
KEY_HEX_CHARS = 16


def _discrete(ranks: list[int]) -> bool:
    return len(set(ranks)) == len(ranks)


def _first_tied_class(ranks: list[int]) -> list[int]:
    by_rank: dict[int, list[int]] = {}
    for idx, r in enumerate(ranks):
        by_rank.setdefault(r, []).append(idx)
    for r in sorted(by_rank):
        if len(by_rank[r]) > 1:
            return by_rank[r]
    raise AssertionError("no tied class in a non-discrete colouring")


def canonical_serialization(
    g: MolGraph, attachment: int | None
) -> tuple[str, list[int]]:
    """Minimal rooted serialization and its emission order."""
    best: list[tuple[str, list[int]] | None] = [None]
    base: dict[int, int] = {}
    if attachment is not None:
        base[attachment] = _ATTACHMENT_COLOR

    def search(seed_colors: dict[int, int], next_color: int) -> None:
        ranks = morgan_ranks(g, seed_colors or None)
        if _discrete(ranks):
            root = attachment
            if root is None:
                root = min(range(g.n_atoms), key=lambda i: ranks[i])
            smiles, order = write_smiles_with_order(g, root=root, ranks=ranks)
            if best[0] is None or smiles < best[0][0]:
                best[0] = (smiles, order)
            return
        for atom in _first_tied_class(ranks):
            search({**seed_colors, atom: next_color}, next_color + 1)

    search(base, _ATTACHMENT_COLOR + 1)
    assert best[0] is not None
    return best[0]


def key_of_serialization(smiles: str) -> str:
    return hashlib.sha256(smiles.encode("utf-8")).hexdigest()[:KEY_HEX_CHARS]


def canonical_key(g: MolGraph, attachment: int) -> str:
    """Hash of the attachment-rooted canonical serialization."""
    smiles, _ = canonical_serialization(g, attachment)
    return key_of_serialization(smiles)


def motif_key(motif) -> str:
    """Key for a Motif-shaped object (graph + attachment_atom)."""
    return canonical_key(motif.graph, motif.attachment_atom)
