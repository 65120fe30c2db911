"""Attribute-preserving graph isomorphism by backtracking search.

Intended for test corpora and motif-key audits (tens of atoms); candidate
ordering and neighbourhood pruning keep typical molecules fast.
"""

from __future__ import annotations

from .graph import MolGraph, morgan_ranks


def _atom_sig(g: MolGraph, idx: int) -> tuple:
    a = g.atoms[idx]
    return (
        a.element,
        a.formal_charge,
        a.n_radical,
        a.aromatic,
        a.n_hydrogens,
        a.chirality,
        g.degree(idx),
    )


def is_isomorphic(
    g1: MolGraph, g2: MolGraph, pinned: tuple[int, int] | None = None
) -> bool:
    """True when an attribute- and bond-order-preserving bijection exists.

    ``pinned`` optionally forces one correspondence (used to compare motifs
    with distinguished attachment atoms).
    """
    n = g1.n_atoms
    if n != g2.n_atoms or len(g1.bonds) != len(g2.bonds):
        return False

    sig1 = [_atom_sig(g1, i) for i in range(n)]
    sig2 = [_atom_sig(g2, i) for i in range(n)]
    if sorted(sig1) != sorted(sig2):
        return False
    if pinned is not None and sig1[pinned[0]] != sig2[pinned[1]]:
        return False

    # refinement ranks prune the candidate sets; rank multisets must agree
    seed1 = {pinned[0]: 1} if pinned else None
    seed2 = {pinned[1]: 1} if pinned else None
    r1 = morgan_ranks(g1, seed1)
    r2 = morgan_ranks(g2, seed2)
    if sorted(r1) != sorted(r2):
        return False

    candidates: list[list[int]] = []
    for i in range(n):
        cand = [j for j in range(n) if sig2[j] == sig1[i] and r2[j] == r1[i]]
        if pinned is not None:
            if i == pinned[0]:
                cand = [pinned[1]] if pinned[1] in cand else []
            else:
                cand = [j for j in cand if j != pinned[1]]
        if not cand:
            return False
        candidates.append(cand)

    adj1 = [
        {w: g1.bonds[bi].order for w, bi in g1.neighbors(i)} for i in range(n)
    ]
    adj2 = [
        {w: g2.bonds[bi].order for w, bi in g2.neighbors(i)} for i in range(n)
    ]

    order = sorted(range(n), key=lambda i: len(candidates[i]))
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def extend(k: int) -> bool:
        if k == n:
            return True
        i = order[k]
        for j in candidates[i]:
            if j in used:
                continue
            ok = True
            for w, bond_order in adj1[i].items():
                if w in mapping:
                    if adj2[j].get(mapping[w]) != bond_order:
                        ok = False
                        break
            if not ok:
                continue
            # degree match guarantees no extra bonds on the g2 side
            mapping[i] = j
            used.add(j)
            if extend(k + 1):
                return True
            del mapping[i]
            used.discard(j)
        return False

    return extend(0)
