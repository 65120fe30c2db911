"""Graph construction, ring perception, ranks, and subgraph extraction."""

import numpy as np
import pytest

from molgrow.errors import ValenceError
from molgrow.fixtures import molecule_corpus
from molgrow.molio import (
    Atom,
    Bond,
    MolGraph,
    from_topology,
    induced_subgraph,
    is_isomorphic,
    morgan_ranks,
    parse_smiles,
    with_coords,
)


def brute_force_ring_bonds(g: MolGraph) -> list[bool]:
    """A bond is in a ring iff removing it leaves its endpoints connected."""
    out = []
    for skip, bond in enumerate(g.bonds):
        adj = [[] for _ in range(g.n_atoms)]
        for k, b in enumerate(g.bonds):
            if k != skip:
                adj[b.i].append(b.j)
                adj[b.j].append(b.i)
        seen = {bond.i}
        stack = [bond.i]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        out.append(bond.j in seen)
    return out


RING_CASES = [
    "c1ccccc1",
    "C1CCCCC1",
    "CC1CCCCC1",
    "C1CC2CCC1CC2",          # fused bicyclic
    "C1CCC2(CC1)CCCC2",      # spiro
    "c1ccc2ccccc2c1",        # naphthalene
    "O=C1CCCC1",             # exocyclic double bond stays acyclic
    "CCC",                   # no rings at all
    "C1CC1C1CC1",            # two separate rings joined by a bond
]


@pytest.mark.parametrize("smiles", RING_CASES)
def test_ring_perception_matches_brute_force(smiles):
    g = parse_smiles(smiles)
    assert [b.in_ring for b in g.bonds] == brute_force_ring_bonds(g)


def test_ring_perception_on_corpus():
    for smiles in molecule_corpus(60, seed=99):
        g = parse_smiles(smiles)
        assert [b.in_ring for b in g.bonds] == brute_force_ring_bonds(g)


def test_valence_rejected_on_construction():
    atoms = [Atom(element="C", n_hydrogens=0) for _ in range(6)]
    bonds = [Bond(i=0, j=k, order="single") for k in range(1, 6)]
    with pytest.raises(ValenceError):
        MolGraph(atoms, bonds)


def test_bond_validation():
    a = [Atom(element="C", n_hydrogens=3), Atom(element="C", n_hydrogens=3)]
    with pytest.raises(ValueError):
        MolGraph(a, [Bond(i=0, j=0, order="single")])
    with pytest.raises(ValueError):
        MolGraph(a, [Bond(i=0, j=5, order="single")])
    with pytest.raises(ValueError):
        MolGraph(
            a, [Bond(i=0, j=1, order="single"), Bond(i=1, j=0, order="single")]
        )


def test_morgan_ranks_symmetry():
    benzene = parse_smiles("c1ccccc1")
    assert len(set(morgan_ranks(benzene))) == 1

    toluene = parse_smiles("Cc1ccccc1")
    ranks = morgan_ranks(toluene)
    # methyl, ipso, 2x ortho, 2x meta, para: four orbits of sizes 1,1,2,2
    from collections import Counter

    orbit_sizes = sorted(Counter(ranks).values())
    assert orbit_sizes == [1, 1, 1, 2, 2]


def test_morgan_seed_colors_break_symmetry():
    benzene = parse_smiles("c1ccccc1")
    ranks = morgan_ranks(benzene, seed_colors={0: 1})
    assert ranks[1] == ranks[5]
    assert ranks[2] == ranks[4]
    assert len({ranks[0], ranks[1], ranks[2], ranks[3]}) == 4


def test_induced_subgraph_preserves_attributes():
    g = parse_smiles("Cc1ccccc1")
    ring = [i for i, a in enumerate(g.atoms) if a.aromatic]
    sub, index_map = induced_subgraph(g, ring)
    assert sub.n_atoms == 6
    assert sub.role == "motif"
    assert all(a.aromatic for a in sub.atoms)
    assert len(sub.bonds) == 6
    # the ipso carbon keeps its parent-context hydrogen count (zero)
    ipso_old = next(
        i for i in ring if any(not g.atoms[w].aromatic for w, _ in g.neighbors(i))
    )
    assert sub.atoms[index_map[ipso_old]].n_hydrogens == 0


def test_connected_components():
    g = parse_smiles("CCO")
    assert g.connected_components() == [[0, 1, 2]]
    two = MolGraph(
        [Atom(element="C", n_hydrogens=4), Atom(element="O", n_hydrogens=2)], []
    )
    assert two.connected_components() == [[0], [1]]


def test_from_topology_derives_attributes():
    g = from_topology(["C"] * 6, [(k, (k + 1) % 6, "aromatic") for k in range(6)])
    assert all(a.aromatic for a in g.atoms)
    assert all(a.n_hydrogens == 1 for a in g.atoms)
    assert all(a.hybridization == "sp2" for a in g.atoms)
    assert is_isomorphic(g, parse_smiles("c1ccccc1"))


def test_from_topology_rotatable_defaults():
    butane = from_topology(
        ["C"] * 4, [(0, 1, "single"), (1, 2, "single"), (2, 3, "single")]
    )
    assert [b.rotatable for b in butane.bonds] == [False, True, False]
    ring = from_topology(["C"] * 6, [(k, (k + 1) % 6, "single") for k in range(6)])
    assert not any(b.rotatable for b in ring.bonds)
    forced = from_topology(["C", "C"], [(0, 1, "single", True)])
    assert forced.bonds[0].rotatable


def test_with_coords():
    g = parse_smiles("CCO")
    xyz = np.arange(9.0).reshape(3, 3)
    placed = with_coords(g, xyz)
    assert placed.atoms[2].coords == (6.0, 7.0, 8.0)
    with pytest.raises(ValueError):
        with_coords(g, xyz[:2])


def test_isomorphism_attribute_sensitivity():
    assert is_isomorphic(parse_smiles("CCO"), parse_smiles("OCC"))
    assert not is_isomorphic(parse_smiles("CCO"), parse_smiles("CCN"))
    assert not is_isomorphic(parse_smiles("C=CC"), parse_smiles("CCC"))
    assert not is_isomorphic(parse_smiles("CCO"), parse_smiles("CO"))
    # charge state distinguishes otherwise identical graphs
    assert not is_isomorphic(parse_smiles("[NH4+]"), parse_smiles("N"))


def test_isomorphism_pinned():
    g1 = parse_smiles("CCO")
    g2 = parse_smiles("OCC")
    assert is_isomorphic(g1, g2, pinned=(0, 2))
    assert not is_isomorphic(g1, g2, pinned=(0, 0))


def test_isomorphism_regular_graphs():
    # same atom signatures, different wiring: hexagon vs two triangles
    hexagon = from_topology(["C"] * 6, [(k, (k + 1) % 6, "single") for k in range(6)])
    triangles = from_topology(
        ["C"] * 6,
        [(0, 1, "single"), (1, 2, "single"), (2, 0, "single"),
         (3, 4, "single"), (4, 5, "single"), (5, 3, "single")],
    )
    assert not is_isomorphic(hexagon, triangles)
    rotated = from_topology(
        ["C"] * 6, [((k + 2) % 6, (k + 3) % 6, "single") for k in range(6)]
    )
    assert is_isomorphic(hexagon, rotated)
