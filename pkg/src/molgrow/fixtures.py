"""Deterministic desk-scale fixture generation.

Everything here exists so the pipeline, the tests, and the acceptance runs
have data with known structure: a molecule corpus whose substituent choice
depends on the attachment context (so a context-aware model has something
to learn), a frequency-shifted variant of the same chemistry (so transfer
has a measurable direction), and synthetic ligand-protein complexes with
pocket atoms planted on both sides of the contact thresholds.

All sampling is driven by explicit seeds; identical seeds give identical
files byte for byte.
"""

from __future__ import annotations

import numpy as np

from .molio import Complex, MolGraph, from_topology, with_coords, write_smiles
from .molio.complexes import coords_array, dump_complexes

BOND_LENGTH = 1.5

# fragment library: elements, internal bonds; attachment is always atom 0
_FRAGMENTS: dict[str, tuple[tuple[str, ...], tuple[tuple, ...]]] = {
    "methyl": (("C",), ()),
    "ethyl": (("C", "C"), ((0, 1, "single"),)),
    "hydroxyl": (("O",), ()),
    "amino": (("N",), ()),
    "fluoro": (("F",), ()),
    "chloro": (("Cl",), ()),
    "methoxy": (("O", "C"), ((0, 1, "single"),)),
    "carboxyl": (("C", "O", "O"), ((0, 1, "double"), (0, 2, "single"))),
    "nitrile": (("C", "N"), ((0, 1, "triple"),)),
    "amide": (("C", "O", "N"), ((0, 1, "double"), (0, 2, "single"))),
}


def _ring(m: int, order: str) -> tuple[tuple, ...]:
    return tuple((k, (k + 1) % m, order) for k in range(m))


# scaffolds: elements, bonds, substitutable positions as (atom, context tag)
_SCAFFOLDS: tuple[tuple[str, tuple, tuple, tuple, float], ...] = (
    (
        "arene",
        ("C",) * 6,
        _ring(6, "aromatic"),
        tuple((k, "arom") for k in range(6)),
        0.26,
    ),
    (
        "azine",
        ("C", "C", "C", "N", "C", "C"),
        _ring(6, "aromatic"),
        tuple((k, "arom") for k in (0, 1, 2, 4, 5)),
        0.12,
    ),
    (
        "thiophene",
        ("C", "C", "C", "C", "S"),
        _ring(5, "aromatic"),
        tuple((k, "arom") for k in range(4)),
        0.08,
    ),
    (
        "furan",
        ("C", "C", "C", "C", "O"),
        _ring(5, "aromatic"),
        tuple((k, "arom") for k in range(4)),
        0.06,
    ),
    (
        "cyclohexane",
        ("C",) * 6,
        _ring(6, "single"),
        tuple((k, "sp3") for k in range(6)),
        0.14,
    ),
    (
        "piperidine",
        ("C", "C", "C", "N", "C", "C"),
        _ring(6, "single"),
        tuple((k, "sp3") for k in (0, 1, 2, 4, 5)),
        0.08,
    ),
    (
        # cyclopentanone: ring ketone exercises the exocyclic =O convention
        "ketone_ring",
        ("C", "C", "C", "C", "C", "O"),
        _ring(5, "single") + ((0, 5, "double"),),
        tuple((k, "sp3") for k in (1, 2, 3, 4)),
        0.08,
    ),
    (
        "chain",
        ("C", "C", "C", "C"),
        ((0, 1, "single"), (1, 2, "single"), (2, 3, "single")),
        tuple((k, "sp3") for k in range(4)),
        0.12,
    ),
    (
        "amide_link",
        ("C", "O", "N", "C"),
        ((0, 1, "double"), (0, 2, "single"), (2, 3, "single")),
        ((0, "acyl"), (3, "sp3")),
        0.06,
    ),
)

# context-conditional substituent distributions: the learnable 2D signal
_SUBSTITUENT_TABLES: dict[str, dict[str, tuple[tuple[str, float], ...]]] = {
    "base": {
        "arom": (
            ("fluoro", 0.24), ("chloro", 0.18), ("methyl", 0.30),
            ("methoxy", 0.12), ("amino", 0.10), ("nitrile", 0.06),
        ),
        "sp3": (
            ("methyl", 0.30), ("hydroxyl", 0.25), ("ethyl", 0.15),
            ("amino", 0.12), ("carboxyl", 0.10), ("fluoro", 0.08),
        ),
        "acyl": (("amino", 0.50), ("methoxy", 0.30), ("methyl", 0.20)),
    },
    # shifted domain: same chemistry, sharply different motif frequencies
    "shift": {
        "arom": (
            ("fluoro", 0.04), ("chloro", 0.04), ("methyl", 0.08),
            ("methoxy", 0.10), ("amino", 0.38), ("nitrile", 0.36),
        ),
        "sp3": (
            ("methyl", 0.08), ("hydroxyl", 0.08), ("ethyl", 0.06),
            ("amino", 0.20), ("carboxyl", 0.46), ("fluoro", 0.12),
        ),
        "acyl": (("amino", 0.10), ("methoxy", 0.20), ("methyl", 0.70)),
    },
}


def _weighted(rng: np.random.Generator, table: tuple[tuple[str, float], ...]) -> str:
    names = [t[0] for t in table]
    weights = np.array([t[1] for t in table], dtype=np.float64)
    return names[int(rng.choice(len(names), p=weights / weights.sum()))]


class _Builder:
    def __init__(self) -> None:
        self.elements: list[str] = []
        self.bonds: list[tuple] = []
        self.positions: list[tuple[int, str]] = []

    def add_scaffold(self, scaffold) -> None:
        _, elements, bonds, positions, _ = scaffold
        off = len(self.elements)
        self.elements.extend(elements)
        self.bonds.extend((i + off, j + off, order) for i, j, order in bonds)
        self.positions.extend((atom + off, tag) for atom, tag in positions)

    def take_position(self, rng: np.random.Generator) -> tuple[int, str]:
        k = int(rng.integers(len(self.positions)))
        return self.positions.pop(k)

    def attach(self, atom: int, fragment_name: str) -> None:
        elements, bonds = _FRAGMENTS[fragment_name]
        off = len(self.elements)
        self.elements.extend(elements)
        self.bonds.extend((i + off, j + off, order) for i, j, order in bonds)
        self.bonds.append((atom, off, "single"))

    def build(self) -> MolGraph:
        return from_topology(self.elements, self.bonds)


def sample_molecule(
    rng: np.random.Generator, domain: str = "base"
) -> tuple[MolGraph, str]:
    """One random molecule plus the name of its primary scaffold."""
    tables = _SUBSTITUENT_TABLES[domain]
    weights = np.array([s[-1] for s in _SCAFFOLDS])
    pick = int(rng.choice(len(_SCAFFOLDS), p=weights / weights.sum()))
    scaffold = _SCAFFOLDS[pick]
    family = scaffold[0]

    b = _Builder()
    b.add_scaffold(scaffold)

    if rng.random() < 0.30:
        second = _SCAFFOLDS[int(rng.choice(len(_SCAFFOLDS), p=weights / weights.sum()))]
        atom_a, _ = b.take_position(rng)
        off_positions = len(b.positions)
        b.add_scaffold(second)
        k = off_positions + int(rng.integers(len(b.positions) - off_positions))
        atom_b, _ = b.positions.pop(k)
        b.bonds.append((atom_a, atom_b, "single"))

    n_sub = int(rng.integers(1, 4))
    for _ in range(min(n_sub, len(b.positions))):
        atom, tag = b.take_position(rng)
        b.attach(atom, _weighted(rng, tables[tag]))

    return b.build(), family


def molecule_corpus(n: int, seed: int, domain: str = "base") -> list[str]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        graph, _ = sample_molecule(rng, domain)
        out.append(write_smiles(graph))
    return out


def write_molecule_corpus(path, n: int, seed: int, domain: str = "base") -> None:
    lines = molecule_corpus(n, seed, domain)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# synthetic corpus: n={n} seed={seed} domain={domain}\n")
        fh.write("\n".join(lines) + "\n")


def embed_coords(g: MolGraph, seed: int) -> np.ndarray:
    """Crude deterministic 3D embedding with ~1.5 A mean bond length."""
    import networkx as nx

    if g.n_atoms == 1:
        return np.zeros((1, 3))
    nxg = nx.Graph()
    nxg.add_nodes_from(range(g.n_atoms))
    nxg.add_edges_from((bond.i, bond.j) for bond in g.bonds)
    layout = nx.spring_layout(nxg, dim=3, seed=seed)
    xyz = np.array([layout[i] for i in range(g.n_atoms)], dtype=np.float64)
    lengths = [
        float(np.linalg.norm(xyz[b.i] - xyz[b.j])) for b in g.bonds
    ]
    if lengths:
        xyz *= BOND_LENGTH / (sum(lengths) / len(lengths))
    return xyz - xyz.mean(axis=0)


def _unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _pocket(
    rng: np.random.Generator, ligand_xyz: np.ndarray, n_chains: int
) -> tuple[list[str], list[tuple], np.ndarray]:
    """Short heavy-atom chains in a shell around the ligand.

    Half the chains start inside the close-contact threshold (< 3.5 A from
    some ligand atom), the rest clearly outside; every atom keeps >= 3.0 A
    from the ligand so placements stay physical.
    """
    elements: list[str] = []
    bonds: list[tuple] = []
    placed: list[np.ndarray] = []
    element_pool = ("C", "C", "C", "N", "O", "S")

    for chain in range(n_chains):
        start = None
        for _ in range(60):
            anchor = ligand_xyz[int(rng.integers(len(ligand_xyz)))]
            if chain % 2 == 0:
                dist = rng.uniform(3.05, 3.45)
            else:
                dist = rng.uniform(4.8, 7.2)
            cand = anchor + dist * _unit(rng)
            far_from_ligand = np.linalg.norm(ligand_xyz - cand, axis=1).min() >= 3.0
            clear_of_pocket = (
                not placed
                or min(np.linalg.norm(p - cand) for p in placed) >= 2.2
            )
            if far_from_ligand and clear_of_pocket:
                start = cand
                break
        if start is None:
            continue

        first = len(elements)
        elements.append(str(rng.choice(element_pool)))
        placed.append(start)
        prev = first
        for _ in range(int(rng.integers(2, 5))):
            ok = None
            for _ in range(40):
                cand = placed[prev] + BOND_LENGTH * _unit(rng)
                if np.linalg.norm(ligand_xyz - cand, axis=1).min() < 3.0:
                    continue
                others = [
                    p for k, p in enumerate(placed) if k != prev
                ]
                if others and min(np.linalg.norm(p - cand) for p in others) < 1.2:
                    continue
                ok = cand
                break
            if ok is None:
                break
            idx = len(elements)
            elements.append(str(rng.choice(element_pool)))
            placed.append(ok)
            bonds.append((prev, idx, "single"))
            prev = idx

    return elements, bonds, np.array(placed).reshape(-1, 3)


def sample_complex(rng: np.random.Generator, cid: str) -> Complex:
    ligand_graph, family = sample_molecule(rng)
    ligand_xyz = embed_coords(ligand_graph, seed=int(rng.integers(2**31 - 1)))
    ligand = with_coords(ligand_graph, ligand_xyz)

    for _ in range(20):
        els, bonds, xyz = _pocket(rng, ligand_xyz, n_chains=int(rng.integers(6, 10)))
        if len(els) >= 12:
            break
    protein = with_coords(from_topology(els, bonds, role="protein"), xyz)
    return Complex(cid, family, ligand, protein)


def complex_corpus(n: int, seed: int) -> list[Complex]:
    rng = np.random.default_rng(seed)
    return [sample_complex(rng, f"cpx{i:04d}") for i in range(n)]


def write_complex_corpus(path, n: int, seed: int) -> None:
    dump_complexes(complex_corpus(n, seed), path)


def chain_molecule(n_atoms: int) -> MolGraph:
    """Unbranched all-carbon chain; the standard noise-statistics testbed."""
    bonds = [(k, k + 1, "single") for k in range(n_atoms - 1)]
    return from_topology(["C"] * n_atoms, bonds)


# ten single-atom motifs, each with at least one free valence slot
PLANTED_ELEMENTS = ("N", "O", "S", "F", "Cl", "Br", "I", "P", "B", "Si")
MARKER_OFFSET = 3     # marker element = ligand element rotated by this much
MARKER_GAP = 3.0      # marker to its own ligand atom, Angstrom


def _rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0.0:
        q[:, 0] = -q[:, 0]
    return q


def planted_complexes(n: int, seed: int) -> list[Complex]:
    """Complexes whose growable element is readable only from the pocket.

    Each ligand is a two-atom chain with both elements drawn independently
    from PLANTED_ELEMENTS, so every topological context sees the same flat
    truth distribution. A protein marker sits MARKER_GAP beyond each end
    and carries that end's element under a fixed rotation of the element
    set: whichever atom is grown, the marker across the chain names the
    truth, and nothing else does. Poses get a random rigid motion so no
    frame is special.
    """
    rng = np.random.default_rng(seed)
    k = len(PLANTED_ELEMENTS)
    lig_xyz = np.array([[0.0, 0.0, 0.0], [BOND_LENGTH, 0.0, 0.0]])
    prot_xyz = np.array(
        [[-MARKER_GAP, 0.0, 0.0], [BOND_LENGTH + MARKER_GAP, 0.0, 0.0]]
    )
    out = []
    for idx in range(n):
        i, j = int(rng.integers(k)), int(rng.integers(k))
        rot = _rotation(rng)
        shift = rng.normal(scale=4.0, size=3)
        lx = lig_xyz @ rot.T + shift
        px = prot_xyz @ rot.T + shift
        ligand = from_topology(
            [PLANTED_ELEMENTS[i], PLANTED_ELEMENTS[j]],
            [(0, 1, "single")],
            coords=[tuple(p) for p in lx],
        )
        protein = from_topology(
            [
                PLANTED_ELEMENTS[(i + MARKER_OFFSET) % k],
                PLANTED_ELEMENTS[(j + MARKER_OFFSET) % k],
            ],
            [],
            coords=[tuple(p) for p in px],
            role="protein",
        )
        out.append(Complex(f"planted{idx:04d}", "planted", ligand, protein))
    return out


def chain_coords(n_atoms: int) -> np.ndarray:
    """Straight-line geometry for chain_molecule, spaced at bond length."""
    xyz = np.zeros((n_atoms, 3))
    xyz[:, 0] = BOND_LENGTH * np.arange(n_atoms)
    return xyz


__all__ = [
    "BOND_LENGTH",
    "PLANTED_ELEMENTS",
    "chain_coords",
    "chain_molecule",
    "complex_corpus",
    "coords_array",
    "embed_coords",
    "molecule_corpus",
    "planted_complexes",
    "sample_complex",
    "sample_molecule",
    "write_complex_corpus",
    "write_molecule_corpus",
]
