"""Fixed-width categorical encodings of atoms and bonds.

Atom rows are 36-dimensional: element (12-way one-hot), heavy-neighbour
count (7-way, 0-6), radical-electron count (scalar), formal charge (scalar),
hybridization (7-way), aromaticity flag, hydrogen count (5-way, 0-4),
R and S indicators. Bond rows are 6-dimensional: order one-hot over
single/double/triple/aromatic plus conjugation and ring flags.
"""

from __future__ import annotations

import numpy as np

from .elements import BOND_ORDERS, ELEMENTS, HYBRIDIZATIONS
from .graph import MolGraph

ATOM_DIM = 36
BOND_DIM = 6

_ELEMENT_IDX = {el: k for k, el in enumerate(ELEMENTS)}
_HYB_IDX = {h: k for k, h in enumerate(HYBRIDIZATIONS)}
_ORDER_IDX = {o: k for k, o in enumerate(BOND_ORDERS)}

MAX_DEGREE = 6
MAX_H = 4


def featurize(g: MolGraph) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom and per-bond feature matrices, shapes (n, 36) and (m, 6)."""
    atom_f = np.zeros((g.n_atoms, ATOM_DIM), dtype=np.float64)
    for idx, a in enumerate(g.atoms):
        row = atom_f[idx]
        row[_ELEMENT_IDX.get(a.element, _ELEMENT_IDX["other"])] = 1.0
        degree = min(g.degree(idx), MAX_DEGREE)
        row[12 + degree] = 1.0
        row[19] = float(a.n_radical)
        row[20] = float(a.formal_charge)
        row[21 + _HYB_IDX.get(a.hybridization, _HYB_IDX["other"])] = 1.0
        row[28] = 1.0 if a.aromatic else 0.0
        row[29 + min(a.n_hydrogens, MAX_H)] = 1.0
        if a.chirality == "R":
            row[34] = 1.0
        elif a.chirality == "S":
            row[35] = 1.0

    bond_f = np.zeros((len(g.bonds), BOND_DIM), dtype=np.float64)
    for idx, b in enumerate(g.bonds):
        row = bond_f[idx]
        row[_ORDER_IDX[b.order]] = 1.0
        row[4] = 1.0 if b.conjugated else 0.0
        row[5] = 1.0 if b.in_ring else 0.0
    return atom_f, bond_f


ONE_HOT_BLOCKS = {
    "element": (0, 12),
    "degree": (12, 19),
    "hybridization": (21, 28),
    "h_count": (29, 34),
}
