"""Molecular graphs, SMILES subset I/O, featurization, and complex files."""

from .complexes import Complex, coords_array, dump_complexes, load_complexes
from .elements import ELEMENTS, ORDER_VALUE
from .features import ATOM_DIM, BOND_DIM, ONE_HOT_BLOCKS, featurize
from .graph import (
    Atom,
    Bond,
    MolGraph,
    from_topology,
    induced_subgraph,
    morgan_ranks,
)
from .graph import with_coords
from .isomorph import is_isomorphic
from .smiles import (
    load_smiles_corpus,
    parse_smiles,
    write_smiles,
    write_smiles_with_order,
)

__all__ = [
    "ATOM_DIM",
    "Atom",
    "BOND_DIM",
    "Bond",
    "Complex",
    "ELEMENTS",
    "MolGraph",
    "ONE_HOT_BLOCKS",
    "ORDER_VALUE",
    "coords_array",
    "dump_complexes",
    "featurize",
    "from_topology",
    "induced_subgraph",
    "is_isomorphic",
    "load_complexes",
    "load_smiles_corpus",
    "morgan_ranks",
    "parse_smiles",
    "with_coords",
    "write_smiles",
    "write_smiles_with_order",
]
