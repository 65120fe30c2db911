"""Ligand-protein complex I/O.

Complexes travel as JSON lines, one object per line:

    {"id": str, "family_tag": str,
     "ligand":  {"atoms": [{"el", "x", "y", "z", "q"}, ...],
                 "bonds": [[i, j, order, rotatable?], ...]},
     "protein": {same shape}}

Coordinates are in Angstrom. The fourth bond entry (rotatable flag) is
optional on input and always written on output; absent flags are derived
as acyclic single bonds between two at-least-two-connected heavy atoms.
Hydrogen counts, aromatic flags, hybridization and conjugation are derived
from the explicit heavy-atom bonds with the same rules the SMILES parser
uses, so featurization treats both sources identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..errors import ComplexFormatError, MolgrowError
from .elements import ORDER_VALUE
from .graph import MolGraph, from_topology


@dataclass(frozen=True)
class Complex:
    id: str
    family_tag: str
    ligand: MolGraph
    protein: MolGraph

    def __post_init__(self) -> None:
        for name, graph in (("ligand", self.ligand), ("protein", self.protein)):
            for idx, atom in enumerate(graph.atoms):
                if atom.coords is None:
                    raise ComplexFormatError(
                        f"{name} atom {idx} of complex {self.id!r} has no coordinates"
                    )


def _require(obj: dict, key: str, line: int, where: str):
    if key not in obj:
        raise ComplexFormatError(f"{where} is missing {key!r}", line=line)
    return obj[key]


def _graph_from_json(obj: dict, role: str, line: int) -> MolGraph:
    if not isinstance(obj, dict):
        raise ComplexFormatError(f"{role} section must be an object", line=line)
    raw_atoms = _require(obj, "atoms", line, role)
    raw_bonds = obj.get("bonds", [])
    n = len(raw_atoms)

    elements: list[str] = []
    charges: list[int] = []
    coords: list[tuple[float, float, float]] = []
    for idx, entry in enumerate(raw_atoms):
        if not isinstance(entry, dict) or "el" not in entry:
            raise ComplexFormatError(
                f"{role} atom {idx} must be an object with an 'el' field", line=line
            )
        for axis in ("x", "y", "z"):
            if axis not in entry or not isinstance(entry[axis], (int, float)):
                raise ComplexFormatError(
                    f"{role} atom {idx} has no {axis!r} coordinate", line=line
                )
        elements.append(str(entry["el"]))
        charges.append(int(entry.get("q", 0)))
        coords.append((float(entry["x"]), float(entry["y"]), float(entry["z"])))

    bonds: list[tuple] = []
    for pos, entry in enumerate(raw_bonds):
        if not isinstance(entry, (list, tuple)) or len(entry) not in (3, 4):
            raise ComplexFormatError(
                f"{role} bond {pos} must be [i, j, order] or [i, j, order, rotatable]",
                line=line,
            )
        i, j, order = int(entry[0]), int(entry[1]), str(entry[2])
        if not (0 <= i < n and 0 <= j < n):
            raise ComplexFormatError(
                f"{role} bond {pos} index out of range ({i}, {j}) for {n} atoms",
                line=line,
            )
        if order not in ORDER_VALUE:
            raise ComplexFormatError(
                f"{role} bond {pos} has unknown order {order!r}", line=line
            )
        bonds.append(tuple(entry))

    try:
        return from_topology(elements, bonds, charges=charges, coords=coords, role=role)
    except MolgrowError as exc:
        raise ComplexFormatError(f"invalid {role} graph: {exc}", line=line) from exc


def load_complexes(path) -> list[Complex]:
    """Read a JSON-lines complex file; blank lines are skipped."""
    out: list[Complex] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            text = text.strip()
            if not text:
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ComplexFormatError(
                    f"invalid JSON: {exc.msg}", line=lineno
                ) from exc
            if not isinstance(record, dict):
                raise ComplexFormatError("record must be an object", line=lineno)
            cid = str(_require(record, "id", lineno, "record"))
            family = str(_require(record, "family_tag", lineno, "record"))
            ligand = _graph_from_json(
                _require(record, "ligand", lineno, "record"), "ligand", lineno
            )
            protein = _graph_from_json(
                _require(record, "protein", lineno, "record"), "protein", lineno
            )
            try:
                out.append(Complex(cid, family, ligand, protein))
            except MolgrowError as exc:
                raise ComplexFormatError(str(exc), line=lineno) from exc
    return out


def _graph_to_json(graph: MolGraph) -> dict:
    atoms = []
    for atom in graph.atoms:
        x, y, z = atom.coords
        atoms.append(
            {"el": atom.element, "x": x, "y": y, "z": z, "q": atom.formal_charge}
        )
    bonds = [[b.i, b.j, b.order, b.rotatable] for b in graph.bonds]
    return {"atoms": atoms, "bonds": bonds}


def dump_complexes(complexes: Iterable[Complex], path) -> None:
    """Write complexes as JSON lines; floats round-trip exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for cpx in complexes:
            record = {
                "id": cpx.id,
                "family_tag": cpx.family_tag,
                "ligand": _graph_to_json(cpx.ligand),
                "protein": _graph_to_json(cpx.protein),
            }
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def coords_array(graph: MolGraph) -> np.ndarray:
    """(n_atoms, 3) float64 position matrix."""
    return np.array([a.coords for a in graph.atoms], dtype=np.float64).reshape(-1, 3)
