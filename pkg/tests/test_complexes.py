"""Complex JSON-lines round trips and validation errors."""

import json

import numpy as np
import pytest

from molgrow.errors import ComplexFormatError
from molgrow.fixtures import complex_corpus, write_complex_corpus
from molgrow.molio import (
    dump_complexes,
    is_isomorphic,
    load_complexes,
)
from molgrow.molio.complexes import coords_array


def test_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_complexes(path) == []


def test_echo_record(tmp_path):
    # 5-atom ligand (butanol-like chain) and a 10-atom protein strand
    ligand = {
        "atoms": [
            {"el": el, "x": float(i), "y": 0.0, "z": 0.0}
            for i, el in enumerate(["C", "C", "C", "C", "O"])
        ],
        "bonds": [[i, i + 1, "single"] for i in range(4)],
    }
    protein = {
        "atoms": [
            {"el": "C", "x": float(i), "y": 5.0, "z": 0.0, "q": 0}
            for i in range(10)
        ],
        "bonds": [[i, i + 1, "single"] for i in range(9)],
    }
    record = {"id": "c1", "family_tag": "famA", "ligand": ligand, "protein": protein}
    path = tmp_path / "one.jsonl"
    path.write_text(json.dumps(record) + "\n")

    loaded = load_complexes(path)
    assert len(loaded) == 1
    cpx = loaded[0]
    assert cpx.id == "c1" and cpx.family_tag == "famA"
    assert cpx.ligand.n_atoms + cpx.protein.n_atoms == 15
    assert cpx.ligand.atoms[4].element == "O"
    assert cpx.ligand.atoms[0].coords == (0.0, 0.0, 0.0)
    # hydrogens fill to the default valence from explicit heavy bonds
    assert cpx.ligand.atoms[0].n_hydrogens == 3
    assert cpx.ligand.atoms[1].n_hydrogens == 2
    assert cpx.ligand.atoms[4].n_hydrogens == 1


def test_fixture_set_loads_with_families(tmp_path):
    path = tmp_path / "cpx.jsonl"
    write_complex_corpus(path, n=20, seed=77)
    loaded = load_complexes(path)
    assert len(loaded) == 20
    assert len({c.family_tag for c in loaded}) >= 2
    for c in loaded:
        assert all(a.coords is not None for a in c.ligand.atoms)
        assert all(a.coords is not None for a in c.protein.atoms)


def test_dump_load_round_trip(tmp_path):
    original = complex_corpus(6, seed=3)
    path = tmp_path / "round.jsonl"
    dump_complexes(original, path)
    loaded = load_complexes(path)
    assert len(loaded) == len(original)
    for a, b in zip(original, loaded):
        assert a.id == b.id and a.family_tag == b.family_tag
        assert is_isomorphic(a.ligand, b.ligand)
        assert is_isomorphic(a.protein, b.protein)
        # float coordinates survive exactly
        assert np.array_equal(coords_array(a.ligand), coords_array(b.ligand))
        assert np.array_equal(coords_array(a.protein), coords_array(b.protein))
        assert [x.rotatable for x in a.protein.bonds] == [
            x.rotatable for x in b.protein.bonds
        ]


def _write_lines(tmp_path, *lines):
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(lines) + "\n")
    return path


def _minimal(**override):
    base = {
        "id": "x",
        "family_tag": "f",
        "ligand": {
            "atoms": [{"el": "C", "x": 0.0, "y": 0.0, "z": 0.0}],
            "bonds": [],
        },
        "protein": {
            "atoms": [{"el": "C", "x": 9.0, "y": 0.0, "z": 0.0}],
            "bonds": [],
        },
    }
    base.update(override)
    return base


def test_malformed_json_reports_line(tmp_path):
    path = _write_lines(tmp_path, json.dumps(_minimal()), "{not json")
    with pytest.raises(ComplexFormatError) as err:
        load_complexes(path)
    assert "line 2" in str(err.value)


def test_missing_coordinate(tmp_path):
    bad = _minimal(ligand={"atoms": [{"el": "C", "x": 0.0, "y": 0.0}], "bonds": []})
    path = _write_lines(tmp_path, json.dumps(bad))
    with pytest.raises(ComplexFormatError) as err:
        load_complexes(path)
    assert "z" in str(err.value) and "line 1" in str(err.value)


def test_bond_index_out_of_range(tmp_path):
    bad = _minimal(
        ligand={
            "atoms": [{"el": "C", "x": 0.0, "y": 0.0, "z": 0.0}],
            "bonds": [[0, 3, "single"]],
        }
    )
    path = _write_lines(tmp_path, json.dumps(bad))
    with pytest.raises(ComplexFormatError) as err:
        load_complexes(path)
    assert "out of range" in str(err.value)


def test_unknown_bond_order(tmp_path):
    bad = _minimal(
        ligand={
            "atoms": [
                {"el": "C", "x": 0.0, "y": 0.0, "z": 0.0},
                {"el": "C", "x": 1.5, "y": 0.0, "z": 0.0},
            ],
            "bonds": [[0, 1, "quadruple"]],
        }
    )
    path = _write_lines(tmp_path, json.dumps(bad))
    with pytest.raises(ComplexFormatError):
        load_complexes(path)


def test_valence_violation_annotated(tmp_path):
    bad = _minimal(
        ligand={
            "atoms": [
                {"el": "C", "x": float(i), "y": 0.0, "z": 0.0} for i in range(6)
            ],
            "bonds": [[0, k, "single"] for k in range(1, 6)],
        }
    )
    path = _write_lines(tmp_path, json.dumps(bad))
    with pytest.raises(ComplexFormatError) as err:
        load_complexes(path)
    assert "line 1" in str(err.value)


def test_missing_field(tmp_path):
    record = _minimal()
    del record["family_tag"]
    path = _write_lines(tmp_path, json.dumps(record))
    with pytest.raises(ComplexFormatError) as err:
        load_complexes(path)
    assert "family_tag" in str(err.value)


def test_pocket_geometry_has_both_contact_classes():
    # planted construction: some chains start < 3.5 A, others well beyond 4.5
    close_seen = far_seen = False
    for cpx in complex_corpus(8, seed=41):
        lig = coords_array(cpx.ligand)
        prot = coords_array(cpx.protein)
        dmat = np.linalg.norm(lig[:, None, :] - prot[None, :, :], axis=2)
        per_protein_atom = dmat.min(axis=0)
        assert per_protein_atom.min() >= 3.0
        close_seen |= bool((per_protein_atom <= 3.5).any())
        far_seen |= bool((per_protein_atom > 4.5).any())
    assert close_seen and far_seen


# marker-coded corpus

def test_planted_corpus_geometry_and_code():
    from molgrow.fixtures import MARKER_OFFSET, PLANTED_ELEMENTS, planted_complexes

    k = len(PLANTED_ELEMENTS)
    for cpx in planted_complexes(30, seed=13):
        lig = coords_array(cpx.ligand)
        prot = coords_array(cpx.protein)
        assert lig.shape == (2, 3) and prot.shape == (2, 3)
        # rigid motions preserve the planted distances exactly
        for a in (0, 1):
            own = np.linalg.norm(prot[a] - lig[a])
            other = np.linalg.norm(prot[a] - lig[1 - a])
            assert abs(own - 3.0) < 1e-9
            assert abs(other - 4.5) < 1e-9
            want = PLANTED_ELEMENTS[
                (PLANTED_ELEMENTS.index(cpx.ligand.atoms[a].element) + MARKER_OFFSET) % k
            ]
            assert cpx.protein.atoms[a].element == want


def test_planted_corpus_deterministic_and_covering():
    from molgrow.fixtures import PLANTED_ELEMENTS, planted_complexes

    a = planted_complexes(6, seed=1)
    b = planted_complexes(6, seed=1)
    for ca, cb in zip(a, b):
        assert ca.id == cb.id
        assert [x.element for x in ca.ligand.atoms] == [x.element for x in cb.ligand.atoms]
        assert np.array_equal(coords_array(ca.ligand), coords_array(cb.ligand))
        assert np.array_equal(coords_array(ca.protein), coords_array(cb.protein))

    seen0 = {c.ligand.atoms[0].element for c in planted_complexes(300, seed=2)}
    seen1 = {c.ligand.atoms[1].element for c in planted_complexes(300, seed=2)}
    assert seen0 == set(PLANTED_ELEMENTS)
    assert seen1 == set(PLANTED_ELEMENTS)


def test_planted_truth_matches_far_marker():
    from molgrow.fixtures import MARKER_OFFSET, PLANTED_ELEMENTS, planted_complexes
    from molgrow.molio import parse_smiles
    from molgrow.recon import epoch_steps
    from molgrow.shred import ShredPolicy, build_vocabulary

    policy = ShredPolicy(rng_seed=7, max_radius=0)
    complexes = planted_complexes(40, seed=3)
    by_id = {c.id: c for c in complexes}
    vocab = build_vocabulary([c.ligand for c in complexes], policy)
    key_to_element = {
        e.key: parse_smiles(e.smiles).atoms[0].element for e in vocab.entries
    }

    steps = epoch_steps(
        [c.ligand for c in complexes],
        policy,
        epoch=5,
        complex_refs=[c.id for c in complexes],
    )
    assert len(steps) == len(complexes)  # one growth step per two-atom ligand
    k = len(PLANTED_ELEMENTS)
    for step in steps:
        cpx = by_id[step.complex_ref]
        grown = coords_array(cpx.ligand)[step.core_orig_atoms[0]]
        prot = coords_array(cpx.protein)
        dists = np.linalg.norm(prot - grown, axis=1)
        far_marker = cpx.protein.atoms[int(np.argmax(dists))].element
        decoded = PLANTED_ELEMENTS[
            (PLANTED_ELEMENTS.index(far_marker) - MARKER_OFFSET) % k
        ]
        assert key_to_element[step.true_motif] == decoded
