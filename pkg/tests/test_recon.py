"""Reconstruction pathways, step extraction, and negative sampling."""

from dataclasses import replace

import numpy as np
import pytest

from molgrow.errors import (
    DegenerateVocabularyError,
    GrowthSiteError,
    VocabularyError,
)
from molgrow.fixtures import molecule_corpus
from molgrow.molio import is_isomorphic, parse_smiles
from molgrow.recon import (
    FrequencyBaseline,
    ReconstructionStep,
    UniformBaseline,
    attach_motif,
    epoch_steps,
    pathway_from_shred,
    replay,
    sample_negatives,
    sample_pathway,
    steps_from_pathway,
    with_negatives,
)
from molgrow.shred import (
    MotifEdge,
    ShredPolicy,
    ShredResult,
    build_vocabulary,
    motif_key,
    shred,
)

POLICY = ShredPolicy(rng_seed=17)


def corpus(n, seed):
    return [parse_smiles(s) for s in molecule_corpus(n, seed=seed)]


def test_single_motif_pathway():
    g = parse_smiles("c1ccccc1")
    pw = sample_pathway(g, POLICY)
    assert pw.steps == ()
    obs = shred(g, POLICY).observations()
    assert pw.seed_motif == motif_key(obs[0])
    assert steps_from_pathway(pw) == []


def test_toluene_ring_seed():
    seen_ring_seed = False
    for s in range(20):
        pw = sample_pathway(parse_smiles("Cc1ccccc1"), ShredPolicy(rng_seed=s))
        steps = steps_from_pathway(pw)
        assert len(steps) == 1
        step = steps[0]
        if step.core.n_atoms == 6:
            seen_ring_seed = True
            assert step.core.atoms[step.growth_atom].n_hydrogens == 0
            assert step.true_bond_order == "single"
            methyl = step.added_orig_atoms
            assert len(methyl) == 1
    assert seen_ring_seed


def test_linear_chain_interleavings():
    g = parse_smiles("CCCCCC")
    res = ShredResult(
        source=g,
        motif_atoms=((0, 1), (2, 3), (4, 5)),
        edges=(
            MotifEdge(0, 1, 1, 2, "single"),
            MotifEdge(1, 2, 3, 4, "single"),
        ),
    )
    orders = set()
    for s in range(200):
        pw = pathway_from_shred(res, np.random.default_rng(s))
        if pw.seed_index == 1:
            orders.add(tuple(st.motif_index for st in pw.steps))
    assert orders == {(0, 2), (2, 0)}


def test_replay_isomorphism_100():
    ok = 0
    mols = corpus(100, seed=41)
    for i, g in enumerate(mols):
        pw = sample_pathway(g, POLICY, rng=np.random.default_rng([7, i]))
        ok += is_isomorphic(replay(pw), g)
    assert ok == 100


def test_cores_strictly_growing():
    found = False
    for i, g in enumerate(corpus(60, seed=5)):
        pw = sample_pathway(g, POLICY, rng=np.random.default_rng([11, i]))
        steps = steps_from_pathway(pw)
        if len(steps) < 3:
            continue
        found = True
        sizes = [s.core.n_atoms for s in steps]
        assert sizes == sorted(sizes) and len(set(sizes)) == len(sizes)
        for s in steps:
            assert len(s.core_orig_atoms) == s.core.n_atoms
            assert len(s.core.connected_components()) == 1
            assert s.core.can_accept_bond(s.growth_atom)
        last = steps[-1]
        assert (
            sorted(last.core_orig_atoms + last.added_orig_atoms)
            == list(range(g.n_atoms))
        )
    assert found


def test_epoch_streams():
    def signature(steps):
        return [
            (
                s.core_orig_atoms,
                s.growth_atom,
                s.true_motif,
                s.true_bond_order,
                s.added_orig_atoms,
            )
            for s in steps
        ]

    mols = corpus(12, seed=8)
    a = epoch_steps(mols, POLICY, epoch=0)
    b = epoch_steps(mols, POLICY, epoch=0)
    assert signature(a) == signature(b)
    c = epoch_steps(mols, POLICY, epoch=1)
    assert signature(a) != signature(c)


def test_epoch_complex_refs():
    mols = corpus(3, seed=9)
    steps = epoch_steps(mols, POLICY, epoch=0, complex_refs=["a", "b", "c"])
    assert {s.complex_ref for s in steps} <= {"a", "b", "c"}


def test_step_invariants():
    steps = epoch_steps(corpus(5, seed=3), POLICY, epoch=0)
    step = steps[0]
    with pytest.raises(ValueError):
        replace(step, negatives=(step.true_motif,))
    sat = parse_smiles("FC(F)(F)F")
    fluorine = next(
        i for i, a in enumerate(sat.atoms) if a.element == "F"
    )
    with pytest.raises(ValueError):
        replace(step, core=sat, growth_atom=fluorine)


# attachment


def test_attach_methyl_to_benzene():
    benzene = shred(parse_smiles("c1ccccc1"), POLICY).observations()[0]
    methyl = None
    for m in shred(parse_smiles("Cc1ccccc1"), POLICY).observations():
        if m.graph.n_atoms == 1:
            methyl = m
    grown = attach_motif(
        benzene.graph.with_role("ligand"),
        benzene.attachment_atom,
        methyl.graph,
        methyl.attachment_atom,
    )
    assert is_isomorphic(grown, parse_smiles("Cc1ccccc1"))
    ipso = grown.atoms[benzene.attachment_atom]
    assert ipso.n_hydrogens == 0  # the substituent consumed the hydrogen


def test_attach_consumes_hydrogen_on_saturated_carbon():
    methane = parse_smiles("C")
    other = parse_smiles("C")
    grown = attach_motif(methane, 0, other, 0)
    assert is_isomorphic(grown, parse_smiles("CC"))
    assert all(a.n_hydrogens == 3 for a in grown.atoms)


def test_attach_rejects_exhausted_atom():
    cf4 = parse_smiles("FC(F)(F)F")
    methyl = parse_smiles("C")
    fluorine = next(i for i, a in enumerate(cf4.atoms) if a.element == "F")
    with pytest.raises(GrowthSiteError):
        attach_motif(cf4, fluorine, methyl, 0)
    with pytest.raises(GrowthSiteError):
        attach_motif(cf4, 1, methyl, 0)  # the carbon is full too


def test_attach_double_bond():
    ring = shred(parse_smiles("C=C1CCCC1"), POLICY)
    frag_ring = None
    frag_cap = None
    for m in ring.observations():
        if m.graph.n_atoms == 5:
            frag_ring = m
        if m.graph.n_atoms == 1:
            frag_cap = m
    grown = attach_motif(
        frag_ring.graph.with_role("ligand"),
        frag_ring.attachment_atom,
        frag_cap.graph,
        frag_cap.attachment_atom,
        order="double",
    )
    assert is_isomorphic(grown, parse_smiles("C=C1CCCC1"))
    with pytest.raises(GrowthSiteError):
        attach_motif(parse_smiles("C"), 0, parse_smiles("C"), 0, order="aromatic")


# negatives


def _any_step():
    for g in corpus(10, seed=2):
        steps = steps_from_pathway(
            sample_pathway(g, POLICY, rng=np.random.default_rng(4))
        )
        if steps:
            return steps[0]
    raise AssertionError("no multi-motif molecule in fixture corpus")


def test_negatives_uniform_k16():
    vocab = build_vocabulary(corpus(50, seed=6), POLICY)
    step = _any_step()
    negs = sample_negatives(
        step, UniformBaseline(vocab), 16, np.random.default_rng(0)
    )
    assert len(negs) == 16
    assert step.true_motif not in negs
    assert all(k in vocab for k in negs)


def test_negatives_match_restricted_frequency():
    from scipy import stats

    vocab = build_vocabulary(corpus(80, seed=6), POLICY, n_shreds_per_mol=2)
    step = _any_step()
    baseline = FrequencyBaseline(vocab)
    rng = np.random.default_rng(99)
    counts = dict.fromkeys(vocab.keys(), 0)
    n = 10_000
    for key in sample_negatives(step, baseline, n, rng):
        counts[key] += 1
    p = vocab.probabilities().copy()
    t = vocab.index_of(step.true_motif)
    p[t] = 0.0
    p /= p.sum()
    observed = np.array([counts[k] for k in vocab.keys()], dtype=float)
    keep = p * n >= 5
    stat, p_value = stats.chisquare(
        observed[keep], p[keep] * observed[keep].sum() / p[keep].sum()
    )
    assert observed[t] == 0
    assert p_value > 0.01


def test_negatives_degenerate_vocabulary():
    vocab = build_vocabulary([parse_smiles("C")], POLICY)
    step = replace(
        _any_step(), true_motif=vocab.keys()[0], negatives=()
    )
    with pytest.raises(DegenerateVocabularyError):
        sample_negatives(step, FrequencyBaseline(vocab), 1, np.random.default_rng(0))


def test_negatives_without_truth_exclusion():
    vocab = build_vocabulary([parse_smiles("C")], POLICY)
    step = replace(_any_step(), true_motif=vocab.keys()[0], negatives=())
    negs = sample_negatives(
        step,
        FrequencyBaseline(vocab),
        5,
        np.random.default_rng(0),
        exclude_truth=False,
    )
    assert negs == (step.true_motif,) * 5


def test_negatives_vocabulary_mismatch():
    vocab = build_vocabulary([parse_smiles("C")], POLICY)
    step = _any_step()
    assert step.true_motif not in vocab
    with pytest.raises(VocabularyError):
        sample_negatives(step, FrequencyBaseline(vocab), 4, np.random.default_rng(0))


def test_with_negatives_round_trip():
    vocab = build_vocabulary(corpus(50, seed=6), POLICY)
    step = with_negatives(
        _any_step(), FrequencyBaseline(vocab), 8, np.random.default_rng(1)
    )
    assert len(step.negatives) == 8
    assert step.true_motif not in step.negatives
