"""Evaluation: rank-statistic AUC, baselines, contact splits, divergence."""

import math
from dataclasses import replace

import numpy as np
import pytest

from molgrow.evalmetrics import (
    NullMetrics,
    RocResult,
    SplitSpec,
    _curve,
    close_far_split,
    curve_csv,
    hanley_mcneil_stderr,
    kl_divergence,
    model_marginal_1d,
    null_metrics,
    pooled_auc,
    prior_density,
    roc_payload,
    roc_vs_baseline,
)
from molgrow.fixtures import molecule_corpus
from molgrow.gnn2d import Config2D, Model2D, init_params_2d
from molgrow.molio import Complex, MolGraph, from_topology, parse_smiles
from molgrow.recon import ReconstructionStep, UniformBaseline, epoch_steps
from molgrow.shred import ShredPolicy, build_vocabulary
from molgrow.shred.canon import canonical_serialization, key_of_serialization
from molgrow.shred.shredder import as_fragment
from molgrow.shred.vocab import VocabEntry, Vocabulary

POLICY = ShredPolicy(rng_seed=5)


def brute_force_auc(pos, neg):
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def toy_vocab(counts):
    entries = []
    for sm, count in counts:
        frag = as_fragment(parse_smiles(sm))
        ser, order = canonical_serialization(frag, 0)
        entries.append(
            VocabEntry(key_of_serialization(ser), ser, order.index(0), count)
        )
    return Vocabulary(entries)


@pytest.fixture(scope="module")
def step_world():
    mols = [parse_smiles(s) for s in molecule_corpus(40, seed=7)]
    vocab = build_vocabulary(mols, POLICY)
    steps = [
        s for s in epoch_steps(mols, POLICY, epoch=0) if s.true_motif in vocab
    ]
    assert len(steps) >= 100
    return vocab, steps


def test_auc_matches_pair_counting_oracle(rng):
    for _ in range(5):
        pos = np.round(rng.normal(size=15), 1)  # rounding forces ties
        neg = np.round(rng.normal(size=23), 1)
        assert pooled_auc(pos, neg) == brute_force_auc(pos, neg)


def test_auc_extremes():
    assert pooled_auc(np.array([2.0, 3.0]), np.array([0.0, 1.0])) == 1.0
    assert pooled_auc(np.array([0.0, 1.0]), np.array([2.0, 3.0])) == 0.0
    assert pooled_auc(np.ones(4), np.ones(6)) == 0.5


def test_hanley_mcneil_hand_value():
    # at auc = 1/2 both conditional moments equal 1/3, so the variance
    # collapses to (1/4 + (n_pos + n_neg - 2)/12) / (n_pos n_neg)
    want = math.sqrt((0.25 + 28.0 / 12.0) / 200.0)
    assert abs(hanley_mcneil_stderr(0.5, 10, 20) - want) < 1e-12
    assert hanley_mcneil_stderr(1.0, 10, 20) == 0.0


def test_roc_curve_shape(rng):
    pos = rng.normal(loc=1.0, size=40)
    neg = rng.normal(size=200)
    curve = _curve(pos, neg)
    assert curve[0] == (0.0, 0.0)
    assert curve[-1] == (1.0, 1.0)
    fprs = [pt[0] for pt in curve]
    tprs = [pt[1] for pt in curve]
    assert all(b >= a for a, b in zip(fprs, fprs[1:]))
    assert all(b >= a for a, b in zip(tprs, tprs[1:]))
    # trapezoid area under the tie-collapsed curve equals the rank AUC
    area = float(np.trapezoid(tprs, fprs))
    assert abs(area - pooled_auc(pos, neg)) < 1e-12


def test_uniform_scorer_over_uniform_baseline_is_half(step_world):
    vocab, steps = step_world
    uniform = UniformBaseline(vocab)
    subset = steps[:100]
    result = roc_vs_baseline(uniform.conditional, uniform, subset, 4)
    assert result.auc == 0.5  # every score ties at 1/|V|
    assert result.n_pos == len(subset)
    assert result.n_neg == 4 * len(subset)


def test_frequency_scorer_beats_uniform_baseline(step_world):
    vocab, steps = step_world
    result = roc_vs_baseline(
        prior_density(vocab),
        UniformBaseline(vocab),
        steps,
        8,
        np.random.default_rng(3),
    )
    assert result.auc > 0.5 + 3 * result.stderr
    assert 0.0 <= result.auc <= 1.0
    with pytest.raises(ValueError):
        roc_vs_baseline(prior_density(vocab), UniformBaseline(vocab), [], 8)


def test_auc_stable_under_negative_count(step_world):
    # the enrichment estimate moves within noise when the number of
    # counter-examples per step changes
    vocab, steps = step_world
    bands = []
    for k in (1, 4, 16):
        r = roc_vs_baseline(
            prior_density(vocab),
            UniformBaseline(vocab),
            steps,
            k,
            np.random.default_rng(11),
        )
        bands.append((r.auc - 4 * r.stderr, r.auc + 4 * r.stderr))
    assert max(lo for lo, _ in bands) <= min(hi for _, hi in bands)


def test_null_metrics_real_corpus(step_world):
    vocab, steps = step_world
    nm = null_metrics(vocab, steps, rng=np.random.default_rng(5))
    assert isinstance(nm, NullMetrics)
    assert 0.0 <= nm.top1_sampled <= nm.top8_sampled <= 1.0
    assert 0.0 <= nm.top1_static <= nm.top8_static <= 1.0
    assert nm.auc_vs_uniform.auc > 0.5


def test_null_metrics_dominant_motif(step_world):
    _, steps = step_world
    dominant = toy_vocab([("C", 50), ("N", 3), ("O", 1)])
    top_key = max(dominant.keys(), key=lambda k: dominant.entry(k).count)
    forced = [
        replace(s, true_motif=top_key, negatives=()) for s in steps[:20]
    ]
    nm = null_metrics(dominant, forced, rng=np.random.default_rng(6))
    assert nm.top1_static == 1.0
    assert nm.top8_static == 1.0


def test_uniform_vocabulary_auc_exactly_half(step_world):
    _, steps = step_world
    flat = toy_vocab([("C", 5), ("N", 5), ("O", 5)])
    keys = flat.keys()
    forced = [
        replace(s, true_motif=keys[i % len(keys)], negatives=())
        for i, s in enumerate(steps[:30])
    ]
    nm = null_metrics(flat, forced, rng=np.random.default_rng(7))
    assert nm.auc_vs_uniform.auc == 0.5  # flat prior scores all tie


def planted_pair(dmin):
    # the lone protein atom sits perpendicular to the single added atom,
    # so the truth-to-protein distance is exactly dmin
    lig = from_topology(
        ["C", "C"],
        [(0, 1, "single")],
        coords=[(0.0, 0.0, 0.0), (1.5, 0.0, 0.0)],
    )
    prot = from_topology(
        ["C"], [], coords=[(1.5, dmin, 0.0)], role="protein"
    )
    cpx = Complex(f"d{dmin}", "planted", lig, prot)
    step = ReconstructionStep(
        core=from_topology(["C"], [], coords=[(0.0, 0.0, 0.0)]),
        core_orig_atoms=(0,),
        growth_atom=0,
        true_motif="planted-motif",
        true_bond_order="single",
        added_orig_atoms=(1,),
        complex_ref=cpx.id,
    )
    return step, cpx


def test_close_far_split_planted_distances():
    cases = [
        (3.4, "close"),
        (3.5, "close"),  # boundary is inclusive on the close side
        (4.0, "neither"),
        (4.5, "neither"),  # far requires strictly beyond the cutoff
        (5.0, "far"),
    ]
    pairs = [planted_pair(d) for d, _ in cases]
    close, far, neither = close_far_split(pairs)
    by_label = {"close": close, "far": far, "neither": neither}
    for (d, label), pair in zip(cases, pairs):
        assert any(s is pair[0] for s, _ in by_label[label]), (d, label)
    assert len(close) == 2 and len(neither) == 2 and len(far) == 1


def test_close_far_split_empty_protein():
    step, cpx = planted_pair(3.0)
    bare = Complex("bare", "planted", cpx.ligand, MolGraph([], [], role="protein"))
    close, far, neither = close_far_split([(step, bare)])
    assert far and not close and not neither


def test_split_spec_validation():
    spec = SplitSpec()
    assert spec.close_cut == 3.5 and spec.far_cut == 4.5
    with pytest.raises(ValueError):
        SplitSpec(close_cut=4.5, far_cut=3.5)


def test_kl_divergence_values():
    p = np.array([0.5, 0.5])
    assert kl_divergence(p, p) == 0.0
    q = np.array([0.25, 0.75])
    assert abs(kl_divergence(p, q) - 0.5 * math.log(4.0 / 3.0)) < 1e-12
    assert kl_divergence(np.array([1.0, 0.0]), q) == math.log(4.0)


def test_model_marginal_matches_prior_for_flat_model(step_world):
    vocab, steps = step_world
    cfg = Config2D(policy=POLICY, hidden_dim=16, k_negatives=4, seed=3)
    params = init_params_2d(cfg, np.random.default_rng(4))
    for key in params:
        if key.startswith("head"):
            params[key].data[:] = 0.0
    m2 = Model2D(params, vocab, cfg)
    marginal = model_marginal_1d(m2, steps[:10])
    assert np.allclose(marginal, vocab.probabilities(), rtol=0.0, atol=1e-15)
    assert abs(marginal.sum() - 1.0) < 1e-9
    with pytest.raises(ValueError):
        model_marginal_1d(m2, [])


def test_roc_matrix_structure():
    from molgrow.evalmetrics import roc_matrix
    from molgrow.fixtures import complex_corpus
    from molgrow.gnn3d import Config3D, Model3D, init_params_3d

    complexes = complex_corpus(6, seed=31)
    vocab = build_vocabulary([c.ligand for c in complexes], POLICY)
    steps = epoch_steps(
        [c.ligand for c in complexes],
        POLICY,
        epoch=0,
        complex_refs=[c.id for c in complexes],
    )
    by_id = {c.id: c for c in complexes}
    pairs = [
        (s, by_id[s.complex_ref]) for s in steps if s.true_motif in vocab
    ]
    assert pairs

    cfg2 = Config2D(policy=POLICY, hidden_dim=16, k_negatives=4, seed=3)
    cfg3 = Config3D(policy=POLICY, hidden_dim=16, k_negatives=4, seed=3)
    m2 = Model2D(init_params_2d(cfg2, np.random.default_rng(1)), vocab, cfg2)
    m3 = Model3D(init_params_3d(cfg3, np.random.default_rng(2)), vocab, cfg3)

    out = roc_matrix(m2, m3, pairs, k_neg=2, rng=np.random.default_rng(9))
    want = {f"{m}|{b}" for m in ("1d", "2d", "3d") for b in ("0d", "1d", "2d")}
    assert set(out["matrix"]) == want
    for cell in out["matrix"].values():
        assert isinstance(cell, RocResult)
        assert 0.0 <= cell.auc <= 1.0
        assert cell.n_pos == len(pairs)
        assert cell.n_neg == 2 * len(pairs)

    sizes = out["splits"]["sizes"]
    assert sizes["close"] + sizes["far"] + sizes["neither"] == len(pairs)
    for name in ("close", "far"):
        r = out["splits"][name]
        assert r is None or isinstance(r, RocResult)


def test_roc_payload_and_csv():
    r = RocResult(
        auc=0.75,
        stderr=0.01,
        n_pos=4,
        n_neg=8,
        curve=((0.0, 0.0), (0.5, 1.0), (1.0, 1.0)),
    )
    payload = roc_payload(r)
    assert payload["auc"] == 0.75
    assert payload["curve"][1] == [0.5, 1.0]
    lines = curve_csv(r).strip().splitlines()
    assert lines[0] == "fpr,tpr"
    assert len(lines) == 4
    assert [float(x) for x in lines[2].split(",")] == [0.5, 1.0]
