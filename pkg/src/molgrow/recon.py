"""Stochastic reconstruction pathways and contrastive training examples.

A pathway replays a shredded molecule: one motif seeds the core and the
rest attach one at a time along recorded cut bonds. Each attachment
becomes a training example whose ground truth is the added motif and
whose counter-examples are drawn from a baseline model, so the learned
score settles at the rate differential between data and baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateVocabularyError, GrowthSiteError, VocabularyError
from .molio import Bond, MolGraph, induced_subgraph, morgan_ranks
from .shred import (
    ShredPolicy,
    ShredResult,
    Vocabulary,
    as_fragment,
    canonical_key,
    shred,
)

MAX_REJECTION_ATTEMPTS = 100

_ORDER_UNITS = {"single": 1, "double": 2, "triple": 3}


@dataclass(frozen=True)
class PathwayStep:
    """One attachment: motif_index joins the core through a recorded bond."""

    motif_index: int
    core_atom: int  # source-molecule index on the already-placed side
    motif_atom: int  # source-molecule index inside the added motif
    order: str


@dataclass(frozen=True)
class Pathway:
    shredding: ShredResult
    seed_index: int
    seed_motif: str
    steps: tuple[PathwayStep, ...]


@dataclass(frozen=True)
class ReconstructionStep:
    """A partial ligand, its growth atom, the true motif, and negatives."""

    core: MolGraph
    core_orig_atoms: tuple[int, ...]
    growth_atom: int
    true_motif: str
    true_bond_order: str
    added_orig_atoms: tuple[int, ...]
    negatives: tuple[str, ...] = ()
    complex_ref: str | None = None

    def __post_init__(self) -> None:
        if self.true_motif in self.negatives:
            raise ValueError("ground truth listed among negatives")
        if not self.core.can_accept_bond(self.growth_atom):
            raise ValueError(
                f"growth atom {self.growth_atom} has no free valence"
            )


class FrequencyBaseline:
    """Context-free sampler over corpus motif frequencies."""

    def __init__(self, vocabulary: Vocabulary):
        self.vocabulary = vocabulary

    def conditional(self, step: ReconstructionStep | None) -> np.ndarray:
        return self.vocabulary.probabilities()


class UniformBaseline:
    """Flat distribution over the vocabulary, for oracles and toys."""

    def __init__(self, vocabulary: Vocabulary):
        self.vocabulary = vocabulary

    def conditional(self, step: ReconstructionStep | None) -> np.ndarray:
        n = len(self.vocabulary)
        return np.full(n, 1.0 / n)


def _seed_key(fragment: MolGraph) -> str:
    # mirror the shredder's no-cut observation rule; a fully saturated
    # seed still needs a stable identity, so fall back to all atoms
    pool = [
        i for i in range(fragment.n_atoms) if fragment.can_accept_bond(i)
    ] or list(range(fragment.n_atoms))
    ranks = morgan_ranks(fragment)
    best = min(ranks[i] for i in pool)
    tied = [i for i in pool if ranks[i] == best]
    root = min(tied, key=lambda i: canonical_key(fragment, i))
    return canonical_key(fragment, root)


def pathway_from_shred(res: ShredResult, rng: np.random.Generator) -> Pathway:
    """Seed uniformly, then repeatedly attach a uniform frontier motif."""
    seed = int(rng.integers(res.n_motifs))
    placed = {seed}
    steps: list[PathwayStep] = []
    while len(placed) < res.n_motifs:
        frontier = [
            e
            for e in res.edges
            if (e.motif_a in placed) != (e.motif_b in placed)
        ]
        edge = frontier[int(rng.integers(len(frontier)))]
        if edge.motif_a in placed:
            new, core_atom, motif_atom = edge.motif_b, edge.atom_a, edge.atom_b
        else:
            new, core_atom, motif_atom = edge.motif_a, edge.atom_b, edge.atom_a
        steps.append(PathwayStep(new, core_atom, motif_atom, edge.order))
        placed.add(new)

    frag, fmap = res.motif_graph(seed)
    if steps and steps[0].core_atom in fmap:
        seed_key = canonical_key(frag, fmap[steps[0].core_atom])
    else:
        seed_key = _seed_key(frag)
    return Pathway(res, seed, seed_key, tuple(steps))


def sample_pathway(
    g: MolGraph, policy: ShredPolicy, rng: np.random.Generator | None = None
) -> Pathway:
    rng = np.random.default_rng(policy.rng_seed) if rng is None else rng
    return pathway_from_shred(shred(g, policy, rng=rng), rng)


def steps_from_pathway(
    pathway: Pathway, complex_ref: str | None = None
) -> list[ReconstructionStep]:
    res = pathway.shredding
    src = res.source
    placed = sorted(res.motif_atoms[pathway.seed_index])
    out: list[ReconstructionStep] = []
    for step in pathway.steps:
        core_sub, cmap = induced_subgraph(src, placed, role="ligand")
        core = as_fragment(core_sub).with_role("ligand")
        frag, fmap = res.motif_graph(step.motif_index)
        out.append(
            ReconstructionStep(
                core=core,
                core_orig_atoms=tuple(placed),
                growth_atom=cmap[step.core_atom],
                true_motif=canonical_key(frag, fmap[step.motif_atom]),
                true_bond_order=step.order,
                added_orig_atoms=res.motif_atoms[step.motif_index],
                complex_ref=complex_ref,
            )
        )
        placed = sorted(placed + list(res.motif_atoms[step.motif_index]))
    return out


def attach_motif(
    core: MolGraph,
    growth_atom: int,
    motif_graph: MolGraph,
    motif_attachment: int,
    order: str = "single",
) -> MolGraph:
    """Join a motif to the core by one bond, spending hydrogens as needed.

    Either endpoint may cover the new bond from its free valence; any
    shortfall is taken from explicit hydrogens, which is how an aromatic
    CH accepts a substituent. Derived attributes are recomputed on the
    combined graph so the result matches a from-scratch parse.
    """
    units = _ORDER_UNITS.get(order)
    if units is None:
        raise GrowthSiteError(f"cannot attach via {order!r} bond")
    offset = core.n_atoms
    atoms = list(core.atoms) + list(motif_graph.atoms)
    for graph, idx, pos in (
        (core, growth_atom, growth_atom),
        (motif_graph, motif_attachment, offset + motif_attachment),
    ):
        shortfall = units - graph.open_valence(idx)
        if shortfall > 0:
            n_h = graph.atoms[idx].n_hydrogens
            if n_h < shortfall:
                raise GrowthSiteError(
                    f"atom {idx} cannot host a {order} bond"
                )
            atoms[pos] = replace(atoms[pos], n_hydrogens=n_h - shortfall)
    bonds = list(core.bonds)
    for b in motif_graph.bonds:
        bonds.append(replace(b, i=b.i + offset, j=b.j + offset))
    bonds.append(Bond(growth_atom, offset + motif_attachment, order))
    merged = MolGraph(atoms, bonds, role=core.role)
    return as_fragment(merged).with_role(core.role)


def replay(pathway: Pathway) -> MolGraph:
    """Rebuild the molecule from fragment graphs and recorded attachments.

    Uses the same attachment routine as interactive elaboration, so the
    identity check against the source exercises the production path.
    """
    res = pathway.shredding
    core, cmap = res.motif_graph(pathway.seed_index)
    core = as_fragment(core).with_role("ligand")
    origin_to_local = dict(cmap)
    for step in pathway.steps:
        frag, fmap = res.motif_graph(step.motif_index)
        offset = core.n_atoms
        core = attach_motif(
            core,
            origin_to_local[step.core_atom],
            frag,
            fmap[step.motif_atom],
            order=step.order,
        )
        for orig, local in fmap.items():
            origin_to_local[orig] = offset + local
    return core


def sample_negatives(
    step: ReconstructionStep,
    baseline,
    k: int,
    rng: np.random.Generator,
    exclude_truth: bool = True,
) -> tuple[str, ...]:
    """Draw k keys i.i.d. from the baseline conditioned on this step."""
    vocab = baseline.vocabulary
    if k < 1:
        raise ValueError("k must be at least 1")
    if exclude_truth and step.true_motif not in vocab:
        raise VocabularyError("ground truth missing from baseline vocabulary")
    probs = np.asarray(baseline.conditional(step), dtype=np.float64)
    if probs.shape != (len(vocab),):
        raise VocabularyError("baseline distribution does not match vocabulary")
    cum = np.cumsum(probs)
    cum /= cum[-1]
    keys = vocab.keys()
    out: list[str] = []
    for _ in range(k):
        for _attempt in range(MAX_REJECTION_ATTEMPTS):
            pick = int(np.searchsorted(cum, rng.random(), side="right"))
            key = keys[min(pick, len(keys) - 1)]
            if not exclude_truth or key != step.true_motif:
                out.append(key)
                break
        else:
            raise DegenerateVocabularyError(
                "no admissible counter-example after "
                f"{MAX_REJECTION_ATTEMPTS} draws"
            )
    return tuple(out)


def with_negatives(
    step: ReconstructionStep,
    baseline,
    k: int,
    rng: np.random.Generator,
    exclude_truth: bool = True,
) -> ReconstructionStep:
    return replace(
        step,
        negatives=sample_negatives(step, baseline, k, rng, exclude_truth),
    )


def epoch_steps(
    molecules,
    policy: ShredPolicy,
    epoch: int,
    complex_refs=None,
) -> list[ReconstructionStep]:
    """Fresh pathways for one epoch, one independent stream per molecule."""
    out: list[ReconstructionStep] = []
    for idx, g in enumerate(molecules):
        rng = np.random.default_rng([policy.rng_seed, epoch, idx])
        pathway = sample_pathway(g, policy, rng=rng)
        ref = complex_refs[idx] if complex_refs is not None else None
        out.extend(steps_from_pathway(pathway, complex_ref=ref))
    return out
