"""Topology-level likelihood model.

A shared message-passing encoder embeds atoms of any graph (partial
ligand, protein, or motif exemplar). Two dense heads then produce a pair
of representations per atom; growth vectors concatenate them one way and
motif vectors the other, so the score is symmetric in the two roles. The
sigmoid-activated scaled dot product is trained contrastively against
the frequency baseline, and its odds ratio multiplies the frequency
prior into a topology-aware likelihood.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CheckpointError,
    DegenerateVocabularyError,
    NonFiniteError,
    StageOrderError,
)
from .molio import BOND_DIM, ATOM_DIM, MolGraph, featurize
from .nn import tensor as T
from .nn.checkpoint import (
    fingerprint_json,
    load_checkpoint,
    require_meta,
    save_checkpoint,
)
from .nn.optim import Adam
from .recon import (
    FrequencyBaseline,
    ReconstructionStep,
    sample_negatives,
    sample_pathway,
    steps_from_pathway,
)
from .shred import ShredPolicy, Vocabulary

N_ROUNDS = 4  # message-passing depth; fixed by the architecture

_HOLDOUT_EPOCH = 10**6  # stream index reserved for held-out pathways


@dataclass(frozen=True)
class Config2D:
    """Training-time settings; the policy ties the model to its corpus."""

    policy: ShredPolicy
    hidden_dim: int = 64
    k_negatives: int = 16
    batch_molecules: int = 64
    max_epochs: int = 40
    patience: int = 5
    learning_rate: float = 1e-4
    holdout_fraction: float = 0.1
    recalibration_epochs: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_dim < 1 or self.k_negatives < 1:
            raise ValueError("hidden_dim and k_negatives must be positive")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")
        if self.max_epochs < 1 or self.recalibration_epochs < 1:
            raise ValueError("epoch budgets must be positive")

    def fingerprint_payload(self) -> dict:
        return {
            "policy": self.policy.fingerprint_payload(),
            "hidden_dim": self.hidden_dim,
            "k_negatives": self.k_negatives,
            "batch_molecules": self.batch_molecules,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "learning_rate": self.learning_rate,
            "holdout_fraction": self.holdout_fraction,
            "recalibration_epochs": self.recalibration_epochs,
            "seed": self.seed,
        }


def init_encoder_params(hidden_dim: int, rng: np.random.Generator) -> dict[str, T.Tensor]:
    """Message-passing encoder parameters; layout shared by both models."""
    d = hidden_dim
    p: dict[str, T.Tensor] = {}

    def mat(name: str, fan_in: int, fan_out: int) -> None:
        p[name] = T.parameter(rng, fan_in, fan_out, name=name)

    def vec(name: str, size: int) -> None:
        p[name] = T.Tensor(
            T.init_glorot(rng, size, 1)[:, 0], requires_grad=True, name=name
        )

    mat("embed.w", ATOM_DIM, d)
    p["embed.b"] = T.bias(d, "embed.b")
    mat("ga0.feat.w", d + BOND_DIM, d)
    vec("ga0.att_self.c", d)
    vec("ga0.att_edge.c", d)
    mat("ga0.out.w", d, d)
    mat("ga1.proj.w", d, d)
    vec("ga1.att.c", 2 * d)
    for r in range(N_ROUNDS):
        for gate in ("rh", "rx", "sh", "sx", "th", "tx"):
            mat(f"gru{r}.{gate}.w", d, d)
            p[f"gru{r}.{gate}.b"] = T.bias(d, f"gru{r}.{gate}.b")
    return p


def init_params_2d(config: Config2D, rng: np.random.Generator) -> dict[str, T.Tensor]:
    d = config.hidden_dim
    p = init_encoder_params(d, rng)
    for head in ("head0", "head1"):
        for layer in range(3):
            p[f"{head}.l{layer}.w"] = T.parameter(
                rng, d, d, name=f"{head}.l{layer}.w"
            )
            p[f"{head}.l{layer}.b"] = T.bias(d, f"{head}.l{layer}.b")
    return p


class GraphBatch:
    """Disjoint union of graphs with flattened edge index arrays."""

    def __init__(self, graphs: list[MolGraph]):
        feats, bond_feats = [], []
        src, dst, eidx = [], [], []
        offsets = []
        n = 0
        m = 0
        for g in graphs:
            offsets.append(n)
            af, bf = featurize(g)
            feats.append(af)
            bond_feats.append(bf)
            for b_idx, b in enumerate(g.bonds):
                src.extend((n + b.i, n + b.j))
                dst.extend((n + b.j, n + b.i))
                eidx.extend((m + b_idx, m + b_idx))
            n += g.n_atoms
            m += len(g.bonds)
        self.offsets = offsets
        self.n_atoms = n
        self.atom_feats = np.concatenate(feats) if feats else np.zeros((0, ATOM_DIM))
        self.bond_feats = (
            np.concatenate(bond_feats) if bond_feats else np.zeros((0, BOND_DIM))
        )
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.edge_bond = np.asarray(eidx, dtype=np.int64)
        # rounds beyond the first attend over the neighbourhood plus self
        self.loop_src = np.concatenate([self.src, np.arange(n, dtype=np.int64)])
        self.loop_dst = np.concatenate([self.dst, np.arange(n, dtype=np.int64)])


def encode_atoms_t(params: dict[str, T.Tensor], batch: GraphBatch) -> T.Tensor:
    """Per-atom embeddings for a union graph, on the autodiff tape."""
    feats = T.Tensor(batch.atom_feats)
    x = T.leaky_relu(T.linear(feats, params["embed.w"], params["embed.b"]))

    # first round: bond-feature-conditioned attention, no self loop
    if batch.src.size:
        src_x = T.gather_rows(x, batch.src)
        edge_f = T.gather_rows(T.Tensor(batch.bond_feats), batch.edge_bond)
        edge_x = T.leaky_relu(
            T.matmul(T.concat([src_x, edge_f], axis=1), params["ga0.feat.w"])
        )
        score_self = T.gather_rows(
            T.matmul(x, _col(params["ga0.att_self.c"])), batch.dst
        )
        score_edge = T.matmul(edge_x, _col(params["ga0.att_edge.c"]))
        z = T.leaky_relu(_flat(T.add(score_self, score_edge)))
        gamma = T.segment_softmax(z, batch.dst, batch.n_atoms)
        msg = T.matmul(src_x, params["ga0.out.w"])
        weighted = T.mul(msg, _unflat(gamma))
        pooled = T.segment_sum(weighted, batch.dst, batch.n_atoms)
    else:
        pooled = T.Tensor(np.zeros((batch.n_atoms, params["ga0.out.w"].shape[1])))
    h = T.elu(pooled)
    x = T.relu(T.gru_cell(h, x, params, "gru0"))

    # later rounds share one attention, applied with per-round update gates
    for r in range(1, N_ROUNDS):
        proj = T.matmul(x, params["ga1.proj.w"])
        cat = T.concat(
            [T.gather_rows(proj, batch.loop_dst), T.gather_rows(proj, batch.loop_src)],
            axis=1,
        )
        z = T.leaky_relu(_flat(T.matmul(cat, _col(params["ga1.att.c"]))))
        gamma = T.segment_softmax(z, batch.loop_dst, batch.n_atoms)
        weighted = T.mul(T.gather_rows(proj, batch.loop_src), _unflat(gamma))
        h = T.elu(T.segment_sum(weighted, batch.loop_dst, batch.n_atoms))
        x = T.relu(T.gru_cell(h, x, params, f"gru{r}"))
    return T.layer_norm(x)


def _col(v: T.Tensor) -> T.Tensor:
    return T.reshape(v, (v.shape[0], 1))


def _flat(x: T.Tensor) -> T.Tensor:
    return T.reshape(x, (x.shape[0],))


def _unflat(x: T.Tensor) -> T.Tensor:
    return T.reshape(x, (x.shape[0], 1))


def _head(params: dict[str, T.Tensor], x: T.Tensor, which: int) -> T.Tensor:
    out = x
    for layer in range(3):
        out = T.linear(
            out, params[f"head{which}.l{layer}.w"], params[f"head{which}.l{layer}.b"]
        )
        if layer < 2:
            out = T.softplus(out)
    return out


def growth_vectors_t(params: dict[str, T.Tensor], x2d: T.Tensor) -> T.Tensor:
    return T.concat([_head(params, x2d, 0), _head(params, x2d, 1)], axis=1)


def motif_vectors_t(params: dict[str, T.Tensor], x2d: T.Tensor) -> T.Tensor:
    # swapped concatenation relative to growth vectors
    return T.concat([_head(params, x2d, 1), _head(params, x2d, 0)], axis=1)


def pair_logits(u: T.Tensor, v: T.Tensor, hidden_dim: int) -> T.Tensor:
    scale = T.Tensor(1.0 / (2.0 * math.sqrt(hidden_dim)))
    return T.mul(T.rows_dot(u, v), scale)


class Model2D:
    """Trained topology model bound to its vocabulary and policy."""

    def __init__(
        self,
        params: dict[str, T.Tensor],
        vocabulary: Vocabulary,
        config: Config2D,
        recalibrated: bool = False,
    ):
        self.params = params
        self.vocabulary = vocabulary
        self.config = config
        self.recalibrated = recalibrated
        self.params_version = 0
        self._cache_version: int | None = None
        self._cached_motifs: np.ndarray | None = None

    def bump_version(self) -> None:
        """Invalidate derived caches after a parameter update."""
        self.params_version += 1

    def encode_atoms(self, g: MolGraph) -> np.ndarray:
        return encode_atoms_t(self.params, GraphBatch([g])).data

    def motif_matrix(self) -> np.ndarray:
        """Motif vectors for the whole vocabulary, cached per param version."""
        if self._cache_version != self.params_version:
            graphs = [e.motif().graph for e in self.vocabulary.entries]
            anchors = [e.attachment for e in self.vocabulary.entries]
            batch = GraphBatch(graphs)
            x2d = encode_atoms_t(self.params, batch)
            rows = np.asarray(
                [off + a for off, a in zip(batch.offsets, anchors)], dtype=np.int64
            )
            vecs = motif_vectors_t(self.params, T.gather_rows(x2d, rows))
            self._cached_motifs = vecs.data.copy()
            self._cache_version = self.params_version
        return self._cached_motifs

    def motif_vector(self, key: str) -> np.ndarray:
        return self.motif_matrix()[self.vocabulary.index_of(key)]

    def growth_vector(self, core: MolGraph, growth_atom: int) -> np.ndarray:
        x2d = encode_atoms_t(self.params, GraphBatch([core]))
        rows = T.gather_rows(x2d, np.asarray([growth_atom], dtype=np.int64))
        return growth_vectors_t(self.params, rows).data[0]

    def logit_row(self, core: MolGraph, growth_atom: int) -> np.ndarray:
        u = self.growth_vector(core, growth_atom)
        return (self.motif_matrix() @ u) / (2.0 * math.sqrt(self.config.hidden_dim))

    def alpha_row(self, core: MolGraph, growth_atom: int) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logit_row(core, growth_atom)))

    def q_row(self, core: MolGraph, growth_atom: int) -> np.ndarray:
        alpha = self.alpha_row(core, growth_atom)
        return alpha / (1.0 - alpha)

    def alpha2(self, key: str, core: MolGraph, growth_atom: int) -> float:
        return float(self.alpha_row(core, growth_atom)[self.vocabulary.index_of(key)])

    def q2(self, key: str, core: MolGraph, growth_atom: int) -> float:
        a = self.alpha2(key, core, growth_atom)
        return a / (1.0 - a)

    def meta(self) -> dict:
        return {
            "kind": "model2d",
            "hidden_dim": self.config.hidden_dim,
            "vocab_fingerprint": self.vocabulary.fingerprint(),
            "policy_fingerprint": fingerprint_json(
                self.config.policy.fingerprint_payload()
            ),
            "config_fingerprint": fingerprint_json(self.config.fingerprint_payload()),
            "config": _config_payload(self.config),
            "recalibrated": self.recalibrated,
        }

    def save(self, path) -> None:
        save_checkpoint(path, self.params, self.meta())

    @classmethod
    def load(cls, path, vocabulary: Vocabulary) -> "Model2D":
        params, meta = load_checkpoint(path)
        require_meta(meta, "kind", "model2d", "2D model checkpoint")
        if meta.get("vocab_fingerprint") != vocabulary.fingerprint():
            raise CheckpointError(
                "checkpoint was trained against a different vocabulary"
            )
        config = _config_from_payload(meta["config"])
        model = cls(params, vocabulary, config, bool(meta.get("recalibrated")))
        return model


def _config_payload(config: Config2D) -> dict:
    payload = config.fingerprint_payload()
    payload["policy"] = dict(payload["policy"])
    payload["policy"]["rng_seed"] = config.policy.rng_seed
    return payload


def _config_from_payload(payload: dict) -> Config2D:
    policy = ShredPolicy(
        rng_seed=payload["policy"]["rng_seed"],
        max_radius=payload["policy"]["max_radius"],
        directional_prob=payload["policy"]["directional_prob"],
    )
    fields = {k: v for k, v in payload.items() if k != "policy"}
    return Config2D(policy=policy, **fields)


# ------------------------------------------------------------------ training


def _attach_negatives(groups, baseline, k, rng, exclude_truth):
    """Fresh counter-examples for every step.

    Steps whose ground truth fell outside the vocabulary are dropped:
    re-shredding each epoch can surface motifs the vocabulary pass never
    observed, and the posterior is only defined over the vocabulary.
    Degenerate steps with no admissible counter-example are dropped too.
    """
    out = []
    dropped = 0
    for steps in groups:
        kept = []
        for step in steps:
            if step.true_motif not in baseline.vocabulary:
                dropped += 1
                continue
            try:
                negs = sample_negatives(step, baseline, k, rng, exclude_truth)
            except DegenerateVocabularyError:
                dropped += 1
                continue
            kept.append((step, negs))
        out.append(kept)
    total = dropped + sum(len(g) for g in out)
    if total and dropped > 0.5 * total:
        warnings.warn(
            f"dropped {dropped}/{total} steps not covered by the vocabulary",
            stacklevel=2,
        )
    return out


def batch_loss(
    params: dict[str, T.Tensor],
    steps: list[ReconstructionStep],
    vocabulary: Vocabulary,
    hidden_dim: int,
    negatives: list[tuple[str, ...]] | None = None,
) -> T.Tensor:
    """Contrastive BCE over one batch of steps, single union forward.

    Counter-examples default to each step's own negatives field; passing
    a parallel list overrides them, which the no-exclusion toy needs.
    Each step's negatives share one unit of loss weight, so the optimum
    odds stay the truth-to-baseline density ratio whatever k is.
    """
    if negatives is None:
        negatives = [s.negatives for s in steps]
    cores = [s.core for s in steps]
    needed: list[str] = []
    pos: dict[str, int] = {}
    for s, negs in zip(steps, negatives):
        for key in (s.true_motif, *negs):
            if key not in pos:
                pos[key] = len(needed)
                needed.append(key)
    motif_graphs = []
    anchors = []
    for key in needed:
        entry = vocabulary.entry(key)
        motif_graphs.append(entry.motif().graph)
        anchors.append(entry.attachment)

    core_batch = GraphBatch(cores)
    motif_batch = GraphBatch(motif_graphs)
    core_x = encode_atoms_t(params, core_batch)
    motif_x = encode_atoms_t(params, motif_batch)

    u_rows, v_rows, labels, weights = [], [], [], []
    for s_idx, s in enumerate(steps):
        a_row = core_batch.offsets[s_idx] + s.growth_atom
        negs = negatives[s_idx]
        share = 1.0 / len(negs) if negs else 1.0
        for key, y, w in (
            (s.true_motif, 1.0, 1.0),
            *((n, 0.0, share) for n in negs),
        ):
            u_rows.append(a_row)
            v_rows.append(motif_batch.offsets[pos[key]] + anchors[pos[key]])
            labels.append(y)
            weights.append(w)

    u = growth_vectors_t(
        params, T.gather_rows(core_x, np.asarray(u_rows, dtype=np.int64))
    )
    v = motif_vectors_t(
        params, T.gather_rows(motif_x, np.asarray(v_rows, dtype=np.int64))
    )
    logits = pair_logits(u, v, hidden_dim)
    return T.bce_with_logits(logits, np.asarray(labels), np.asarray(weights))


def _loss_value(params, groups, vocabulary, hidden_dim) -> float:
    pairs = [p for g in groups for p in g]
    if not pairs:
        return float("nan")
    steps = [p[0] for p in pairs]
    negs = [p[1] for p in pairs]
    return float(batch_loss(params, steps, vocabulary, hidden_dim, negs).data)


def fit_contrastive(
    vocabulary: Vocabulary,
    config: Config2D,
    provider,
    baseline,
    *,
    epochs: int,
    early_stop: bool,
    exclude_truth: bool = True,
    params: dict[str, T.Tensor] | None = None,
    holdout_groups: list[list[ReconstructionStep]] | None = None,
) -> tuple[dict[str, T.Tensor], list[dict]]:
    """Shared optimisation loop for initial training and recalibration.

    provider(epoch) yields per-molecule step groups; negatives are drawn
    fresh each epoch from the baseline. A provider may instead yield
    groups of (step, negatives) pairs to pin the counter-examples, which
    the noise-free contrastive oracle relies on. Holdout groups arrive
    with their negatives already attached so the stopping signal is
    comparable across epochs.
    """
    rng = np.random.default_rng([config.seed, 71])
    if params is None:
        params = init_params_2d(config, np.random.default_rng([config.seed, 11]))
    opt = Adam(params, lr=config.learning_rate)
    history: list[dict] = []
    best_loss = float("inf")
    best_snapshot: dict[str, np.ndarray] | None = None
    stale = 0

    for epoch in range(epochs):
        raw = provider(epoch)
        if any(g and isinstance(g[0], tuple) for g in raw):
            groups = raw
        else:
            groups = _attach_negatives(
                raw, baseline, config.k_negatives, rng, exclude_truth
            )
        order = rng.permutation(len(groups))
        epoch_losses = []
        for start in range(0, len(order), config.batch_molecules):
            chunk = order[start : start + config.batch_molecules]
            pairs = [p for gi in chunk for p in groups[gi]]
            if not pairs:
                continue
            steps = [p[0] for p in pairs]
            negs = [p[1] for p in pairs]
            opt.zero_grad()
            with T.Tape() as tape:
                loss = batch_loss(
                    params, steps, vocabulary, config.hidden_dim, negs
                )
            if not np.isfinite(loss.data):
                raise NonFiniteError(f"training loss diverged at epoch {epoch}")
            tape.backward(loss)
            opt.step()
            epoch_losses.append(float(loss.data))

        record = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if holdout_groups is not None:
            held = _loss_value(params, holdout_groups, vocabulary, config.hidden_dim)
            record["holdout_loss"] = held
            if early_stop:
                if held < best_loss - 1e-12:
                    best_loss = held
                    best_snapshot = {k: p.data.copy() for k, p in params.items()}
                    stale = 0
                else:
                    stale += 1
                    if stale >= config.patience:
                        history.append(record)
                        break
        history.append(record)

    if early_stop and best_snapshot is not None:
        for k, p in params.items():
            p.data = best_snapshot[k]
    return params, history


def _pathway_groups(molecules, policy: ShredPolicy, epoch: int):
    groups = []
    for idx, g in enumerate(molecules):
        rng = np.random.default_rng([policy.rng_seed, epoch, idx])
        groups.append(steps_from_pathway(sample_pathway(g, policy, rng=rng)))
    return groups


def train_2d(
    molecules: list[MolGraph],
    vocabulary: Vocabulary,
    config: Config2D,
    baseline=None,
) -> tuple[Model2D, list[dict]]:
    """Contrastive training against the frequency baseline."""
    if baseline is None:
        baseline = FrequencyBaseline(vocabulary)
    split_rng = np.random.default_rng([config.seed, 5])
    order = split_rng.permutation(len(molecules))
    n_hold = int(round(len(molecules) * config.holdout_fraction))
    if config.holdout_fraction > 0:
        n_hold = max(n_hold, 1)
    hold_mols = [molecules[i] for i in order[:n_hold]]
    train_mols = [molecules[i] for i in order[n_hold:]]
    if not train_mols:
        raise ValueError("no molecules left to train on after holdout split")

    holdout_groups = None
    if hold_mols:
        raw = _pathway_groups(hold_mols, config.policy, _HOLDOUT_EPOCH)
        holdout_groups = _attach_negatives(
            raw,
            baseline,
            config.k_negatives,
            np.random.default_rng([config.seed, 13]),
            True,
        )

    params, history = fit_contrastive(
        vocabulary,
        config,
        lambda epoch: _pathway_groups(train_mols, config.policy, epoch),
        baseline,
        epochs=config.max_epochs,
        early_stop=True,
        holdout_groups=holdout_groups,
    )
    return Model2D(params, vocabulary, config), history


def recalibrate(
    model: Model2D,
    molecules2: list[MolGraph],
    vocabulary2: Vocabulary,
    config: Config2D | None = None,
) -> tuple[Model2D, list[dict]]:
    """Brief transfer step onto a new corpus and its vocabulary.

    Runs for the fixed recalibration budget with no early stopping, with
    negatives drawn from the frequency baseline of the new vocabulary.
    """
    if config is None:
        config = model.config
    elif fingerprint_json(config.policy.fingerprint_payload()) != fingerprint_json(
        model.config.policy.fingerprint_payload()
    ):
        raise StageOrderError(
            "recalibration policy differs from the training policy"
        )
    params = {
        k: T.Tensor(p.data.copy(), requires_grad=True, name=k)
        for k, p in model.params.items()
    }
    baseline = FrequencyBaseline(vocabulary2)
    params, history = fit_contrastive(
        vocabulary2,
        config,
        lambda epoch: _pathway_groups(molecules2, config.policy, epoch),
        baseline,
        epochs=config.recalibration_epochs,
        early_stop=False,
        params=params,
    )
    return Model2D(params, vocabulary2, config, recalibrated=True), history
