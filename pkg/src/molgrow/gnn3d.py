"""Geometry-level likelihood model.

The growth atom's surroundings are summarized through triplet hypernodes:
every ordered pair of environment atoms forms one node carrying distance
and angle features. An outward attention pass spreads the growth atom's
context to the environment, an inward pass collects it back, and smooth
distance priors reweight the attention so atoms drifting across the
cutoff shell fade out instead of popping. Motif scores come from the
inner product with purely topology-derived motif vectors, trained
contrastively against the recalibrated topology baseline, so the odds
ratio isolates what the 3D context adds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._kernels import NF_PER_RBF, min_dist, triplet_features
from .augment import NoiseConfig, colored_noise, torsion_jitter
from .errors import (
    CheckpointError,
    ComplexFormatError,
    DegenerateVocabularyError,
    NonFiniteError,
    StageOrderError,
)
from .gnn2d import (
    GraphBatch,
    Model2D,
    N_ROUNDS,
    encode_atoms_t,
    init_encoder_params,
)
from .molio import Complex, MolGraph, coords_array, induced_subgraph, with_coords
from .nn import tensor as T
from .nn.checkpoint import (
    fingerprint_json,
    load_checkpoint,
    require_meta,
    save_checkpoint,
)
from .nn.optim import Adam
from .recon import (
    ReconstructionStep,
    sample_negatives,
    sample_pathway,
    steps_from_pathway,
)
from .shred import ShredPolicy, Vocabulary

R_CUT_PROTEIN = 7.5  # Angstrom, environment radius for protein atoms
R_CUT_LIGAND = 3.0  # Angstrom, environment radius for core-ligand atoms
CUTOFF_DELTA = 0.5  # transition width of the smooth cutoff window
PRIOR_W0 = 1.0  # near-field plateau of the proximity weight
PRIOR_BETA = 0.1  # gate steepness of the proximity blend
PRIOR_R_MIN = 0.5  # Angstrom, clamp below which the inverse square flattens
TRIPLET_DIM = 1 + 3 * NF_PER_RBF + 6

_HOLDOUT_EPOCH = 10**6


@dataclass(frozen=True)
class Config3D:
    """Training-time settings for the geometry model."""

    policy: ShredPolicy
    hidden_dim: int = 64
    k_negatives: int = 16
    batch_complexes: int = 40
    max_epochs: int = 30
    patience: int = 5
    learning_rate: float = 1e-4
    holdout_fraction: float = 0.1
    noise: NoiseConfig = NoiseConfig()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_dim < 1 or self.k_negatives < 1:
            raise ValueError("hidden_dim and k_negatives must be positive")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")
        if self.max_epochs < 1 or self.batch_complexes < 1:
            raise ValueError("epoch budget and batch size must be positive")

    def fingerprint_payload(self) -> dict:
        return {
            "policy": self.policy.fingerprint_payload(),
            "hidden_dim": self.hidden_dim,
            "k_negatives": self.k_negatives,
            "batch_complexes": self.batch_complexes,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "learning_rate": self.learning_rate,
            "holdout_fraction": self.holdout_fraction,
            "noise": self.noise.fingerprint_payload(),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class HyperEnv:
    """Triplet hypergraph around one growth atom.

    Environment atoms are listed core-ligand first (ascending core index),
    then protein (ascending protein index). Triplet arrays enumerate all
    ordered pairs of environment positions in row-major order, self-pairs
    included; ``idx_b``/``idx_bp`` give each pair's two positions.
    """

    center: int
    core_atoms: tuple[int, ...]
    protein_atoms: tuple[int, ...]
    features: np.ndarray
    priors: np.ndarray
    idx_b: np.ndarray
    idx_bp: np.ndarray

    @property
    def n_env(self) -> int:
        return len(self.core_atoms) + len(self.protein_atoms)


def _positions(graph: MolGraph, what: str) -> np.ndarray:
    for idx, atom in enumerate(graph.atoms):
        if atom.coords is None:
            raise ComplexFormatError(f"{what} atom {idx} has no coordinates")
    return coords_array(graph)


def build_hyperenv(protein, core: MolGraph, growth_atom: int) -> HyperEnv:
    """Collect environment atoms and featurize their ordered pairs.

    ``protein`` may be a Complex or a bare protein graph; the core must
    carry coordinates placing it in the same frame.
    """
    if isinstance(protein, Complex):
        protein = protein.protein
    core_pos = _positions(core, "core")
    a_pos = core_pos[growth_atom]

    # strict inequality: an atom exactly at the cutoff carries prior zero,
    # and as a receiver that would normalize 0/0
    core_d = np.linalg.norm(core_pos - a_pos, axis=1)
    core_keep = [
        i
        for i in range(core.n_atoms)
        if i != growth_atom and core_d[i] < R_CUT_LIGAND
    ]
    if protein.n_atoms:
        prot_pos = _positions(protein, "protein")
        prot_d = np.linalg.norm(prot_pos - a_pos, axis=1)
        prot_keep = [i for i in range(protein.n_atoms) if prot_d[i] < R_CUT_PROTEIN]
    else:
        prot_pos = np.zeros((0, 3))
        prot_keep = []

    env_pos = np.concatenate(
        [core_pos[core_keep].reshape(-1, 3), prot_pos[prot_keep].reshape(-1, 3)]
    )
    rcut = np.concatenate(
        [
            np.full(len(core_keep), R_CUT_LIGAND),
            np.full(len(prot_keep), R_CUT_PROTEIN),
        ]
    )
    feats, priors, idx_b, idx_bp = triplet_features(
        a_pos,
        env_pos,
        rcut,
        delta=CUTOFF_DELTA,
        w0=PRIOR_W0,
        beta=PRIOR_BETA,
        r_min=PRIOR_R_MIN,
    )
    return HyperEnv(
        center=growth_atom,
        core_atoms=tuple(core_keep),
        protein_atoms=tuple(prot_keep),
        features=feats,
        priors=priors,
        idx_b=idx_b,
        idx_bp=idx_bp,
    )


# ------------------------------------------------------------------- blocks

def _col(v: T.Tensor) -> T.Tensor:
    return T.reshape(v, (v.shape[0], 1))


def _flat(x: T.Tensor) -> T.Tensor:
    return T.reshape(x, (x.shape[0],))


def _unflat(x: T.Tensor) -> T.Tensor:
    return T.reshape(x, (x.shape[0], 1))


def res_trans(params: dict[str, T.Tensor], prefix: str, x: T.Tensor) -> T.Tensor:
    """Residual transfer block: two dense layers around a normalization."""
    inner = T.elu(T.linear(x, params[f"{prefix}.l0.w"], params[f"{prefix}.l0.b"]))
    out = T.linear(
        T.layer_norm(inner), params[f"{prefix}.l1.w"], params[f"{prefix}.l1.b"]
    )
    return T.elu(T.add(x, out))


def hga_attention(
    params: dict[str, T.Tensor],
    prefix: str,
    x_local: T.Tensor,
    hypernodes: T.Tensor,
    priors: np.ndarray,
    seg: np.ndarray,
    n_rows: int,
) -> tuple[T.Tensor, T.Tensor]:
    """Prior-reweighted attention over hypernodes grouped by receiver.

    Scores mix the receiver's incoming embedding with the hypernode
    vector; softmax weights are multiplied by the distance priors and
    renormalized per receiver. Returns (pooled messages, final weights).
    """
    rec = T.matmul(T.gather_rows(x_local, seg), params[f"{prefix}.score_x.w"])
    hn = T.matmul(hypernodes, params[f"{prefix}.score_h.w"])
    scored = T.leaky_relu(T.add(rec, hn))
    z = T.leaky_relu(_flat(T.matmul(scored, _col(params[f"{prefix}.att.c"]))))
    gamma = T.segment_softmax(z, seg, n_rows)
    weighted = T.mul(gamma, T.Tensor(priors))
    denom = T.segment_sum(weighted, seg, n_rows)
    gamma_t = T.div(weighted, T.gather_rows(denom, seg))
    msg = T.matmul(hypernodes, params[f"{prefix}.agg.w"])
    pooled = T.segment_sum(T.mul(msg, _unflat(gamma_t)), seg, n_rows)
    return pooled, gamma_t


def hyper_rows(
    params: dict[str, T.Tensor], prefix: str, x_local: T.Tensor, env: HyperEnv
) -> T.Tensor:
    """Hypernode embeddings: projected (center, b, b') rows plus geometry."""
    n = env.n_env
    x0 = T.matmul(x_local, params[f"{prefix}.proj0.w"])
    x1 = T.matmul(x_local, params[f"{prefix}.proj1.w"])
    x2 = T.matmul(x_local, params[f"{prefix}.proj2.w"])
    return T.concat(
        [
            T.gather_rows(x0, np.zeros(n * n, dtype=np.int64)),
            T.gather_rows(x1, env.idx_b + 1),
            T.gather_rows(x2, env.idx_bp + 1),
            T.Tensor(env.features),
        ],
        axis=1,
    )


def ta_pass(
    params: dict[str, T.Tensor],
    prefix: str,
    x_local: T.Tensor,
    env: HyperEnv,
    inward: bool,
) -> T.Tensor:
    """One triplet-attention pass over the local [center; environment] rows.

    Outward updates the environment atoms (each pair's terminal atom
    receives it); inward updates only the center. Rows without any
    hypernode, the center included when the environment is empty, pass
    through unchanged.
    """
    n = env.n_env
    if n == 0:
        return x_local
    hypernodes = hyper_rows(params, prefix, x_local, env)
    mask = np.zeros((n + 1, 1))
    if inward:
        seg = np.zeros(n * n, dtype=np.int64)
        mask[0] = 1.0
    else:
        seg = (env.idx_bp + 1).astype(np.int64)
        mask[1:] = 1.0
    pooled, _ = hga_attention(
        params, prefix, x_local, hypernodes, env.priors, seg, n + 1
    )
    updated = T.elu(T.add(x_local, pooled))
    return T.add(
        T.mul(updated, T.Tensor(mask)), T.mul(x_local, T.Tensor(1.0 - mask))
    )


def growth_u_t(
    params: dict[str, T.Tensor], x_local: T.Tensor, env: HyperEnv
) -> T.Tensor:
    """3D context vector for the center row, shape (1, d)."""
    x = res_trans(params, "rt_in", x_local)
    x = ta_pass(params, "ta_out", x, env, inward=False)
    x = ta_pass(params, "ta_in", x, env, inward=True)
    x = res_trans(params, "rt_out", x)
    center = T.gather_rows(x, np.zeros(1, dtype=np.int64))
    return T.matmul(center, params["u_proj.w"])


def motif_v_t(
    params: dict[str, T.Tensor], x_rows: T.Tensor, anchor: int
) -> T.Tensor:
    """Motif vector from its atoms' topology embeddings, shape (1, d).

    Combines the attachment atom's transformed vector with an attentive
    pool over the whole motif; the attention weights are computed once
    from the plain sum.
    """
    xt = res_trans(params, "rt_motif", x_rows)
    m = xt.shape[0]
    zeros = np.zeros(m, dtype=np.int64)
    x_vec = T.gather_rows(xt, np.asarray([anchor], dtype=np.int64))
    pool = T.segment_sum(xt, zeros, 1)
    scored = T.leaky_relu(
        T.add(
            T.matmul(xt, params["reduce.self.w"]),
            T.matmul(T.gather_rows(pool, zeros), params["reduce.pool.w"]),
        )
    )
    z = T.leaky_relu(_flat(T.matmul(scored, _col(params["reduce.att.c"]))))
    gamma = T.segment_softmax(z, zeros, 1)
    delta = T.segment_sum(
        T.mul(T.matmul(xt, params["reduce.out.w"]), _unflat(gamma)), zeros, 1
    )
    pooled = T.elu(T.add(pool, delta))
    env_vec = T.layer_norm(pooled)
    return T.linear(
        T.add(x_vec, env_vec), params["v_proj.w"], params["v_proj.b"]
    )


def pair_logits_3d(u: T.Tensor, v: T.Tensor, hidden_dim: int) -> T.Tensor:
    scale = T.Tensor(1.0 / math.sqrt(hidden_dim))
    return T.mul(T.rows_dot(u, v), scale)


def init_params_3d(config: Config3D, rng: np.random.Generator) -> dict[str, T.Tensor]:
    d = config.hidden_dim
    p = init_encoder_params(d, rng)

    def mat(name: str, fan_in: int, fan_out: int) -> None:
        p[name] = T.parameter(rng, fan_in, fan_out, name=name)

    def vec(name: str, size: int) -> None:
        p[name] = T.Tensor(
            T.init_glorot(rng, size, 1)[:, 0], requires_grad=True, name=name
        )

    hyper = 3 * d + TRIPLET_DIM
    for block in ("rt_in", "rt_out", "rt_motif"):
        for layer in range(2):
            mat(f"{block}.l{layer}.w", d, d)
            p[f"{block}.l{layer}.b"] = T.bias(d, f"{block}.l{layer}.b")
    for ta in ("ta_out", "ta_in"):
        for mu in range(3):
            mat(f"{ta}.proj{mu}.w", d, d)
        mat(f"{ta}.agg.w", hyper, d)
        mat(f"{ta}.score_x.w", d, d)
        mat(f"{ta}.score_h.w", hyper, d)
        vec(f"{ta}.att.c", d)
    mat("reduce.self.w", d, d)
    mat("reduce.pool.w", d, d)
    vec("reduce.att.c", d)
    mat("reduce.out.w", d, d)
    mat("u_proj.w", d, d)
    mat("v_proj.w", d, d)
    p["v_proj.b"] = T.bias(d, "v_proj.b")
    return p


# -------------------------------------------------------------------- model

def _local_rows(
    batch_x: T.Tensor,
    core_offset: int,
    prot_offset: int,
    env: HyperEnv,
) -> T.Tensor:
    rows = np.concatenate(
        [
            np.asarray([core_offset + env.center], dtype=np.int64),
            core_offset + np.asarray(env.core_atoms, dtype=np.int64),
            prot_offset + np.asarray(env.protein_atoms, dtype=np.int64),
        ]
    )
    return T.gather_rows(batch_x, rows)


class Model3D:
    """Trained geometry model bound to its vocabulary and policy."""

    def __init__(
        self,
        params: dict[str, T.Tensor],
        vocabulary: Vocabulary,
        config: Config3D,
    ):
        self.params = params
        self.vocabulary = vocabulary
        self.config = config
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
            batch = GraphBatch(graphs)
            x = encode_atoms_t(self.params, batch)
            vecs = []
            for k, entry in enumerate(self.vocabulary.entries):
                rows = np.arange(
                    batch.offsets[k],
                    batch.offsets[k] + graphs[k].n_atoms,
                    dtype=np.int64,
                )
                v = motif_v_t(self.params, T.gather_rows(x, rows), entry.attachment)
                vecs.append(v.data[0])
            self._cached_motifs = np.asarray(vecs)
            self._cache_version = self.params_version
        return self._cached_motifs

    def motif_vector(self, key: str) -> np.ndarray:
        return self.motif_matrix()[self.vocabulary.index_of(key)]

    def growth_context(
        self, protein, core: MolGraph, growth_atom: int
    ) -> np.ndarray:
        """u vector of one growth atom given its placed surroundings."""
        if isinstance(protein, Complex):
            protein = protein.protein
        env = build_hyperenv(protein, core, growth_atom)
        graphs = [core]
        prot_offset = 0
        if env.protein_atoms:
            graphs.append(protein)
        batch = GraphBatch(graphs)
        if env.protein_atoms:
            prot_offset = batch.offsets[1]
        x = encode_atoms_t(self.params, batch)
        rows = _local_rows(x, batch.offsets[0], prot_offset, env)
        return growth_u_t(self.params, rows, env).data[0]

    def logit_row(self, protein, core: MolGraph, growth_atom: int) -> np.ndarray:
        u = self.growth_context(protein, core, growth_atom)
        return (self.motif_matrix() @ u) / math.sqrt(self.config.hidden_dim)

    def alpha_row(self, protein, core: MolGraph, growth_atom: int) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logit_row(protein, core, growth_atom)))

    def r_row(self, protein, core: MolGraph, growth_atom: int) -> np.ndarray:
        alpha = self.alpha_row(protein, core, growth_atom)
        return alpha / (1.0 - alpha)

    def alpha3(self, key: str, protein, core: MolGraph, growth_atom: int) -> float:
        return float(
            self.alpha_row(protein, core, growth_atom)[
                self.vocabulary.index_of(key)
            ]
        )

    def r3(self, key: str, protein, core: MolGraph, growth_atom: int) -> float:
        a = self.alpha3(key, protein, core, growth_atom)
        return a / (1.0 - a)

    def meta(self) -> dict:
        return {
            "kind": "model3d",
            "hidden_dim": self.config.hidden_dim,
            "vocab_fingerprint": self.vocabulary.fingerprint(),
            "policy_fingerprint": fingerprint_json(
                self.config.policy.fingerprint_payload()
            ),
            "config_fingerprint": fingerprint_json(self.config.fingerprint_payload()),
            "config": _config_payload(self.config),
            "cutoff_protein": R_CUT_PROTEIN,
            "cutoff_ligand": R_CUT_LIGAND,
            "prior": {
                "delta": CUTOFF_DELTA,
                "w0": PRIOR_W0,
                "beta": PRIOR_BETA,
                "r_min": PRIOR_R_MIN,
            },
        }

    def save(self, path) -> None:
        save_checkpoint(path, self.params, self.meta())

    @classmethod
    def load(cls, path, vocabulary: Vocabulary) -> "Model3D":
        params, meta = load_checkpoint(path)
        require_meta(meta, "kind", "model3d", "3D model checkpoint")
        if meta.get("vocab_fingerprint") != vocabulary.fingerprint():
            raise CheckpointError(
                "checkpoint was trained against a different vocabulary"
            )
        config = _config_from_payload(meta["config"])
        return cls(params, vocabulary, config)


def _config_payload(config: Config3D) -> dict:
    payload = config.fingerprint_payload()
    payload["policy"] = dict(payload["policy"])
    payload["policy"]["rng_seed"] = config.policy.rng_seed
    payload["noise"] = dict(payload["noise"])
    payload["noise"]["seed"] = config.noise.seed
    return payload


def _config_from_payload(payload: dict) -> Config3D:
    policy = ShredPolicy(
        rng_seed=payload["policy"]["rng_seed"],
        max_radius=payload["policy"]["max_radius"],
        directional_prob=payload["policy"]["directional_prob"],
    )
    noise = NoiseConfig(**payload["noise"])
    fields = {
        k: v for k, v in payload.items() if k not in ("policy", "noise")
    }
    return Config3D(policy=policy, noise=noise, **fields)


# ----------------------------------------------------------------- training

class PosteriorBaseline:
    """Counter-example distribution from the topology model's posterior.

    Conditionals are proportional to frequency times the model's odds
    ratio for the step's (core, growth atom) context.
    """

    def __init__(self, model: Model2D):
        self.model = model
        self.vocabulary = model.vocabulary
        self._prior = model.vocabulary.probabilities()

    def conditional(self, step: ReconstructionStep) -> np.ndarray:
        probs = self._prior * self.model.q_row(step.core, step.growth_atom)
        return probs / probs.sum()


@dataclass(frozen=True)
class StepBundle:
    """One training example: a step, its surroundings, and counter-examples."""

    step: ReconstructionStep
    protein: MolGraph
    env: HyperEnv
    negatives: tuple[str, ...]


def crop_protein(protein: MolGraph, ligand_coords: np.ndarray) -> MolGraph:
    """Protein atoms near the ligand, padded along the bonded network.

    Keeps everything within the protein environment radius of any ligand
    atom, then expands by as many bonded hops as the topology encoder has
    rounds, so boundary atoms see the same neighbourhood they would in
    the full structure.
    """
    if protein.n_atoms == 0:
        return protein
    near = min_dist(coords_array(protein), ligand_coords) <= R_CUT_PROTEIN
    keep = set(np.nonzero(near)[0].tolist())
    frontier = set(keep)
    for _ in range(N_ROUNDS):
        grown: set[int] = set()
        for at in frontier:
            for nbr, _ in protein.neighbors(at):
                if nbr not in keep:
                    grown.add(nbr)
        keep |= grown
        frontier = grown
    sub, _ = induced_subgraph(protein, sorted(keep), role="protein")
    return sub


def _augment(cpx: Complex, noise: NoiseConfig, rng: np.random.Generator):
    protein = cpx.protein
    if protein.n_atoms:
        protein = with_coords(protein, torsion_jitter(protein, noise, rng))
        protein = with_coords(protein, colored_noise(protein, noise, rng))
    ligand = with_coords(cpx.ligand, colored_noise(cpx.ligand, noise, rng))
    return protein, ligand


def complex_bundles(
    cpx: Complex,
    config: Config3D,
    baseline,
    epoch: int,
    index: int,
    neg_rng: np.random.Generator,
) -> tuple[list[StepBundle], int]:
    """Augmented reconstruction examples for one complex and epoch.

    Returns the bundles plus the number of steps dropped because their
    truth fell outside the vocabulary or no counter-example existed.
    """
    aug_rng = np.random.default_rng([config.seed, 29, epoch, index])
    protein, ligand = _augment(cpx, config.noise, aug_rng)
    cropped = crop_protein(protein, coords_array(ligand))
    path_rng = np.random.default_rng([config.policy.rng_seed, epoch, index])
    pathway = sample_pathway(ligand, config.policy, rng=path_rng)
    steps = steps_from_pathway(pathway, complex_ref=cpx.id)

    bundles: list[StepBundle] = []
    dropped = 0
    for step in steps:
        if step.true_motif not in baseline.vocabulary:
            dropped += 1
            continue
        try:
            negs = sample_negatives(step, baseline, config.k_negatives, neg_rng)
        except DegenerateVocabularyError:
            dropped += 1
            continue
        env = build_hyperenv(cropped, step.core, step.growth_atom)
        bundles.append(StepBundle(step, cropped, env, negs))
    return bundles, dropped


def batch_loss_3d(
    params: dict[str, T.Tensor],
    bundles: list[StepBundle],
    vocabulary: Vocabulary,
    hidden_dim: int,
) -> T.Tensor:
    """Contrastive BCE over one batch of bundles, single encoder forward.

    Each bundle's negatives share one unit of loss weight, matching the
    topology loss, so the optimal odds are the density ratio at any k.
    """
    proteins: list[MolGraph] = []
    prot_pos: dict[int, int] = {}
    for b in bundles:
        if id(b.protein) not in prot_pos:
            prot_pos[id(b.protein)] = len(proteins)
            proteins.append(b.protein)

    needed: list[str] = []
    key_pos: dict[str, int] = {}
    for b in bundles:
        for key in (b.step.true_motif, *b.negatives):
            if key not in key_pos:
                key_pos[key] = len(needed)
                needed.append(key)
    motif_graphs = []
    anchors = []
    for key in needed:
        entry = vocabulary.entry(key)
        motif_graphs.append(entry.motif().graph)
        anchors.append(entry.attachment)

    cores = [b.step.core for b in bundles]
    graphs = proteins + cores + motif_graphs
    batch = GraphBatch(graphs)
    x = encode_atoms_t(params, batch)
    core_base = len(proteins)
    motif_base = len(proteins) + len(cores)

    u_list = []
    for b_idx, b in enumerate(bundles):
        rows = _local_rows(
            x,
            batch.offsets[core_base + b_idx],
            batch.offsets[prot_pos[id(b.protein)]],
            b.env,
        )
        u_list.append(growth_u_t(params, rows, b.env))
    u_all = T.concat(u_list, axis=0)

    v_list = []
    for k, g in enumerate(motif_graphs):
        rows = np.arange(
            batch.offsets[motif_base + k],
            batch.offsets[motif_base + k] + g.n_atoms,
            dtype=np.int64,
        )
        v_list.append(motif_v_t(params, T.gather_rows(x, rows), anchors[k]))
    v_all = T.concat(v_list, axis=0)

    u_idx, v_idx, labels, weights = [], [], [], []
    for b_idx, b in enumerate(bundles):
        share = 1.0 / len(b.negatives) if b.negatives else 1.0
        for key, y, w in (
            (b.step.true_motif, 1.0, 1.0),
            *((n, 0.0, share) for n in b.negatives),
        ):
            u_idx.append(b_idx)
            v_idx.append(key_pos[key])
            labels.append(y)
            weights.append(w)
    logits = pair_logits_3d(
        T.gather_rows(u_all, np.asarray(u_idx, dtype=np.int64)),
        T.gather_rows(v_all, np.asarray(v_idx, dtype=np.int64)),
        hidden_dim,
    )
    return T.bce_with_logits(logits, np.asarray(labels), np.asarray(weights))


def _warn_dropped(dropped: int, kept: int) -> None:
    total = dropped + kept
    if total and dropped > 0.5 * total:
        warnings.warn(
            f"dropped {dropped}/{total} steps not covered by the vocabulary",
            stacklevel=3,
        )


def _epoch_groups(complexes, config, baseline, epoch, neg_rng):
    groups = []
    dropped = 0
    for idx, cpx in enumerate(complexes):
        bundles, d = complex_bundles(cpx, config, baseline, epoch, idx, neg_rng)
        groups.append(bundles)
        dropped += d
    _warn_dropped(dropped, sum(len(g) for g in groups))
    return groups


def _loss_value(params, groups, vocabulary, hidden_dim) -> float:
    bundles = [b for g in groups for b in g]
    if not bundles:
        return float("nan")
    return float(batch_loss_3d(params, bundles, vocabulary, hidden_dim).data)


def train_3d(
    complexes: list[Complex],
    baseline: Model2D,
    vocabulary: Vocabulary,
    config: Config3D,
) -> tuple[Model3D, list[dict]]:
    """Contrastive training against the recalibrated topology baseline.

    Every epoch resamples the reconstruction pathways and redraws the
    coordinate noise, so no two epochs present the same examples.
    """
    if not baseline.recalibrated:
        raise StageOrderError(
            "geometry training requires a recalibrated topology baseline"
        )
    if baseline.vocabulary.fingerprint() != vocabulary.fingerprint():
        raise StageOrderError(
            "vocabulary differs from the topology baseline's vocabulary"
        )
    neg_base = PosteriorBaseline(baseline)

    split_rng = np.random.default_rng([config.seed, 5])
    order = split_rng.permutation(len(complexes))
    n_hold = int(round(len(complexes) * config.holdout_fraction))
    if config.holdout_fraction > 0:
        n_hold = max(n_hold, 1)
    hold = [complexes[i] for i in order[:n_hold]]
    train = [complexes[i] for i in order[n_hold:]]
    if not train:
        raise ValueError("no complexes left to train on after holdout split")

    holdout_groups = None
    if hold:
        holdout_groups = _epoch_groups(
            hold,
            config,
            neg_base,
            _HOLDOUT_EPOCH,
            np.random.default_rng([config.seed, 13]),
        )

    rng = np.random.default_rng([config.seed, 71])
    params = init_params_3d(config, np.random.default_rng([config.seed, 11]))
    opt = Adam(params, lr=config.learning_rate)
    history: list[dict] = []
    best_loss = float("inf")
    best_snapshot: dict[str, np.ndarray] | None = None
    stale = 0

    for epoch in range(config.max_epochs):
        groups = _epoch_groups(train, config, neg_base, epoch, rng)
        order = rng.permutation(len(groups))
        epoch_losses = []
        for start in range(0, len(order), config.batch_complexes):
            chunk = order[start : start + config.batch_complexes]
            bundles = [b for gi in chunk for b in groups[gi]]
            if not bundles:
                continue
            opt.zero_grad()
            with T.Tape() as tape:
                loss = batch_loss_3d(
                    params, bundles, vocabulary, config.hidden_dim
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

    if best_snapshot is not None:
        for k, p in params.items():
            p.data = best_snapshot[k]
    return Model3D(params, vocabulary, config), history
