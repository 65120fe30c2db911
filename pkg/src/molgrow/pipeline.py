"""Staged batch pipeline behind the command line.

One TOML file declares the corpora, the shred policy, the model budgets,
and the evaluation settings.  Each stage reads its predecessors' artifacts,
checks the fingerprints embedded in them, and writes its own artifact
stamped with the config hash, the master seed, and a content fingerprint.
Reruns under the same config and seed are bitwise identical; running a
stage against artifacts from a different policy or vocabulary fails with
a stage-order error instead of silently mixing streams.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .augment import NoiseConfig
from .errors import CheckpointError, ConfigError, StageOrderError
from .evalmetrics import SplitSpec, null_metrics, roc_matrix, roc_payload
from .gnn2d import Config2D, Model2D, recalibrate, train_2d
from .gnn3d import Config3D, Model3D, crop_protein, train_3d
from .molio import MolGraph, coords_array, load_complexes, load_smiles_corpus, parse_smiles
from .nn.checkpoint import fingerprint_bytes, fingerprint_json, save_checkpoint
from .posterior import (
    VIEWS,
    Posterior,
    assemble,
    entropy,
    entropy_shift_report,
    matrix_csv,
    posterior_payload,
    sample,
    score_kernel,
)
from .recon import epoch_steps
from .shred import ShredPolicy, Vocabulary, build_vocabulary

# artifact names inside the output directory
VOCAB_FILE = "vocab.json"
VOCAB_TRANSFER_FILE = "vocab_transfer.json"
MODEL2D_FILE = "model2d.json"
MODEL2D_RECAL_FILE = "model2d_recal.json"
MODEL3D_FILE = "model3d.json"
LOG2D_FILE = "train2d_log.json"
LOG_RECAL_FILE = "recalibrate_log.json"
LOG3D_FILE = "train3d_log.json"
ROC_FILE = "roc_matrix.json"
ENTROPY_FILE = "entropy_shift.json"
NULL_FILE = "null_metrics.json"
POSTERIOR_FILE = "posterior.json"
KERNEL_CSV_FILE = "kernel.csv"
KERNEL_FILE = "kernel.json"
REPORT_FILE = "report.txt"

# every stage derives its stream from the one master seed; the spacing
# keeps streams of different stages disjoint for any master seed
_SEED_SPACING = 100
_SEED_SHRED = 11
_SEED_TRAIN2D = 21
_SEED_TRAIN3D = 31
_SEED_NOISE = 41

# pathway epochs used outside training; far above any plausible training
# budget so evaluation never replays a training epoch's reconstruction draws
EVAL_EPOCH_BASE = 9000
KERNEL_EPOCH = 8000


# ----------------------------------------------------------------- config

@dataclass(frozen=True)
class PipelineConfig:
    """Fully resolved pipeline declaration.

    ``payload`` is the normalized form of the TOML document (overrides
    applied, defaults filled in) and is the sole input to the config
    hash, so two declarations hash equal exactly when every effective
    setting agrees.  ``workers`` and the output directory are excluded
    from the hash: they change where and how work runs, never what is
    computed.
    """

    corpus: Path
    out_dir: Path
    complexes: Path | None
    transfer_corpus: Path | None
    policy: ShredPolicy
    n_shreds_per_mol: int
    config2d: Config2D
    config3d: Config3D
    eval_k_negatives: int
    pathway_epochs: int
    split: SplitSpec
    seed: int
    workers: int
    payload: dict = field(repr=False)

    def config_hash(self) -> str:
        return fingerprint_json(self.payload)


_SECTIONS = {
    "paths": {
        "corpus": str,
        "complexes": str,
        "transfer_corpus": str,
        "out": str,
    },
    "shred": {
        "max_radius": int,
        "directional_prob": float,
        "n_shreds_per_mol": int,
    },
    "train2d": {
        "hidden_dim": int,
        "k_negatives": int,
        "batch_molecules": int,
        "max_epochs": int,
        "patience": int,
        "learning_rate": float,
        "holdout_fraction": float,
        "recalibration_epochs": int,
    },
    "train3d": {
        "hidden_dim": int,
        "k_negatives": int,
        "batch_complexes": int,
        "max_epochs": int,
        "patience": int,
        "learning_rate": float,
        "holdout_fraction": float,
    },
    "noise": {
        "sigma": float,
        "clamp": float,
        "smoothing_iters": int,
        "torsion_range": float,
    },
    "evaluate": {
        "k_negatives": int,
        "pathway_epochs": int,
        "close_cut": float,
        "far_cut": float,
    },
}
_TOP_LEVEL = {"seed": int, "workers": int}


def _checked_section(doc: dict, name: str) -> dict:
    """Validate key names and value types of one TOML table."""
    allowed = _SECTIONS[name]
    section = doc.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table")
    out = {}
    for key, value in section.items():
        if key not in allowed:
            raise ConfigError(
                f"unknown key '{key}' in [{name}]; allowed: "
                + ", ".join(sorted(allowed))
            )
        want = allowed[key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, want) or isinstance(value, bool):
            raise ConfigError(
                f"{name}.{key} must be {want.__name__}, got {type(value).__name__}"
            )
        out[key] = value
    return out


def load_config(
    path,
    seed: int | None = None,
    workers: int | None = None,
    out: str | None = None,
) -> PipelineConfig:
    """Parse and validate a TOML declaration, applying CLI overrides.

    Overrides land before normalization, so the config hash reflects the
    effective seed and an overridden rerun reproduces bit for bit.
    Relative paths in the file resolve against the file's own directory;
    a relative ``out`` override resolves against the working directory.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = tomli.loads(path.read_text(encoding="utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    for key in doc:
        if key not in _TOP_LEVEL and key not in _SECTIONS:
            raise ConfigError(
                f"unknown top-level key '{key}'; allowed: "
                + ", ".join(sorted(list(_TOP_LEVEL) + list(_SECTIONS)))
            )
    for key, want in _TOP_LEVEL.items():
        if key in doc and (not isinstance(doc[key], want) or isinstance(doc[key], bool)):
            raise ConfigError(f"{key} must be {want.__name__}")

    paths = _checked_section(doc, "paths")
    if "corpus" not in paths:
        raise ConfigError("paths.corpus is required")
    shred = _checked_section(doc, "shred")
    t2d = _checked_section(doc, "train2d")
    t3d = _checked_section(doc, "train3d")
    noise = _checked_section(doc, "noise")
    ev = _checked_section(doc, "evaluate")

    eff_seed = seed if seed is not None else doc.get("seed", 0)
    eff_workers = workers if workers is not None else doc.get("workers", 1)
    if eff_seed < 0:
        raise ConfigError("seed must be non-negative")
    if eff_workers < 1:
        raise ConfigError("workers must be positive")
    base = path.parent
    out_dir = base / paths.get("out", "out")
    if out is not None:
        out_dir = Path(out)

    n_shreds = shred.pop("n_shreds_per_mol", 1)
    if n_shreds < 1:
        raise ConfigError("shred.n_shreds_per_mol must be positive")
    seed_base = eff_seed * _SEED_SPACING
    try:
        policy = ShredPolicy(rng_seed=seed_base + _SEED_SHRED, **shred)
        config2d = Config2D(policy=policy, seed=seed_base + _SEED_TRAIN2D, **t2d)
        noise_cfg = NoiseConfig(seed=seed_base + _SEED_NOISE, **noise)
        config3d = Config3D(
            policy=policy, noise=noise_cfg, seed=seed_base + _SEED_TRAIN3D, **t3d
        )
        split = SplitSpec(
            close_cut=ev.get("close_cut", 3.5), far_cut=ev.get("far_cut", 4.5)
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    k_neg = ev.get("k_negatives", 8)
    pathway_epochs = ev.get("pathway_epochs", 2)
    if k_neg < 1 or pathway_epochs < 1:
        raise ConfigError("evaluate.k_negatives and pathway_epochs must be positive")

    # the normalized declaration: every setting that affects a result, in
    # stable order; the output location and worker count are execution
    # details and stay out, so the hash identifies the computation itself
    payload = {
        "seed": eff_seed,
        "paths": {
            "corpus": paths["corpus"],
            "complexes": paths.get("complexes"),
            "transfer_corpus": paths.get("transfer_corpus"),
        },
        "shred": {
            "rng_seed": policy.rng_seed,
            "max_radius": policy.max_radius,
            "directional_prob": policy.directional_prob,
            "n_shreds_per_mol": n_shreds,
        },
        "train2d": {**config2d.fingerprint_payload(), "seed": config2d.seed},
        "train3d": {**config3d.fingerprint_payload(), "seed": config3d.seed},
        "noise": {**noise_cfg.fingerprint_payload(), "seed": noise_cfg.seed},
        "evaluate": {
            "k_negatives": k_neg,
            "pathway_epochs": pathway_epochs,
            "close_cut": split.close_cut,
            "far_cut": split.far_cut,
        },
    }
    return PipelineConfig(
        corpus=base / paths["corpus"],
        out_dir=out_dir,
        complexes=base / paths["complexes"] if "complexes" in paths else None,
        transfer_corpus=(
            base / paths["transfer_corpus"] if "transfer_corpus" in paths else None
        ),
        policy=policy,
        n_shreds_per_mol=n_shreds,
        config2d=config2d,
        config3d=config3d,
        eval_k_negatives=k_neg,
        pathway_epochs=pathway_epochs,
        split=split,
        seed=eff_seed,
        workers=eff_workers,
        payload=payload,
    )


# -------------------------------------------------------------- artifacts

def _write_artifact(cfg: PipelineConfig, name: str, kind: str, payload: dict) -> Path:
    """Stamped JSON envelope; the fingerprint covers everything else."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "artifact": kind,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "payload": payload,
    }
    doc["fingerprint"] = fingerprint_json(doc)
    path = cfg.out_dir / name
    path.write_text(
        json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def _read_artifact(cfg: PipelineConfig, name: str, kind: str, stage_hint: str) -> dict:
    path = cfg.out_dir / name
    if not path.exists():
        raise StageOrderError(f"missing artifact {name}; run {stage_hint} first")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"artifact {name} is not valid JSON: {exc}") from exc
    if doc.get("artifact") != kind:
        raise StageOrderError(
            f"artifact {name} holds {doc.get('artifact')!r}, expected {kind!r}"
        )
    stated = doc.get("fingerprint")
    actual = fingerprint_json({k: v for k, v in doc.items() if k != "fingerprint"})
    if stated != actual:
        raise CheckpointError(f"artifact {name} failed its fingerprint check")
    return doc


def _require_file(path: Path | None, label: str) -> Path:
    if path is None:
        raise ConfigError(f"paths.{label} is required for this stage")
    if not path.exists():
        raise ConfigError(f"paths.{label} does not exist: {path}")
    return path


def _params_fingerprint(params: dict) -> str:
    return fingerprint_json(
        {
            name: [
                [int(n) for n in t.data.shape],
                fingerprint_bytes(
                    np.ascontiguousarray(t.data, dtype="<f8").tobytes()
                ),
            ]
            for name, t in params.items()
        }
    )


def _load_corpus(path: Path) -> list[MolGraph]:
    return [parse_smiles(s) for s in load_smiles_corpus(path)]


def _policy_payload(policy: ShredPolicy) -> dict:
    return {**policy.fingerprint_payload(), "rng_seed": policy.rng_seed}


# ----------------------------------------------------------------- stages

def run_build_vocab(cfg: PipelineConfig) -> dict:
    """Shred the corpus (and the transfer corpus, if declared) into motif
    vocabularies."""
    summary: dict = {}
    jobs = [(VOCAB_FILE, "corpus", _require_file(cfg.corpus, "corpus"))]
    if cfg.transfer_corpus is not None:
        jobs.append(
            (
                VOCAB_TRANSFER_FILE,
                "transfer_corpus",
                _require_file(cfg.transfer_corpus, "transfer_corpus"),
            )
        )
    for name, label, path in jobs:
        molecules = _load_corpus(path)
        vocab = build_vocabulary(
            molecules, cfg.policy, cfg.n_shreds_per_mol, cfg.workers
        )
        _write_artifact(
            cfg,
            name,
            "vocabulary",
            {
                "source": {
                    "file": path.name,
                    "sha256": fingerprint_bytes(path.read_bytes()),
                    "molecules": len(molecules),
                },
                "policy": _policy_payload(cfg.policy),
                "n_shreds_per_mol": cfg.n_shreds_per_mol,
                "vocab_fingerprint": vocab.fingerprint(),
                "vocabulary": vocab.to_payload(),
            },
        )
        summary[label] = {"motifs": len(vocab.entries), "total": vocab.total}
    return summary


def _load_vocab(cfg: PipelineConfig, transfer: bool = False) -> Vocabulary:
    name = VOCAB_TRANSFER_FILE if transfer else VOCAB_FILE
    doc = _read_artifact(cfg, name, "vocabulary", "build-vocab")
    payload = doc["payload"]
    if payload["policy"] != _policy_payload(cfg.policy):
        raise StageOrderError(
            f"{name} was built under a different shred policy; re-run build-vocab"
        )
    return Vocabulary.from_payload(payload["vocabulary"])


def _eval_vocab(cfg: PipelineConfig) -> Vocabulary:
    """Vocabulary the recalibrated and geometry models live on."""
    return _load_vocab(cfg, transfer=cfg.transfer_corpus is not None)


def _save_model(cfg: PipelineConfig, name: str, stage: str, model) -> None:
    meta = {
        **model.meta(),
        "stage": stage,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "params_fingerprint": _params_fingerprint(model.params),
    }
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(cfg.out_dir / name, model.params, meta)


def _load_model2d(
    cfg: PipelineConfig,
    name: str,
    want_recalibrated: bool,
    stage_hint: str,
    transfer_vocab: bool,
) -> Model2D:
    path = cfg.out_dir / name
    if not path.exists():
        raise StageOrderError(f"missing checkpoint {name}; run {stage_hint} first")
    model = Model2D.load(path, _load_vocab(cfg, transfer=transfer_vocab))
    if model.recalibrated != want_recalibrated:
        state = "already" if model.recalibrated else "not yet"
        raise StageOrderError(
            f"checkpoint {name} is {state} recalibrated; run the stages in order"
        )
    return model


def run_train_2d(cfg: PipelineConfig) -> dict:
    """Contrastive topology training against the frequency prior."""
    molecules = _load_corpus(_require_file(cfg.corpus, "corpus"))
    vocab = _load_vocab(cfg)
    model, logs = train_2d(molecules, vocab, cfg.config2d)
    _save_model(cfg, MODEL2D_FILE, "train-2d", model)
    _write_artifact(cfg, LOG2D_FILE, "training-log", {"stage": "train-2d", "log": logs})
    return {"epochs": len(logs), "final": logs[-1] if logs else None}


def run_recalibrate(cfg: PipelineConfig) -> dict:
    """Refit the output head on the transfer corpus (or the base corpus
    when no transfer corpus is declared)."""
    model = _load_model2d(cfg, MODEL2D_FILE, False, "train-2d", transfer_vocab=False)
    if cfg.transfer_corpus is not None:
        molecules = _load_corpus(_require_file(cfg.transfer_corpus, "transfer_corpus"))
    else:
        molecules = _load_corpus(_require_file(cfg.corpus, "corpus"))
    vocab = _eval_vocab(cfg)
    model, logs = recalibrate(model, molecules, vocab, cfg.config2d)
    _save_model(cfg, MODEL2D_RECAL_FILE, "recalibrate", model)
    _write_artifact(
        cfg, LOG_RECAL_FILE, "training-log", {"stage": "recalibrate", "log": logs}
    )
    return {"epochs": len(logs), "final": logs[-1] if logs else None}


def run_train_3d(cfg: PipelineConfig) -> dict:
    """Contrastive geometry training against the recalibrated topology
    posterior."""
    complexes = load_complexes(_require_file(cfg.complexes, "complexes"))
    baseline = _load_model2d(
        cfg,
        MODEL2D_RECAL_FILE,
        True,
        "recalibrate",
        transfer_vocab=cfg.transfer_corpus is not None,
    )
    model, logs = train_3d(complexes, baseline, baseline.vocabulary, cfg.config3d)
    _save_model(cfg, MODEL3D_FILE, "train-3d", model)
    _write_artifact(cfg, LOG3D_FILE, "training-log", {"stage": "train-3d", "log": logs})
    return {"epochs": len(logs), "final": logs[-1] if logs else None}


def _load_model3d(cfg: PipelineConfig) -> Model3D:
    path = cfg.out_dir / MODEL3D_FILE
    if not path.exists():
        raise StageOrderError(f"missing checkpoint {MODEL3D_FILE}; run train-3d first")
    return Model3D.load(path, _eval_vocab(cfg))


def _eval_steps(cfg: PipelineConfig, complexes) -> list:
    """Held-out reconstruction pathways over the complex ligands."""
    ligands = [c.ligand for c in complexes]
    refs = [c.id for c in complexes]
    steps = []
    for k in range(cfg.pathway_epochs):
        steps.extend(
            epoch_steps(ligands, cfg.policy, EVAL_EPOCH_BASE + k, complex_refs=refs)
        )
    return steps


def run_evaluate(cfg: PipelineConfig) -> dict:
    """Bias-controlled ROC matrix, entropy shifts, and null metrics."""
    complexes = load_complexes(_require_file(cfg.complexes, "complexes"))
    transfer = cfg.transfer_corpus is not None
    m2 = _load_model2d(cfg, MODEL2D_RECAL_FILE, True, "recalibrate", transfer)
    m3 = _load_model3d(cfg)
    steps = _eval_steps(cfg, complexes)
    if not steps:
        raise ConfigError("evaluation produced no reconstruction steps")
    if not any(s.true_motif in m2.vocabulary for s in steps):
        raise ConfigError(
            "no evaluation step's true motif appears in the vocabulary; "
            "the complexes and the recalibration corpus are disjoint"
        )
    by_id = {c.id: c for c in complexes}
    pairs = [(s, by_id[s.complex_ref]) for s in steps]

    rng = np.random.default_rng([cfg.seed, 51])
    roc = roc_matrix(m2, m3, pairs, cfg.split, cfg.eval_k_negatives, rng)
    matrix = {
        cell: (roc_payload(res) if res is not None else None)
        for cell, res in roc["matrix"].items()
    }
    splits = {
        "sizes": roc["splits"]["sizes"],
        "close": roc_payload(roc["splits"]["close"]) if roc["splits"]["close"] else None,
        "far": roc_payload(roc["splits"]["far"]) if roc["splits"]["far"] else None,
    }
    _write_artifact(
        cfg,
        ROC_FILE,
        "roc-matrix",
        {
            "matrix": matrix,
            "splits": splits,
            "steps": len(pairs),
            "pathway_epochs": cfg.pathway_epochs,
            "k_negatives": cfg.eval_k_negatives,
        },
    )

    cropped = {
        c.id: crop_protein(c.protein, coords_array(c.ligand)) for c in complexes
    }
    proteins = [cropped[s.complex_ref] for s in steps]
    report = entropy_shift_report(steps, m2, m3, proteins)
    _write_artifact(cfg, ENTROPY_FILE, "entropy-shift", report)

    nm = null_metrics(
        m2.vocabulary, steps, cfg.eval_k_negatives, np.random.default_rng([cfg.seed, 52])
    )
    _write_artifact(
        cfg,
        NULL_FILE,
        "null-metrics",
        {
            "auc_vs_uniform": roc_payload(nm.auc_vs_uniform),
            "top1_static": nm.top1_static,
            "top8_static": nm.top8_static,
            "top1_sampled": nm.top1_sampled,
            "top8_sampled": nm.top8_sampled,
        },
    )

    return {
        "steps": len(pairs),
        "auc": {
            cell: (res["auc"] if res is not None else None)
            for cell, res in matrix.items()
        },
        "splits": roc["splits"]["sizes"],
    }


def run_all(cfg: PipelineConfig) -> dict:
    """Every stage in order; the single entry point for a fresh output dir."""
    return {
        "build-vocab": run_build_vocab(cfg),
        "train-2d": run_train_2d(cfg),
        "recalibrate": run_recalibrate(cfg),
        "train-3d": run_train_3d(cfg),
        "evaluate": run_evaluate(cfg),
    }


# ------------------------------------------------------- interactive ops

def _posterior_models(cfg: PipelineConfig, need_geometry: bool):
    """Latest usable topology model plus, when asked, the geometry model."""
    transfer = cfg.transfer_corpus is not None
    if (cfg.out_dir / MODEL2D_RECAL_FILE).exists():
        m2 = _load_model2d(cfg, MODEL2D_RECAL_FILE, True, "recalibrate", transfer)
    elif transfer:
        raise StageOrderError(
            "a transfer corpus is declared but no recalibrated checkpoint "
            "exists; run recalibrate first"
        )
    else:
        m2 = _load_model2d(cfg, MODEL2D_FILE, False, "train-2d", False)
    m3 = _load_model3d(cfg) if need_geometry else None
    return m2, m3


def sample_posterior(
    cfg: PipelineConfig,
    view: str = "pqr",
    smiles: str | None = None,
    complex_id: str | None = None,
    growth_atom: int = 0,
    draws: int = 0,
) -> tuple[Posterior, dict]:
    """Posterior table for one growth atom, written to ``posterior.json``.

    The core is either a bundled complex's ligand (all views; the pocket
    supplies the surroundings) or a bare SMILES (topology views only).
    """
    if view not in VIEWS:
        raise ConfigError(f"view must be one of {VIEWS}, got {view!r}")
    if (smiles is None) == (complex_id is None):
        raise ConfigError("give exactly one of --smiles or --complex")
    protein = None
    if complex_id is not None:
        complexes = load_complexes(_require_file(cfg.complexes, "complexes"))
        by_id = {c.id: c for c in complexes}
        if complex_id not in by_id:
            raise ConfigError(f"complex {complex_id!r} not found in {cfg.complexes}")
        cpx = by_id[complex_id]
        core = cpx.ligand
        protein = crop_protein(cpx.protein, coords_array(core))
    else:
        if "r" in view:
            raise ConfigError(
                "geometry views need a pocket; pass --complex instead of --smiles"
            )
        core = parse_smiles(smiles)
    m2, m3 = _posterior_models(cfg, need_geometry="r" in view)
    post = assemble(core, growth_atom, m2, view, m3, protein)
    payload = posterior_payload(post)
    payload["entropy"] = entropy(post)
    payload["growth_atom"] = growth_atom
    payload["source"] = (
        {"complex": complex_id} if complex_id is not None else {"smiles": smiles}
    )
    if draws:
        rng = np.random.default_rng([cfg.seed, 71])
        payload["draws"] = [sample(post, rng) for _ in range(draws)]
    _write_artifact(cfg, POSTERIOR_FILE, "posterior", payload)
    return post, payload


def kernel_report(cfg: PipelineConfig, sites_count: int = 64) -> dict:
    """Motif interchangeability over sampled growth sites.

    Writes the whitened-score distance matrix as CSV plus a JSON envelope
    recording which rows hit the variance floor.
    """
    if sites_count < 2:
        raise ConfigError("kernel needs at least two growth sites")
    if cfg.transfer_corpus is not None:
        corpus_path = _require_file(cfg.transfer_corpus, "transfer_corpus")
    else:
        corpus_path = _require_file(cfg.corpus, "corpus")
    molecules = _load_corpus(corpus_path)
    m2, _ = _posterior_models(cfg, need_geometry=False)
    steps = epoch_steps(molecules, cfg.policy, KERNEL_EPOCH)
    if len(steps) < 2:
        raise ConfigError("corpus yielded fewer than two growth sites")
    sites = [(s.core, s.growth_atom) for s in steps[:sites_count]]
    km = score_kernel(m2, sites)
    keys = list(m2.vocabulary.keys())
    csv = matrix_csv(km.d, keys)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / KERNEL_CSV_FILE).write_text(csv, encoding="utf-8")
    payload = {
        "sites": len(sites),
        "flagged_rows": list(km.flagged),
        "csv": KERNEL_CSV_FILE,
        "csv_sha256": fingerprint_bytes(csv.encode("utf-8")),
    }
    _write_artifact(cfg, KERNEL_FILE, "score-kernel", payload)
    return payload


# ----------------------------------------------------------------- report

def _fmt_roc(cell: dict | None) -> str:
    if cell is None:
        return "      -      "
    return f"{cell['auc']:.4f}+-{cell['stderr']:.4f}"


def render_report(cfg: PipelineConfig) -> str:
    """Human-readable summary of whatever artifacts the output dir holds."""
    lines = [f"pipeline report  (config {cfg.config_hash()[:12]}, seed {cfg.seed})"]
    found = False

    try:
        doc = _read_artifact(cfg, VOCAB_FILE, "vocabulary", "build-vocab")
    except StageOrderError:
        doc = None
    if doc is not None:
        found = True
        pay = doc["payload"]
        lines.append(
            f"vocabulary: {len(pay['vocabulary']['entries'])} motifs from "
            f"{pay['source']['molecules']} molecules ({pay['source']['file']})"
        )
    if (cfg.out_dir / VOCAB_TRANSFER_FILE).exists():
        pay = _read_artifact(cfg, VOCAB_TRANSFER_FILE, "vocabulary", "build-vocab")[
            "payload"
        ]
        lines.append(
            f"transfer vocabulary: {len(pay['vocabulary']['entries'])} motifs from "
            f"{pay['source']['molecules']} molecules ({pay['source']['file']})"
        )

    for name, label in (
        (LOG2D_FILE, "topology training"),
        (LOG_RECAL_FILE, "recalibration"),
        (LOG3D_FILE, "geometry training"),
    ):
        if not (cfg.out_dir / name).exists():
            continue
        found = True
        log = _read_artifact(cfg, name, "training-log", "training")["payload"]["log"]
        if log:
            last = log[-1]
            tail = f"final train loss {last['train_loss']:.4f}"
            if "holdout_loss" in last:
                tail += f", holdout {last['holdout_loss']:.4f}"
            lines.append(f"{label}: {len(log)} epochs, {tail}")
        else:
            lines.append(f"{label}: no epochs logged")

    if (cfg.out_dir / ROC_FILE).exists():
        found = True
        pay = _read_artifact(cfg, ROC_FILE, "roc-matrix", "evaluate")["payload"]
        lines.append(
            f"roc matrix over {pay['steps']} steps "
            f"(k={pay['k_negatives']} negatives per step):"
        )
        lines.append("  model        vs 0d            vs 1d            vs 2d")
        for row in ("1d", "2d", "3d"):
            cells = [pay["matrix"][f"{row}|{base}"] for base in ("0d", "1d", "2d")]
            lines.append(f"    {row}   " + "  ".join(_fmt_roc(c) for c in cells))
        sizes = pay["splits"]["sizes"]
        lines.append(
            "  pocket-distance split: "
            f"close {sizes['close']} / far {sizes['far']} / other {sizes['neither']}"
        )
        lines.append(
            f"    3d|2d close {_fmt_roc(pay['splits']['close'])}, "
            f"far {_fmt_roc(pay['splits']['far'])}"
        )

    if (cfg.out_dir / ENTROPY_FILE).exists():
        found = True
        mean = _read_artifact(cfg, ENTROPY_FILE, "entropy-shift", "evaluate")[
            "payload"
        ]["summary"]["mean"]
        lines.append(
            "entropy shift means: "
            f"d_q {mean['d_q']:+.4f}, d_qr {mean['d_qr']:+.4f}, "
            f"d_pqr {mean['d_pqr']:+.4f}"
        )

    if (cfg.out_dir / NULL_FILE).exists():
        found = True
        pay = _read_artifact(cfg, NULL_FILE, "null-metrics", "evaluate")["payload"]
        lines.append(
            "frequency-prior null: "
            f"auc vs uniform {_fmt_roc(pay['auc_vs_uniform'])}, "
            f"top1 {pay['top1_static']:.4f}, top8 {pay['top8_static']:.4f}"
        )

    if (cfg.out_dir / KERNEL_FILE).exists():
        found = True
        pay = _read_artifact(cfg, KERNEL_FILE, "score-kernel", "kernel")["payload"]
        lines.append(
            f"score kernel: {pay['sites']} sites, "
            f"{len(pay['flagged_rows'])} variance-floored rows ({pay['csv']})"
        )

    if not found:
        raise StageOrderError(
            f"no artifacts under {cfg.out_dir}; run build-vocab first"
        )
    text = "\n".join(lines) + "\n"
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / REPORT_FILE).write_text(text, encoding="utf-8")
    return text
