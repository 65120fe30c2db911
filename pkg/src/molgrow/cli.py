"""Command line over the staged pipeline.

Every command takes the same declarative TOML config plus a few overrides;
stages talk to each other only through fingerprint-stamped artifacts in
the output directory, so they can be run one at a time or all at once.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import __version__
from . import pipeline as pl
from .errors import MolgrowError
from .fixtures import write_complex_corpus, write_molecule_corpus

_CONFIG_TEMPLATE = """\
# molgrow pipeline declaration (TOML).  This file lists the complete
# schema; only paths.corpus is required, and omitted keys fall back to
# the library defaults.  Relative paths resolve against this file's
# directory.  The budgets below are tuned for the bundled desk-scale
# fixtures; raise them for larger corpora.

seed = 0       # master seed; each stage derives its own stream from it
workers = 1    # shredding processes; does not change any result

[paths]
corpus = "molecules.smi"        # required: SMILES corpus, one per line
complexes = "complexes.jsonl"   # ligand/pocket pairs; needed from train-3d on
# transfer_corpus = "other.smi" # optional recalibration target corpus
out = "../out"                  # artifact directory

[shred]
max_radius = 2            # largest motif neighborhood radius (default 2)
directional_prob = 0.5    # chance a shred keeps only the forward fragment (0.5)
n_shreds_per_mol = 1      # independent shred passes per molecule (1)

[train2d]
hidden_dim = 32           # attention width (default 64)
k_negatives = 8           # prior draws per positive (16)
batch_molecules = 64      # molecules per gradient batch (64)
max_epochs = 8            # epoch budget (40)
patience = 5              # holdout epochs without improvement (5)
learning_rate = 3e-4      # Adam step size (1e-4)
holdout_fraction = 0.1    # molecules held out for early stopping (0.1)
recalibration_epochs = 3  # head-refit epochs (10)

[train3d]
hidden_dim = 32           # hypergraph attention width (default 64)
k_negatives = 8           # topology-posterior draws per positive (16)
batch_complexes = 40      # complexes per gradient batch (40)
max_epochs = 6            # epoch budget (30)
patience = 5              # holdout epochs without improvement (5)
learning_rate = 1e-3      # Adam step size (1e-4)
holdout_fraction = 0.1    # complexes held out for early stopping (0.1)

[noise]
sigma = 0.5            # Angstrom, per coordinate component (0.5)
clamp = 2.0            # clamp displacements at this many sigmas (2.0)
smoothing_iters = 5    # neighbor-averaging passes over displacements (5)
torsion_range = 10.0   # degrees of torsion jitter around rotatable bonds (10.0)

[evaluate]
k_negatives = 8      # negatives per reconstruction step (8)
pathway_epochs = 2   # independent shred pathways per held-out molecule (2)
close_cut = 3.5      # Angstrom; at or under this is a close pocket contact (3.5)
far_cut = 4.5        # Angstrom; strictly beyond this is a far contact (4.5)
"""


def _options(fn):
    for opt in reversed(
        (
            click.option(
                "--config",
                "config_path",
                required=True,
                type=click.Path(exists=False, dir_okay=False),
                help="TOML pipeline declaration.",
            ),
            click.option("--seed", type=int, default=None, help="Override the master seed."),
            click.option(
                "--workers", type=int, default=None, help="Override the worker count."
            ),
            click.option(
                "--out",
                type=click.Path(file_okay=False),
                default=None,
                help="Override the output directory.",
            ),
        )
    ):
        fn = opt(fn)
    return fn


def _load(config_path, seed, workers, out) -> pl.PipelineConfig:
    try:
        return pl.load_config(config_path, seed=seed, workers=workers, out=out)
    except MolgrowError as exc:
        raise click.ClickException(str(exc)) from exc


def _run(stage, cfg: pl.PipelineConfig) -> dict:
    try:
        return stage(cfg)
    except MolgrowError as exc:
        raise click.ClickException(str(exc)) from exc


def _echo_json(doc: dict) -> None:
    click.echo(json.dumps(doc, indent=1, sort_keys=True))


@click.group(name="molgrow")
@click.version_option(__version__, prog_name="molgrow")
def main() -> None:
    """Fragment-wise molecular elaboration pipeline."""


@main.command("build-vocab")
@_options
def build_vocab(config_path, seed, workers, out) -> None:
    """Shred the corpus into a motif vocabulary."""
    _echo_json(_run(pl.run_build_vocab, _load(config_path, seed, workers, out)))


@main.command("train-2d")
@_options
def train_2d(config_path, seed, workers, out) -> None:
    """Train the topology model against the frequency prior."""
    _echo_json(_run(pl.run_train_2d, _load(config_path, seed, workers, out)))


@main.command("recalibrate")
@_options
def recalibrate(config_path, seed, workers, out) -> None:
    """Refit the topology head on the recalibration corpus."""
    _echo_json(_run(pl.run_recalibrate, _load(config_path, seed, workers, out)))


@main.command("train-3d")
@_options
def train_3d(config_path, seed, workers, out) -> None:
    """Train the geometry model against the recalibrated topology model."""
    _echo_json(_run(pl.run_train_3d, _load(config_path, seed, workers, out)))


@main.command("evaluate")
@_options
def evaluate(config_path, seed, workers, out) -> None:
    """Write the ROC matrix, entropy shifts, and null metrics."""
    _echo_json(_run(pl.run_evaluate, _load(config_path, seed, workers, out)))


@main.command("run")
@_options
def run_all(config_path, seed, workers, out) -> None:
    """Run every stage in order."""
    _echo_json(_run(pl.run_all, _load(config_path, seed, workers, out)))


@main.command("sample")
@_options
@click.option(
    "--view",
    type=click.Choice(pl.VIEWS),
    default="pqr",
    show_default=True,
    help="Which factors enter the posterior.",
)
@click.option("--smiles", default=None, help="Bare core molecule (topology views only).")
@click.option("--complex", "complex_id", default=None, help="Bundled complex id to grow.")
@click.option("--atom", "growth_atom", type=int, default=0, show_default=True)
@click.option("--draws", type=int, default=0, show_default=True, help="Motif draws to append.")
@click.option("--top", type=int, default=8, show_default=True, help="Rows to print.")
def sample(config_path, seed, workers, out, view, smiles, complex_id, growth_atom, draws, top) -> None:
    """Print and save the posterior for one growth atom."""
    cfg = _load(config_path, seed, workers, out)
    try:
        _, payload = pl.sample_posterior(
            cfg,
            view=view,
            smiles=smiles,
            complex_id=complex_id,
            growth_atom=growth_atom,
            draws=draws,
        )
    except MolgrowError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"view {payload['view']}  entropy {payload['entropy']:.4f}")
    for row in payload["rows"][:top]:
        click.echo(
            f"  {row['key']}  prob {row['prob']:.4f}  "
            f"p {row['p']:.4f}  q^ {row['q_hat']:.4f}  r^ {row['r_hat']:.4f}"
        )
    if draws:
        click.echo("draws: " + " ".join(payload["draws"]))


@main.command("kernel")
@_options
@click.option(
    "--sites", "sites_count", type=int, default=64, show_default=True,
    help="Growth sites to correlate scores over.",
)
def kernel(config_path, seed, workers, out, sites_count) -> None:
    """Write the motif score-kernel distance matrix."""
    cfg = _load(config_path, seed, workers, out)
    try:
        payload = pl.kernel_report(cfg, sites_count=sites_count)
    except MolgrowError as exc:
        raise click.ClickException(str(exc)) from exc
    _echo_json(payload)


@main.command("report")
@_options
def report(config_path, seed, workers, out) -> None:
    """Summarize every artifact in the output directory."""
    cfg = _load(config_path, seed, workers, out)
    try:
        click.echo(pl.render_report(cfg), nl=False)
    except MolgrowError as exc:
        raise click.ClickException(str(exc)) from exc


@main.command("serve")
@_options
@click.option(
    "--sessions",
    "sessions_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="JSON-lines event log; an existing one is replayed on start.",
)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8732, show_default=True)
@click.option(
    "--cors-origin",
    "cors_origins",
    multiple=True,
    default=("*",),
    show_default=True,
    help="Allowed browser origins; repeatable.",
)
@click.option(
    "--static",
    "static_dir",
    type=click.Path(file_okay=False, exists=True),
    default=None,
    help="Also serve a built UI from this directory.",
)
def serve(
    config_path, seed, workers, out, sessions_path, host, port, cors_origins, static_dir
) -> None:
    """Serve interactive elaboration sessions over HTTP."""
    import uvicorn

    from . import serve as sv

    cfg = _load(config_path, seed, workers, out)
    try:
        store = sv.SessionStore(sv.load_bundle(cfg), log_path=sessions_path)
    except MolgrowError as exc:
        raise click.ClickException(str(exc)) from exc
    app = sv.create_app(store, cors_origins=cors_origins, static_dir=static_dir)
    click.echo(f"elaboration service at http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("fixtures")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False),
    default="fixtures",
    show_default=True,
)
@click.option("--molecules", "n_molecules", type=int, default=500, show_default=True)
@click.option("--complexes", "n_complexes", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=17, show_default=True)
def fixtures(out_dir, n_molecules, n_complexes, seed) -> None:
    """Regenerate the bundled synthetic corpora and example config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_molecule_corpus(out / "molecules.smi", n_molecules, seed)
    write_complex_corpus(out / "complexes.jsonl", n_complexes, seed + 6)
    (out / "pipeline.toml").write_text(_CONFIG_TEMPLATE, encoding="utf-8")
    click.echo(
        f"wrote {n_molecules} molecules, {n_complexes} complexes, "
        f"and pipeline.toml under {out}"
    )
