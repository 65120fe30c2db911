"""Factorized posterior over the motif vocabulary.

Combines the frequency prior with the topology and geometry odds factors
into a normalized distribution for one growth atom, under a selectable
view (prior only, prior x topology, topology x geometry, or the full
product). Also houses the entropy diagnostics and the whitened score
kernel used to map the vocabulary for visualization.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import StageOrderError
from .gnn2d import Model2D
from .gnn3d import Model3D
from .molio import MolGraph

VIEWS = ("p", "pq", "qr", "pqr")

_VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class Posterior:
    """Per-motif factor table and normalized probabilities for one view.

    ``q_hat`` and ``r_hat`` are the factors rescaled so that the prior
    times ``q_hat`` (and times ``r_hat``) sums to one; ``z2`` and ``z3``
    are the corresponding normalization sums over prior x factors.
    """

    keys: tuple[str, ...]
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray
    q_hat: np.ndarray
    r_hat: np.ndarray
    prob: np.ndarray
    view: str
    z2: float
    z3: float

    def __len__(self) -> int:
        return len(self.keys)


def assemble(
    core: MolGraph,
    growth_atom: int,
    m2: Model2D,
    view: str = "pqr",
    m3: Model3D | None = None,
    protein=None,
) -> Posterior:
    """Posterior over the vocabulary for one growth atom.

    The factor columns are always fully populated: the geometry ratio
    defaults to one when no geometry model or surroundings are given.
    Views with a geometry component require both.
    """
    if view not in VIEWS:
        raise ValueError(f"view must be one of {VIEWS}, got {view!r}")
    if "r" in view and (m3 is None or protein is None):
        raise ValueError(
            f"view {view!r} needs the geometry model and the placed surroundings"
        )
    if m3 is not None and (
        m3.vocabulary.fingerprint() != m2.vocabulary.fingerprint()
    ):
        raise StageOrderError(
            "geometry and topology models disagree on the vocabulary"
        )

    p = m2.vocabulary.probabilities()
    q = m2.q_row(core, growth_atom)
    if m3 is not None and protein is not None:
        r = m3.r_row(protein, core, growth_atom)
    else:
        r = np.ones_like(q)

    z2 = float((p * q).sum())
    z3 = float((p * q * r).sum())
    raw = {"p": p, "pq": p * q, "qr": q * r, "pqr": p * q * r}[view]
    return Posterior(
        keys=tuple(m2.vocabulary.keys()),
        p=p,
        q=q,
        r=r,
        q_hat=q / z2,
        r_hat=(z2 / z3) * r,
        prob=raw / raw.sum(),
        view=view,
        z2=z2,
        z3=z3,
    )


def sample(post: Posterior, rng: np.random.Generator) -> str:
    """Inverse-transform draw over the posterior's fixed key ordering."""
    cum = np.cumsum(post.prob)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return post.keys[min(idx, len(post.keys) - 1)]


def _norm_entropy(prob: np.ndarray) -> float:
    if prob.size < 2:
        return 0.0
    pos = prob[prob > 0.0]
    h = -float(np.sum(pos * np.log(pos)))
    # clamp: rounding may push an exactly-uniform distribution past 1
    return min(1.0, max(0.0, h / math.log(prob.size)))


def entropy(post: Posterior) -> float:
    """Shannon entropy scaled so the uniform distribution scores one."""
    return _norm_entropy(post.prob)


def apply_threshold(
    post: Posterior, top_n: int | None = None, min_pq: float | None = None
) -> Posterior:
    """Suppress unlikely motifs and renormalize the survivors.

    ``top_n`` keeps the n most probable motifs; ``min_pq`` drops motifs
    whose prior times normalized topology factor falls below the bound.
    Suppressed rows keep their factor columns but get probability zero.
    """
    keep = np.ones(len(post), dtype=bool)
    if top_n is not None:
        if top_n < 1:
            raise ValueError("top_n must be positive")
        order = np.argsort(-post.prob, kind="stable")
        keep &= np.isin(np.arange(len(post)), order[:top_n])
    if min_pq is not None:
        keep &= post.p * post.q_hat >= min_pq
    masked = np.where(keep, post.prob, 0.0)
    total = masked.sum()
    if total <= 0.0:
        raise ValueError("threshold suppressed every motif")
    return replace(post, prob=masked / total)


def entropy_shift_report(
    steps,
    m2: Model2D,
    m3: Model3D | None = None,
    proteins=None,
) -> dict:
    """Entropy along the conditioning sequence, one row per step.

    Starting from the uniform distribution (entropy one), each step
    records the entropy after conditioning on topology alone, topology
    and geometry, and the full posterior, plus the successive changes.
    ``proteins`` supplies each step's surroundings; without them (or a
    geometry model) the geometry factor is one.
    """
    steps = list(steps)
    if proteins is None:
        proteins = [None] * len(steps)
    p = m2.vocabulary.probabilities()
    rows = []
    for step, prot in zip(steps, proteins):
        q = m2.q_row(step.core, step.growth_atom)
        if m3 is not None and prot is not None:
            r = m3.r_row(prot, step.core, step.growth_atom)
        else:
            r = np.ones_like(q)
        h_q = _norm_entropy(q / q.sum())
        qr = q * r
        h_qr = _norm_entropy(qr / qr.sum())
        pqr = p * qr
        h_pqr = _norm_entropy(pqr / pqr.sum())
        rows.append(
            {
                "h_q": h_q,
                "h_qr": h_qr,
                "h_pqr": h_pqr,
                "d_q": h_q - 1.0,
                "d_qr": h_qr - h_q,
                "d_pqr": h_pqr - h_qr,
            }
        )

    columns = ("h_q", "h_qr", "h_pqr", "d_q", "d_qr", "d_pqr")
    summary: dict = {"count": len(rows), "mean": {}, "histograms": {}}
    for col in columns:
        values = np.asarray([row[col] for row in rows])
        lo, hi = (0.0, 1.0) if col.startswith("h") else (-1.0, 1.0)
        counts, edges = np.histogram(values, bins=20, range=(lo, hi))
        summary["mean"][col] = float(values.mean()) if rows else 0.0
        summary["histograms"][col] = {
            "edges": edges.tolist(),
            "counts": counts.tolist(),
        }
    return {"rows": rows, "summary": summary}


# ------------------------------------------------------------------- kernel

@dataclass(frozen=True)
class KernelMatrix:
    """Whitened score cross-correlation over the vocabulary.

    ``d`` is the derived distance matrix 1 - k; ``flagged`` lists motif
    rows whose scores were (near-)constant across the sampled contexts,
    where the variance floor stands in for the true scale.
    """

    k: np.ndarray
    d: np.ndarray
    flagged: tuple[int, ...]


def score_kernel(m2, sites) -> KernelMatrix:
    """Motif-by-motif correlation of topology scores across growth sites.

    Each motif's scores are whitened to zero mean and unit variance over
    the sites, so the diagonal is one and off-diagonal entries measure
    how interchangeably two motifs respond to context.
    """
    sites = list(sites)
    if len(sites) < 2:
        raise ValueError("score kernel needs at least two growth sites")
    a = np.stack([m2.alpha_row(core, atom) for core, atom in sites], axis=1)
    mu = a.mean(axis=1, keepdims=True)
    sd = a.std(axis=1, keepdims=True)
    flagged = tuple(np.nonzero(sd[:, 0] < _VARIANCE_FLOOR)[0].tolist())
    if flagged:
        warnings.warn(
            f"{len(flagged)} motif rows have near-constant scores; "
            "variance floor applied",
            stacklevel=2,
        )
    white = (a - mu) / np.maximum(sd, _VARIANCE_FLOOR)
    k = white @ white.T / a.shape[1]
    k = 0.5 * (k + k.T)
    return KernelMatrix(k=k, d=1.0 - k, flagged=flagged)


# ------------------------------------------------------------------- export

def posterior_payload(post: Posterior) -> dict:
    """JSON-ready table of the posterior, most probable motifs first."""
    order = sorted(range(len(post)), key=lambda i: (-post.prob[i], post.keys[i]))
    return {
        "view": post.view,
        "z2": post.z2,
        "z3": post.z3,
        "rows": [
            {
                "key": post.keys[i],
                "p": float(post.p[i]),
                "q": float(post.q[i]),
                "r": float(post.r[i]),
                "q_hat": float(post.q_hat[i]),
                "r_hat": float(post.r_hat[i]),
                "prob": float(post.prob[i]),
            }
            for i in order
        ],
    }


def save_posterior(path, post: Posterior) -> None:
    with open(path, "w") as fh:
        json.dump(posterior_payload(post), fh, indent=2)
        fh.write("\n")


def matrix_csv(matrix: np.ndarray, keys) -> str:
    """Dense CSV with a motif-key header row and row labels."""
    keys = list(keys)
    lines = ["key," + ",".join(keys)]
    for key, row in zip(keys, matrix):
        lines.append(key + "," + ",".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def save_matrix(path, matrix: np.ndarray, keys) -> None:
    with open(path, "w") as fh:
        fh.write(matrix_csv(matrix, keys))
