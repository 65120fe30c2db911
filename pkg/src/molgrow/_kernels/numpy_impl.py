"""Pure-numpy implementations of the hot kernels.

These are the reference implementations; the optional compiled module in
_native.pyx mirrors them loop-for-loop. Iteration orders are chosen so both
backends accumulate in the same sequence.
"""

from __future__ import annotations

import numpy as np

NF_PER_RBF = 9


def segment_sum(values: np.ndarray, seg: np.ndarray, n_seg: int) -> np.ndarray:
    """Sum rows of ``values`` into ``n_seg`` buckets given by ``seg``.

    Accumulation follows row order, matching a serial loop.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        out = np.zeros(n_seg, dtype=np.float64)
    else:
        out = np.zeros((n_seg,) + values.shape[1:], dtype=np.float64)
    np.add.at(out, seg, values)
    return out


def segment_max(values: np.ndarray, seg: np.ndarray, n_seg: int) -> np.ndarray:
    """Per-bucket maximum of a 1-d array; empty buckets give -inf."""
    out = np.full(n_seg, -np.inf, dtype=np.float64)
    np.maximum.at(out, seg, np.asarray(values, dtype=np.float64))
    return out


def smooth_displacements(
    delta: np.ndarray, indptr: np.ndarray, indices: np.ndarray, rounds: int
) -> np.ndarray:
    """Neighbour-average smoothing of per-atom displacement vectors.

    One round replaces each row by (own + sum of neighbours) / (1 + degree),
    with neighbourhoods given in CSR form. All rows update simultaneously.
    """
    delta = np.asarray(delta, dtype=np.float64).copy()
    n = delta.shape[0]
    deg = (indptr[1:] - indptr[:-1]).astype(np.float64)
    for _ in range(rounds):
        acc = np.zeros_like(delta)
        np.add.at(acc, np.repeat(np.arange(n), (indptr[1:] - indptr[:-1])), delta[indices])
        delta = (delta + acc) / (1.0 + deg)[:, None]
    return delta


def min_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-row minimum Euclidean distance from points in ``a`` to set ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] == 0:
        return np.full(a.shape[0], np.inf, dtype=np.float64)
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2)).min(axis=1)


def _cutoff_window(r: np.ndarray, rcut: np.ndarray, delta: float) -> np.ndarray:
    """Smooth switching window: 1 below rcut - delta, 0 above rcut."""
    lo = rcut - delta
    out = np.ones_like(r)
    ramp = (r > lo) & (r < rcut)
    out[ramp] = 0.5 * (1.0 + np.cos(np.pi * (r[ramp] - lo[ramp]) / delta))
    out[r >= rcut] = 0.0
    return out


def _proximity_weight(
    r: np.ndarray, rcut: np.ndarray, delta: float, w0: float, beta: float, r_min: float
) -> np.ndarray:
    """Distance prior: constant ``w0`` plateau near, inverse-square decay far.

    The blend gate is a sigmoid centred at rho = rcut - 2*delta; distances are
    clamped at ``r_min`` so the inverse-square branch stays bounded.
    """
    r_eff = np.maximum(r, r_min)
    rho = rcut - 2.0 * delta
    omega = 1.0 / (1.0 + np.exp(beta * (r_eff * r_eff - rho * rho)))
    return (1.0 - omega) / (r_eff * r_eff) + omega * w0


def triplet_features(
    pos_a: np.ndarray,
    pos_env: np.ndarray,
    rcut: np.ndarray,
    sigma: float = 1.0,
    n_centers: int = NF_PER_RBF,
    delta: float = 0.5,
    w0: float = 1.0,
    beta: float = 0.1,
    r_min: float = 0.5,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Geometry features and priors for all ordered environment pairs.

    For a centre position ``pos_a`` and ``n`` environment positions, emits one
    row per ordered pair (b, b') including b == b', in row-major order
    (t = b * n + b'). Each row holds:

      [same-atom bit,
       rbf(r_ab) x n_centers, rbf(r_ab') x n_centers, rbf(r_bb') x n_centers,
       cos/sin of the angles at the centre, at b, and at b']

    Radial basis centres sit at 0, 1, ..., n_centers - 1 Angstrom with
    width ``sigma``. Self-pairs encode r_bb' = 0 and take (cos, sin) = (1, 0)
    for all three angles.

    Returns (features, priors, idx_b, idx_bp). The prior for a pair is the
    product of cutoff windows and proximity weights of the two centre
    distances, using each atom's own cutoff radius.
    """
    pos_a = np.asarray(pos_a, dtype=np.float64)
    pos_env = np.asarray(pos_env, dtype=np.float64)
    rcut = np.asarray(rcut, dtype=np.float64)
    n = pos_env.shape[0]
    nf = 1 + 3 * n_centers + 6
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return np.zeros((0, nf)), np.zeros(0), empty, empty

    vec_ab = pos_env - pos_a[None, :]
    d_ab = np.sqrt((vec_ab * vec_ab).sum(axis=1))

    diff = pos_env[:, None, :] - pos_env[None, :, :]
    d_bb = np.sqrt((diff * diff).sum(axis=2))

    centers = np.arange(n_centers, dtype=np.float64)

    def rbf(r: np.ndarray) -> np.ndarray:
        return np.exp(-((r[..., None] - centers) ** 2) / (2.0 * sigma * sigma))

    eps = 1e-12
    denom_aa = np.maximum(d_ab[:, None] * d_ab[None, :], eps)
    cos_a = (vec_ab @ vec_ab.T) / denom_aa

    # angle at b: between (a - b) and (b' - b); at b': between (a - b') and (b - b')
    a_minus_b = -vec_ab
    dot_b = np.einsum("bk,bpk->bp", a_minus_b, -diff)
    denom_b = np.maximum(d_ab[:, None] * d_bb, eps)
    cos_b = dot_b / denom_b

    dot_bp = np.einsum("pk,bpk->bp", a_minus_b, diff)
    denom_bp = np.maximum(d_ab[None, :] * d_bb, eps)
    cos_bp = dot_bp / denom_bp

    def clamp_trig(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = np.clip(c, -1.0, 1.0)
        return c, np.sqrt(np.maximum(0.0, 1.0 - c * c))

    cos_a, sin_a = clamp_trig(cos_a)
    cos_b, sin_b = clamp_trig(cos_b)
    cos_bp, sin_bp = clamp_trig(cos_bp)

    diag = np.eye(n, dtype=bool)
    for arr in (cos_a, cos_b, cos_bp):
        arr[diag] = 1.0
    for arr in (sin_a, sin_b, sin_bp):
        arr[diag] = 0.0

    feats = np.empty((n, n, nf), dtype=np.float64)
    feats[:, :, 0] = diag.astype(np.float64)
    rbf_ab = rbf(d_ab)
    feats[:, :, 1 : 1 + n_centers] = rbf_ab[:, None, :]
    feats[:, :, 1 + n_centers : 1 + 2 * n_centers] = rbf_ab[None, :, :]
    feats[:, :, 1 + 2 * n_centers : 1 + 3 * n_centers] = rbf(d_bb)
    base = 1 + 3 * n_centers
    for k, arr in enumerate((cos_a, sin_a, cos_b, sin_b, cos_bp, sin_bp)):
        feats[:, :, base + k] = arr

    fc = _cutoff_window(d_ab, rcut, delta)
    gw = _proximity_weight(d_ab, rcut, delta, w0, beta, r_min)
    w = (fc * gw)[:, None] * (fc * gw)[None, :]

    idx_b = np.repeat(np.arange(n, dtype=np.int64), n)
    idx_bp = np.tile(np.arange(n, dtype=np.int64), n)
    return feats.reshape(n * n, nf), w.reshape(n * n), idx_b, idx_bp


def cutoff_window(r, rcut, delta: float = 0.5):
    """Public wrapper of the switching window for scalar or array input."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=np.float64))
    rc_arr = np.broadcast_to(np.asarray(rcut, dtype=np.float64), r_arr.shape).copy()
    out = _cutoff_window(r_arr, rc_arr, delta)
    return out if np.ndim(r) else float(out[0])


def proximity_weight(r, rcut, delta: float = 0.5, w0: float = 1.0, beta: float = 0.1, r_min: float = 0.5):
    """Public wrapper of the distance prior for scalar or array input."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=np.float64))
    rc_arr = np.broadcast_to(np.asarray(rcut, dtype=np.float64), r_arr.shape).copy()
    out = _proximity_weight(r_arr, rc_arr, delta, w0, beta, r_min)
    return out if np.ndim(r) else float(out[0])
