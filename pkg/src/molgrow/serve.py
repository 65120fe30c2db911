"""Interactive elaboration sessions spoken over HTTP.

A session wraps one growing molecule: either a bare SMILES core or a
bundled complex's ligand sitting in its pocket. Reads rank growth atoms
and motifs; writes grow the core one motif at a time with undo. Every
mutation appends one line to a JSON-lines event log, and replaying that
log from the start reproduces every session exactly, so the service
keeps no state across restarts beyond the log file.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .augment import _rotation_matrix
from .errors import (
    CheckpointError,
    GrowthSiteError,
    MolgrowError,
    SmilesError,
    ValenceError,
    VocabularyError,
)
from .fixtures import embed_coords
from .gnn3d import Model3D, crop_protein
from .molio import MolGraph, parse_smiles, with_coords, write_smiles
from .molio.complexes import Complex, coords_array, load_complexes
from .pipeline import PipelineConfig
from .posterior import VIEWS, assemble, entropy
from .recon import attach_motif
from .shred import Vocabulary

BOND_LENGTH = 1.5  # Angstroms, provisional single-bond length for placement
TORSION_STEPS = 12

# Reference view for rank-shift columns: each richer view is compared
# against the view it extends, mirroring how the factor stack is built.
_RANK_REFERENCE = {"p": None, "pq": "p", "qr": "pq", "pqr": "pq"}


class ServeError(MolgrowError):
    """Session-service failure carrying an HTTP status and a short code."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code


@dataclass(frozen=True)
class ModelBundle:
    """Trained models and bundled complexes one service instance works from."""

    vocabulary: Vocabulary
    m2: object
    m3: Model3D | None
    complexes: dict[str, Complex]


def load_bundle(cfg: PipelineConfig) -> ModelBundle:
    """Models from the pipeline's output directory, geometry included when
    its checkpoint exists, plus the declared complexes keyed by id."""
    m2, _ = pl._posterior_models(cfg, need_geometry=False)
    m3 = None
    if (cfg.out_dir / pl.MODEL3D_FILE).exists():
        m3 = pl._load_model3d(cfg)
    complexes: dict[str, Complex] = {}
    if cfg.complexes is not None and Path(cfg.complexes).exists():
        complexes = {c.id: c for c in load_complexes(cfg.complexes)}
    return ModelBundle(m2.vocabulary, m2, m3, complexes)


@dataclass
class Session:
    """One growing molecule and the step history that produced it."""

    id: str
    source: dict
    core: MolGraph
    coords: np.ndarray | None
    protein: MolGraph | None
    views: tuple[str, ...]
    history: list[dict] = field(default_factory=list)


def place_motif(
    core: MolGraph,
    coords: np.ndarray,
    growth_atom: int,
    motif: MolGraph,
    attachment: int,
    obstacles: np.ndarray,
) -> np.ndarray:
    """Provisional coordinates for a motif bonded at a growth atom.

    The attachment atom goes one standard bond length out along the
    growth direction (away from the mean of the growth atom's bonded
    neighbours), the rest of the motif takes a deterministic embedded
    shape pointed the same way, and a coarse torsion scan about the new
    bond keeps the pose with the largest clearance from everything
    already placed. A readable pose for interactive work, not a
    conformer search.
    """
    anchor = coords[growth_atom]
    neighbours = [coords[w] for w, _ in core.neighbors(growth_atom)]
    direction = np.array([1.0, 0.0, 0.0])
    if neighbours:
        outward = anchor - np.mean(neighbours, axis=0)
        norm = np.linalg.norm(outward)
        if norm > 1e-9:
            direction = outward / norm
    start = anchor + BOND_LENGTH * direction

    local = embed_coords(motif, seed=0)
    local = local - local[attachment]
    spread = local.mean(axis=0)
    norm = np.linalg.norm(spread)
    if norm > 1e-9:
        local = local @ _rotation_between(spread / norm, direction).T

    best: np.ndarray | None = None
    best_clearance = -math.inf
    for step in range(TORSION_STEPS):
        angle = 2.0 * math.pi * step / TORSION_STEPS
        candidate = local @ _rotation_matrix(direction, angle).T + start
        clearance = math.inf
        if obstacles.size:
            deltas = candidate[:, None, :] - obstacles[None, :, :]
            clearance = float(np.sqrt((deltas**2).sum(axis=2)).min())
        if clearance > best_clearance + 1e-12:
            best_clearance = clearance
            best = candidate
    assert best is not None
    return best


def _rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation taking unit vector a onto unit vector b."""
    axis = np.cross(a, b)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        if float(a @ b) > 0.0:
            return np.eye(3)
        # antiparallel: half turn about any axis perpendicular to a
        probe = np.array([1.0, 0.0, 0.0])
        if abs(float(a @ probe)) > 0.9:
            probe = np.array([0.0, 1.0, 0.0])
        perp = np.cross(a, probe)
        return _rotation_matrix(perp / np.linalg.norm(perp), math.pi)
    angle = math.atan2(norm, float(a @ b))
    return _rotation_matrix(axis / norm, angle)


class SessionStore:
    """Sessions over one trained bundle, persisted as an event log.

    Sessions are isolated from each other; operations within one session
    are serialized by a per-session lock. Models and complexes are never
    mutated. When a log path is given, every create/apply/undo appends
    one JSON line, and a store opened on an existing log replays it to
    restore the exact same sessions.
    """

    def __init__(self, bundle: ModelBundle, log_path=None):
        self.bundle = bundle
        self.log_path = Path(log_path) if log_path is not None else None
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._store_lock = threading.Lock()
        self._counter = 0
        if self.log_path is not None and self.log_path.exists():
            self._replay_log()

    # -- session lifecycle -------------------------------------------------

    def create(self, source: dict) -> dict:
        with self._store_lock:
            session = self._do_create(source)
            self._record({"event": "create", "sid": session.id, "source": source})
        return self.describe(session.id)

    def describe(self, sid: str) -> dict:
        s = self._get(sid)
        with self._locks[sid]:
            return {
                "id": s.id,
                "source": s.source,
                "n_atoms": s.core.n_atoms,
                "views": list(s.views),
                "history_length": len(s.history),
            }

    def growth_vectors(self, sid: str) -> list[dict]:
        """Atoms that can host one more single bond, best site first.

        Ranking heuristic: more spare bonding capacity first, ties broken
        by atom index so the order is stable.
        """
        s = self._get(sid)
        with self._locks[sid]:
            rows = []
            for idx in range(s.core.n_atoms):
                if not s.core.can_accept_bond(idx):
                    continue
                atom = s.core.atoms[idx]
                capacity = s.core.open_valence(idx) + atom.n_hydrogens
                rows.append(
                    {
                        "atom": idx,
                        "element": atom.element,
                        "capacity": capacity,
                        "in_ring": s.core.atom_in_ring(idx),
                    }
                )
            rows.sort(key=lambda r: (-r["capacity"], r["atom"]))
            return rows

    def posterior_table(self, sid: str, atom: int, view: str, top: int) -> dict:
        """Ranked motif table for one growth atom under one view.

        Every enabled view is ranked so each row can report where it sits
        under all of them plus its shift against the view's reference
        (richer views against the one they extend). Rows follow the
        active view's probabilities, best first.
        """
        s = self._get(sid)
        with self._locks[sid]:
            self._check_atom(s, atom)
            if view not in VIEWS:
                raise ServeError(400, "unknown-view", f"view must be one of {VIEWS}")
            if view not in s.views:
                raise ServeError(
                    400,
                    "missing-geometry",
                    "geometry views need a complex-backed session "
                    "and a trained geometry model",
                )
            protein = None
            if any("r" in v for v in s.views):
                protein = crop_protein(s.protein, s.coords)
            posts = {
                v: assemble(
                    s.core,
                    atom,
                    self.bundle.m2,
                    v,
                    m3=self.bundle.m3 if "r" in v else None,
                    protein=protein if "r" in v else None,
                )
                for v in s.views
            }
            ranks = {v: _rank_map(posts[v]) for v in posts}
            active = posts[view]
            order = sorted(
                range(len(active.keys)),
                key=lambda i: (-active.prob[i], active.keys[i]),
            )
            reference = _RANK_REFERENCE[view]
            rows = []
            for i in order[: max(top, 0)]:
                key = active.keys[i]
                row = {
                    "key": key,
                    "smiles": self.bundle.vocabulary.entry(key).smiles,
                    "p": float(active.p[i]),
                    "q": float(active.q[i]),
                    "r": float(active.r[i]),
                    "q_hat": float(active.q_hat[i]),
                    "r_hat": float(active.r_hat[i]),
                    "prob": float(active.prob[i]),
                    "rank": ranks[view][key],
                    "ranks": {v: ranks[v][key] for v in posts},
                    "rank_shift": (
                        ranks[reference][key] - ranks[view][key]
                        if reference is not None
                        else None
                    ),
                }
                rows.append(row)
            return {
                "view": view,
                "reference": reference,
                "views": list(s.views),
                "atom": atom,
                "entropy": float(entropy(active)),
                "n_motifs": len(active.keys),
                "rows": rows,
            }

    def apply(self, sid: str, atom: int, motif_key: str) -> dict:
        s = self._get(sid)
        with self._locks[sid]:
            self._check_atom(s, atom)
            core, coords = self._apply_step(s.core, s.coords, atom, motif_key, s.protein)
            s.core, s.coords = core, coords
            s.history.append({"atom": atom, "motif": motif_key})
            self._record({"event": "apply", "sid": sid, "atom": atom, "motif": motif_key})
            return {
                "id": sid,
                "n_atoms": s.core.n_atoms,
                "history_length": len(s.history),
                "smiles": write_smiles(s.core),
            }

    def undo(self, sid: str) -> dict:
        s = self._get(sid)
        with self._locks[sid]:
            if not s.history:
                raise ServeError(409, "empty-history", "nothing to undo")
            steps = s.history[:-1]
            core, coords = self._initial_state(s.source)
            for step in steps:
                core, coords = self._apply_step(
                    core, coords, step["atom"], step["motif"], s.protein
                )
            s.core, s.coords, s.history = core, coords, steps
            self._record({"event": "undo", "sid": sid})
            return {
                "id": sid,
                "n_atoms": s.core.n_atoms,
                "history_length": len(s.history),
                "smiles": write_smiles(s.core),
            }

    def molecule(self, sid: str) -> dict:
        s = self._get(sid)
        with self._locks[sid]:
            return {
                "id": sid,
                "smiles": write_smiles(s.core),
                "n_atoms": s.core.n_atoms,
                "history_length": len(s.history),
                "coords": None if s.coords is None else s.coords.tolist(),
                "atoms": [
                    {"element": a.element, "aromatic": a.aromatic}
                    for a in s.core.atoms
                ],
                "bonds": [
                    {"i": b.i, "j": b.j, "order": b.order} for b in s.core.bonds
                ],
            }

    # -- internals ---------------------------------------------------------

    def _get(self, sid: str) -> Session:
        with self._store_lock:
            if sid not in self._sessions:
                raise ServeError(404, "unknown-session", f"no session {sid!r}")
            return self._sessions[sid]

    def _check_atom(self, s: Session, atom: int) -> None:
        if not 0 <= atom < s.core.n_atoms:
            raise ServeError(
                400, "invalid-atom", f"atom {atom} outside 0..{s.core.n_atoms - 1}"
            )
        if not s.core.can_accept_bond(atom):
            raise ServeError(400, "invalid-atom", f"atom {atom} cannot host a new bond")

    def _do_create(self, source: dict) -> Session:
        core, coords = self._initial_state(source)
        protein = None
        views: tuple[str, ...] = ("p", "pq")
        if "complex_id" in source:
            protein = self.bundle.complexes[source["complex_id"]].protein
            if self.bundle.m3 is not None:
                views = ("p", "pq", "qr", "pqr")
        self._counter += 1
        sid = f"s{self._counter:04d}"
        session = Session(sid, dict(source), core, coords, protein, views)
        self._sessions[sid] = session
        self._locks[sid] = threading.Lock()
        return session

    def _initial_state(self, source: dict) -> tuple[MolGraph, np.ndarray | None]:
        keys = set(source)
        if keys == {"smiles"}:
            try:
                return parse_smiles(source["smiles"]), None
            except (SmilesError, ValenceError) as exc:
                raise ServeError(400, "parse-error", str(exc)) from exc
        if keys == {"complex_id"}:
            cid = source["complex_id"]
            if cid not in self.bundle.complexes:
                raise ServeError(404, "unknown-complex", f"no bundled complex {cid!r}")
            ligand = self.bundle.complexes[cid].ligand
            return ligand, coords_array(ligand)
        raise ServeError(
            400, "bad-request", "source must be exactly one of smiles or complex_id"
        )

    def _apply_step(
        self,
        core: MolGraph,
        coords: np.ndarray | None,
        atom: int,
        motif_key: str,
        protein: MolGraph | None = None,
    ) -> tuple[MolGraph, np.ndarray | None]:
        """One growth step; the same routine serves apply and replay, so a
        session's state always equals its history replayed from the start."""
        try:
            entry = self.bundle.vocabulary.entry(motif_key)
        except VocabularyError as exc:
            raise ServeError(400, "unknown-motif", str(exc)) from exc
        motif = entry.motif()
        try:
            grown = attach_motif(core, atom, motif.graph, motif.attachment_atom)
        except GrowthSiteError as exc:
            raise ServeError(400, "valence", str(exc)) from exc
        if coords is None:
            return grown, None
        obstacles = coords
        if protein is not None and protein.n_atoms:
            obstacles = np.vstack([coords, coords_array(protein)])
        placed = place_motif(
            core, coords, atom, motif.graph, motif.attachment_atom, obstacles
        )
        merged = np.vstack([coords, placed])
        return with_coords(grown, merged), merged

    def _record(self, event: dict) -> None:
        if self.log_path is None:
            return
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _replay_log(self) -> None:
        with self.log_path.open(encoding="utf-8") as fh:
            lines = fh.readlines()
        for n, line in enumerate(lines, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                event = json.loads(line)
                kind = event["event"]
                if kind == "create":
                    session = self._do_create(event["source"])
                    if session.id != event["sid"]:
                        raise CheckpointError(
                            f"session id {session.id} diverged from log {event['sid']}"
                        )
                elif kind == "apply":
                    s = self._sessions[event["sid"]]
                    s.core, s.coords = self._apply_step(
                        s.core, s.coords, event["atom"], event["motif"], s.protein
                    )
                    s.history.append({"atom": event["atom"], "motif": event["motif"]})
                elif kind == "undo":
                    s = self._sessions[event["sid"]]
                    if not s.history:
                        raise CheckpointError("undo event with empty history")
                    steps = s.history[:-1]
                    core, coords = self._initial_state(s.source)
                    for step in steps:
                        core, coords = self._apply_step(
                            core, coords, step["atom"], step["motif"], s.protein
                        )
                    s.core, s.coords, s.history = core, coords, steps
                else:
                    raise CheckpointError(f"unknown event kind {kind!r}")
            except (KeyError, ValueError, MolgrowError) as exc:
                raise CheckpointError(
                    f"corrupt session log {self.log_path} at line {n}: {exc}"
                ) from exc


def _rank_map(post) -> dict[str, int]:
    """1-based rank per motif key, best probability (then key) first."""
    order = sorted(range(len(post.keys)), key=lambda i: (-post.prob[i], post.keys[i]))
    return {post.keys[i]: rank for rank, i in enumerate(order, start=1)}


def create_app(store: SessionStore, cors_origins=("*",), static_dir=None):
    """HTTP front for a session store; errors arrive as {code, message}."""
    from fastapi import Body, FastAPI, Query, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse

    app = FastAPI(title="molgrow elaboration service", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ServeError)
    async def _serve_error(request: Request, exc: ServeError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": str(exc)}
        )

    @app.exception_handler(MolgrowError)
    async def _domain_error(request: Request, exc: MolgrowError):
        return JSONResponse(
            status_code=400, content={"code": "domain-error", "message": str(exc)}
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400, content={"code": "bad-request", "message": str(exc)}
        )

    @app.post("/sessions")
    def create_session(body: dict = Body(...)):
        return store.create(body)

    @app.get("/sessions/{sid}")
    def describe(sid: str):
        return store.describe(sid)

    @app.get("/sessions/{sid}/growth-vectors")
    def growth_vectors(sid: str):
        return {"atoms": store.growth_vectors(sid)}

    @app.get("/sessions/{sid}/posterior")
    def posterior(
        sid: str,
        atom: int = Query(...),
        view: str = Query("pq"),
        top: int = Query(8),
    ):
        return store.posterior_table(sid, atom, view, top)

    @app.post("/sessions/{sid}/apply")
    def apply(sid: str, body: dict = Body(...)):
        if not isinstance(body.get("atom"), int) or not isinstance(
            body.get("motif"), str
        ):
            raise ServeError(
                400, "bad-request", "body must carry an integer atom and a motif key"
            )
        return store.apply(sid, body["atom"], body["motif"])

    @app.post("/sessions/{sid}/undo")
    def undo(sid: str):
        return store.undo(sid)

    @app.get("/sessions/{sid}/molecule")
    def molecule(sid: str):
        return store.molecule(sid)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
