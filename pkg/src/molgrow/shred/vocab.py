"""Motif vocabulary: counts, frequencies, sampling, and domain shift.

Exemplar motifs are not kept from whatever shred happened to see a key
first; they are rebuilt from the key's canonical serialization. That makes
vocabulary state a pure function of the (key -> count) table, so sharded
builds merge by addition and JSON round trips are exact.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import VocabularyError
from ..molio import MolGraph, parse_smiles
from ..nn.checkpoint import fingerprint_json
from .canon import canonical_serialization, key_of_serialization
from .policy import ShredPolicy
from .shredder import Motif, as_fragment, shred


@dataclass(frozen=True)
class VocabEntry:
    key: str
    smiles: str       # canonical serialization rooted at the attachment
    attachment: int   # emission position of the attachment atom
    count: int

    def motif(self) -> Motif:
        graph = as_fragment(parse_smiles(self.smiles))
        return Motif(graph, self.attachment)


class Vocabulary:
    """Immutable frequency table over motif keys in a fixed order."""

    def __init__(self, entries: Sequence[VocabEntry]):
        if not entries:
            raise VocabularyError("vocabulary is empty")
        ordered = sorted(entries, key=lambda e: (-e.count, e.key))
        keys = [e.key for e in ordered]
        if len(set(keys)) != len(keys):
            raise VocabularyError("duplicate motif keys")
        for e in ordered:
            if e.count < 1:
                raise VocabularyError(f"count {e.count} < 1 for key {e.key}")
        self._entries: tuple[VocabEntry, ...] = tuple(ordered)
        self._index: dict[str, int] = {k: i for i, k in enumerate(keys)}
        self.total: int = sum(e.count for e in ordered)
        self._probs = np.array(
            [e.count / self.total for e in ordered], dtype=np.float64
        )
        self._cum = np.cumsum(self._probs)

    @property
    def entries(self) -> tuple[VocabEntry, ...]:
        return self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def keys(self) -> tuple[str, ...]:
        return tuple(e.key for e in self._entries)

    def index_of(self, key: str) -> int:
        if key not in self._index:
            raise VocabularyError(f"unknown motif key {key!r}")
        return self._index[key]

    def entry(self, key: str) -> VocabEntry:
        return self._entries[self.index_of(key)]

    def probabilities(self) -> np.ndarray:
        """Frequency distribution p(v) = f(v)/total in fixed entry order."""
        return self._probs.copy()

    def p(self, key: str) -> float:
        return float(self._probs[self.index_of(key)])

    def sample(self, rng: np.random.Generator) -> str:
        """Inverse-transform draw over the fixed entry ordering."""
        u = rng.random()
        idx = int(np.searchsorted(self._cum, u, side="right"))
        return self._entries[min(idx, len(self._entries) - 1)].key

    def fingerprint(self) -> str:
        return fingerprint_json(
            {"total": self.total, "counts": [[e.key, e.count] for e in self._entries]}
        )

    def to_payload(self) -> dict:
        return {
            "total": self.total,
            "entries": [
                {
                    "key": e.key,
                    "smiles": e.smiles,
                    "attachment": e.attachment,
                    "count": e.count,
                }
                for e in self._entries
            ],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_payload(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_payload(cls, payload: dict) -> "Vocabulary":
        try:
            entries = [
                VocabEntry(
                    key=str(e["key"]),
                    smiles=str(e["smiles"]),
                    attachment=int(e["attachment"]),
                    count=int(e["count"]),
                )
                for e in payload["entries"]
            ]
            total = int(payload["total"])
        except (KeyError, TypeError, ValueError) as exc:
            raise VocabularyError(f"malformed vocabulary payload: {exc}") from exc
        vocab = cls(entries)
        if vocab.total != total:
            raise VocabularyError(
                f"stored total {total} != sum of counts {vocab.total}"
            )
        for e in entries:
            rebuilt, _ = canonical_serialization(
                e.motif().graph, e.attachment
            )
            if rebuilt != e.smiles or key_of_serialization(rebuilt) != e.key:
                raise VocabularyError(
                    f"entry {e.key!r} fails canonical re-derivation"
                )
        return vocab

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_payload(json.load(fh))


def observe_counts(
    molecules: Sequence[MolGraph],
    policy: ShredPolicy,
    n_shreds_per_mol: int,
    mol_offset: int = 0,
) -> dict[str, dict]:
    """Shred a shard of the corpus; returns key -> {smiles, attachment, count}."""
    acc: dict[str, dict] = {}
    for local_idx, mol in enumerate(molecules):
        mol_idx = mol_offset + local_idx
        for pass_idx in range(n_shreds_per_mol):
            rng = np.random.default_rng(
                [policy.rng_seed, mol_idx, pass_idx]
            )
            result = shred(mol, policy, rng=rng)
            for motif in result.observations():
                smiles, order = canonical_serialization(
                    motif.graph, motif.attachment_atom
                )
                key = key_of_serialization(smiles)
                slot = acc.get(key)
                if slot is None:
                    acc[key] = {
                        "smiles": smiles,
                        "attachment": order.index(motif.attachment_atom),
                        "count": 1,
                    }
                else:
                    slot["count"] += 1
    return acc


def _merge(into: dict[str, dict], shard: dict[str, dict]) -> None:
    for key, rec in shard.items():
        slot = into.get(key)
        if slot is None:
            into[key] = dict(rec)
        else:
            slot["count"] += rec["count"]


def build_vocabulary(
    corpus: Iterable[MolGraph],
    policy: ShredPolicy,
    n_shreds_per_mol: int = 1,
    workers: int = 1,
) -> Vocabulary:
    molecules = list(corpus)
    if not molecules:
        raise VocabularyError("empty corpus")
    if n_shreds_per_mol < 1:
        raise ValueError("n_shreds_per_mol must be >= 1")

    if workers <= 1:
        counts = observe_counts(molecules, policy, n_shreds_per_mol)
    else:
        shard_size = math.ceil(len(molecules) / workers)
        jobs = [
            (molecules[lo : lo + shard_size], lo)
            for lo in range(0, len(molecules), shard_size)
        ]
        counts = {}
        with ThreadPoolExecutor(max_workers=workers) as pool:
            shards = pool.map(
                lambda job: observe_counts(job[0], policy, n_shreds_per_mol, job[1]),
                jobs,
            )
            for shard in shards:
                _merge(counts, shard)

    if not counts:
        raise VocabularyError("corpus produced no attachable motifs")
    entries = [
        VocabEntry(key=k, smiles=r["smiles"], attachment=r["attachment"], count=r["count"])
        for k, r in counts.items()
    ]
    return Vocabulary(entries)


@dataclass(frozen=True)
class ShiftRow:
    key: str
    p_a: float
    p_b: float
    ratio: float  # inf when absent from b, 0.0 when absent from a


def vocabulary_shift(va: Vocabulary, vb: Vocabulary) -> list[ShiftRow]:
    """Per-key frequency comparison over the union of both vocabularies."""
    rows = []
    for key in sorted(set(va.keys()) | set(vb.keys())):
        p_a = va.p(key) if key in va else 0.0
        p_b = vb.p(key) if key in vb else 0.0
        if p_b == 0.0:
            ratio = math.inf
        else:
            ratio = p_a / p_b
        rows.append(ShiftRow(key=key, p_a=p_a, p_b=p_b, ratio=ratio))
    rows.sort(key=lambda r: (-max(r.p_a, r.p_b), r.key))
    return rows


def shift_outliers(
    rows: Iterable[ShiftRow],
    min_p: float = 0.002,
    ratio_bound: float = 2.0,
) -> list[ShiftRow]:
    """Rows prominent in either domain whose ratio moved beyond the bound."""
    out = []
    for r in rows:
        if max(r.p_a, r.p_b) <= min_p:
            continue
        if r.ratio > ratio_bound or r.ratio < 1.0 / ratio_bound:
            out.append(r)
    return out


def sample_1d(vocabulary: Vocabulary, rng: np.random.Generator) -> str:
    return vocabulary.sample(rng)
