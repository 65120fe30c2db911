"""Stochastic shredding, canonical motif identity, and the frequency model."""

from .canon import canonical_key, canonical_serialization, key_of_serialization, motif_key
from .policy import ShredPolicy
from .shredder import (
    MAX_MOTIF_ATOMS,
    Motif,
    MotifEdge,
    ShredResult,
    as_fragment,
    shred,
)
from .vocab import (
    ShiftRow,
    VocabEntry,
    Vocabulary,
    build_vocabulary,
    sample_1d,
    shift_outliers,
    vocabulary_shift,
)

__all__ = [
    "MAX_MOTIF_ATOMS",
    "Motif",
    "MotifEdge",
    "ShiftRow",
    "ShredPolicy",
    "ShredResult",
    "VocabEntry",
    "Vocabulary",
    "as_fragment",
    "build_vocabulary",
    "canonical_key",
    "canonical_serialization",
    "key_of_serialization",
    "motif_key",
    "sample_1d",
    "shift_outliers",
    "shred",
    "vocabulary_shift",
]
