"""Exception hierarchy shared across the package."""


class MolgrowError(Exception):
    """Base class for all package-specific errors."""


class SmilesError(MolgrowError):
    """Raised on malformed SMILES input. Carries the offending position."""

    def __init__(self, message: str, text: str = "", pos: int | None = None):
        self.text = text
        self.pos = pos
        if pos is not None:
            message = f"{message} (at position {pos}: ...{text[max(0, pos - 8):pos + 8]!r}...)"
        super().__init__(message)


class ValenceError(MolgrowError):
    """Raised when an atom's bonded valence exceeds what its element allows."""


class ComplexFormatError(MolgrowError):
    """Raised on malformed complex records. Carries the source line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MotifSizeError(MolgrowError):
    """Raised when a motif exceeds the supported heavy-atom budget."""


class VocabularyError(MolgrowError):
    """Raised on invalid vocabulary state (unknown key, empty vocabulary)."""


class DegenerateVocabularyError(VocabularyError):
    """Raised when negative sampling cannot avoid the true motif."""


class ShapeError(MolgrowError):
    """Raised on tensor shape mismatches."""


class NonFiniteError(MolgrowError):
    """Raised in debug mode when an operation produces NaN or infinity."""


class ConfigError(MolgrowError):
    """Raised on invalid or incomplete pipeline configuration."""


class CheckpointError(MolgrowError):
    """Raised on malformed or incompatible checkpoint containers."""


class StageOrderError(CheckpointError):
    """Raised when pipeline stages are run against mismatched artifacts."""


class GrowthSiteError(MolgrowError):
    """Raised when a requested growth atom cannot accept a new bond."""
