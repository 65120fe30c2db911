"""Stochastic shredding policy knobs."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ShredPolicy:
    rng_seed: int
    max_radius: int = 2
    directional_prob: float = 0.5

    def __post_init__(self) -> None:
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")
        if self.max_radius < 0:
            raise ValueError("max_radius must be >= 0")
        if not 0.0 <= self.directional_prob <= 1.0:
            raise ValueError("directional_prob must lie in [0, 1]")

    def fingerprint_payload(self) -> dict:
        """Stable dict for checkpoint fingerprinting; the seed is excluded
        because it selects a stream, not a policy."""
        return {
            "max_radius": self.max_radius,
            "directional_prob": self.directional_prob,
        }
