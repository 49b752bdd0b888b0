"""Interaction potential kinds with closed-form Fourier transforms."""

from .registry import (
    PotentialKind,
    PotentialKindConfig,
    POTENTIAL_CONFIGS,
    get_potential_kind,
    get_supported_kinds,
)

__all__ = [
    "PotentialKind",
    "PotentialKindConfig",
    "POTENTIAL_CONFIGS",
    "get_potential_kind",
    "get_supported_kinds",
]
