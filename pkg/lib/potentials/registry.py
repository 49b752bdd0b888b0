"""
Potential Registry - Configurations for supported interaction potentials.
"""

from enum import Enum
from dataclasses import dataclass
from typing import Dict


class PotentialKind(Enum):
    GAUSSIAN = "gaussian"
    GAUSSIAN_MIXTURE = "gaussian_mixture"
    CONTACT = "contact"


@dataclass
class PotentialKindConfig:
    name: PotentialKind
    integrable: bool
    has_real_space_form: bool
    min_dimension: int = 1
    description: str = ""


POTENTIAL_CONFIGS: Dict[PotentialKind, PotentialKindConfig] = {
    PotentialKind.GAUSSIAN: PotentialKindConfig(
        name=PotentialKind.GAUSSIAN,
        integrable=True,
        has_real_space_form=True,
        description="A·exp(-|x|²/(2w²)), closed-form Gaussian transform",
    ),
    PotentialKind.GAUSSIAN_MIXTURE: PotentialKindConfig(
        name=PotentialKind.GAUSSIAN_MIXTURE,
        integrable=True,
        has_real_space_form=True,
        description="Finite sum of Gaussian bumps with independent amplitudes and widths",
    ),
    PotentialKind.CONTACT: PotentialKindConfig(
        name=PotentialKind.CONTACT,
        integrable=False,
        has_real_space_form=False,
        description="Flat transform φ̂ ≡ A; delta-potential surrogate for cross sections only",
    ),
}


def get_potential_kind(kind: str) -> PotentialKindConfig:
    try:
        kind_enum = PotentialKind(kind.lower())
        return POTENTIAL_CONFIGS[kind_enum]
    except (ValueError, KeyError, AttributeError):
        supported = ", ".join(get_supported_kinds())
        raise ValueError(f"Unsupported potential kind: {kind}. Supported: {supported}")


def get_supported_kinds() -> list:
    return [k.value for k in PotentialKind if k in POTENTIAL_CONFIGS]
