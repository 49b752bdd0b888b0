"""
Data models for interaction potentials and one-particle initial data.

These models are dimension-agnostic and shared by every numerical module.
All of them are immutable and round-trip through plain dicts (JSON configs).
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .potentials import PotentialKind, get_potential_kind


def _as_vector(value: Any, dimension: int, name: str, default: float = 0.0) -> Tuple[float, ...]:
    """Broadcast a scalar (or validate a sequence) into a d-tuple of floats."""
    if value is None:
        return (float(default),) * dimension
    if np.isscalar(value):
        return (float(value),) * dimension
    vec = tuple(float(x) for x in value)
    if len(vec) != dimension:
        raise ValueError(f"{name} has length {len(vec)}, expected dimension {dimension}")
    return vec


@dataclass(frozen=True)
class GaussianBump:
    """One term A·exp(-|x|²/(2w²)) of a potential."""
    amplitude: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"Potential width must be positive, got {self.width}")

    def to_dict(self) -> Dict[str, Any]:
        return {"amplitude": self.amplitude, "width": self.width}


@dataclass(frozen=True)
class PotentialSpec:
    """
    Radial interaction potential φ with closed-form transform φ̂.

    `gaussian` uses (amplitude, width); `gaussian_mixture` uses `bumps`;
    `contact` is the flat transform φ̂ ≡ amplitude.
    """
    kind: str = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0
    dimension: int = 3
    bumps: Tuple[GaussianBump, ...] = ()

    def __post_init__(self):
        config = get_potential_kind(self.kind)
        object.__setattr__(self, "kind", config.name.value)
        lowest = max(1, config.min_dimension)
        if self.dimension < lowest:
            raise ValueError(f"{config.name.value} potential dimension must be >= {lowest}, "
                             f"got {self.dimension}")
        if config.name == PotentialKind.GAUSSIAN:
            object.__setattr__(self, "bumps", (GaussianBump(float(self.amplitude), float(self.width)),))
        elif config.name == PotentialKind.GAUSSIAN_MIXTURE:
            if not self.bumps:
                raise ValueError("gaussian_mixture potential needs at least one bump")
            object.__setattr__(self, "bumps", tuple(self.bumps))
        else:
            object.__setattr__(self, "bumps", ())

    @property
    def is_contact(self) -> bool:
        return self.kind == PotentialKind.CONTACT.value

    @property
    def integrable(self) -> bool:
        return get_potential_kind(self.kind).integrable

    @property
    def is_zero(self) -> bool:
        if self.is_contact:
            return self.amplitude == 0
        return all(b.amplitude == 0 for b in self.bumps)

    @property
    def min_width(self) -> float:
        if self.is_contact:
            return 1.0
        return min(b.width for b in self.bumps)

    def scaled(self, factor: float) -> "PotentialSpec":
        """Potential multiplied by a constant."""
        if self.kind == PotentialKind.GAUSSIAN_MIXTURE.value:
            bumps = tuple(GaussianBump(b.amplitude * factor, b.width) for b in self.bumps)
            return PotentialSpec(kind=self.kind, dimension=self.dimension, bumps=bumps)
        return PotentialSpec(kind=self.kind, amplitude=self.amplitude * factor,
                             width=self.width, dimension=self.dimension)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind, "dimension": self.dimension}
        if self.kind == PotentialKind.GAUSSIAN_MIXTURE.value:
            data["bumps"] = [b.to_dict() for b in self.bumps]
        elif self.is_contact:
            data["amplitude"] = self.amplitude
        else:
            data["amplitude"] = self.amplitude
            data["width"] = self.width
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any], dimension: Optional[int] = None) -> "PotentialSpec":
        dim = int(data.get("dimension", dimension if dimension is not None else 3))
        bumps = tuple(GaussianBump(float(b["amplitude"]), float(b["width"]))
                      for b in data.get("bumps", []))
        return cls(
            kind=data.get("kind", "gaussian"),
            amplitude=float(data.get("amplitude", 1.0)),
            width=float(data.get("width", 1.0)),
            dimension=dim,
            bumps=bumps,
        )


@dataclass(frozen=True)
class GaussianComponent:
    """Weighted product of Gaussians in x and v with diagonal widths."""
    weight: float
    x_center: Tuple[float, ...]
    v_center: Tuple[float, ...]
    x_width: Tuple[float, ...]
    v_width: Tuple[float, ...]

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"Component weight must be non-negative, got {self.weight}")
        lengths = {len(self.x_center), len(self.v_center), len(self.x_width), len(self.v_width)}
        if len(lengths) != 1:
            raise ValueError("Component centers and widths must share one dimension")
        if min(self.x_width + self.v_width) <= 0:
            raise ValueError("Component widths must be positive")

    @property
    def dimension(self) -> int:
        return len(self.x_center)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weight": self.weight,
            "x_center": list(self.x_center),
            "v_center": list(self.v_center),
            "x_width": list(self.x_width),
            "v_width": list(self.v_width),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], dimension: int) -> "GaussianComponent":
        return cls(
            weight=float(data.get("weight", 1.0)),
            x_center=_as_vector(data.get("x_center"), dimension, "x_center"),
            v_center=_as_vector(data.get("v_center"), dimension, "v_center"),
            x_width=_as_vector(data.get("x_width"), dimension, "x_width", default=1.0),
            v_width=_as_vector(data.get("v_width"), dimension, "v_width", default=1.0),
        )


@dataclass(frozen=True)
class InitialDatum:
    """One-particle Wigner datum f⁰(x, v) as a finite Gaussian mixture."""
    dimension: int
    components: Tuple[GaussianComponent, ...]

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"Datum dimension must be >= 1, got {self.dimension}")
        if not self.components:
            raise ValueError("Datum needs at least one component")
        object.__setattr__(self, "components", tuple(self.components))
        for comp in self.components:
            if comp.dimension != self.dimension:
                raise ValueError(
                    f"Component dimension {comp.dimension} does not match datum dimension {self.dimension}"
                )

    @property
    def mass(self) -> float:
        return float(sum(c.weight for c in self.components))

    @property
    def is_probability(self) -> bool:
        return abs(self.mass - 1.0) <= 1e-12

    @property
    def is_concentric(self) -> bool:
        """All components share centers, so |f̂⁰| is the sum of component moduli."""
        first = self.components[0]
        return all(c.x_center == first.x_center and c.v_center == first.v_center
                   for c in self.components)

    # Stacked arrays, shape (components,) or (components, d)
    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components], dtype=float)

    @property
    def x_centers(self) -> np.ndarray:
        return np.array([c.x_center for c in self.components], dtype=float)

    @property
    def v_centers(self) -> np.ndarray:
        return np.array([c.v_center for c in self.components], dtype=float)

    @property
    def x_widths(self) -> np.ndarray:
        return np.array([c.x_width for c in self.components], dtype=float)

    @property
    def v_widths(self) -> np.ndarray:
        return np.array([c.v_width for c in self.components], dtype=float)

    @property
    def mean_velocity(self) -> np.ndarray:
        w = self.weights
        if w.sum() == 0:
            return np.zeros(self.dimension)
        return (w[:, None] * self.v_centers).sum(axis=0) / w.sum()

    @property
    def velocity_spread(self) -> float:
        """Largest velocity scale of the mixture around its mean (proposal width)."""
        offsets = np.abs(self.v_centers - self.mean_velocity).max()
        return float(self.v_widths.max() + offsets)

    def scaled(self, alpha: float) -> "InitialDatum":
        comps = tuple(
            GaussianComponent(c.weight * alpha, c.x_center, c.v_center, c.x_width, c.v_width)
            for c in self.components
        )
        return InitialDatum(self.dimension, comps)

    @classmethod
    def standard(
        cls,
        dimension: int,
        x_center: Optional[Sequence[float]] = None,
        v_center: Optional[Sequence[float]] = None,
        x_width: Any = 1.0,
        v_width: Any = 1.0,
    ) -> "InitialDatum":
        """Single unit-weight Gaussian component."""
        comp = GaussianComponent(
            weight=1.0,
            x_center=_as_vector(x_center, dimension, "x_center"),
            v_center=_as_vector(v_center, dimension, "v_center"),
            x_width=_as_vector(x_width, dimension, "x_width", default=1.0),
            v_width=_as_vector(v_width, dimension, "v_width", default=1.0),
        )
        return cls(dimension, (comp,))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dimension": self.dimension,
            "components": [c.to_dict() for c in self.components],
        }

    @classmethod
    def from_dict(
        cls,
        data: Dict[str, Any],
        dimension: Optional[int] = None,
        require_probability: bool = False,
    ) -> "InitialDatum":
        dim = int(data.get("dimension", dimension if dimension is not None else 3))
        raw = data.get("components") or [{}]
        datum = cls(dim, tuple(GaussianComponent.from_dict(c, dim) for c in raw))
        if require_probability and not datum.is_probability:
            raise ValueError(f"Initial datum must have unit mass, got {datum.mass}")
        return datum
