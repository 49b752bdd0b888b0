"""
Run configuration: one JSON document per invocation, embedded verbatim in the
result so a run can be reproduced from its own output.
"""

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional

from lib.models import InitialDatum, PotentialSpec
from kinetic.kernel import CrossSection

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


COMMANDS = (
    "cross-section",
    "solve",
    "probe",
    "converge",
    "bound-check",
    "delta-check",
    "oracle-compare",
)

DEFAULT_COMMANDS: Dict[str, Dict[str, Any]] = {
    "cross-section": {"speeds": [0.5, 1.0, 2.0], "grid": 16, "w": None},
    "solve": {"t": None, "t_fraction": 0.25, "n_max": 3, "x1": None, "v1": None, "constant": None,
              "override": False, "oracle": True, "iterations": 4, "grid_size": 25, "half_width": 6.0,
              "sphere_points": 16},
    "probe": {"term": "I1", "j": None, "summed": False, "ladder_start": 0.1, "ladder_points": 4, "t": 1.0},
    "converge": {"n": 1, "t": 1.0, "times": None, "eps": [0.1, 0.0316, 0.01], "x1": None, "v1": None},
    "bound-check": {"n": 1, "t": 1.0, "times": None, "s": [0.0, 1.0, 2.0, 4.0, 8.0],
                    "eps": [0.1, 0.0316, 0.01], "x1": None, "v1": None},
    "delta-check": {"headline_T": 1000.0, "ladder": [1.0, 2.0, 4.0, 8.0, 16.0],
                    "widths": [0.1, 0.05, 0.025, 0.0125], "w": None},
    "oracle-compare": {"eps": 0.1, "t": 1.0, "t1": 0.5, "x1": None, "v1": None},
}


@dataclass
class Budgets:
    samples: int = 100_000
    max_nodes: int = 400_000
    rule: Optional[str] = None

    def __post_init__(self):
        if self.samples <= 0:
            raise ConfigError(f"budgets.samples must be positive, got {self.samples}")
        if self.max_nodes <= 0:
            raise ConfigError(f"budgets.max_nodes must be positive, got {self.max_nodes}")
        if self.rule not in (None, "tensor", "mc"):
            raise ConfigError(f"Unsupported quadrature rule: {self.rule}. Supported: tensor, mc")


@dataclass
class Tolerances:
    sigmas: float = 3.0
    window: float = 0.2
    delta: float = 1e-3
    mollification: float = 1e-2
    oracle: float = 0.02

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ConfigError(f"tolerances.{name} must be positive, got {value}")


@dataclass
class Output:
    path: Optional[str] = None
    csv: Optional[str] = None


def _default_potential(dimension: int) -> Dict[str, Any]:
    return {"kind": "gaussian", "amplitude": 1.0, "width": 1.0, "dimension": dimension}


def _default_datum(dimension: int) -> Dict[str, Any]:
    # Off-centre so that parity does not cancel the odd diagnostic terms. Two velocity
    # spreads about one centre: not a local Maxwellian, so the collision operator is
    # nonzero, and concentric so the norms stay closed-form.
    shared = {"weight": 0.5, "x_center": 0.3, "v_center": 0.5, "x_width": 1.0}
    return {
        "dimension": dimension,
        "components": [dict(shared, v_width=0.5), dict(shared, v_width=1.5)],
    }


@dataclass
class RunConfig:
    dimension: int = 2
    potential: Dict[str, Any] = field(default_factory=dict)
    datum: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    budgets: Budgets = field(default_factory=Budgets)
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: Output = field(default_factory=Output)
    commands: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dimension}")
        self.potential = self._normalize_potential(self.potential or _default_potential(self.dimension))
        self.datum = self._normalize_datum(self.datum or _default_datum(self.dimension))
        merged = copy.deepcopy(DEFAULT_COMMANDS)
        for name, block in (self.commands or {}).items():
            if name not in DEFAULT_COMMANDS:
                raise ConfigError(f"Unsupported command: {name}. Supported: {', '.join(COMMANDS)}")
            unknown = set(block) - set(DEFAULT_COMMANDS[name])
            if unknown:
                raise ConfigError(f"Unknown options for {name}: {', '.join(sorted(unknown))}")
            merged[name].update(block)
        self.commands = merged

    def _normalize_potential(self, data: Dict[str, Any]) -> Dict[str, Any]:
        data = dict(data)
        data.setdefault("dimension", self.dimension)
        if int(data["dimension"]) != self.dimension:
            raise ConfigError(f"potential.dimension {data['dimension']} does not match dimension {self.dimension}")
        try:
            return PotentialSpec.from_dict(data).to_dict()
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"Invalid potential: {e}") from e

    def _normalize_datum(self, data: Dict[str, Any]) -> Dict[str, Any]:
        data = dict(data)
        data.setdefault("dimension", self.dimension)
        if int(data["dimension"]) != self.dimension:
            raise ConfigError(f"datum.dimension {data['dimension']} does not match dimension {self.dimension}")
        try:
            return InitialDatum.from_dict(data).to_dict()
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"Invalid datum: {e}") from e

    # Domain objects

    def potential_spec(self) -> PotentialSpec:
        return PotentialSpec.from_dict(self.potential)

    def initial_datum(self) -> InitialDatum:
        return InitialDatum.from_dict(self.datum)

    def cross_section(self) -> CrossSection:
        return CrossSection(self.potential_spec())

    def command(self, name: str) -> Dict[str, Any]:
        if name not in self.commands:
            raise ConfigError(f"Unsupported command: {name}. Supported: {', '.join(COMMANDS)}")
        return self.commands[name]

    # Serialization

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dimension": self.dimension,
            "potential": copy.deepcopy(self.potential),
            "datum": copy.deepcopy(self.datum),
            "seed": self.seed,
            "budgets": asdict(self.budgets),
            "tolerances": asdict(self.tolerances),
            "output": asdict(self.output),
            "commands": copy.deepcopy(self.commands),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("Config must be a JSON object")
        known = {"dimension", "potential", "datum", "seed", "budgets", "tolerances", "output", "commands"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown config sections: {', '.join(sorted(unknown))}")
        try:
            return cls(
                dimension=int(data.get("dimension", 2)),
                potential=data.get("potential") or {},
                datum=data.get("datum") or {},
                seed=int(data.get("seed", 0)),
                budgets=Budgets(**(data.get("budgets") or {})),
                tolerances=Tolerances(**(data.get("tolerances") or {})),
                output=Output(**(data.get("output") or {})),
                commands=data.get("commands") or {},
            )
        except TypeError as e:
            raise ConfigError(f"Invalid config: {e}") from e

    def with_overrides(self, seed: Optional[int] = None, dimension: Optional[int] = None,
                       command: Optional[str] = None, **options) -> "RunConfig":
        """Copy with CLI flags applied; a new dimension resets potential and datum dimensions."""
        data = self.to_dict()
        if seed is not None:
            data["seed"] = seed
        if dimension is not None and dimension != self.dimension:
            data["dimension"] = dimension
            data["potential"] = {k: v for k, v in data["potential"].items() if k != "dimension"}
            data["datum"] = _resize_datum(data["datum"], dimension)
        if command is not None:
            block = data["commands"].setdefault(command, {})
            block.update({k: v for k, v in options.items() if v is not None})
        return RunConfig.from_dict(data)


def _resize_datum(datum: Dict[str, Any], dimension: int) -> Dict[str, Any]:
    """Keep the first coordinate of every vector and broadcast it to the new dimension."""
    components = []
    for comp in datum.get("components", []):
        components.append({key: (value[0] if isinstance(value, list) else value)
                           for key, value in comp.items()})
    return {"dimension": dimension, "components": components}


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
    logger.debug("Loaded config from %s", path)
    return RunConfig.from_dict(data)
