"""
Graphs, collision histories and backward trajectories.

Particles are tracked backwards from the final time t down to 0. Particle 1
(index 0) is the root; particle j+1 (index j) is created at collision time tⱼ
and from then on moves freely except for velocity kicks at the nodes. All
three trajectory systems (ε, limiting and classical) are node lists handed to
one batched sweep.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

Delta = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


# ---------------------------------------------------------------------------
# Graphs and time ladders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Graph:
    """Collision partners ℓ₁…ℓₙ with 1 ≤ ℓⱼ ≤ j."""
    labels: Tuple[int, ...] = ()

    def __post_init__(self):
        labels = tuple(int(x) for x in self.labels)
        for j, label in enumerate(labels, start=1):
            if not 1 <= label <= j:
                raise ValueError(f"Graph label ℓ_{j}={label} outside 1..{j}")
        object.__setattr__(self, "labels", labels)

    @property
    def order(self) -> int:
        return len(self.labels)

    @property
    def particles(self) -> int:
        return self.order + 1

    def pairs(self) -> List[Tuple[int, int]]:
        """0-based (ancestor, newborn) index pairs per collision."""
        return [(label - 1, j) for j, label in enumerate(self.labels, start=1)]

    def root_coupled(self) -> np.ndarray:
        """Indicator [ℓⱼ = 1] per collision."""
        return np.array([label == 1 for label in self.labels], dtype=float)

    def to_dict(self) -> List[int]:
        return list(self.labels)


def enumerate_graphs(n: int) -> Iterator[Graph]:
    for labels in itertools.product(*[range(1, j + 1) for j in range(1, n + 1)]):
        yield Graph(labels)


def graph_count(n: int) -> int:
    return math.factorial(n)


def random_graph(rng: np.random.Generator, n: int) -> Graph:
    return Graph(tuple(int(rng.integers(1, j + 1)) for j in range(1, n + 1)))


@dataclass(frozen=True)
class TimeLadder:
    """Final time t and collision times t > t₁ > … > tₙ > 0."""
    t: float
    times: Tuple[float, ...] = ()

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"Final time must be positive, got {self.t}")
        times = tuple(float(x) for x in self.times)
        chain = (float(self.t),) + times + (0.0,)
        for a, b in zip(chain, chain[1:]):
            if not a > b:
                raise ValueError(f"Time ladder must be strictly decreasing in (0, t): {chain}")
        object.__setattr__(self, "times", times)

    @property
    def order(self) -> int:
        return len(self.times)

    def as_array(self) -> np.ndarray:
        return np.array(self.times, dtype=float)

    def bounds(self) -> np.ndarray:
        """(t₀ = t, t₁, …, tₙ, t_{n+1} = 0)."""
        return np.array((self.t,) + self.times + (0.0,))


def sample_time_ladder(rng: np.random.Generator, n: int, t: float) -> TimeLadder:
    """Uniform point of the time simplex; ties are redrawn."""
    while True:
        times = np.sort(rng.random(n) * t)[::-1]
        chain = np.concatenate([[t], times, [0.0]])
        if np.all(np.diff(chain) < 0):
            return TimeLadder(t, tuple(times))


def _check_signs(values: Sequence[float], name: str, n: int) -> Tuple[int, ...]:
    signs = tuple(int(s) for s in values)
    if len(signs) != n:
        raise ValueError(f"{name} has length {len(signs)}, expected {n}")
    if any(s not in (-1, 1) for s in signs):
        raise ValueError(f"{name} must be ±1, got {signs}")
    return signs


def _check_block(values, n: int, d: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(n, d) if n else np.zeros((0, d))
    if arr.shape != (n, d):
        raise ValueError(f"{name} has shape {arr.shape}, expected {(n, d)}")
    return arr


# ---------------------------------------------------------------------------
# Histories
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClassicalHistory:
    graph: Graph
    ladder: TimeLadder
    sigmas: Tuple[int, ...]
    omegas: np.ndarray
    x1: np.ndarray
    v1: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        n = self.graph.order
        if self.ladder.order != n:
            raise ValueError(f"Ladder has {self.ladder.order} times for a graph of order {n}")
        x1 = np.asarray(self.x1, dtype=float)
        d = x1.shape[-1]
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "v1", np.asarray(self.v1, dtype=float))
        object.__setattr__(self, "sigmas", _check_signs(self.sigmas, "sigmas", n))
        omegas = _check_block(self.omegas, n, d, "omegas")
        if n and not np.allclose(np.linalg.norm(omegas, axis=-1), 1.0, atol=1e-12):
            raise ValueError("Impact directions must be unit vectors")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "velocities", _check_block(self.velocities, n, d, "velocities"))

    @property
    def dimension(self) -> int:
        return self.x1.shape[-1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "graph": self.graph.to_dict(),
            "t": self.ladder.t,
            "times": list(self.ladder.times),
            "sigmas": list(self.sigmas),
            "omegas": self.omegas.tolist(),
            "x1": self.x1.tolist(),
            "v1": self.v1.tolist(),
            "velocities": self.velocities.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ClassicalHistory":
        return cls(
            graph=Graph(tuple(data["graph"])),
            ladder=TimeLadder(data["t"], tuple(data["times"])),
            sigmas=tuple(data["sigmas"]),
            omegas=np.array(data["omegas"], dtype=float),
            x1=np.array(data["x1"], dtype=float),
            v1=np.array(data["v1"], dtype=float),
            velocities=np.array(data["velocities"], dtype=float),
        )


@dataclass(frozen=True, eq=False)
class EpsHistory:
    """
    History of the ε hierarchy in rescaled variables.

    τⱼ = tⱼ − ε·sⱼ must stay in (t_{j+1}, tⱼ]; hⱼ = −kⱼ + ε·ξⱼ.
    """
    graph: Graph
    ladder: TimeLadder
    gaps: Tuple[float, ...]
    sigmas: Tuple[int, ...]
    sigmas_prime: Tuple[int, ...]
    ks: np.ndarray
    xis: np.ndarray
    eps: float
    x1: np.ndarray
    v1: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        n = self.graph.order
        if self.ladder.order != n:
            raise ValueError(f"Ladder has {self.ladder.order} times for a graph of order {n}")
        if self.eps < 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")
        x1 = np.asarray(self.x1, dtype=float)
        d = x1.shape[-1]
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "v1", np.asarray(self.v1, dtype=float))
        gaps = tuple(float(s) for s in self.gaps)
        if len(gaps) != n or any(s < 0 for s in gaps):
            raise ValueError(f"gaps must be {n} non-negative values, got {gaps}")
        object.__setattr__(self, "gaps", gaps)
        object.__setattr__(self, "sigmas", _check_signs(self.sigmas, "sigmas", n))
        object.__setattr__(self, "sigmas_prime", _check_signs(self.sigmas_prime, "sigmas_prime", n))
        for name in ("ks", "xis", "positions", "velocities"):
            object.__setattr__(self, name, _check_block(getattr(self, name), n, d, name))
        lower = self.ladder.bounds()[2:]
        taus = self.taus
        if np.any(taus <= lower):
            raise ValueError(f"τ = t - ε s leaves its interval: τ={taus.tolist()}, lower={lower.tolist()}")

    @property
    def dimension(self) -> int:
        return self.x1.shape[-1]

    @property
    def taus(self) -> np.ndarray:
        return self.ladder.as_array() - self.eps * np.array(self.gaps)

    @property
    def hs(self) -> np.ndarray:
        return -self.ks + self.eps * self.xis

    def with_eps(self, eps: float) -> "EpsHistory":
        return EpsHistory(self.graph, self.ladder, self.gaps, self.sigmas, self.sigmas_prime,
                          self.ks, self.xis, eps, self.x1, self.v1, self.positions, self.velocities)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "graph": self.graph.to_dict(),
            "t": self.ladder.t,
            "times": list(self.ladder.times),
            "gaps": list(self.gaps),
            "sigmas": list(self.sigmas),
            "sigmas_prime": list(self.sigmas_prime),
            "ks": self.ks.tolist(),
            "xis": self.xis.tolist(),
            "eps": self.eps,
            "x1": self.x1.tolist(),
            "v1": self.v1.tolist(),
            "positions": self.positions.tolist(),
            "velocities": self.velocities.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EpsHistory":
        return cls(
            graph=Graph(tuple(data["graph"])),
            ladder=TimeLadder(data["t"], tuple(data["times"])),
            gaps=tuple(data["gaps"]),
            sigmas=tuple(data["sigmas"]),
            sigmas_prime=tuple(data["sigmas_prime"]),
            ks=np.array(data["ks"], dtype=float),
            xis=np.array(data["xis"], dtype=float),
            eps=float(data["eps"]),
            x1=np.array(data["x1"], dtype=float),
            v1=np.array(data["v1"], dtype=float),
            positions=np.array(data["positions"], dtype=float),
            velocities=np.array(data["velocities"], dtype=float),
        )


def _random_signs(rng: np.random.Generator, n: int) -> Tuple[int, ...]:
    return tuple(int(s) for s in rng.choice([-1, 1], size=n))


def random_classical_history(rng: np.random.Generator, n: int, d: int, t: float = 1.0,
                             graph: Optional[Graph] = None) -> ClassicalHistory:
    omegas = rng.standard_normal((n, d))
    omegas /= np.linalg.norm(omegas, axis=-1, keepdims=True)
    return ClassicalHistory(
        graph=graph or random_graph(rng, n),
        ladder=sample_time_ladder(rng, n, t),
        sigmas=_random_signs(rng, n),
        omegas=omegas,
        x1=rng.standard_normal(d),
        v1=rng.standard_normal(d),
        velocities=rng.standard_normal((n, d)),
    )


def random_eps_history(rng: np.random.Generator, n: int, d: int, eps: float, t: float = 1.0,
                       graph: Optional[Graph] = None) -> EpsHistory:
    ladder = sample_time_ladder(rng, n, t)
    bounds = ladder.bounds()
    room = (bounds[1:-1] - bounds[2:]) / eps if eps > 0 else np.ones(n)
    gaps = tuple(rng.random(n) * room * 0.999)
    return EpsHistory(
        graph=graph or random_graph(rng, n),
        ladder=ladder,
        gaps=gaps,
        sigmas=_random_signs(rng, n),
        sigmas_prime=_random_signs(rng, n),
        ks=rng.standard_normal((n, d)),
        xis=rng.standard_normal((n, d)),
        eps=eps,
        x1=rng.standard_normal(d),
        v1=rng.standard_normal(d),
        positions=rng.standard_normal((n, d)),
        velocities=rng.standard_normal((n, d)),
    )


# ---------------------------------------------------------------------------
# Batched backward sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepNode:
    """
    One node of a backward sweep, applied at `time` (shape (B,)).

    A node may create a particle (at `birth_position`, or at the ancestor's
    current position when that is None) and/or kick a pair: `delta` is added
    to particle b and subtracted from particle a.
    """
    time: np.ndarray
    born: Optional[int] = None
    birth_velocity: Optional[np.ndarray] = None
    birth_position: Optional[np.ndarray] = None
    ancestor: Optional[int] = None
    pair: Optional[Tuple[int, int]] = None
    delta: Optional[Delta] = None


@dataclass(frozen=True)
class Trajectory:
    """
    Piecewise-linear backward path of one particle.

    kicks holds (time, velocity below the node) in decreasing time; velocities
    are right-continuous, so at a node the velocity above it is returned.
    """
    birth_time: float
    birth_position: np.ndarray
    birth_velocity: np.ndarray
    kicks: Tuple[Tuple[float, np.ndarray], ...] = ()

    def velocity_at(self, s: float) -> np.ndarray:
        if s > self.birth_time:
            raise ValueError(f"Particle does not exist at s={s} (born at {self.birth_time})")
        v = self.birth_velocity
        for time, below in self.kicks:
            if s < time:
                v = below
            else:
                break
        return v

    def position_at(self, s: float) -> np.ndarray:
        if s > self.birth_time:
            raise ValueError(f"Particle does not exist at s={s} (born at {self.birth_time})")
        y = self.birth_position
        current = self.birth_time
        v = self.birth_velocity
        for time, below in self.kicks:
            if time <= s:
                break
            y = y - v * (current - time)
            current = time
            v = below
        return y - v * (current - s)


@dataclass
class Sweep:
    """
    Batched sweep output. Node records have shape (B, nodes, particles, d);
    particles not yet created at a node hold NaN.
    """
    t: float
    node_times: np.ndarray
    node_positions: np.ndarray
    velocities_above: np.ndarray
    velocities_below: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    root_position: np.ndarray
    root_velocity: np.ndarray
    births: Dict[int, int] = field(default_factory=dict)
    pairs: List[Optional[Tuple[int, int]]] = field(default_factory=list)

    def trajectory(self, particle: int, index: int = 0) -> Trajectory:
        if particle == 0:
            start = (self.t, self.root_position[index], self.root_velocity[index])
        else:
            node = self.births[particle]
            start = (float(self.node_times[index, node]),
                     self.node_positions[index, node, particle],
                     self.velocities_above[index, node, particle])
        kicks = tuple(
            (float(self.node_times[index, k]), self.velocities_below[index, k, particle].copy())
            for k, pair in enumerate(self.pairs)
            if pair is not None and particle in pair
        )
        return Trajectory(start[0], start[1].copy(), start[2].copy(), kicks)


def sweep(t: float, root_position, root_velocity, nodes: Sequence[SweepNode],
          particles: int) -> Sweep:
    """Propagate all particles backwards through the nodes down to time 0."""
    x1 = np.atleast_2d(np.asarray(root_position, dtype=float))
    v1 = np.atleast_2d(np.asarray(root_velocity, dtype=float))
    batch, d = x1.shape
    pos = np.full((batch, particles, d), np.nan)
    vel = np.full((batch, particles, d), np.nan)
    pos[:, 0] = x1
    vel[:, 0] = v1
    alive = np.zeros(particles, dtype=bool)
    alive[0] = True
    current = np.full(batch, float(t))

    count = len(nodes)
    node_times = np.empty((batch, count))
    node_pos = np.empty((batch, count, particles, d))
    above = np.empty((batch, count, particles, d))
    below = np.empty((batch, count, particles, d))
    births: Dict[int, int] = {}
    pairs: List[Optional[Tuple[int, int]]] = []

    for k, node in enumerate(nodes):
        time = np.broadcast_to(np.asarray(node.time, dtype=float), (batch,))
        pos[:, alive] -= vel[:, alive] * (current - time)[:, None, None]
        current = time.copy()
        if node.born is not None:
            p = node.born
            if node.birth_position is None:
                pos[:, p] = pos[:, node.ancestor]
            else:
                pos[:, p] = node.birth_position
            vel[:, p] = node.birth_velocity
            alive[p] = True
            births[p] = k
        node_times[:, k] = time
        node_pos[:, k] = pos
        above[:, k] = vel
        if node.pair is not None:
            a, b = node.pair
            delta = node.delta(vel[:, a], vel[:, b]) if callable(node.delta) else node.delta
            vel[:, b] = vel[:, b] + delta
            vel[:, a] = vel[:, a] - delta
        below[:, k] = vel
        pairs.append(node.pair)

    pos[:, alive] -= vel[:, alive] * current[:, None, None]
    return Sweep(float(t), node_times, node_pos, above, below, pos, vel, x1, v1, births, pairs)


# ---------------------------------------------------------------------------
# Node builders (batched: leading axis B on every per-collision array)
# ---------------------------------------------------------------------------

def _signs(values, batch: int, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(values, dtype=float), (batch, n))


def eps_nodes(graph: Graph, times, gaps, sigmas, sigmas_prime, ks, xis, eps: float,
              positions, velocities) -> List[SweepNode]:
    """ε system: birth plus σⱼhⱼ/2 at tⱼ, then σ′ⱼkⱼ/2 at τⱼ = tⱼ − εsⱼ."""
    times = np.atleast_2d(times)
    batch, n = times.shape
    if n == 0:
        return []
    sig = _signs(sigmas, batch, n)
    sig_p = _signs(sigmas_prime, batch, n)
    gaps = np.broadcast_to(gaps, (batch, n))
    ks = np.asarray(ks, dtype=float).reshape(batch, n, -1)
    hs = -ks + eps * np.asarray(xis, dtype=float).reshape(batch, n, -1)
    positions = np.asarray(positions, dtype=float).reshape(batch, n, -1)
    velocities = np.asarray(velocities, dtype=float).reshape(batch, n, -1)
    nodes = []
    for j, (a, b) in enumerate(graph.pairs()):
        nodes.append(SweepNode(
            time=times[:, j], born=b,
            birth_position=positions[:, j], birth_velocity=velocities[:, j],
            pair=(a, b), delta=0.5 * sig[:, j, None] * hs[:, j],
        ))
        nodes.append(SweepNode(
            time=times[:, j] - eps * gaps[:, j],
            pair=(a, b), delta=0.5 * sig_p[:, j, None] * ks[:, j],
        ))
    return nodes


def bar_nodes(graph: Graph, times, sigmas, sigmas_prime, ks, positions, velocities) -> List[SweepNode]:
    """ε = 0 system: one kick (σ′ⱼ − σⱼ)/2 · kⱼ at tⱼ."""
    times = np.atleast_2d(times)
    batch, n = times.shape
    if n == 0:
        return []
    factor = 0.5 * (_signs(sigmas_prime, batch, n) - _signs(sigmas, batch, n))
    ks = np.asarray(ks, dtype=float).reshape(batch, n, -1)
    return _single_kick_nodes(graph, times, factor[..., None] * ks, positions, velocities)


def folded_nodes(graph: Graph, times, sigma_bar, etas, positions, velocities) -> List[SweepNode]:
    """Folded form of the ε = 0 system: kick (1 + σ̄ⱼ)/2 · ηⱼ at tⱼ."""
    times = np.atleast_2d(times)
    batch, n = times.shape
    if n == 0:
        return []
    factor = 0.5 * (1.0 + _signs(sigma_bar, batch, n))
    etas = np.asarray(etas, dtype=float).reshape(batch, n, -1)
    return _single_kick_nodes(graph, times, factor[..., None] * etas, positions, velocities)


def _single_kick_nodes(graph, times, deltas, positions, velocities) -> List[SweepNode]:
    batch, n = times.shape
    positions = np.asarray(positions, dtype=float).reshape(batch, n, -1)
    velocities = np.asarray(velocities, dtype=float).reshape(batch, n, -1)
    return [
        SweepNode(time=times[:, j], born=b, birth_position=positions[:, j],
                  birth_velocity=velocities[:, j], pair=(a, b), delta=deltas[:, j])
        for j, (a, b) in enumerate(graph.pairs())
    ]


def classical_nodes(graph: Graph, times, sigmas, omegas, velocities) -> List[SweepNode]:
    """
    Classical system: particle j+1 is born on its ancestor with velocity v_{j+1};
    σⱼ = +1 applies the elastic exchange along ωⱼ, σⱼ = −1 leaves velocities alone.
    """
    times = np.atleast_2d(times)
    batch, n = times.shape
    if n == 0:
        return []
    sig = _signs(sigmas, batch, n)
    omegas = np.asarray(omegas, dtype=float).reshape(batch, n, -1)
    velocities = np.asarray(velocities, dtype=float).reshape(batch, n, -1)

    def exchange(j: int) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        def delta(u_a: np.ndarray, u_b: np.ndarray) -> np.ndarray:
            w = omegas[:, j]
            proj = np.sum(w * (u_a - u_b), axis=-1, keepdims=True)
            return 0.5 * (1.0 + sig[:, j, None]) * proj * w
        return delta

    return [
        SweepNode(time=times[:, j], born=b, ancestor=a, birth_velocity=velocities[:, j],
                  pair=(a, b), delta=exchange(j))
        for j, (a, b) in enumerate(graph.pairs())
    ]


def fold_signs(sigmas, sigmas_prime, ks) -> Tuple[np.ndarray, np.ndarray]:
    """(σ, σ′, k) → (σ̄, η) with ηⱼ = −σⱼkⱼ and σ′ⱼ = −σⱼσ̄ⱼ."""
    sig = np.asarray(sigmas, dtype=float)
    sig_p = np.asarray(sigmas_prime, dtype=float)
    sigma_bar = -sig_p * sig
    etas = -sig[..., None] * np.asarray(ks, dtype=float)
    return sigma_bar, etas


# ---------------------------------------------------------------------------
# Scalar trajectory APIs
# ---------------------------------------------------------------------------

@dataclass
class Trajectories:
    """Endpoint states at time 0 for particles 1…n+1 and their full paths."""
    positions: np.ndarray
    velocities: np.ndarray
    paths: Tuple[Trajectory, ...]

    def position_at(self, particle: int, s: float) -> np.ndarray:
        return self.paths[particle].position_at(s)

    def velocity_at(self, particle: int, s: float) -> np.ndarray:
        return self.paths[particle].velocity_at(s)


def _scalar(result: Sweep, particles: int) -> Trajectories:
    paths = tuple(result.trajectory(p) for p in range(particles))
    return Trajectories(result.positions[0], result.velocities[0], paths)


def classical_trajectories(h: ClassicalHistory) -> Trajectories:
    nodes = classical_nodes(h.graph, h.ladder.as_array()[None], np.array(h.sigmas)[None],
                            h.omegas[None], h.velocities[None])
    return _scalar(sweep(h.ladder.t, h.x1, h.v1, nodes, h.graph.particles), h.graph.particles)


def eps_sweep(h: EpsHistory) -> Sweep:
    nodes = eps_nodes(h.graph, h.ladder.as_array()[None], np.array(h.gaps)[None],
                      np.array(h.sigmas)[None], np.array(h.sigmas_prime)[None],
                      h.ks[None], h.xis[None], h.eps, h.positions[None], h.velocities[None])
    return sweep(h.ladder.t, h.x1, h.v1, nodes, h.graph.particles)


def eps_trajectories(h: EpsHistory) -> Trajectories:
    return _scalar(eps_sweep(h), h.graph.particles)


def bar_trajectories(h: EpsHistory) -> Trajectories:
    """Limiting (ε = 0) trajectories of an ε history; h.eps is ignored."""
    nodes = bar_nodes(h.graph, h.ladder.as_array()[None], np.array(h.sigmas)[None],
                      np.array(h.sigmas_prime)[None], h.ks[None], h.positions[None],
                      h.velocities[None])
    return _scalar(sweep(h.ladder.t, h.x1, h.v1, nodes, h.graph.particles), h.graph.particles)


def bar_trajectories_folded(h: EpsHistory) -> Trajectories:
    sigma_bar, etas = fold_signs(h.sigmas, h.sigmas_prime, h.ks)
    nodes = folded_nodes(h.graph, h.ladder.as_array()[None], sigma_bar[None], etas[None],
                         h.positions[None], h.velocities[None])
    return _scalar(sweep(h.ladder.t, h.x1, h.v1, nodes, h.graph.particles), h.graph.particles)


# ---------------------------------------------------------------------------
# Interaction matrix and phases
# ---------------------------------------------------------------------------

def interaction_matrix(g: Graph) -> np.ndarray:
    """A_{r,s} = −δ_{r,s} + δ_{ℓ_r, s+1} (1-based r, s)."""
    n = g.order
    a = -np.eye(n, dtype=int)
    for r, label in enumerate(g.labels):
        if label >= 2:
            a[r, label - 2] += 1
    return a


@dataclass
class PhaseTerms:
    """γ¹ⱼ, γ²ⱼ with shape (B, n, d)."""
    gamma1: np.ndarray
    gamma2: np.ndarray


def separations(result: Sweep, graph: Graph) -> Tuple[np.ndarray, np.ndarray]:
    """
    D(tⱼ) and D(τⱼ), shape (B, n, d), where D is the position of ℓⱼ minus the
    position of j+1. Expects the node layout of eps_nodes.
    """
    batch, _, _, d = result.node_positions.shape
    n = graph.order
    sep_t = np.empty((batch, n, d))
    sep_tau = np.empty((batch, n, d))
    for j, (a, b) in enumerate(graph.pairs()):
        sep_t[:, j] = result.node_positions[:, 2 * j, a] - result.node_positions[:, 2 * j, b]
        sep_tau[:, j] = result.node_positions[:, 2 * j + 1, a] - result.node_positions[:, 2 * j + 1, b]
    return sep_t, sep_tau


def phase_terms(result: Sweep, graph: Graph, times, gaps, eps: float) -> PhaseTerms:
    """
    Non-free parts of the pair separations at tⱼ and across [τⱼ, tⱼ]:

        D(tⱼ) = y_a − y_b + (u_a − u_b)tⱼ + γ¹ⱼ
        D(tⱼ) − D(τⱼ) = εsⱼ(u_a − u_b) + γ²ⱼ

    with (y, u) the endpoints at time 0.
    """
    times = np.atleast_2d(times)
    gaps = np.broadcast_to(gaps, times.shape)
    sep_t, sep_tau = separations(result, graph)
    g1 = np.empty_like(sep_t)
    g2 = np.empty_like(sep_t)
    y, u = result.positions, result.velocities
    for j, (a, b) in enumerate(graph.pairs()):
        du = u[:, a] - u[:, b]
        g1[:, j] = sep_t[:, j] - (y[:, a] - y[:, b] + du * times[:, j, None])
        g2[:, j] = sep_t[:, j] - sep_tau[:, j] - eps * gaps[:, j, None] * du
    return PhaseTerms(g1, g2)


def assemble(graph: Graph, terms: PhaseTerms, times, gaps, ks, xis, eps: float,
             y1, u1) -> Tuple[np.ndarray, np.ndarray]:
    """Batched (Γ, Γ̃); y1, u1 are the root endpoints."""
    times = np.atleast_2d(times)
    gaps = np.broadcast_to(gaps, times.shape)
    ks = np.asarray(ks, dtype=float).reshape(terms.gamma1.shape)
    xis = np.asarray(xis, dtype=float).reshape(terms.gamma1.shape)
    gamma = np.sum(terms.gamma1 * xis - terms.gamma2 * ks / eps, axis=(-2, -1))
    root = graph.root_coupled()
    y1 = np.atleast_2d(y1)[:, None, :]
    u1 = np.atleast_2d(u1)[:, None, :]
    extra = np.sum(xis * (y1 + times[..., None] * u1), axis=-1) - gaps * np.sum(ks * u1, axis=-1)
    return gamma, gamma + np.sum(root * extra, axis=-1)


def trajectory_phase(result: Sweep, graph: Graph, ks, xis, eps: float) -> np.ndarray:
    """Batched Σⱼ ξⱼ·D(tⱼ) − (kⱼ/ε)·(D(tⱼ) − D(τⱼ))."""
    sep_t, sep_tau = separations(result, graph)
    ks = np.asarray(ks, dtype=float).reshape(sep_t.shape)
    xis = np.asarray(xis, dtype=float).reshape(sep_t.shape)
    return np.sum(xis * sep_t - ks * (sep_t - sep_tau) / eps, axis=(-2, -1))


def phase_decomposition(h: EpsHistory) -> PhaseTerms:
    if h.eps <= 0:
        raise ValueError("phase_decomposition needs eps > 0")
    terms = phase_terms(eps_sweep(h), h.graph, h.ladder.as_array()[None], np.array(h.gaps)[None], h.eps)
    return PhaseTerms(terms.gamma1[0], terms.gamma2[0])


def assemble_phase(h: EpsHistory) -> Tuple[float, float]:
    """(Γ, Γ̃) of a single ε history."""
    if h.eps <= 0:
        raise ValueError("assemble_phase needs eps > 0")
    result = eps_sweep(h)
    times = h.ladder.as_array()[None]
    gaps = np.array(h.gaps)[None]
    terms = phase_terms(result, h.graph, times, gaps, h.eps)
    gamma, gamma_tilde = assemble(h.graph, terms, times, gaps, h.ks[None], h.xis[None], h.eps,
                                  result.positions[:, 0], result.velocities[:, 0])
    return float(gamma[0]), float(gamma_tilde[0])


def direct_phase(h: EpsHistory) -> float:
    """The exponent straight from the ε trajectories, without any decomposition."""
    if h.eps <= 0:
        raise ValueError("direct_phase needs eps > 0")
    return float(trajectory_phase(eps_sweep(h), h.graph, h.ks[None], h.xis[None], h.eps)[0])


def coupling_phase(h: EpsHistory) -> Tuple[float, float]:
    """
    The endpoint-dependent part of the direct phase, (Ξ, AY) + (TΞ − SK, AU),
    with Y, U the endpoints of particles 2…n+1; returns (value, magnitude scale).
    """
    result = eps_trajectories(h)
    a = interaction_matrix(h.graph)
    y = result.positions[1:]
    u = result.velocities[1:]
    times = h.ladder.as_array()[:, None]
    gaps = np.array(h.gaps)[:, None]
    mixed = times * h.xis - gaps * h.ks
    value = np.sum(h.xis * (a @ y)) + np.sum(mixed * (a @ u))
    scale = np.sum(np.abs(h.xis) * (np.abs(a) @ np.abs(y))) + np.sum(np.abs(mixed) * (np.abs(a) @ np.abs(u)))
    return float(value), float(scale)
