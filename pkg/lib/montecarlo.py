"""
Seeded, batched Monte Carlo estimation.

Work is split into fixed-size batches; batch i always draws from
default_rng(SeedSequence(seed, spawn_key=(i,))) and batches merge in index
order, so the worker count changes wall time only.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_BATCH = 4096


def worker_count(default: int = 1) -> int:
    """Worker threads from QKINETIC_THREADS (falls back to `default`)."""
    raw = os.environ.get("QKINETIC_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("Ignoring non-integer QKINETIC_THREADS=%r", raw)
        return default


def batch_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


@dataclass
class Estimate:
    """A numerical value with its error estimate."""
    value: complex
    stderr: float
    samples: int = 0
    method: str = "exact"

    @property
    def real(self) -> float:
        return float(np.real(self.value))

    @property
    def imag(self) -> float:
        return float(np.imag(self.value))

    def __add__(self, other: "Estimate") -> "Estimate":
        return Estimate(
            value=self.value + other.value,
            stderr=float(np.hypot(self.stderr, other.stderr)),
            samples=self.samples + other.samples,
            method=self.method if self.method == other.method else "mixed",
        )

    def scaled(self, factor: float) -> "Estimate":
        return Estimate(self.value * factor, abs(factor) * self.stderr, self.samples, self.method)

    def to_dict(self):
        value = complex(self.value)
        data = {"value": value.real, "stderr": self.stderr, "samples": self.samples, "method": self.method}
        if value.imag != 0.0:
            data["imag"] = value.imag
        return data

    @classmethod
    def exact(cls, value) -> "Estimate":
        return cls(value=value, stderr=0.0, samples=0, method="exact")


@dataclass
class Accumulator:
    """Running sums for the mean and standard error of complex samples."""
    count: int = 0
    total: complex = 0.0j
    sq_real: float = 0.0
    sq_imag: float = 0.0

    def add(self, values: np.ndarray):
        values = np.asarray(values, dtype=complex)
        self.count += values.size
        self.total += values.sum()
        self.sq_real += float(np.sum(values.real ** 2))
        self.sq_imag += float(np.sum(values.imag ** 2))

    def merge(self, other: "Accumulator"):
        self.count += other.count
        self.total += other.total
        self.sq_real += other.sq_real
        self.sq_imag += other.sq_imag

    def estimate(self, method: str = "mc") -> Estimate:
        if self.count == 0:
            return Estimate(0.0, float("inf"), 0, method)
        mean = self.total / self.count
        if self.count < 2:
            return Estimate(mean, float("inf"), self.count, method)
        var_r = max(self.sq_real / self.count - mean.real ** 2, 0.0)
        var_i = max(self.sq_imag / self.count - mean.imag ** 2, 0.0)
        stderr = float(np.sqrt((var_r + var_i) / (self.count - 1)))
        return Estimate(mean, stderr, self.count, method)


SampleFn = Callable[[np.random.Generator, int], np.ndarray]


def run_batches(
    sample_fn: SampleFn,
    samples: int,
    seed: int,
    batch_size: int = DEFAULT_BATCH,
    workers: Optional[int] = None,
) -> Estimate:
    """
    Mean of `sample_fn(rng, count)` over `samples` draws.

    sample_fn returns per-draw estimator values (integrand already divided by
    the proposal density).
    """
    if samples <= 0:
        raise ValueError(f"Monte Carlo budget must be positive, got {samples}")
    sizes = [batch_size] * (samples // batch_size)
    if samples % batch_size:
        sizes.append(samples % batch_size)
    workers = workers or worker_count()

    def one(index: int) -> Accumulator:
        acc = Accumulator()
        acc.add(sample_fn(batch_rng(seed, index), sizes[index]))
        return acc

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    else:
        parts = [one(i) for i in range(len(sizes))]

    merged = Accumulator()
    for part in parts:
        merged.merge(part)
    logger.debug("MC: %d samples in %d batches on %d workers", samples, len(sizes), workers)
    return merged.estimate("mc")
