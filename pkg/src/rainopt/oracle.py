"""Unbiased stochastic oracle for gradient operators, with exact call counts.

Noise is isotropic Gaussian: each of the d coordinates is drawn with
standard deviation sigma / sqrt(d), so the total noise energy satisfies
E ||noise||^2 = sigma^2 exactly.  For anchored problems the regularization
terms are known to the algorithm and enter the returned value exactly, so
the variance bound is independent of how many anchors have been pushed.

Streams are counter-based (Philox) and keyed by the pair
(master_seed, replication_id): distinct pairs select distinct keys, and
distinct keys index disjoint counter sequences, so replication streams
never overlap.  The same generator object backs both the one-call-at-a-time
evaluation path and the fused solver kernels; both consume the stream in
the same order, value for value.
"""

from __future__ import annotations

import math

import numpy as np

from .problems import Point, op_eval

__all__ = [
    "NoiseModel",
    "StochasticOracle",
    "oracle_eval",
    "split_stream",
    "sfo_count",
    "STREAM_ALGORITHM",
]

# Recorded in experiment metadata so output files are auditable.
STREAM_ALGORITHM = f"philox4x64-10/numpy-{np.__version__}"

_MASK64 = (1 << 64) - 1


class NoiseModel:
    """Total noise energy sigma^2, split evenly across coordinates."""

    KINDS = ("gaussian-isotropic",)

    def __init__(self, sigma: float, kind: str = "gaussian-isotropic"):
        sigma = float(sigma)
        if not (sigma >= 0.0 and math.isfinite(sigma)):
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        if kind not in self.KINDS:
            raise ValueError(f"unknown noise kind {kind!r}")
        self.sigma = sigma
        self.kind = kind

    def scale(self, dim: int) -> float:
        """Per-coordinate standard deviation for a dim-dimensional draw."""
        return self.sigma / math.sqrt(dim)

    def __repr__(self):
        return f"NoiseModel(sigma={self.sigma!r}, kind={self.kind!r})"


class StochasticOracle:
    """Noisy operator evaluator; `calls` counts every evaluation exactly once."""

    def __init__(self, noise: NoiseModel, stream: np.random.Generator):
        if not isinstance(noise, NoiseModel):
            noise = NoiseModel(noise)
        self.noise = noise
        self.stream = stream
        self.calls = 0

    def eval(self, problem, z: Point) -> np.ndarray:
        v = op_eval(problem, z)
        self.calls += 1
        if self.noise.sigma > 0.0:
            v = v + self.noise.scale(v.shape[0]) * self.stream.standard_normal(v.shape[0])
        return v

    def noise_block(self, n: int, dim: int) -> np.ndarray:
        """Noise for n future evaluations at once; counts n calls.

        Row i equals the noise the one-call path would have produced on the
        i-th evaluation, bit for bit, because the generator fills arrays in
        the same order it serves scalar draws.
        """
        self.calls += int(n)
        if self.noise.sigma == 0.0:
            return np.zeros((n, dim))
        return self.noise.scale(dim) * self.stream.standard_normal((n, dim))


def split_stream(master_seed: int, replication_id: int) -> np.random.Generator:
    """Independent counter-based stream for one replication.

    Deterministic in both arguments; streams for different ids use different
    Philox keys and therefore never share a draw.
    """
    key = np.array(
        [int(master_seed) & _MASK64, int(replication_id) & _MASK64], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))


def oracle_eval(oracle: StochasticOracle, problem, z: Point) -> np.ndarray:
    """One noisy operator evaluation; increments the call counter by 1."""
    return oracle.eval(problem, z)


def sfo_count(oracle: StochasticOracle) -> int:
    """Number of stochastic evaluations performed so far."""
    return oracle.calls
