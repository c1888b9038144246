"""Randomized quasi-Monte Carlo point streams.

The sampling pipeline runs in four stages: raw Sobol integers, an
affine digit scramble with a digital shift per dimension, Latin
supercube assembly of high-dimensional points from moderate-dimensional
blocks, and the inverse normal map. Every stage is deterministic given
the master seed; replication substreams are derived by counter-based
key splitting so any replication can be regenerated in isolation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc as _scipy_qmc

BITS = 32
MAX_DIMENSION = 21201
UNIT_LOW = 2.0 ** -53
UNIT_HIGH = 1.0 - 2.0 ** -53
MODES = ("scrambled_sobol", "pseudo_random")

_SCALE = 2.0 ** BITS
_ONE = np.uint64(1)

# substream purposes; part of the reproducibility contract
_TAG_PSEUDO = 0
_TAG_SCRAMBLE = 1
_TAG_ORDER = 2


class DimensionError(ValueError):
    """Requested dimension is outside the supported Sobol table."""


@dataclass(frozen=True)
class QmcConfig:
    """Sampling plan for one estimation run.

    nominal_dimension is the dimension consumed by the integrand,
    points_per_replication the number of points per randomization and
    replications the number of independent randomizations feeding the
    error estimate. When the nominal dimension exceeds
    lss_block_dimension, points are assembled from scrambled Sobol
    blocks of that size whose run orders are permuted independently
    (Latin supercube sampling); the final block is truncated to the
    leftover dimensions.
    """

    nominal_dimension: int
    points_per_replication: int
    replications: int
    lss_block_dimension: int
    seed: int
    mode: str = "scrambled_sobol"

    def __post_init__(self) -> None:
        if self.nominal_dimension < 1:
            raise ValueError("nominal_dimension must be at least 1")
        if self.nominal_dimension > MAX_DIMENSION:
            raise DimensionError(
                f"nominal_dimension {self.nominal_dimension} exceeds the "
                f"supported Sobol table ({MAX_DIMENSION} dimensions)")
        if self.points_per_replication < 1:
            raise ValueError("points_per_replication must be at least 1")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 1 <= self.lss_block_dimension <= self.nominal_dimension:
            raise ValueError(
                "lss_block_dimension must lie in [1, nominal_dimension], "
                f"got {self.lss_block_dimension} for nominal dimension "
                f"{self.nominal_dimension}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 <= int(self.seed) < 2 ** 63:
            raise ValueError("seed must be a non-negative integer below 2**63")

    @property
    def block_sizes(self) -> tuple[int, ...]:
        """Dimensions of the supercube blocks, last one possibly truncated."""
        d, b = self.nominal_dimension, self.lss_block_dimension
        full, rest = divmod(d, b)
        return (b,) * full + ((rest,) if rest else ())


def _substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one (replication, purpose, block) slot."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def _check_dimension(dimension: int) -> None:
    if dimension < 1:
        raise DimensionError("dimension must be at least 1")
    if dimension > MAX_DIMENSION:
        raise DimensionError(
            f"dimension {dimension} exceeds the supported Sobol table "
            f"({MAX_DIMENSION} dimensions)")


@lru_cache(maxsize=8)
def _raw_sobol_block(dimension: int, count: int) -> np.ndarray:
    """First `count` raw Sobol points after the origin, as 32-bit integers.

    The all-zero origin is skipped, so index 0 of the stream is the
    point (0.5, ..., 0.5). Cached read-only because every replication
    reuses the same raw block under different scrambles.
    """
    _check_dimension(dimension)
    engine = _scipy_qmc.Sobol(d=dimension, scramble=False, bits=BITS)
    engine.fast_forward(1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        points = engine.random(count)
    ints = np.round(points * _SCALE).astype(np.uint64)
    ints.setflags(write=False)
    return ints


def sobol_point(index: int, dimension: int) -> np.ndarray:
    """The index-th point of the raw Sobol stream (origin skipped)."""
    if index < 0:
        raise ValueError("index must be non-negative")
    _check_dimension(dimension)
    engine = _scipy_qmc.Sobol(d=dimension, scramble=False, bits=BITS)
    engine.fast_forward(index + 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(1)[0]


@dataclass(frozen=True, eq=False)
class DigitalScramble:
    """Per-dimension affine digit scramble.

    Each dimension carries a random lower-triangular bit matrix with
    unit diagonal, stored column-wise as packed integers, plus a random
    digital shift. The unit diagonal makes every dyadic digit prefix a
    bijection, so elementary-interval structure survives scrambling.
    """

    columns: np.ndarray  # (dims, BITS) uint64, column j of the bit matrix
    shift: np.ndarray    # (dims,) uint64

    @classmethod
    def random(cls, dims: int, rng: np.random.Generator) -> "DigitalScramble":
        columns = np.empty((dims, BITS), dtype=np.uint64)
        for digit in range(BITS):
            diagonal = _ONE << np.uint64(BITS - 1 - digit)
            below = rng.integers(0, int(diagonal), size=dims, dtype=np.uint64)
            columns[:, digit] = diagonal | below
        shift = rng.integers(0, int(_SCALE), size=dims, dtype=np.uint64)
        return cls(columns=columns, shift=shift)

    @classmethod
    def identity(cls, dims: int) -> "DigitalScramble":
        columns = np.empty((dims, BITS), dtype=np.uint64)
        for digit in range(BITS):
            columns[:, digit] = _ONE << np.uint64(BITS - 1 - digit)
        return cls(columns=columns, shift=np.zeros(dims, dtype=np.uint64))

    def apply(self, raw: np.ndarray) -> np.ndarray:
        """Scramble a (points, dims) block of raw Sobol integers."""
        if raw.ndim != 2 or raw.shape[1] != self.columns.shape[0]:
            raise ValueError("raw block shape does not match scramble dimensions")
        out = np.zeros_like(raw)
        for digit in range(BITS):
            bit = (raw >> np.uint64(BITS - 1 - digit)) & _ONE
            out ^= bit * self.columns[None, :, digit]
        return out ^ self.shift[None, :]


def scramble(raw: np.ndarray, seed) -> np.ndarray:
    """Apply a seed-derived random scramble to a raw integer block."""
    rng = np.random.default_rng(seed)
    return DigitalScramble.random(raw.shape[1], rng).apply(raw)


def to_unit(ints: np.ndarray) -> np.ndarray:
    """Map scrambled integers to the open unit interval."""
    return np.clip(ints.astype(np.float64) / _SCALE, UNIT_LOW, UNIT_HIGH)


def to_normal(unit: np.ndarray) -> np.ndarray:
    """Inverse standard normal CDF, defined on the open unit interval."""
    unit = np.asarray(unit, dtype=np.float64)
    if unit.size and not ((unit > 0.0).all() and (unit < 1.0).all()):
        raise ValueError("unit point coordinates must lie strictly inside (0, 1)")
    return ndtri(unit)


def lss_assemble(config: QmcConfig, replication: int) -> np.ndarray:
    """Uniform points for one replication of the scrambled Sobol plan.

    Every block reuses the same raw net, scrambled with a substream
    keyed by (replication, block); each block's run order is permuted
    independently so that block couplings are randomized rather than
    inherited from the generator.
    """
    n = config.points_per_replication
    out = np.empty((n, config.nominal_dimension))
    start = 0
    for block, width in enumerate(config.block_sizes):
        raw = _raw_sobol_block(config.lss_block_dimension, n)[:, :width]
        rng = _substream(config.seed, replication, _TAG_SCRAMBLE, block)
        ints = DigitalScramble.random(width, rng).apply(raw)
        order = _substream(config.seed, replication, _TAG_ORDER, block).permutation(n)
        out[:, start:start + width] = to_unit(ints[order])
        start += width
    return out


def replication_uniforms(config: QmcConfig, replication: int) -> np.ndarray:
    """Uniform (points, dimension) draws for one replication."""
    if config.mode == "pseudo_random":
        rng = _substream(config.seed, replication, _TAG_PSEUDO)
        u = rng.random((config.points_per_replication, config.nominal_dimension))
        return np.clip(u, UNIT_LOW, UNIT_HIGH)
    return lss_assemble(config, replication)


def replication_normals(config: QmcConfig, replication: int) -> np.ndarray:
    """Standard normal (points, dimension) draws for one replication."""
    return to_normal(replication_uniforms(config, replication))
