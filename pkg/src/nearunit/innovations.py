"""Innovation laws and replayable random streams.

Every random quantity in the package is drawn from an :class:`RngStream`
keyed by ``(master_seed, replication_index, purpose_tag)``.  The key feeds a
:class:`numpy.random.SeedSequence` whose output keys a counter-based Philox
generator, so replication ``r`` sees the same numbers no matter how the
replications are split across workers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


class InnovationKind(str, enum.Enum):
    STANDARD_NORMAL = "normal"
    UNIFORM_PM1 = "uniform"


class Purpose(enum.IntEnum):
    """Stream separation tags.

    Pre-sample draws (the initial value), in-sample innovations and outlier
    positions never share a stream, so e.g. changing kappa does not perturb
    the in-sample path.
    """

    INITIAL = 0
    INNOVATION = 1
    OUTLIER = 2
    LIMIT_PATH = 3


@dataclass(frozen=True)
class InnovationSpec:
    kind: InnovationKind
    sigma2: float
    f0: float
    mean_abs: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


_ATTRIBUTES = {
    InnovationKind.STANDARD_NORMAL: (1.0, 1.0 / math.sqrt(2.0 * math.pi), math.sqrt(2.0 / math.pi)),
    InnovationKind.UNIFORM_PM1: (1.0 / 3.0, 0.5, 0.5),
}


def attributes(kind: InnovationKind | str) -> InnovationSpec:
    """Return the innovation law with its variance, density at zero and E|eps|."""
    kind = InnovationKind(kind)
    sigma2, f0, mean_abs = _ATTRIBUTES[kind]
    return InnovationSpec(kind, sigma2, f0, mean_abs)


@dataclass
class RngStream:
    master_seed: int
    replication_index: int = 0
    purpose_tag: int = 0
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValidationError("master_seed must fit in 64 unsigned bits")
        if self.replication_index < 0 or self.purpose_tag < 0:
            raise ValidationError("replication_index and purpose_tag must be non-negative")

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            seq = np.random.SeedSequence(
                entropy=int(self.master_seed),
                spawn_key=(int(self.replication_index), int(self.purpose_tag)),
            )
            self._gen = np.random.Generator(np.random.Philox(seq))
        return self._gen

    def fresh(self) -> "RngStream":
        """A copy of this stream rewound to its start."""
        return RngStream(self.master_seed, self.replication_index, self.purpose_tag)


def stream(master_seed: int, replication: int, purpose: Purpose | int) -> RngStream:
    return RngStream(master_seed, replication, int(purpose))


def draw_many(spec: InnovationSpec, rng: RngStream, size) -> np.ndarray:
    gen = rng.generator
    if spec.kind is InnovationKind.STANDARD_NORMAL:
        return gen.standard_normal(size)
    if spec.kind is InnovationKind.UNIFORM_PM1:
        return gen.uniform(-1.0, 1.0, size)
    raise ValidationError(f"unsupported innovation kind {spec.kind!r}")


def draw(spec: InnovationSpec, rng: RngStream) -> float:
    """One variate from ``spec``; advances ``rng``."""
    return float(draw_many(spec, rng, 1)[0])


def sign(x):
    """Signum with ``sign(0) == 0``; works elementwise on arrays."""
    if np.ndim(x) == 0:
        return float((x > 0) - (x < 0))
    return np.sign(np.asarray(x, dtype=float))
