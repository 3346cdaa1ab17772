"""AR(1) paths with roots local to unity.

The data generating process is ``y_i = rho * y_{i-1} + eps_i`` for
``i = 1..n`` with ``rho = 1 + gamma * n**(-beta)``.  Three initial-value
regimes are supported:

* ``ZeroInit`` -- ``y_0 = 0`` (local-to-unity theory with fixed gamma).
* ``FullPastInit`` -- ``y_0 = sum_{j>=0} rho**j eps_{-j}`` (needs rho < 1).
* ``TruncatedInit`` -- ``y_0 = sum_{j=0}^{kappa} rho**j eps_{-j}`` with
  ``kappa = floor(n**kappa_exponent)`` (needs rho > 1).

Outliers are contaminations of size ``amount`` placed at ``round(fraction*n)``
distinct time points.  With ``placement="innovation"`` (the default) the
amount is added to the innovation, so it propagates through the recursion;
with ``placement="observed"`` it is added to the recorded value only.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import ExplosionError, RegimeError, ValidationError
from .innovations import (
    InnovationKind,
    InnovationSpec,
    Purpose,
    RngStream,
    attributes,
    draw_many,
    stream,
)

OVERFLOW_LIMIT = 1e300
_CHUNK = 1 << 20


@dataclass(frozen=True)
class ZeroInit:
    name = "zero"


@dataclass(frozen=True)
class FullPastInit:
    tail_tol: float = 1e-8
    name = "full-past"

    def __post_init__(self):
        if not 0.0 < self.tail_tol < 1.0:
            raise ValidationError("tail_tol must lie in (0, 1)")


@dataclass(frozen=True)
class TruncatedInit:
    kappa_exponent: float = 1.3
    name = "truncated"

    def __post_init__(self):
        if not self.kappa_exponent > 1.0:
            raise ValidationError("kappa_exponent must be > 1")


InitSpec = ZeroInit | FullPastInit | TruncatedInit


class OutlierMode(str, enum.Enum):
    NONE = "none"
    CONSTANT = "const"
    SCALED_MAX = "scaledmax"


class Placement(str, enum.Enum):
    INNOVATION = "innovation"
    OBSERVED = "observed"


@dataclass(frozen=True)
class OutlierSpec:
    """``amount`` is the added value for ``CONSTANT`` and the multiple of
    ``max_i |y_clean[i]|`` for ``SCALED_MAX``."""

    mode: OutlierMode = OutlierMode.NONE
    amount: float = 0.0
    fraction: float = 0.0
    placement: Placement = Placement.INNOVATION

    def __post_init__(self):
        object.__setattr__(self, "mode", OutlierMode(self.mode))
        object.__setattr__(self, "placement", Placement(self.placement))
        if not 0.0 <= self.fraction < 1.0:
            raise ValidationError("outlier fraction must satisfy 0 <= fraction < 1")

    def count(self, n: int) -> int:
        if self.mode is OutlierMode.NONE:
            return 0
        return int(round(self.fraction * n))

    @classmethod
    def parse(cls, text: str, placement: Placement | str = Placement.INNOVATION) -> "OutlierSpec":
        """Parse ``none``, ``const:VALUE:FRAC`` or ``scaledmax:MULT:FRAC``."""
        parts = text.strip().split(":")
        if parts == ["none"]:
            return cls()
        if len(parts) != 3 or parts[0] not in ("const", "scaledmax"):
            raise ValidationError(f"cannot parse outlier spec {text!r}")
        try:
            amount, fraction = float(parts[1]), float(parts[2])
        except ValueError:
            raise ValidationError(f"cannot parse outlier spec {text!r}") from None
        return cls(OutlierMode(parts[0]), amount, fraction, placement)

    def label(self) -> str:
        if self.mode is OutlierMode.NONE:
            return "none"
        return f"{self.mode.value}:{self.amount:g}:{self.fraction:g}"


def rho_of(gamma: float, beta: float, n: int) -> float:
    if n < 1:
        raise ValidationError("n must be >= 1")
    rho = 1.0 + gamma * float(n) ** (-beta)
    if rho <= 0.0:
        raise ValidationError(f"rho = 1 + gamma*n^-beta = {rho:g} must be positive")
    return rho


def kappa_of(n: int, kappa_exponent: float) -> int:
    if n < 1:
        raise ValidationError("n must be >= 1")
    # guard against n**e landing a few ulps below an exact integer
    return math.floor(float(n) ** kappa_exponent * (1.0 + 1e-14))


@dataclass(frozen=True)
class Ar1Config:
    gamma: float
    beta: float
    n: int
    innovation: InnovationSpec = field(default_factory=lambda: attributes(InnovationKind.STANDARD_NORMAL))
    init: InitSpec = field(default_factory=ZeroInit)
    outliers: OutlierSpec = field(default_factory=OutlierSpec)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError("n must be a positive integer")
        if self.beta < 1.0:
            raise ValidationError("beta must be >= 1")
        rho = self.rho  # validates positivity
        if isinstance(self.init, FullPastInit) and rho >= 1.0:
            raise RegimeError(f"full-past initialization requires rho < 1 (rho = {rho!r})")
        if isinstance(self.init, TruncatedInit):
            if rho <= 1.0:
                raise RegimeError(f"truncated initialization requires rho > 1 (rho = {rho!r})")
            drift = self.kappa * (rho - 1.0)
            if drift > 0.1:
                warnings.warn(
                    f"kappa*(rho-1) = {drift:.3g} is not small; the distant-start "
                    "asymptotics may be a poor guide",
                    stacklevel=3,
                )

    @property
    def rho(self) -> float:
        return rho_of(self.gamma, self.beta, self.n)

    @property
    def kappa(self) -> int | None:
        if isinstance(self.init, TruncatedInit):
            return kappa_of(self.n, self.init.kappa_exponent)
        return None


@dataclass
class SeriesSample:
    """A generated path.

    ``y``, ``y_clean`` and ``eps`` hold times ``1..n``; ``y0`` is the initial
    value.  ``outlier_indices`` are 1-based time indices.
    """

    y0: float
    y: np.ndarray
    y_clean: np.ndarray
    eps: np.ndarray
    outlier_indices: np.ndarray
    rho_true: float
    kappa_used: int | None = None
    contamination: np.ndarray | None = None
    placement: Placement | None = None

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def regressors(self) -> np.ndarray:
        return np.concatenate(([self.y0], self.y[:-1]))


def _geometric_sum(rho: float, spec: InnovationSpec, rng: RngStream, terms: int) -> float:
    total = 0.0
    done = 0
    while done < terms:
        m = min(_CHUNK, terms - done)
        powers = rho ** np.arange(done, done + m, dtype=float)
        total += float(powers @ draw_many(spec, rng, m))
        done += m
    return total


def full_past_terms(rho: float, tail_tol: float) -> int:
    """Terms needed so the omitted tail's sd is at most ``tail_tol`` of the total sd."""
    return int(math.ceil(math.log(tail_tol) / math.log(rho)))


def gen_initial(config: Ar1Config, rng: RngStream) -> float:
    init, rho, spec = config.init, config.rho, config.innovation
    if isinstance(init, ZeroInit):
        return 0.0
    if isinstance(init, FullPastInit):
        if rho >= 1.0:
            raise RegimeError("full-past initialization requires rho < 1")
        if spec.kind is InnovationKind.STANDARD_NORMAL:
            return float(rng.generator.standard_normal()) * spec.sigma / math.sqrt(1.0 - rho * rho)
        return _geometric_sum(rho, spec, rng, full_past_terms(rho, init.tail_tol))
    if isinstance(init, TruncatedInit):
        if rho <= 1.0:
            raise RegimeError("truncated initialization requires rho > 1")
        return _geometric_sum(rho, spec, rng, config.kappa + 1)
    raise ValidationError(f"unknown initialization {init!r}")


def recurse(rho: float, y0: float, eps: np.ndarray) -> np.ndarray:
    """``y_i = rho*y_{i-1} + eps_i`` for i = 1..n, guarded against overflow."""
    with np.errstate(over="ignore", invalid="ignore"):
        y = lfilter([1.0], [1.0, -rho], np.asarray(eps, dtype=float), zi=[rho * y0])[0]
    if not np.all(np.isfinite(y)) or (y.size and np.max(np.abs(y)) > OVERFLOW_LIMIT):
        raise ExplosionError(f"path exceeded {OVERFLOW_LIMIT:g} in absolute value")
    return y


def gen_series(
    config: Ar1Config,
    master_seed: int,
    replication: int = 0,
    *,
    eps: np.ndarray | None = None,
    y0: float | None = None,
) -> SeriesSample:
    """Generate a clean path.  ``eps``/``y0`` may be forced (mainly for tests)."""
    if y0 is None:
        y0 = gen_initial(config, stream(master_seed, replication, Purpose.INITIAL))
    if eps is None:
        eps = draw_many(config.innovation, stream(master_seed, replication, Purpose.INNOVATION), config.n)
    else:
        eps = np.asarray(eps, dtype=float)
        if eps.shape != (config.n,):
            raise ValidationError(f"forced eps must have length n = {config.n}")
    rho = config.rho
    if abs(y0) > OVERFLOW_LIMIT:
        raise ExplosionError("initial value out of range")
    y = recurse(rho, y0, eps)
    return SeriesSample(
        y0=float(y0),
        y=y,
        y_clean=y.copy(),
        eps=eps,
        outlier_indices=np.empty(0, dtype=int),
        rho_true=rho,
        kappa_used=config.kappa,
    )


def inject_outliers(series: SeriesSample, spec: OutlierSpec, rng: RngStream) -> SeriesSample:
    """Contaminate ``round(fraction*n)`` distinct time points chosen uniformly."""
    n = series.n
    k = spec.count(n)
    if k == 0:
        return SeriesSample(
            series.y0, series.y_clean.copy(), series.y_clean, series.eps,
            np.empty(0, dtype=int), series.rho_true, series.kappa_used,
        )
    idx = np.sort(rng.generator.choice(n, size=k, replace=False)) + 1
    if spec.mode is OutlierMode.CONSTANT:
        size = spec.amount
    else:
        size = spec.amount * float(np.max(np.abs(series.y_clean)))
    shift = np.zeros(n)
    shift[idx - 1] = size
    if spec.placement is Placement.OBSERVED:
        y = series.y_clean + shift
    else:
        y = recurse(series.rho_true, series.y0, series.eps + shift)
    return SeriesSample(
        y0=series.y0,
        y=y,
        y_clean=series.y_clean,
        eps=series.eps,
        outlier_indices=idx,
        rho_true=series.rho_true,
        kappa_used=series.kappa_used,
        contamination=shift,
        placement=spec.placement,
    )


def simulate(config: Ar1Config, master_seed: int, replication: int = 0) -> SeriesSample:
    """Clean path plus the configured contamination, all from replication-keyed streams."""
    clean = gen_series(config, master_seed, replication)
    return inject_outliers(clean, config.outliers, stream(master_seed, replication, Purpose.OUTLIER))


def write_series_csv(series: SeriesSample, path) -> None:
    """Columns ``i, y, y_clean, eps, is_outlier``; row ``i = 0`` carries ``y0``."""
    flags = np.zeros(series.n, dtype=int)
    flags[series.outlier_indices - 1] = 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "y", "y_clean", "eps", "is_outlier"])
        w.writerow([0, f"{series.y0:.17g}", f"{series.y0:.17g}", "", 0])
        for i in range(series.n):
            w.writerow([
                i + 1,
                f"{series.y[i]:.17g}",
                f"{series.y_clean[i]:.17g}",
                f"{series.eps[i]:.17g}",
                flags[i],
            ])


def read_series_csv(path) -> tuple[float, np.ndarray]:
    """Return ``(y0, y)`` from a series CSV (only ``i`` and ``y`` are required)."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "y" not in rows[0] or "i" not in rows[0]:
        raise ValidationError(f"{path}: expected columns 'i' and 'y'")
    rows.sort(key=lambda r: int(r["i"]))
    if int(rows[0]["i"]) != 0:
        raise ValidationError(f"{path}: missing the i = 0 row holding y0")
    values = np.array([float(r["y"]) for r in rows])
    return float(values[0]), values[1:]


def prop_a1_ratio(k: float, rho: float) -> float:
    """``(1 - rho**(2k)) / (k (1 - rho**2))``, evaluated without cancellation."""
    lr = math.log(rho)
    if lr == 0.0:
        return 1.0
    return math.expm1(2.0 * k * lr) / (k * math.expm1(2.0 * lr))


def sign_sum_second_moment(n: int, rho: float) -> float:
    """Exact ``E[(n^{-1/2} sum_i rho^{i-1} sign(eps_i))^2]`` for zero-median eps."""
    return prop_a1_ratio(n, rho)
