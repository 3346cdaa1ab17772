"""Limit laws of the LAD estimator when ``n (rho_n - 1) -> gamma``.

The pair ``X(t) = (K(t), L(t))`` on ``[0, 1]`` is a continuous Gaussian
process with independent increments and covariance ``Gamma(t)``.  The two
limit laws are ratios of functionals of one path::

    D(gamma) = int L dK / (2 f0 int exp(-2 gamma (1-t)) L^2 dt)
    L(gamma) = int L dK / (2 f0 sqrt(int exp(-2 gamma (1-t)) L^2 dt))

Two independent samplers are provided: exact Gaussian increments of
``(K, L)`` on a uniform grid, and partial-sum processes built from a finite
AR(1) sample with ``rho_n = 1 + gamma / n``.  Both integrals are discretized
at left grid points.

Internally the Gaussian sampler works with ``exp(-gamma (1-t)) L(t)``, whose
increments have a time-homogeneous covariance; this keeps every quantity
O(1) even for large ``|gamma|``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.signal import lfilter
from scipy.special import expit

from ._parallel import chunk_ranges, map_chunks
from .errors import DegenerateError, ValidationError
from .innovations import Purpose, stream

SMALL_GAMMA = 1e-8
# |gamma| beyond this makes exp(2|gamma|) overflow when K and L are materialized
GAMMA_MAX = 300.0
_CHUNK = 256


def _expm1_ratio(x):
    """``expm1(x) / x`` with the removable singularity filled in."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SMALL_GAMMA
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + 0.5 * x, np.expm1(safe) / safe)


def _sinh_ratio(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SMALL_GAMMA
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0, np.sinh(safe) / safe)


def gamma_matrix(t: float, gamma: float, mean_abs: float) -> np.ndarray:
    """Covariance matrix of ``(K(t), L(t))``."""
    if abs(gamma) < SMALL_GAMMA:
        g11 = g22 = t
    else:
        g11 = math.exp(-2.0 * gamma) * math.expm1(2.0 * gamma * t) / (2.0 * gamma)
        g22 = -math.exp(2.0 * gamma) * math.expm1(-2.0 * gamma * t) / (2.0 * gamma)
    g12 = t * mean_abs
    return np.array([[g11, g12], [g12, g22]])


def lambda_matrix(t: float, gamma: float, mean_abs: float) -> np.ndarray:
    """Density of ``Gamma`` with respect to the clock ``h``."""
    a = 2.0 * gamma * (1.0 - t)
    l11 = float(expit(-2.0 * a))
    l22 = float(expit(2.0 * a))
    e = math.exp(-abs(a))
    l12 = mean_abs * e / (1.0 + e * e)
    return np.array([[l11, l12], [l12, l22]])


def h_timechange(t: float, gamma: float) -> float:
    """``(sinh(2 gamma) - sinh(2 gamma (1-t))) / gamma``; tends to ``2t`` as gamma -> 0."""
    if abs(gamma) < SMALL_GAMMA:
        return 2.0 * t
    # sinh(a) - sinh(b) = 2 cosh((a+b)/2) sinh((a-b)/2), no cancellation near gamma = 0
    return 2.0 * math.cosh(gamma * (2.0 - t)) * t * float(_sinh_ratio(gamma * t))


def h_prime(t: float, gamma: float) -> float:
    return 2.0 * math.cosh(2.0 * gamma * (1.0 - t))


def sqrt_psd_2x2(m) -> np.ndarray:
    """Symmetric square root of a 2x2 positive semidefinite matrix."""
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2) or abs(m[0, 1] - m[1, 0]) > 1e-12 * max(1.0, np.abs(m).max()):
        raise ValidationError("expected a symmetric 2x2 matrix")
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    tr = a + c
    det = a * c - b * b
    disc = math.sqrt(max((a - c) ** 2 + 4 * b * b, 0.0))
    lam_min = 0.5 * (tr - disc)
    if lam_min < -1e-10:
        raise ValidationError(f"matrix has a negative eigenvalue {lam_min:g}")
    s = math.sqrt(max(det, 0.0))
    denom = math.sqrt(max(tr + 2.0 * s, 0.0))
    if denom == 0.0:
        return np.zeros((2, 2))
    return (m + s * np.eye(2)) / denom


class Route(str, enum.Enum):
    GAUSSIAN = "gaussian"
    AR1 = "ar1"


@dataclass(frozen=True)
class LimitLawConfig:
    gamma: float
    mean_abs: float = math.sqrt(2.0 / math.pi)
    f0: float = 1.0 / math.sqrt(2.0 * math.pi)
    grid_m: int = 2000
    route: Route = Route.GAUSSIAN
    n: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "route", Route(self.route))
        if not 0.0 < self.mean_abs <= 1.0:
            raise ValidationError("mean_abs must lie in (0, 1]; sigma^2 = 1 forces E|eps| <= 1")
        if not self.f0 > 0.0:
            raise ValidationError("f0 must be positive")
        if self.grid_m < 100:
            raise ValidationError("grid_m must be >= 100")
        if abs(self.gamma) > GAMMA_MAX:
            raise ValidationError(f"|gamma| must not exceed {GAMMA_MAX:g}")
        if self.route is Route.AR1:
            if self.n is None:
                object.__setattr__(self, "n", self.grid_m)
            if self.n < self.grid_m:
                raise ValidationError("finite-AR route needs n >= grid_m")

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.grid_m + 1) / self.grid_m


@dataclass
class LimitPath:
    t: np.ndarray
    K: np.ndarray
    L: np.ndarray


@dataclass(frozen=True)
class LimitDraw:
    int_LdK: float
    int_w_L2: float
    D: float
    Lstat: float


@dataclass
class DrawBatch:
    """Vectorized counterpart of a list of :class:`LimitDraw`."""

    int_LdK: np.ndarray
    int_w_L2: np.ndarray
    f0: float
    start: int = 0

    @property
    def D(self) -> np.ndarray:
        return self.int_LdK / (2.0 * self.f0 * self.int_w_L2)

    @property
    def Lstat(self) -> np.ndarray:
        return self.int_LdK / (2.0 * self.f0 * np.sqrt(self.int_w_L2))

    @property
    def self_normalized(self) -> np.ndarray:
        """``2 f0 L(gamma)``, which is free of f0."""
        return self.int_LdK / np.sqrt(self.int_w_L2)

    def __len__(self) -> int:
        return len(self.int_LdK)

    def draw(self, i: int) -> LimitDraw:
        return LimitDraw(float(self.int_LdK[i]), float(self.int_w_L2[i]), float(self.D[i]), float(self.Lstat[i]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replication", "int_LdK", "int_w_L2", "D", "Lstat"])
            for i, (a, b, d, l) in enumerate(zip(self.int_LdK, self.int_w_L2, self.D, self.Lstat)):
                w.writerow([self.start + i, f"{a:.17g}", f"{b:.17g}", f"{d:.17g}", f"{l:.17g}"])


def _scaled_coefficients(gamma: float, mean_abs: float, dt: float):
    """Cholesky factors of the homogeneous increment covariance in scaled coordinates."""
    x = 2.0 * gamma * dt
    s11 = dt * float(_expm1_ratio(x))
    s22 = dt * float(_expm1_ratio(-x))
    a = mean_abs * dt / math.sqrt(s11)
    b2 = s22 - a * a
    if b2 < -1e-15 * s22:
        raise DegenerateError("increment covariance is not positive semidefinite")
    return math.sqrt(s11), a, math.sqrt(max(b2, 0.0)), math.exp(gamma * dt)


def _gaussian_normals(config: LimitLawConfig, master_seed: int, r: int) -> np.ndarray:
    return stream(master_seed, r, Purpose.LIMIT_PATH).generator.standard_normal((2, config.grid_m))


def _scaled_walk(config: LimitLawConfig, z: np.ndarray):
    """Scaled L at left grid points and the K-driving normals, batched on axis 0."""
    m = config.grid_m
    dt = 1.0 / m
    c11, a, b, growth = _scaled_coefficients(config.gamma, config.mean_abs, dt)
    z1, z2 = z[:, 0, :], z[:, 1, :]
    inc = a * z1 + b * z2
    ltil = np.zeros((z.shape[0], m + 1))
    # ltil[k+1] = growth * (ltil[k] + inc[k])
    ltil[:, 1:] = lfilter([growth], [1.0, -growth], inc, axis=1)
    return ltil, c11 * z1


def sample_path_gaussian(config: LimitLawConfig, master_seed: int, replication: int = 0) -> LimitPath:
    """Exact Gaussian-increment path of ``(K, L)`` on the grid."""
    if config.route is not Route.GAUSSIAN:
        raise ValidationError("config.route must be 'gaussian'")
    z = _gaussian_normals(config, master_seed, replication)[None]
    ltil, kinc = _scaled_walk(config, z)
    t = config.grid
    g = config.gamma
    K = np.concatenate(([0.0], np.cumsum(np.exp(-g * (1.0 - t[:-1])) * kinc[0])))
    L = np.exp(g * (1.0 - t)) * ltil[0]
    L[0] = 0.0
    return LimitPath(t, K, L)


def _ar1_increments(config: LimitLawConfig, eps: np.ndarray):
    n = config.n
    rho = 1.0 + config.gamma / n
    i = np.arange(1, n + 1)
    scale = 1.0 / math.sqrt(n)
    k_inc = scale * rho ** (i - 1.0 - n) * np.sign(eps)
    l_inc = scale * rho ** (n - i * 1.0) * eps
    return k_inc, l_inc


def _grid_index(config: LimitLawConfig) -> np.ndarray:
    m, n = config.grid_m, config.n
    return (np.arange(m + 1) * n) // m


def sample_path_ar1(config: LimitLawConfig, master_seed: int, replication: int = 0) -> LimitPath:
    """Partial-sum processes ``(K_n, L_n)`` of a standard-normal AR(1) sample."""
    if config.route is not Route.AR1:
        raise ValidationError("config.route must be 'ar1'")
    eps = stream(master_seed, replication, Purpose.LIMIT_PATH).generator.standard_normal(config.n)
    k_inc, l_inc = _ar1_increments(config, eps)
    idx = _grid_index(config)
    K = np.concatenate(([0.0], np.cumsum(k_inc)))[idx]
    L = np.concatenate(([0.0], np.cumsum(l_inc)))[idx]
    return LimitPath(config.grid, K, L)


def sample_path(config: LimitLawConfig, master_seed: int, replication: int = 0) -> LimitPath:
    if config.route is Route.GAUSSIAN:
        return sample_path_gaussian(config, master_seed, replication)
    return sample_path_ar1(config, master_seed, replication)


def _path_functionals(t: np.ndarray, K: np.ndarray, L: np.ndarray, gamma: float):
    dt = np.diff(t)
    w = np.exp(-2.0 * gamma * (1.0 - t[:-1]))
    left = L[..., :-1]
    int_ldk = np.sum(left * np.diff(K, axis=-1), axis=-1)
    int_wl2 = np.sum(w * left * left * dt, axis=-1)
    return int_ldk, int_wl2


def functionals(path: LimitPath, gamma: float, f0: float) -> LimitDraw:
    """Left-point sums for ``int L dK`` and ``int exp(-2 gamma (1-t)) L^2 dt``."""
    int_ldk, int_wl2 = _path_functionals(path.t, path.K, path.L, gamma)
    int_ldk, int_wl2 = float(int_ldk), float(int_wl2)
    if not int_wl2 > 0.0:
        raise DegenerateError("int exp(-2 gamma (1-t)) L^2 dt vanished")
    return LimitDraw(
        int_ldk,
        int_wl2,
        int_ldk / (2.0 * f0 * int_wl2),
        int_ldk / (2.0 * f0 * math.sqrt(int_wl2)),
    )


def _draw_chunk(a: int, b: int, config: LimitLawConfig, master_seed: int):
    if config.route is Route.GAUSSIAN:
        z = np.stack([_gaussian_normals(config, master_seed, r) for r in range(a, b)])
        ltil, kinc = _scaled_walk(config, z)
        left = ltil[:, :-1]
        int_ldk = np.sum(left * kinc, axis=1)
        int_wl2 = np.sum(left * left, axis=1) / config.grid_m
        return int_ldk, int_wl2
    idx = _grid_index(config)
    K = np.empty((b - a, config.grid_m + 1))
    L = np.empty_like(K)
    for j, r in enumerate(range(a, b)):
        eps = stream(master_seed, r, Purpose.LIMIT_PATH).generator.standard_normal(config.n)
        k_inc, l_inc = _ar1_increments(config, eps)
        K[j] = np.concatenate(([0.0], np.cumsum(k_inc)))[idx]
        L[j] = np.concatenate(([0.0], np.cumsum(l_inc)))[idx]
    return _path_functionals(config.grid, K, L, config.gamma)


def sample_draws(config: LimitLawConfig, reps: int, master_seed: int, *, workers: int = 1, start: int = 0) -> DrawBatch:
    """Draws for replications ``start .. start+reps-1``.

    Replication ``r`` always uses the stream keyed ``(master_seed, r)``, so
    the batch does not depend on ``workers``.
    """
    if reps < 1:
        raise ValidationError("reps must be >= 1")
    parts = map_chunks(_draw_chunk, chunk_ranges(start, start + reps, _CHUNK), (config, master_seed), workers)
    int_ldk = np.concatenate([p[0] for p in parts])
    int_wl2 = np.concatenate([p[1] for p in parts])
    if np.any(~(int_wl2 > 0.0)):
        raise DegenerateError("a path produced a vanishing weighted L^2 integral")
    return DrawBatch(int_ldk, int_wl2, config.f0, start)


def psi_square_integral(batch: DrawBatch, gamma: float) -> np.ndarray:
    """``int_0^1 psi_gamma(t)^2 dt`` with ``psi = sqrt(-2 gamma) e^{-gamma(1-t)} L`` (gamma < 0)."""
    if gamma >= 0:
        raise ValidationError("psi functional is defined for gamma < 0")
    return -2.0 * gamma * batch.int_w_L2


def phi_square_integral(batch: DrawBatch, gamma: float) -> np.ndarray:
    """``int_0^1 phi_gamma(t)^2 dt`` with ``phi = 2 gamma e^{-gamma} e^{-gamma(1-t)} L`` (gamma > 0)."""
    if gamma <= 0:
        raise ValidationError("phi functional is defined for gamma > 0")
    return 4.0 * gamma * gamma * math.exp(-2.0 * gamma) * batch.int_w_L2


def expected_psi_square(gamma: float) -> float:
    """Closed form of ``E int psi^2 = 1 - (e^{2 gamma} - 1) / (2 gamma)``."""
    return 1.0 - math.expm1(2.0 * gamma) / (2.0 * gamma)


def expected_phi_square(gamma: float) -> float:
    """Closed form of ``E int phi^2 = 1 - e^{-2 gamma} (1 + 2 gamma)``."""
    return 1.0 - math.exp(-2.0 * gamma) * (1.0 + 2.0 * gamma)


def expected_weighted_l2(gamma: float) -> float:
    """``E int exp(-2 gamma (1-t)) L(t)^2 dt`` in closed form."""
    if abs(gamma) < SMALL_GAMMA:
        return 0.5
    x = 2.0 * gamma
    return (math.expm1(x) / x - 1.0) / x


@dataclass(frozen=True)
class NormalityDiagnostic:
    gamma: float
    reps: int
    ks: float
    moment_mean: float | None
    moment_expected: float | None


def normality_diagnostic(config: LimitLawConfig, reps: int, master_seed: int, *, workers: int = 1) -> NormalityDiagnostic:
    """KS distance of ``2 f0 L(gamma)`` from the standard normal.

    Also reports the sample mean of the psi (gamma < 0) or phi (gamma > 0)
    square integral next to its closed-form expectation.
    """
    if reps < 1000:
        raise ValidationError("normality diagnostic needs reps >= 1000")
    batch = sample_draws(config, reps, master_seed, workers=workers)
    ks = float(stats.kstest(batch.self_normalized, "norm").statistic)
    g = config.gamma
    if g < 0:
        mean, expected = float(np.mean(psi_square_integral(batch, g))), expected_psi_square(g)
    elif g > 0:
        mean, expected = float(np.mean(phi_square_integral(batch, g))), expected_phi_square(g)
    else:
        mean = expected = None
    return NormalityDiagnostic(g, reps, ks, mean, expected)
