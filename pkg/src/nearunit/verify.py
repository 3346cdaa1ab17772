"""Deterministic identity checks behind ``nearunit verify``.

Every check compares two independently computed sides of an exact
relation.  Tolerances are relative to the size of the quantities compared
because entries such as ``exp(2 gamma)`` are far from unit scale.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .ar1_sim import prop_a1_ratio
from .estimators import knight_residual, lad_objective, lad_solve
from .limit_dist import gamma_matrix, h_prime, h_timechange, lambda_matrix

GAMMAS = (-5.0, -1.0, -0.1, 0.1, 1.0, 5.0)
MEAN_ABS = (math.sqrt(2.0 / math.pi), 0.5, 1.0)
SEED = 20240607

LambdaFn = Callable[[float, float, float], np.ndarray]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    worst: float
    tol: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<22} worst={self.worst:.3e} tol={self.tol:.0e}  {self.detail}"


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def check_knight(points: int = 100_000, tol: float = 1e-12) -> Check:
    """``|x-y| - |x| = -y sign(x) + 2 int_0^y (1{x<=s} - 1{x<=0}) ds``."""
    rng = np.random.default_rng(SEED)
    x = rng.standard_normal(points) * rng.choice([0.01, 1.0, 100.0], points)
    y = rng.standard_normal(points) * rng.choice([0.01, 1.0, 100.0], points)
    worst = float(np.max(np.abs(knight_residual(x, y)) / np.maximum(1.0, np.abs(x) + np.abs(y))))
    return Check("knight_identity", worst < tol, worst, tol, f"{points} random points")


def check_weight_identities(lambda_fn: LambdaFn = lambda_matrix, tol: float = 1e-12) -> Check:
    """``lambda_11 h' = e^{-2g(1-t)}``, ``lambda_22 h' = e^{2g(1-t)}``, ``lambda_12 h' = m``."""
    worst = 0.0
    for g in GAMMAS:
        for m in MEAN_ABS:
            for t in np.linspace(0.0, 1.0, 200):
                lam = lambda_fn(t, g, m)
                hp = h_prime(t, g)
                worst = max(
                    worst,
                    _rel(lam[0, 0] * hp, math.exp(-2.0 * g * (1.0 - t))),
                    _rel(lam[1, 1] * hp, math.exp(2.0 * g * (1.0 - t))),
                    _rel(lam[0, 1] * hp, m),
                    _rel(lam[0, 0] + lam[1, 1], 1.0),
                )
    return Check("weight_identities", worst < tol, worst, tol, "200-point grid, 6 gammas, 3 values of E|eps|")


def check_h_trace(tol: float = 1e-12) -> Check:
    """``h(t) = gamma_11(t) + gamma_22(t)``."""
    worst = 0.0
    for g in GAMMAS:
        for t in np.linspace(0.0, 1.0, 200):
            gm = gamma_matrix(t, g, 0.5)
            worst = max(worst, _rel(h_timechange(t, g), gm[0, 0] + gm[1, 1]))
    return Check("h_equals_trace", worst < tol, worst, tol, "200-point grid, 6 gammas")


def check_integral_equations(lambda_fn: LambdaFn = lambda_matrix, tol: float = 1e-8) -> Check:
    """``int_0^t lambda_ij(s) h'(s) ds = gamma_ij(t)`` by adaptive quadrature."""
    worst = 0.0
    m = MEAN_ABS[0]
    for g in GAMMAS:
        for t in np.linspace(0.1, 1.0, 10):
            target = gamma_matrix(t, g, m)
            for i, j in ((0, 0), (0, 1), (1, 1)):
                val, _ = integrate.quad(lambda s: lambda_fn(s, g, m)[i, j] * h_prime(s, g), 0.0, t,
                                        epsabs=1e-13, epsrel=1e-13, limit=200)
                worst = max(worst, _rel(val, target[i, j]))
    return Check("integral_equations", worst < tol, worst, tol, "10 values of t, 6 gammas")


def check_psd_increments(tol: float = 1e-12) -> Check:
    """``det(Gamma(t) - Gamma(s)) >= 0`` for ``s < t``, scaled by the diagonal product."""
    grid = np.linspace(0.0, 1.0, 200)
    worst = 0.0
    for g in GAMMAS:
        for m in MEAN_ABS:
            mats = np.array([gamma_matrix(t, g, m) for t in grid])
            d = mats[None, :, :, :] - mats[:, None, :, :]
            iu = np.triu_indices(len(grid), k=1)
            d = d[iu]
            det = d[:, 0, 0] * d[:, 1, 1] - d[:, 0, 1] ** 2
            scale = np.maximum(d[:, 0, 0] * d[:, 1, 1], 1e-300)
            worst = max(worst, float(np.max(-det / scale)))
    return Check("psd_increments", worst <= tol, worst, tol, "all pairs on a 200-point grid")


def check_prop_a1(tol: float = 0.0) -> Check:
    """``|ratio - 1| <= 2 k |1 - rho^2|`` whenever ``k |1 - rho^2| <= 1``."""
    worst = -math.inf
    count = 0
    for k in (1, 2, 10, 100, 1000, 10_000, 100_000):
        for x in np.concatenate((-np.logspace(-8, 0, 40), np.logspace(-8, 0, 40))):
            rho2 = 1.0 + x / k
            if rho2 <= 0.0:
                continue
            rho = math.sqrt(rho2)
            bound = 2.0 * k * abs(1.0 - rho2)
            excess = abs(prop_a1_ratio(k, rho) - 1.0) - bound
            worst = max(worst, excess)
            count += 1
    return Check("prop_a1_ratio_bound", worst <= tol, worst, tol, f"{count} (k, rho) pairs; worst = max(|ratio-1| - bound)")


def lattice_instance(rng: np.random.Generator, max_n: int = 20):
    """Random LAD problem whose kinks lie on the lattice ``j * 1e-4``."""
    n = int(rng.integers(1, max_n + 1))
    x = rng.integers(-5, 6, n).astype(float)
    if not np.any(x):
        x[0] = 1.0
    j = rng.integers(-20_000, 20_001, n)
    y = x * (j / 1e4)
    return x, y


def grid_confirm(x, y, step: float = 1e-4, tol: float = 1e-9) -> float:
    """Worst discrepancy between :func:`lad_solve` and a lattice search.

    Returns the largest of: objective gap to the grid minimum, and any
    violation of the interval endpoints being exactly the grid argmin set.
    """
    sol = lad_solve(x, y)
    grid = np.arange(-20_001, 20_002) * step
    obj = lad_objective(x, y, grid)
    best = float(obj.min())
    gap = abs(sol.objective - best)
    flat = grid[obj <= best + tol]
    lo_err = abs(flat[0] - sol.lo)
    hi_err = abs(flat[-1] - sol.hi)
    # endpoints must match to well within one lattice step
    endpoint = 0.0 if max(lo_err, hi_err) < 0.5 * step else max(lo_err, hi_err)
    return max(gap, endpoint)


def check_lad_grid(instances: int = 100, tol: float = 1e-9) -> Check:
    rng = np.random.default_rng(SEED + 1)
    worst = max(grid_confirm(*lattice_instance(rng)) for _ in range(instances))
    return Check("lad_vs_grid", worst < tol, worst, tol, f"{instances} lattice instances, n <= 20")


def run_all(lambda_fn: LambdaFn = lambda_matrix) -> list[Check]:
    """Run every check; ``lambda_fn`` replaces the Lambda evaluator for sensitivity tests."""
    steps = [
        check_knight,
        lambda: check_weight_identities(lambda_fn),
        check_h_trace,
        lambda: check_integral_equations(lambda_fn),
        check_psd_increments,
        check_prop_a1,
        check_lad_grid,
    ]
    out = []
    for step in steps:
        t0 = time.perf_counter()
        c = step()
        out.append(Check(c.name, bool(c.passed), float(c.worst), c.tol, c.detail, time.perf_counter() - t0))
    return out
