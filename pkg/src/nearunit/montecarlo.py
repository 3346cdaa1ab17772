"""Replication loops, summary metrics and distribution diagnostics."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._parallel import chunk_ranges, map_chunks
from .ar1_sim import Ar1Config, simulate
from .errors import DegenerateError, NumericalError, ValidationError
from .estimators import FIT_COLUMNS, fit_series, silverman_bandwidth

MAX_DEGENERATE_SHARE = 0.01
_CHUNK = 50


class Statistic(str, enum.Enum):
    RHO_LAD = "rho_lad"
    RHO_OLS = "rho_ols"
    T_STAT = "t_stat"
    NORM_STAT = "norm_stat"


class Reference(str, enum.Enum):
    NONE = "none"
    STD_NORMAL = "normal"
    STD_CAUCHY = "cauchy"


_CDF = {Reference.STD_NORMAL: stats.norm.cdf, Reference.STD_CAUCHY: stats.cauchy.cdf}


@dataclass(frozen=True)
class ExperimentSpec:
    ar1: Ar1Config
    reps: int
    master_seed: int
    statistics: frozenset = frozenset(Statistic)
    reference: Reference = Reference.NONE
    label: str = ""

    def __post_init__(self):
        if int(self.reps) != self.reps or self.reps < 1:
            raise ValidationError("reps must be a positive integer")
        object.__setattr__(self, "statistics", frozenset(Statistic(s) for s in self.statistics))
        object.__setattr__(self, "reference", Reference(self.reference))


@dataclass(frozen=True)
class Summary:
    em: float
    bias: float
    abs_bias: float
    mse: float
    count: int

    def as_dict(self) -> dict:
        return {"em": self.em, "bias": self.bias, "abs_bias": self.abs_bias, "mse": self.mse, "count": self.count}


def summarize(estimates, truth: float) -> Summary:
    x = [float(v) for v in estimates]
    if not x:
        raise DegenerateError("no estimates to summarize")
    em = math.fsum(x) / len(x)
    mse = math.fsum((v - truth) ** 2 for v in x) / len(x)
    bias = em - truth
    return Summary(em, bias, abs(bias), mse, len(x))


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list  # (replication, FitRecord | None, error message | None), sorted by replication
    summaries: dict = field(default_factory=dict)
    ks: dict = field(default_factory=dict)

    @property
    def degenerate_count(self) -> int:
        return sum(1 for _, rec, _ in self.records if rec is None)

    def values(self, column: Statistic | str) -> np.ndarray:
        """One record column over the non-degenerate replications."""
        column = column.value if isinstance(column, Statistic) else str(column)
        if column not in FIT_COLUMNS:
            raise ValidationError(f"unknown record column {column!r}")
        return np.array([rec.row()[column] for _, rec, _ in self.records if rec is not None])


def _experiment_chunk(a: int, b: int, spec: ExperimentSpec):
    out = []
    for r in range(a, b):
        try:
            series = simulate(spec.ar1, spec.master_seed, r)
            rec = fit_series(series.y0, series.y, spec.ar1)
            out.append((r, rec, None))
        except NumericalError as exc:
            out.append((r, None, f"{type(exc).__name__}: {exc}"))
    return out


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> ExperimentResult:
    """Run ``spec.reps`` replications; replication ``r`` is keyed by ``(master_seed, r)``.

    Degenerate replications are kept as flagged rows and left out of the
    summaries.  More than 1% of them aborts the experiment.
    """
    parts = map_chunks(_experiment_chunk, chunk_ranges(0, spec.reps, _CHUNK), (spec,), workers)
    records = sorted((row for part in parts for row in part), key=lambda row: row[0])
    result = ExperimentResult(spec, records)
    bad = result.degenerate_count
    if bad > MAX_DEGENERATE_SHARE * spec.reps:
        raise NumericalError(f"{bad} of {spec.reps} replications were degenerate")

    rho = spec.ar1.rho
    for stat in (Statistic.RHO_LAD, Statistic.RHO_OLS):
        if stat in spec.statistics:
            result.summaries[stat.value] = summarize(result.values(stat), rho)
    if Statistic.T_STAT in spec.statistics and len(result.values(Statistic.T_STAT)) >= 10:
        result.ks["t_stat~normal"] = ks_statistic(result.values(Statistic.T_STAT), Reference.STD_NORMAL)
    if Statistic.NORM_STAT in spec.statistics and spec.reference is not Reference.NONE:
        vals = result.values(Statistic.NORM_STAT)
        vals = vals[np.isfinite(vals)]
        if len(vals) >= 10:
            result.ks[f"norm_stat~{spec.reference.value}"] = ks_statistic(vals, spec.reference)
    return result


def kde_curve(samples, grid) -> np.ndarray:
    """Gaussian-kernel density of ``samples`` on ``grid`` (same bandwidth rule as f0)."""
    x = np.asarray(samples, dtype=float)
    g = np.asarray(grid, dtype=float)
    h = silverman_bandwidth(x)
    out = np.empty(g.shape)
    flat = g.ravel()
    res = out.ravel()
    step = max(1, 2_000_000 // max(x.size, 1))
    for a in range(0, flat.size, step):
        u = (flat[a:a + step, None] - x[None, :]) / h
        res[a:a + step] = np.exp(-0.5 * u * u).sum(axis=1)
    return out / (x.size * h * math.sqrt(2.0 * math.pi))


def qq_data(samples) -> tuple[np.ndarray, np.ndarray]:
    """Standard-normal quantiles at ``(k - 0.5)/N`` against the order statistics."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < 10:
        raise ValidationError("Q-Q data need at least 10 samples")
    p = (np.arange(1, x.size + 1) - 0.5) / x.size
    return stats.norm.ppf(p), x


def ks_statistic(samples, reference: Reference | str) -> float:
    """Sup distance between the empirical CDF and a standard reference CDF."""
    reference = Reference(reference)
    x = np.asarray(samples, dtype=float)
    if x.size < 10:
        raise ValidationError("KS statistic needs at least 10 samples")
    if reference is Reference.NONE:
        raise ValidationError("a reference law is required")
    return float(stats.kstest(x, _CDF[reference]).statistic)


def ks_two_sample(a, b) -> float:
    return float(stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float)).statistic)


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return "" if math.isnan(v) else f"{v:.17g}"


RECORD_COLUMNS = ("cell", "replication", "status", "rho_true") + FIT_COLUMNS


def write_records_csv(results: list[ExperimentResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for res in results:
            rho = res.spec.ar1.rho
            for r, rec, err in res.records:
                if rec is None:
                    w.writerow([res.spec.label, r, err, _fmt(rho)] + [""] * len(FIT_COLUMNS))
                else:
                    row = rec.row()
                    w.writerow([res.spec.label, r, "ok", _fmt(rho)] + [_fmt(row[c]) for c in FIT_COLUMNS])


def write_records_json(results: list[ExperimentResult], path) -> None:
    out = []
    for res in results:
        for r, rec, err in res.records:
            item = {"cell": res.spec.label, "replication": r, "status": "ok" if rec else err,
                    "rho_true": res.spec.ar1.rho}
            if rec is not None:
                item.update({k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in rec.row().items()})
            out.append(item)
    with open(path, "w") as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")


def config_dict(cfg: Ar1Config) -> dict:
    init = cfg.init
    d = {
        "gamma": cfg.gamma,
        "beta": cfg.beta,
        "n": cfg.n,
        "rho": cfg.rho,
        "innovation": cfg.innovation.kind.value,
        "init": init.name,
        "outliers": cfg.outliers.label(),
        "outlier_placement": cfg.outliers.placement.value,
    }
    if hasattr(init, "tail_tol"):
        d["tail_tol"] = init.tail_tol
    if hasattr(init, "kappa_exponent"):
        d["kappa_exponent"] = init.kappa_exponent
        d["kappa"] = cfg.kappa
    return d


def summary_dict(results: list[ExperimentResult]) -> dict:
    out = {}
    for res in results:
        out[res.spec.label or "experiment"] = {
            "config": config_dict(res.spec.ar1),
            "reps": res.spec.reps,
            "degenerate": res.degenerate_count,
            **{k: s.as_dict() for k, s in res.summaries.items()},
            "ks": res.ks,
        }
    return out
