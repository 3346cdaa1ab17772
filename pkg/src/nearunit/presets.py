"""Versioned experiment designs shipped as JSON under ``preset_data/``."""

from __future__ import annotations

import itertools
import json
from importlib import resources

from .ar1_sim import Ar1Config, FullPastInit, OutlierSpec, TruncatedInit, ZeroInit
from .errors import ValidationError
from .innovations import attributes
from .limit_dist import LimitLawConfig
from .montecarlo import ExperimentSpec

NAMES = ("table1", "table2", "table3", "table4", "fig1", "fig2", "fig3", "fig4")


def load(name: str) -> dict:
    if name not in NAMES:
        raise ValidationError(f"unknown preset {name!r}; choose from {', '.join(NAMES)}")
    text = resources.files(__package__).joinpath("preset_data", f"{name}.json").read_text()
    return json.loads(text)


def build_init(name: str, kappa_exp: float = 1.3, tail_tol: float = 1e-8):
    if name == "zero":
        return ZeroInit()
    if name == "full-past":
        return FullPastInit(tail_tol)
    if name == "truncated":
        return TruncatedInit(kappa_exp)
    raise ValidationError(f"unknown initialization {name!r}")


def build_ar1(cell: dict) -> Ar1Config:
    """Ar1Config from a flat mapping of the CLI knob names."""
    outliers = OutlierSpec.parse(cell.get("outliers", "none"), cell.get("outlier_placement", "innovation"))
    init = build_init(cell.get("init", "zero"), cell.get("kappa_exp", 1.3), cell.get("tail_tol", 1e-8))
    return Ar1Config(
        float(cell["gamma"]),
        float(cell["beta"]),
        int(cell["n"]),
        attributes(cell.get("innovation", "normal")),
        init,
        outliers,
    )


def cell_label(cell: dict) -> str:
    return f"beta={cell['beta']:g},gamma={cell['gamma']:g},n={cell['n']},{cell.get('innovation', 'normal')}"


def cells(preset: dict) -> list[dict]:
    """Expand ``grid`` (cartesian product, in key order) or return ``cells``."""
    if "cells" in preset:
        return [dict(c) for c in preset["cells"]]
    grid = preset["grid"]
    keys = list(grid)
    return [{**preset.get("fixed", {}), **dict(zip(keys, combo))} for combo in itertools.product(*grid.values())]


def experiment_specs(preset: dict, master_seed: int, reps: int | None = None) -> list[ExperimentSpec]:
    if preset["kind"] != "experiment":
        raise ValidationError(f"preset {preset['name']!r} is not an experiment preset")
    reps = preset["reps"] if reps is None else reps
    reference = preset.get("reference", "none")
    return [ExperimentSpec(build_ar1(c), reps, master_seed, reference=reference, label=cell_label(c))
            for c in cells(preset)]


def limit_configs(preset: dict) -> list[tuple[str, LimitLawConfig]]:
    if preset["kind"] != "limit":
        raise ValidationError(f"preset {preset['name']!r} is not a limit-law preset")
    out = []
    for c in cells(preset):
        route = c.get("route", preset.get("route", "gaussian"))
        cfg = LimitLawConfig(float(c["gamma"]), grid_m=int(c.get("grid", 2000)), route=route, n=c.get("n"))
        out.append((f"gamma={c['gamma']:g}", cfg))
    return out
