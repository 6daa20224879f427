import copy
import os
from typing import Any, Optional, Sequence

import yaml

CONFIG_PATH = "config/config.yaml"


def load_yaml(path: str) -> Any:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Missing file: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f)


def load_config(path: str = CONFIG_PATH) -> dict:
    return load_yaml(path) or {}


def parse_lattice(text: str) -> list:
    """'128x64x64' -> [128, 64, 64]"""
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ValueError(f"Lattice must look like NxMxK, got '{text}'")
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise ValueError(f"Lattice dimensions must be integers, got '{text}'") from None
    return dims


def apply_overrides(config: dict, lattice: Optional[Sequence[int]] = None,
                    candidates: Optional[int] = None, seed: Optional[int] = None,
                    horizon: Optional[float] = None, plots: Optional[bool] = None) -> dict:
    """Return a copy of config with command-line overrides merged in."""
    merged = copy.deepcopy(config or {})
    if lattice is not None:
        merged.setdefault("domain", {})["lattice"] = list(lattice)
    if candidates is not None:
        merged.setdefault("sampler", {})["candidates"] = candidates
    if seed is not None:
        merged.setdefault("simulation", {})["seed"] = seed
    if horizon is not None:
        # horizon sets both the domain extent in t and the sampled steps
        domain = merged.setdefault("domain", {})
        domain["horizon"] = horizon
        sampler = merged.setdefault("sampler", {})
        sampler["steps"] = int(round(horizon / sampler.get("dt", 0.1)))
    if plots is not None:
        merged.setdefault("output", {})["plots"] = plots
    return merged
