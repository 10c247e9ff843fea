"""Declarative experiment files (TOML) with sections [domain], [walk], [experiment], [output].

Unknown sections and keys are rejected so a typo cannot silently fall back
to a default.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .domain import DomainSpec
from .errors import ConfigError
from .lab import ExperimentConfig
from .walks import WalkLaw

SECTIONS = {"domain", "walk", "experiment", "output"}
EXPERIMENT_KEYS = {"a", "n_grid", "replicates", "p_max", "k_max", "seed", "workers", "conventions",
                   "p0", "p0_replicates", "p0_cutoff", "h", "step_cap"}
OUTPUT_KEYS = {"dir", "plots", "plot_data", "histogram"}


@dataclass(frozen=True)
class OutputOptions:
    dir: str = "results"
    plots: bool = True
    plot_data: bool = True
    histogram: bool = False


def parse_config(data: dict, seed: int | None = None, workers: int | None = None
                 ) -> tuple[ExperimentConfig, OutputOptions]:
    unknown = set(data) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown section(s) {sorted(unknown)}")
    for name in ("domain", "experiment"):
        if name not in data:
            raise ConfigError(f"missing [{name}] section")
    spec = DomainSpec.from_config(data["domain"])
    law = WalkLaw.from_config(data.get("walk", {"kind": "simple"}), spec.dimension)

    ex = dict(data["experiment"])
    unknown = set(ex) - EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"experiment: unknown key(s) {sorted(unknown)}")
    for key in ("a", "n_grid", "replicates"):
        if key not in ex:
            raise ConfigError(f"experiment.{key} is required")
    if seed is not None:
        ex["seed"] = seed
    if workers is not None:
        ex["workers"] = workers
    if "seed" not in ex:
        raise ConfigError("experiment.seed is required (or pass --seed)")
    try:
        cfg = ExperimentConfig(law=law, spec=spec, a=tuple(ex.pop("a")),
                               n_grid=tuple(ex.pop("n_grid")), replicates=int(ex.pop("replicates")),
                               **{k: (tuple(v) if k == "conventions" else v) for k, v in ex.items()})
    except TypeError as exc:
        raise ConfigError(f"experiment: {exc}") from exc

    out = dict(data.get("output", {}))
    unknown = set(out) - OUTPUT_KEYS
    if unknown:
        raise ConfigError(f"output: unknown key(s) {sorted(unknown)}")
    for key in ("plots", "plot_data", "histogram"):
        if key in out and not isinstance(out[key], bool):
            raise ConfigError(f"output.{key} must be true or false")
    return cfg, OutputOptions(**out)


def read_config(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return data


def load_config(path, seed: int | None = None, workers: int | None = None
                ) -> tuple[ExperimentConfig, OutputOptions]:
    return parse_config(read_config(path), seed, workers)


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.semantic(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
