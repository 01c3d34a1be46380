"""Flat ``key = value`` experiment configuration files."""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

KEYS = (
    "algorithm", "dataset", "synth.n", "synth.d", "synth.kappa", "lambda", "tau", "sketch",
    "seed", "max_iters", "replications", "l_alg", "l_hat", "sigma", "l_s", "out_dir",
)
SKETCH_KINDS = ("coordinate", "gaussian", "identity", "whitened")

Auto = Optional[float]  # None means "estimate from the objective"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "sgn"
    dataset: Optional[str] = None
    synth_n: int = 500
    synth_d: int = 20
    synth_kappa: float = 10.0
    reg: Auto = None
    tau: int = 1
    sketch: str = "coordinate"
    seed: int = 0
    max_iters: int = 1000
    replications: int = 1
    l_alg: Auto = None
    l_hat: Auto = None
    sigma: Auto = None
    l_s: Auto = None
    out_dir: str = "runs"

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if self.tau < 1:
            raise ConfigError("tau must be >= 1")
        if self.sketch not in SKETCH_KINDS:
            raise ConfigError(f"sketch must be one of {SKETCH_KINDS}, got {self.sketch!r}")
        if self.dataset is not None and not os.path.exists(self.dataset):
            raise ConfigError(f"dataset file not found: {self.dataset}")

    def with_value(self, key: str, value) -> "ExperimentConfig":
        """Copy with one config-file key (e.g. ``l_alg``) replaced."""
        return replace(self, **{_FIELD[key]: value})


_FIELD = {
    "algorithm": "algorithm", "dataset": "dataset", "synth.n": "synth_n", "synth.d": "synth_d",
    "synth.kappa": "synth_kappa", "lambda": "reg", "tau": "tau", "sketch": "sketch", "seed": "seed",
    "max_iters": "max_iters", "replications": "replications", "l_alg": "l_alg", "l_hat": "l_hat",
    "sigma": "sigma", "l_s": "l_s", "out_dir": "out_dir",
}
_INTS = {"synth_n", "synth_d", "tau", "seed", "max_iters", "replications"}
_AUTO = {"reg", "l_alg", "l_hat", "sigma", "l_s"}


def _convert(name: str, raw: str, lineno: int):
    try:
        if name in _INTS:
            return int(raw)
        if name in _AUTO:
            return None if raw.lower() == "auto" else float(raw)
        if name == "synth_kappa":
            return float(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {raw!r} for {name}") from None
    return raw


def parse_config(text: str, base_dir: Union[str, Path, None] = None) -> ExperimentConfig:
    """Parse config text; relative dataset/out_dir paths resolve against ``base_dir``."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        name = _FIELD[key]
        if name in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[name] = _convert(name, raw, lineno)
    if base_dir is not None:
        for name in ("dataset", "out_dir"):
            if values.get(name) and not os.path.isabs(values[name]):
                values[name] = str(Path(base_dir) / values[name])
    if values.get("dataset") == "":
        values["dataset"] = None
    return ExperimentConfig(**values)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key in KEYS:
        v = getattr(cfg, _FIELD[key])
        if v is None:
            v = "" if key == "dataset" else "auto"
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"
