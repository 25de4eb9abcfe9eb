"""``key = value`` run configuration with flag-over-file precedence."""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, fields, asdict
from pathlib import Path

from .model import (DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_SHARPNESS, DEFAULT_SLOPE_SD,
                    LikelihoodKind)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    sigma_upper: str = "auto"
    slope_sd: float = DEFAULT_SLOPE_SD
    sharpness: float = DEFAULT_SHARPNESS
    likelihood: str = "normal"
    samples: int = 800
    chains: int = 4
    warmup: int = 500
    step_size: float = 0.1
    leapfrog_steps: int = 32
    target_accept: float = 0.8
    seed: int = 0

    def __post_init__(self):
        self.likelihood = LikelihoodKind.parse(self.likelihood).value
        if str(self.sigma_upper).strip().lower() == "auto":
            self.sigma_upper = "auto"
        else:
            try:
                self.sigma_upper = float(self.sigma_upper)
            except ValueError:
                raise ConfigError(f"sigma_upper must be 'auto' or a number, got {self.sigma_upper!r}") from None

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def sigma_upper_value(self):
        return None if self.sigma_upper == "auto" else float(self.sigma_upper)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def resolve_config(path=None, overrides: "dict | None" = None) -> RunConfig:
    """Defaults, then the config file, then any non-None ``overrides``."""
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = _coerce(k, v) if isinstance(v, str) and k != "likelihood" and k != "sigma_upper" else v
    return RunConfig(**values)


def write_files_atomic(out_dir, files: dict) -> list:
    """Write ``{name: text}`` into ``out_dir`` so that either all files land or none.

    Everything is first written to temporary files in the same directory and
    then renamed into place.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out)
            staged.append((tmp, out / name))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            Path(tmp).unlink(missing_ok=True)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [str(final) for _, final in staged]
