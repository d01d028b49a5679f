"""Flat key = value experiment configs.

One experiment per file; dotted keys form sections, e.g.::

    kind = couple
    seed = 42
    field.name = constant
    field.dim = 1
    grid.horizon = 1.0
    grid.steps = 1000
    n_paths = 10000
    ladder = 0.2, 0.1, 0.05

Lists are comma separated; '#' starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError
from .registry import FIELD_BUILDERS, TERMINAL_BUILDERS

KINDS = ("couple", "solve", "modulus", "oracle", "validate")
ORACLES = ("sgn", "heat", "running-max", "bm-coupling")


def _parse_scalar(tok: str):
    tok = tok.strip()
    low = tok.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        pass
    return tok


def parse_config_text(text: str) -> dict:
    """Parse the flat format into a {dotted key: value} dict."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        val = val.strip()
        if "," in val:
            out[key] = [_parse_scalar(t) for t in val.split(",") if t.strip()]
        elif val == "":
            out[key] = None
        else:
            out[key] = _parse_scalar(val)
    return out


def _section(raw: dict, prefix: str) -> dict:
    plen = len(prefix) + 1
    return {k[plen:]: v for k, v in raw.items() if k.startswith(prefix + ".")}


def _as_list(v) -> list:
    if v is None:
        return []
    return list(v) if isinstance(v, list) else [v]


@dataclass
class ExperimentConfig:
    """A validated, fully-resolved experiment description."""

    kind: str
    seed: int
    workers: int = 1
    field_name: str | None = None
    field_params: dict = dc_field(default_factory=dict)
    terminal_name: str | None = None
    terminal_params: dict = dc_field(default_factory=dict)
    horizon: float = 1.0
    steps: int = 1000
    n_paths: int = 10_000
    ladder: tuple = ()
    base_point: tuple = (0.0,)
    direction: tuple = (1.0,)
    eval_horizon: float | None = None
    couple_tol: float | None = None
    oracle_name: str | None = None
    oracle_params: dict = dc_field(default_factory=dict)

    def resolved(self) -> dict:
        """Full config echo with defaults expanded; sufficient to re-run."""
        out = {
            "kind": self.kind,
            "seed": self.seed,
            "workers": self.workers,
            "grid.horizon": self.horizon,
            "grid.steps": self.steps,
            "n_paths": self.n_paths,
        }
        if self.field_name is not None:
            out["field.name"] = self.field_name
            for k, v in sorted(self.field_params.items()):
                out[f"field.{k}"] = v
        if self.terminal_name is not None:
            out["terminal.name"] = self.terminal_name
            for k, v in sorted(self.terminal_params.items()):
                out[f"terminal.{k}"] = v
        if self.ladder:
            out["ladder"] = list(self.ladder)
        out["base_point"] = list(self.base_point)
        out["direction"] = list(self.direction)
        if self.eval_horizon is not None:
            out["eval_horizon"] = self.eval_horizon
        if self.couple_tol is not None:
            out["couple_tol"] = self.couple_tol
        if self.oracle_name is not None:
            out["oracle.name"] = self.oracle_name
            for k, v in sorted(self.oracle_params.items()):
                out[f"oracle.{k}"] = v
        return out


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate_config(raw)


def validate_config(raw: dict) -> ExperimentConfig:
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    if not isinstance(raw.get("seed"), int):
        raise ConfigError("an explicit integer seed is required")

    cfg = ExperimentConfig(kind=kind, seed=raw["seed"])
    cfg.workers = int(raw.get("workers", 1))
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")

    fsec = _section(raw, "field")
    if fsec or kind in ("couple", "solve", "modulus", "validate"):
        name = fsec.pop("name", None)
        if kind != "oracle" and name is None:
            raise ConfigError("field.name is required for this kind")
        if name is not None:
            if name not in FIELD_BUILDERS:
                raise ConfigError(
                    f"unknown field {name!r}; known: {sorted(FIELD_BUILDERS)}")
            cfg.field_name = name
            cfg.field_params = fsec

    tsec = _section(raw, "terminal")
    if tsec or kind in ("solve", "modulus"):
        name = tsec.pop("name", None)
        if kind in ("solve", "modulus") and name is None:
            raise ConfigError("terminal.name is required for this kind")
        if name is not None:
            if name not in TERMINAL_BUILDERS:
                raise ConfigError(
                    f"unknown terminal {name!r}; known: {sorted(TERMINAL_BUILDERS)}")
            cfg.terminal_name = name
            cfg.terminal_params = tsec

    cfg.horizon = float(raw.get("grid.horizon", 1.0))
    cfg.steps = int(raw.get("grid.steps", 1000))
    if cfg.horizon <= 0 or cfg.steps < 1:
        raise ConfigError("grid.horizon must be > 0 and grid.steps >= 1")
    cfg.n_paths = int(raw.get("n_paths", 10_000))
    if cfg.n_paths < 2:
        raise ConfigError("n_paths must be >= 2")

    ladder = [float(v) for v in _as_list(raw.get("ladder"))]
    if kind in ("couple", "modulus"):
        if not ladder:
            raise ConfigError("a distance ladder is required for this kind")
        arr = np.asarray(ladder)
        if np.any(arr <= 0) or np.any(np.diff(arr) >= 0):
            raise ConfigError("ladder must be positive and strictly decreasing")
    cfg.ladder = tuple(ladder)

    cfg.base_point = tuple(float(v) for v in _as_list(raw.get("base_point", [0.0])))
    cfg.direction = tuple(float(v) for v in _as_list(raw.get("direction", [1.0])))
    if raw.get("eval_horizon") is not None:
        cfg.eval_horizon = float(raw["eval_horizon"])
        if not 0.0 < cfg.eval_horizon <= cfg.horizon:
            raise ConfigError("eval_horizon must lie in (0, grid.horizon]")
    if raw.get("couple_tol") is not None:
        cfg.couple_tol = float(raw["couple_tol"])
        if cfg.couple_tol < 0:
            raise ConfigError("couple_tol must be >= 0")

    osec = _section(raw, "oracle")
    if kind == "oracle":
        name = osec.pop("name", None)
        if name not in ORACLES:
            raise ConfigError(f"oracle.name must be one of {ORACLES}, got {name!r}")
        cfg.oracle_name = name
        cfg.oracle_params = osec

    known_prefixes = ("field.", "terminal.", "oracle.")
    known_keys = {"kind", "seed", "workers", "grid.horizon", "grid.steps",
                  "n_paths", "ladder", "base_point", "direction",
                  "eval_horizon", "couple_tol"}
    for key in raw:
        if key in known_keys or key.startswith(known_prefixes):
            continue
        raise ConfigError(f"unknown config key {key!r}")
    return cfg
