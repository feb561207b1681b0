"""TOML run configuration with strict validation.

Every key must appear in DEFAULTS; values take the default's type (ints
are accepted where floats are expected).  Errors name the dotted key path
and, when it can be found, the line in the source file.
"""

from __future__ import annotations

import copy
import hashlib
import re
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("eig", "specineq", "resolvent", "control", "plate", "symbols", "quasimode")

DEFAULTS = {
    "experiment": "",
    "seed": 0,
    "threads": 1,
    "output": {"file": ""},
    "grid": {"lengths": [1.0], "n": [200], "bc": "clamped"},
    "eig": {"n_modes": 10, "tol": 1e-4},
    "region": {"boxes": [[[0.0, 0.2]]]},
    "specineq": {"n_modes": 40, "min_mode": 5, "precision": "auto"},
    "resolvent": {"n_modes": 40, "alpha0": 1.0, "localized": True, "points": 21, "tol": 1e-12},
    "control": {"n_modes": 30, "horizon": 1.0, "tol": 1e-6, "min_stages": 3, "max_stages": 12},
    "plate": {"n_modes": 3, "alpha0": 1.0, "localized": False, "dt": 1e-3, "n_steps": 2000, "k": 1},
    "symbols": {"n_samples": 100000, "d": 2, "metric": [], "c0": 0.25, "sigma_floor": 0.1,
                "tol": 1e-12, "inject_negative_td": False},
    "quasimode": {"taus": [20.0, 40.0, 80.0, 160.0], "d": 2, "half_width": 8.0, "n_points": 256,
                  "refine_tol": 0.01},
}

POSITIVE = {"tol", "refine_tol", "dt", "horizon", "alpha0", "half_width", "sigma_floor", "c0"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and line."""


@dataclass
class RunConfig:
    experiment: str
    seed: int
    threads: int
    sections: dict
    sha256: str
    source: str = ""

    def __getitem__(self, name: str) -> dict:
        return self.sections[name]

    @property
    def output_file(self) -> str:
        return self.sections["output"]["file"] or f"{self.experiment}.csv"


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return None


def _fail(text: str, path: str, msg: str) -> ConfigError:
    leaf = path.rsplit(".", 1)[-1]
    line = _line_of(text, leaf) if text else None
    where = f" (line {line})" if line else ""
    return ConfigError(f"{path}: {msg}{where}")


def _merge(defaults: dict, given: dict, text: str, prefix: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise _fail(text, path, "unknown key")
        ref = defaults[key]
        if isinstance(ref, dict):
            if not isinstance(value, dict):
                raise _fail(text, path, "expected a table")
            out[key] = _merge(ref, value, text, path + ".")
            continue
        out[key] = _coerce(ref, value, text, path)
    return out


def _coerce(ref, value, text, path):
    if isinstance(ref, bool):
        if not isinstance(value, bool):
            raise _fail(text, path, f"expected true/false, got {value!r}")
        return value
    if isinstance(ref, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise _fail(text, path, f"expected an integer, got {value!r}")
        return value
    if isinstance(ref, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _fail(text, path, f"expected a number, got {value!r}")
        value = float(value)
        if path.rsplit(".", 1)[-1] in POSITIVE and not value > 0:
            raise _fail(text, path, f"must be positive, got {value!r}")
        return value
    if isinstance(ref, str):
        if not isinstance(value, str):
            raise _fail(text, path, f"expected a string, got {value!r}")
        return value
    if isinstance(ref, list):
        if not isinstance(value, list):
            raise _fail(text, path, f"expected an array, got {value!r}")
        return value
    raise _fail(text, path, "unsupported value")


def _validate(cfg: dict, text: str) -> None:
    exp = cfg["experiment"]
    if exp not in EXPERIMENTS:
        raise _fail(text, "experiment", f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
    if cfg["threads"] < 1:
        raise _fail(text, "threads", "must be at least 1")
    grid = cfg["grid"]
    lengths, ns = grid["lengths"], grid["n"]
    if not (1 <= len(lengths) <= 2) or len(lengths) != len(ns):
        raise _fail(text, "grid.lengths", "need one length and one count per axis (1 or 2 axes)")
    if any(not isinstance(v, (int, float)) or v <= 0 for v in lengths):
        raise _fail(text, "grid.lengths", "lengths must be positive numbers")
    if any(not isinstance(v, int) or v < 1 for v in ns):
        raise _fail(text, "grid.n", "counts must be positive integers")
    if grid["bc"] not in ("clamped", "hinged"):
        raise _fail(text, "grid.bc", f"expected 'clamped' or 'hinged', got {grid['bc']!r}")
    boxes = cfg["region"]["boxes"]
    if not boxes:
        raise _fail(text, "region.boxes", "need at least one box")
    for i, box in enumerate(boxes):
        path = f"region.boxes[{i}]"
        try:
            pairs = [(float(lo), float(hi)) for lo, hi in box]
        except (TypeError, ValueError):
            raise _fail(text, "region.boxes", f"box {i} must be a list of [lo, hi] pairs") from None
        if len(pairs) != len(lengths):
            raise _fail(text, "region.boxes", f"{path} has {len(pairs)} axes, grid has {len(lengths)}")
        for (lo, hi), L in zip(pairs, lengths):
            if not lo < hi:
                raise _fail(text, "region.boxes", f"{path} is empty")
            if lo < 0 or hi > L:
                raise _fail(text, "region.boxes", f"{path} exceeds the domain [0, {L}]")
    q = cfg["quasimode"]
    taus = q["taus"]
    if len(taus) < 4 or any(b <= a for a, b in zip(taus, taus[1:])) or taus[0] <= 0:
        raise _fail(text, "quasimode.taus", "need at least 4 increasing positive values")
    if cfg["symbols"]["n_samples"] < 1:
        raise _fail(text, "symbols.n_samples", "must be at least 1")


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        if "overwrite" in msg or "already" in msg:
            msg = f"duplicate key: {msg}"
        raise ConfigError(f"{source}: {msg}") from None
    cfg = _merge(DEFAULTS, raw, text)
    _validate(cfg, text)
    sha = hashlib.sha256(text.encode()).hexdigest()
    sections = {k: v for k, v in cfg.items() if isinstance(v, dict)}
    return RunConfig(cfg["experiment"], cfg["seed"], cfg["threads"], sections, sha, source)


def parse_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    return parse_config_text(text, str(p))
