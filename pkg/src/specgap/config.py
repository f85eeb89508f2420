"""Experiment configuration: a flat ``key = value`` format with ``[sections]``.

Example::

    [run]
    experiment = quasimode
    [field]
    family = cos_product
    [sweep]
    h = 0.005, 0.0035, 0.0025

Blank lines and ``#`` comments are ignored.  Values are numbers, strings or
comma-separated lists.  Every error carries the offending line number.

The parser is hand-written rather than built on :mod:`configparser` so that
semantic errors (e.g. an ascending h-sweep) can be anchored to a line.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError
from .fields import FAMILIES

EXPERIMENTS = ("bands", "model2d", "supercell", "quasimode", "gaps", "localization", "verify-identities")
RECIPES = ("point_gaussian", "model_rescaled", "cylinder")

# section -> key -> (kind, default); kind in {"float", "int", "str", "floats", "ints"}
SCHEMA: dict = {
    "run": {"experiment": ("str", None), "seed": ("int", 0)},
    "field": {"family": ("str", "sin2_wells")},
    "sweep": {"h": ("floats", [0.04, 0.028, 0.02, 0.014, 0.01, 0.007, 0.005])},
    "grid": {"per_unit": ("int", 16), "cells": ("int", 3), "spacing_exponent": ("float", 0.75),
             "spacing_factor": ("float", 1.0), "halfwidth": ("float", 2.5)},
    "solver": {"m": ("int", 10), "tol": ("float", 1e-9), "richardson": ("int", 1)},
    "bands": {"k": ("int", 1), "b_min": ("float", -1.0), "b_max": ("float", 4.0), "b_step": ("float", 0.05),
              "J": ("int", 5)},
    "quasimode": {"recipe": ("str", "model_rescaled"), "target_mu": ("float", 1.5), "j": ("int", 1),
                  "r1": ("float", 0.25), "r2": ("float", 0.4), "clip_tol": ("float", 1e-8),
                  "b_lo": ("float", 0.0), "b_hi": ("float", 1.0), "L": ("float", 1.0)},
    "gaps": {"eps0": ("float", 0.9), "eps1": ("float", 0.9), "safety": ("float", 0.25), "m_ref": ("int", 10)},
    "identities": {"k": ("ints", [1, 2]), "alpha": ("floats", [0.5, 2.0, 3.0]),
                   "h": ("floats", [0.1, 0.05, 0.02]), "beta": ("floats", [-0.5, 0.0, 0.3])},
    "output": {"dir": ("str", "specgap-out")},
}


@dataclass
class ExperimentConfig:
    experiment: str
    sections: dict
    lines: dict = field(default_factory=dict, compare=False)

    def get(self, section, key):
        return self.sections[section][key]

    @property
    def h_sweep(self):
        return list(self.sections["sweep"]["h"])

    @property
    def field_params(self):
        return {k: v for k, v in self.sections["field"].items() if k != "family"}

    def normalized(self) -> str:
        return normalize(self)

    def digest(self) -> str:
        return hashlib.sha256(self.normalized().encode()).hexdigest()


def _fmt(v):
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_scalar(text):
    t = text.strip()
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _coerce(kind, raw, line):
    try:
        if kind == "str":
            if not raw:
                raise ValueError("empty value")
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if not parts:
            raise ValueError("empty list")
        return [int(p) for p in parts] if kind == "ints" else [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"cannot read {raw!r} as {kind}: {exc}", line) from None


def parse_text(text: str, experiment: str = None) -> ExperimentConfig:
    """Parse and validate configuration text; ``experiment`` overrides ``[run]``."""
    raw: dict = {}
    lines: dict = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", no)
            raw.setdefault(section, {})
            continue
        if "=" not in s:
            raise ConfigError(f"expected 'key = value', got {s!r}", no)
        if section is None:
            raise ConfigError("key outside of any [section]", no)
        key, val = (p.strip() for p in s.split("=", 1))
        if key in raw[section]:
            raise ConfigError(f"duplicate key {section}.{key}", no)
        raw[section][key] = val
        lines[(section, key)] = no
    sections: dict = {}
    for sec, keys in SCHEMA.items():
        out = {}
        given = raw.get(sec, {})
        for key, (kind, default) in keys.items():
            if key in given:
                out[key] = _coerce(kind, given[key], lines[(sec, key)])
            else:
                out[key] = list(default) if isinstance(default, list) else default
        for key, val in given.items():
            if key in keys:
                continue
            if sec != "field":
                raise ConfigError(f"unknown key {sec}.{key}", lines[(sec, key)])
            out[key] = _parse_scalar(val)
        sections[sec] = out
    if experiment is not None:
        sections["run"]["experiment"] = experiment
    cfg = ExperimentConfig(sections["run"]["experiment"], sections, lines)
    validate(cfg)
    return cfg


def load(path, experiment: str = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_text(fh.read(), experiment)


def validate(cfg: ExperimentConfig):
    ln = lambda sec, key: cfg.lines.get((sec, key))
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; expected one of {', '.join(EXPERIMENTS)}",
                          ln("run", "experiment"))
    fam = cfg.get("field", "family")
    if fam not in FAMILIES:
        raise ConfigError(f"unknown field family {fam!r}", ln("field", "family"))
    hs = cfg.h_sweep
    if any(not (h > 0 and math.isfinite(h)) for h in hs):
        raise ConfigError("h_sweep values must be positive", ln("sweep", "h"))
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ConfigError("h_sweep must be strictly decreasing", ln("sweep", "h"))
    if cfg.get("quasimode", "recipe") not in RECIPES:
        raise ConfigError(f"recipe must be one of {', '.join(RECIPES)}", ln("quasimode", "recipe"))
    if not 0 < cfg.get("quasimode", "r1") < cfg.get("quasimode", "r2"):
        raise ConfigError("need 0 < r1 < r2", ln("quasimode", "r1"))
    if not 0 <= cfg.get("gaps", "safety") <= 0.5:
        raise ConfigError("safety must lie in [0, 0.5]", ln("gaps", "safety"))
    if cfg.get("bands", "b_step") <= 0 or cfg.get("bands", "b_max") <= cfg.get("bands", "b_min"):
        raise ConfigError("band grid needs b_min < b_max and b_step > 0", ln("bands", "b_step"))
    if cfg.get("solver", "m") < 1:
        raise ConfigError("solver.m must be >= 1", ln("solver", "m"))


def check_output_dir(path):
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path!r} is not writable")


def normalize(cfg: ExperimentConfig) -> str:
    """Canonical text: all sections in schema order, keys sorted, values in canonical form."""
    out = []
    for sec in SCHEMA:
        out.append(f"[{sec}]")
        for key in sorted(cfg.sections[sec]):
            out.append(f"{key} = {_fmt(cfg.sections[sec][key])}")
        out.append("")
    return "\n".join(out)


def to_jsonable(cfg: ExperimentConfig) -> Any:
    return {sec: dict(sorted(vals.items())) for sec, vals in cfg.sections.items()}
