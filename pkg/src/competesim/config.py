"""Experiment configuration: a versioned YAML document with one section per task.

Example::

    version: 1
    task: supervised            # supervised | cf | theory
    rng_seed: 0
    replicates: 5
    supervised:
      source: {kind: gaussian_mixture, num_classes: 4, dim: 64, separation: 4.0, sigma: 1.0}
      learner: {kind: nearest_neighbor}
      k: [1, 2, 4]
      alpha: [0, 2, inf]
      rounds: 2000
      seed_size: 3

An empirical source reads a CSV instead::

      source: {kind: dataset, path: adult.csv, label: income,
               categorical: [workclass, sex], group: sex}

Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import CompetesimError, ConfigError
from .learners import LearnerSpec

SCHEMA_VERSION = 1
TASKS = ("supervised", "cf", "theory")
OUTPUT_ENV = "COMPETESIM_OUTPUT"


def parse_alpha(value) -> float:
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            value = float(v)
        except ValueError:
            raise ConfigError(f"alpha must be a number or 'inf', got {value!r}") from None
    value = float(value)
    if math.isnan(value) or value < 0:
        raise ConfigError(f"alpha must be >= 0, got {value}")
    return value


def _alpha_out(a: float):
    return "inf" if math.isinf(a) else a


def _num(value, name: str, kind=float, minimum=None):
    try:
        out = kind(float(value)) if kind is int and not isinstance(value, bool) else kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be {kind.__name__}, got {value!r}") from None
    if kind is int and float(value) != out:
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and out < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {out}")
    return out


def _grid(value, name: str, parse) -> tuple:
    items = value if isinstance(value, (list, tuple)) else [value]
    if not items:
        raise ConfigError(f"{name} grid must be nonempty")
    return tuple(parse(v) for v in items)


def _check_keys(section: dict, allowed, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(map(str, extra))}")


@dataclass(frozen=True)
class SupervisedSpec:
    source: dict = field(default_factory=lambda: {"kind": "gaussian_mixture", "num_classes": 4, "dim": 64,
                                                  "separation": 4.0, "sigma": 1.0})
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    k: tuple = (1, 2, 4)
    alpha: tuple = (0.0, 2.0, 8.0)
    per_user_alpha: bool = False
    clamp_negative: bool = True
    rounds: int = 2000
    seed_size: int = 3
    test_fraction: float = 0.2
    test_size: int = 2000

    @classmethod
    def from_dict(cls, d: dict) -> "SupervisedSpec":
        _check_keys(d, [f.name for f in fields(cls)], "supervised")
        kw: dict[str, Any] = {}
        if "source" in d:
            src = d["source"]
            if not isinstance(src, dict) or "kind" not in src:
                raise ConfigError("supervised.source must be a mapping with a 'kind'")
            kw["source"] = dict(src)
        if "learner" in d:
            lrn = d["learner"]
            _check_keys(lrn, ["kind", "options", "preset"], "supervised.learner")
            try:
                kw["learner"] = LearnerSpec(lrn.get("kind", "nearest_neighbor"), dict(lrn.get("options") or {}),
                                            lrn.get("preset"))
            except CompetesimError as exc:
                raise ConfigError(f"supervised.learner: {exc}") from None
        if "k" in d:
            kw["k"] = _grid(d["k"], "k", lambda v: _num(v, "k", int, 1))
        if "alpha" in d:
            kw["alpha"] = _grid(d["alpha"], "alpha", parse_alpha)
        for b in ("per_user_alpha", "clamp_negative"):
            if b in d:
                kw[b] = bool(d[b])
        if "rounds" in d:
            kw["rounds"] = _num(d["rounds"], "rounds", int, 1)
        if "seed_size" in d:
            kw["seed_size"] = _num(d["seed_size"], "seed_size", int, 0)
        if "test_size" in d:
            kw["test_size"] = _num(d["test_size"], "test_size", int, 1)
        if "test_fraction" in d:
            tf = _num(d["test_fraction"], "test_fraction", float, 0.0)
            if tf >= 1:
                raise ConfigError("test_fraction must be < 1")
            kw["test_fraction"] = tf
        return cls(**kw)

    def to_dict(self) -> dict:
        return {"source": dict(self.source), "learner": self.learner.to_dict(), "k": list(self.k),
                "alpha": [_alpha_out(a) for a in self.alpha], "per_user_alpha": self.per_user_alpha,
                "clamp_negative": self.clamp_negative, "rounds": self.rounds, "seed_size": self.seed_size,
                "test_fraction": self.test_fraction, "test_size": self.test_size}


@dataclass(frozen=True)
class CFSpec:
    r: int = 8
    m: int = 16
    k: tuple = (1, 2, 4, 8)
    rounds: int = 20_000
    latent_dim: int = 4
    rank: int = 3
    gamma: float = 0.1
    lam: float = 1e-4
    optimistic: bool = False
    user_reward: str = "outcome"
    eval_every: int = 1000

    @classmethod
    def from_dict(cls, d: dict) -> "CFSpec":
        _check_keys(d, [f.name for f in fields(cls)], "cf")
        kw: dict[str, Any] = {}
        for name in ("r", "m", "rounds", "latent_dim", "rank", "eval_every"):
            if name in d:
                kw[name] = _num(d[name], name, int, 1)
        for name in ("gamma", "lam"):
            if name in d:
                kw[name] = _num(d[name], name, float, 0.0)
        if "k" in d:
            kw["k"] = _grid(d["k"], "k", lambda v: _num(v, "k", int, 1))
        if "optimistic" in d:
            kw["optimistic"] = bool(d["optimistic"])
        if "user_reward" in d:
            if d["user_reward"] not in ("outcome", "preference"):
                raise ConfigError("cf.user_reward must be 'outcome' or 'preference'")
            kw["user_reward"] = d["user_reward"]
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["k"] = list(self.k)
        return out

    def market_options(self) -> dict:
        return {"latent_dim": self.latent_dim, "rank": self.rank, "gamma": self.gamma, "lam": self.lam,
                "optimistic": self.optimistic, "user_reward": self.user_reward, "eval_every": self.eval_every}


@dataclass(frozen=True)
class TheorySpec:
    horizon: int = 10_000
    trials: int = 100_000
    kmeans_rounds: int = 100_000
    kmeans_replicates: int = 10
    oracle_runs: int = 20_000

    @classmethod
    def from_dict(cls, d: dict) -> "TheorySpec":
        _check_keys(d, [f.name for f in fields(cls)], "theory")
        return cls(**{k: _num(v, k, int, 1) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "supervised"
    rng_seed: int = 0
    replicates: int = 5
    output: str | None = None
    supervised: SupervisedSpec = field(default_factory=SupervisedSpec)
    cf: CFSpec = field(default_factory=CFSpec)
    theory: TheorySpec = field(default_factory=TheorySpec)
    version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        d = d or {}
        _check_keys(d, ["version", "task", "rng_seed", "replicates", "output", "supervised", "cf", "theory"],
                    "config")
        version = _num(d.get("version", SCHEMA_VERSION), "version", int)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {version}; this build reads version {SCHEMA_VERSION}")
        task = d.get("task", "supervised")
        if task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
        seed = _num(d.get("rng_seed", 0), "rng_seed", int, 0)
        if seed >= 2 ** 64:
            raise ConfigError("rng_seed must fit in 64 bits")
        return cls(task=task, rng_seed=seed,
                   replicates=_num(d.get("replicates", 5), "replicates", int, 1),
                   output=None if d.get("output") is None else str(d["output"]),
                   supervised=SupervisedSpec.from_dict(d.get("supervised") or {}),
                   cf=CFSpec.from_dict(d.get("cf") or {}),
                   theory=TheorySpec.from_dict(d.get("theory") or {}),
                   version=version)

    def to_dict(self) -> dict:
        """Everything that determines results (the output directory is excluded)."""
        out = {"version": self.version, "task": self.task, "rng_seed": self.rng_seed,
               "replicates": self.replicates}
        if self.task == "supervised":
            out["supervised"] = self.supervised.to_dict()
        elif self.task == "cf":
            out["cf"] = self.cf.to_dict()
        else:
            out["theory"] = self.theory.to_dict()
        return out

    def with_overrides(self, seed: int | None = None, replicates: int | None = None,
                       task: str | None = None) -> "ExperimentConfig":
        kw = {}
        if seed is not None:
            if not 0 <= seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            kw["rng_seed"] = seed
        if replicates is not None:
            if replicates < 1:
                raise ConfigError("--replicates must be >= 1")
            kw["replicates"] = replicates
        if task is not None:
            kw["task"] = task
        return replace(self, **kw)

    def output_dir(self, default: str) -> Path:
        return Path(self.output or os.environ.get(OUTPUT_ENV) or default)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(data)
