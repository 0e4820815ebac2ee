"""Experiment configuration: ``[section]`` / ``key = value`` text files.

Every key is typed and validated before any compute starts; unknown
sections or keys are rejected with an error naming them.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .model.rein import ABLATIONS, ModelConfig
from .sim import SimParams, SystemKind


class ConfigKeyError(ValueError):
    def __init__(self, key: str, problem: str):
        self.key = key
        super().__init__(f"{key}: {problem}")


@dataclass
class SystemSection:
    kind: str = "springs"
    n_objects: int = 5


@dataclass
class SimSection:
    dt: float = 0.001
    subsample: int = 100
    frames_train: int = 49
    frames_test: int = 99
    n_train: int = 1000
    n_valid: int = 200
    n_test: int = 200
    seed: int = 42
    box: float = 5.0
    spring_k: float = 0.1
    edge_prob: float = 0.5
    charge_strength: float = 1.0
    softening: float = 0.1
    rod_factor: float = 100.0


@dataclass
class ModelSection:
    n_levels: int = 2
    neuron_dim: int = 32
    heads: int = 4
    edge_types: int = 0  # 0: take from the system kind
    tau_start: float = 5.0
    tau_end: float = 0.5
    kl_warmup: int = 10
    per_step_edges: bool = False
    ablation: str = "full"
    teacher_every: int = 10
    context_len: int = 49
    groups: list = field(default_factory=list)


@dataclass
class TrainSection:
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 30
    grad_clip: float = 5.0
    seed: int = 0
    precision: str = "single"


@dataclass
class EvalSection:
    horizons: list = field(default_factory=lambda: [1, 10, 20, 50])
    n_seeds: int = 3


SECTIONS = {"system": SystemSection, "sim": SimSection, "model": ModelSection,
            "train": TrainSection, "eval": EvalSection}


@dataclass
class ExperimentConfig:
    system: SystemSection = field(default_factory=SystemSection)
    sim: SimSection = field(default_factory=SimSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        self.validate()

    # -- derived views ---------------------------------------------------

    @property
    def kind(self) -> SystemKind:
        return SystemKind(self.system.kind)

    @property
    def edge_types(self) -> int:
        return self.model.edge_types or self.kind.n_edge_types

    def sim_params(self) -> SimParams:
        s = self.sim
        return SimParams(dt=s.dt, box=s.box, spring_k=s.spring_k, edge_prob=s.edge_prob,
                         charge_strength=s.charge_strength, softening=s.softening, rod_factor=s.rod_factor)

    def model_config(self, ablation: str | None = None) -> ModelConfig:
        m = self.model
        return ModelConfig(n_objects=self.system.n_objects, neuron_dim=m.neuron_dim, heads=m.heads,
                           edge_types=self.edge_types, context_len=m.context_len,
                           ablation=ablation or m.ablation, per_step_edges=m.per_step_edges,
                           teacher_every=m.teacher_every, groups=tuple(m.groups) if m.groups else None)

    # -- validation ------------------------------------------------------

    def validate(self) -> None:
        def need(ok, key, problem):
            if not ok:
                raise ConfigKeyError(key, problem)

        try:
            SystemKind(self.system.kind)
        except ValueError:
            raise ConfigKeyError("system.kind", f"must be one of {[k.value for k in SystemKind]}") from None
        need(self.system.n_objects >= 1, "system.n_objects", "must be >= 1")
        s = self.sim
        need(s.dt > 0, "sim.dt", "must be positive")
        need(s.subsample >= 1, "sim.subsample", "must be >= 1")
        for key in ("frames_train", "frames_test"):
            need(getattr(s, key) >= 2, f"sim.{key}", "must be >= 2")
        for key in ("n_train", "n_valid", "n_test"):
            need(getattr(s, key) >= 0, f"sim.{key}", "must be >= 0")
        need(s.n_train >= 1, "sim.n_train", "must be >= 1")
        need(s.box > 0, "sim.box", "must be positive")
        need(0 <= s.edge_prob <= 1, "sim.edge_prob", "must be in [0, 1]")
        need(s.softening > 0, "sim.softening", "must be positive")
        m = self.model
        need(m.n_levels in (2, 3), "model.n_levels", "must be 2 or 3")
        need((m.n_levels == 3) == bool(m.groups), "model.groups",
             "required exactly when n_levels = 3 (one group id per object)")
        if m.groups:
            need(len(m.groups) == self.system.n_objects, "model.groups", "needs one entry per object")
            need(min(m.groups) >= 0 and set(m.groups) == set(range(max(m.groups) + 1)), "model.groups",
                 "group ids must be 0..G-1 with every group used")
        need(m.neuron_dim >= 1, "model.neuron_dim", "must be >= 1")
        need(m.heads >= 1 and m.neuron_dim % m.heads == 0, "model.heads", "must divide model.neuron_dim")
        need(m.edge_types == 0 or m.edge_types >= 2, "model.edge_types", "must be 0 (auto) or >= 2")
        need(m.tau_start > 0 and m.tau_end > 0, "model.tau_start", "temperatures must be positive")
        need(m.kl_warmup >= 0, "model.kl_warmup", "must be >= 0")
        need(m.ablation in ABLATIONS, "model.ablation", f"must be one of {list(ABLATIONS)}")
        need(m.teacher_every >= 1, "model.teacher_every", "must be >= 1")
        need(2 <= m.context_len <= s.frames_train, "model.context_len", "must be in [2, sim.frames_train]")
        t = self.train
        need(t.lr >= 0, "train.lr", "must be >= 0")
        need(t.batch_size >= 1, "train.batch_size", "must be >= 1")
        need(t.epochs >= 0, "train.epochs", "must be >= 0")
        need(t.grad_clip >= 0, "train.grad_clip", "must be >= 0")
        need(t.precision in ("single", "double"), "train.precision", "must be 'single' or 'double'")
        e = self.eval
        need(bool(e.horizons) and min(e.horizons) >= 1, "eval.horizons", "must be positive integers")
        need(max(e.horizons) <= s.frames_test - m.context_len, "eval.horizons",
             "longest horizon must fit in sim.frames_test - model.context_len")
        need(e.n_seeds >= 1, "eval.n_seeds", "must be >= 1")

    # -- text I/O --------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            sec = getattr(self, name)
            for f in fields(sec):
                val = getattr(sec, f.name)
                if isinstance(val, list):
                    val = ", ".join(str(v) for v in val)
                elif isinstance(val, bool):
                    val = "true" if val else "false"
                lines.append(f"{f.name} = {val}")
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {name: {f.name: getattr(getattr(self, name), f.name) for f in fields(getattr(self, name))}
                for name in SECTIONS}


def _parse(section: str, f, raw: str) -> Any:
    key = f"{section}.{f.name}"
    typ = f.type
    try:
        if typ == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "list":
            return [int(v) for v in raw.replace(",", " ").split()]
        return raw.strip()
    except ValueError:
        raise ConfigKeyError(key, f"cannot parse {raw!r} as {typ}") from None


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigKeyError("<file>", f"malformed config ({e.__class__.__name__})") from None
    sections = {}
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigKeyError(name, "unknown section")
        cls = SECTIONS[name]
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in cp.items(name):
            if key not in known:
                raise ConfigKeyError(f"{name}.{key}", "unknown key")
            kwargs[key] = _parse(name, known[key], raw)
        sections[name] = cls(**kwargs)
    return ExperimentConfig(**sections)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Inverse of :meth:`ExperimentConfig.to_dict` (e.g. from a run manifest)."""
    sections = {}
    for name, values in data.items():
        if name not in SECTIONS:
            raise ConfigKeyError(name, "unknown section")
        known = {f.name for f in fields(SECTIONS[name])}
        for key in values:
            if key not in known:
                raise ConfigKeyError(f"{name}.{key}", "unknown key")
        sections[name] = SECTIONS[name](**values)
    return ExperimentConfig(**sections)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text("utf-8")
    except OSError as e:
        raise ConfigKeyError(str(path), f"cannot read config ({e.strerror})") from None
    return parse_config(text)
