"""Experiment configuration and its INI file format.

Files use ``[section]`` headers with ``key = value`` lines. Every key is
optional; unknown sections or keys are rejected. Example::

    [run]
    variant = provq
    total_steps = 500
    snapshot_steps = 0, 300, 500

    [schedule]
    t_warm = 100
    t_trans = 150
    lambda = 0.5

Overrides use dotted names (``schedule.t_warm=50``) and win over file values.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

from .curriculum import Schedule
from .errors import ConfigError
from .topodisc import TopoDiscConfig

VARIANTS = ("vanilla_vq", "soft_only", "warmup_only", "provq")


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (64, 64)
    d_lat: int = 2


@dataclass(frozen=True)
class QuantizerConfig:
    K: int = 64
    init_std: float | None = None  # None -> 1/K
    kmeans_iters: int = 100


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: TopoDiscConfig = field(default_factory=TopoDiscConfig)
    dataset_csv: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    quantizer: QuantizerConfig = field(default_factory=QuantizerConfig)
    schedule: Schedule = field(default_factory=Schedule)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    variant: str = "provq"
    total_steps: int = 500
    batch_size: int | None = None  # None -> full dataset
    eval_every: int = 10
    snapshot_steps: tuple = (0, 300, 500)
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"run.variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.total_steps < 0:
            raise ConfigError(f"run.total_steps must be >= 0, got {self.total_steps}")
        if self.eval_every < 1:
            raise ConfigError(f"run.eval_every must be >= 1, got {self.eval_every}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"run.batch_size must be >= 1, got {self.batch_size}")
        bad = [s for s in self.snapshot_steps if not 0 <= s <= self.total_steps]
        if bad:
            raise ConfigError(f"run.snapshot_steps outside [0, {self.total_steps}]: {bad}")
        if self.quantizer.K < 2:
            raise ConfigError(f"quantizer.K must be >= 2, got {self.quantizer.K}")
        if self.model.d_lat < 1 or any(h < 1 for h in self.model.hidden):
            raise ConfigError(f"model widths must be positive, got {self.model}")

    def effective_schedule(self) -> Schedule:
        """Schedule with the variant's forced settings applied."""
        s = self.schedule
        if self.variant == "vanilla_vq":
            return replace(s, t_warm=0, t_trans=0, kind="hard")
        if self.variant == "soft_only":
            return replace(s, t_warm=0)
        if self.variant == "warmup_only":
            return replace(s, kind="hard")
        return s


# -- (de)serialization ------------------------------------------------------


def _ints(text):
    return tuple(int(v) for v in _split(text))


def _floats(text):
    return tuple(float(v) for v in _split(text))


def _split(text):
    text = text.strip().strip("()[]")
    return [v.strip() for v in text.replace(";", ",").split(",") if v.strip()]


def _point(text):
    p = _floats(text)
    if len(p) != 2:
        raise ValueError(f"expected two numbers, got {text!r}")
    return p


def _vertices(text):
    p = _floats(text)
    if len(p) != 6:
        raise ValueError(f"expected six numbers (three x,y pairs), got {text!r}")
    return (p[0:2], p[2:4], p[4:6])


def _opt_int(text):
    return None if text.strip().lower() in ("", "full", "none") else int(text)


def _opt_float(text):
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


def _opt_str(text):
    return text.strip() or None


# (section, key) -> (parser, formatter)
_KEYS = {
    ("run", "variant"): (str.strip, str),
    ("run", "total_steps"): (int, str),
    ("run", "batch_size"): (_opt_int, lambda v: "full" if v is None else str(v)),
    ("run", "eval_every"): (int, str),
    ("run", "snapshot_steps"): (_ints, lambda v: ", ".join(map(str, v))),
    ("run", "seed"): (int, str),
    ("dataset", "csv"): (_opt_str, lambda v: v or ""),
    ("dataset", "n_disk"): (int, str),
    ("dataset", "n_triangle"): (int, str),
    ("dataset", "disk_center"): (_point, lambda v: ", ".join(map(repr, v))),
    ("dataset", "disk_radius"): (float, repr),
    ("dataset", "triangle_vertices"): (
        _vertices, lambda v: "; ".join(", ".join(map(repr, p)) for p in v)),
    ("dataset", "seed"): (int, str),
    ("model", "hidden"): (_ints, lambda v: ", ".join(map(str, v))),
    ("model", "d_lat"): (int, str),
    ("quantizer", "K"): (int, str),
    ("quantizer", "beta"): (float, repr),
    ("quantizer", "init_std"): (_opt_float, lambda v: "auto" if v is None else repr(v)),
    ("quantizer", "kmeans_iters"): (int, str),
    ("schedule", "t_warm"): (int, str),
    ("schedule", "t_trans"): (int, str),
    ("schedule", "lambda"): (float, repr),
    ("schedule", "kind"): (str.strip, str),
    ("optimizer", "lr"): (float, repr),
    ("optimizer", "betas"): (_floats, lambda v: ", ".join(map(repr, v))),
    ("optimizer", "eps"): (float, repr),
}


def to_dict(cfg: ExperimentConfig) -> dict:
    """Nested ``{section: {key: value}}`` view, JSON-friendly."""
    d, s = cfg.dataset, cfg.schedule
    return {
        "run": {
            "variant": cfg.variant,
            "total_steps": cfg.total_steps,
            "batch_size": cfg.batch_size,
            "eval_every": cfg.eval_every,
            "snapshot_steps": list(cfg.snapshot_steps),
            "seed": cfg.seed,
        },
        "dataset": {
            "csv": cfg.dataset_csv,
            "n_disk": d.n_disk,
            "n_triangle": d.n_triangle,
            "disk_center": list(d.disk_center),
            "disk_radius": d.disk_radius,
            "triangle_vertices": [list(p) for p in d.triangle_vertices],
            "seed": d.seed,
        },
        "model": {"hidden": list(cfg.model.hidden), "d_lat": cfg.model.d_lat},
        "quantizer": {
            "K": cfg.quantizer.K,
            "beta": s.beta,
            "init_std": cfg.quantizer.init_std,
            "kmeans_iters": cfg.quantizer.kmeans_iters,
        },
        "schedule": {"t_warm": s.t_warm, "t_trans": s.t_trans, "lambda": s.lam, "kind": s.kind},
        "optimizer": {
            "lr": cfg.optimizer.lr,
            "betas": list(cfg.optimizer.betas),
            "eps": cfg.optimizer.eps,
        },
    }


def from_dict(data: dict) -> ExperimentConfig:
    for section, body in data.items():
        for key in body:
            if (section, key) not in _KEYS:
                raise ConfigError(f"unknown config key {section}.{key}")
    base = to_dict(ExperimentConfig())
    merged = {sec: {**vals, **data.get(sec, {})} for sec, vals in base.items()}
    r, d, m, q, s, o = (merged[k] for k in
                        ("run", "dataset", "model", "quantizer", "schedule", "optimizer"))
    try:
        return ExperimentConfig(
            dataset=TopoDiscConfig(
                n_disk=int(d["n_disk"]),
                n_triangle=int(d["n_triangle"]),
                disk_center=tuple(float(v) for v in d["disk_center"]),
                disk_radius=float(d["disk_radius"]),
                triangle_vertices=tuple(tuple(float(v) for v in p) for p in d["triangle_vertices"]),
                seed=int(d["seed"]),
            ),
            dataset_csv=d["csv"],
            model=ModelConfig(hidden=tuple(int(h) for h in m["hidden"]), d_lat=int(m["d_lat"])),
            quantizer=QuantizerConfig(
                K=int(q["K"]),
                init_std=None if q["init_std"] is None else float(q["init_std"]),
                kmeans_iters=int(q["kmeans_iters"]),
            ),
            schedule=Schedule(
                t_warm=int(s["t_warm"]),
                t_trans=int(s["t_trans"]),
                lam=float(s["lambda"]),
                beta=float(q["beta"]),
                kind=str(s["kind"]),
            ),
            optimizer=OptimizerConfig(
                lr=float(o["lr"]), betas=tuple(float(b) for b in o["betas"]), eps=float(o["eps"])
            ),
            variant=str(r["variant"]),
            total_steps=int(r["total_steps"]),
            batch_size=None if r["batch_size"] is None else int(r["batch_size"]),
            eval_every=int(r["eval_every"]),
            snapshot_steps=tuple(int(v) for v in r["snapshot_steps"]),
            seed=int(r["seed"]),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _parse_value(section, key, text):
    try:
        parser, _ = _KEYS[(section, key)]
    except KeyError:
        raise ConfigError(f"unknown config key {section}.{key}") from None
    try:
        return parser(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {text!r} ({exc})") from None


def parse_overrides(items) -> dict:
    """``["schedule.t_warm=50", ...]`` -> ``{"schedule": {"t_warm": 50}}``."""
    out: dict = {}
    for item in items or ():
        name, sep, text = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        out.setdefault(section, {})[key] = _parse_value(section, key, text)
    return out


def loads(text: str, overrides: dict | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str  # keep key case (quantizer.K)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from None
    data: dict = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            data.setdefault(section, {})[key] = _parse_value(section, key, raw)
    for section, body in (overrides or {}).items():
        data.setdefault(section, {}).update(body)
    return from_dict(data)


def load(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return loads(text, overrides)


def dumps(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    raw = to_dict(cfg)
    for section, body in raw.items():
        cp.add_section(section)
        for key, value in body.items():
            _, fmt = _KEYS[(section, key)]
            cp.set(section, key, fmt(value))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
