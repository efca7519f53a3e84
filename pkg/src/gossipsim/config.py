"""Experiment configuration: YAML parsing, validation, canonical digest.

The config dialect is plain YAML with a versioned `config_version` field;
see README for the full schema. Relative dataset paths resolve against the
config file's directory unless GOSSIPSIM_DATA_ROOT overrides the root.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .averaging import AveragingConfig
from .errors import ConfigError
from .nn import Hyperparams, LayerSpec, mlp_arch
from .simulator import SimConfig

CONFIG_VERSION = 1
DATA_ROOT_ENV = "GOSSIPSIM_DATA_ROOT"

TOPOLOGY_KINDS = ("regular", "star", "temporal")


@dataclass
class TopologySpec:
    kind: str
    n: int
    k: int | None = None  # regular / temporal baseline degree


@dataclass
class ModelSpec:
    layer_sizes: list[int] = field(default_factory=lambda: [784, 128, 10])
    hidden_activation: str = "relu"
    init_dist: str = "normal"


@dataclass
class DataSpec:
    images: str
    labels: str
    test_images: str
    test_labels: str
    alpha: float | None = None         # None => IID
    train_subset: int = 10000
    test_subset: int = 2000


@dataclass
class ScheduleSpec:
    t_acquisition: int | tuple[int, int] = 10
    interval_ratio: int = 1


@dataclass
class SimSpec:
    max_ticks: int = 1000
    eval_interval: int = 10
    seed: int = 0
    global_broadcast_tick: int | None = None
    workers: int = 1


@dataclass
class ExperimentConfig:
    mode: str
    topology: TopologySpec
    model: ModelSpec
    training: Hyperparams
    schedule: ScheduleSpec
    averaging: AveragingConfig
    data: DataSpec
    sim: SimSpec
    output_dir: str

    def arch(self) -> list[LayerSpec]:
        return mlp_arch(self.model.layer_sizes, self.model.hidden_activation)

    def sim_config(self) -> SimConfig:
        cfg = SimConfig(
            mode=self.mode,
            arch=self.arch(),
            init_dist=self.model.init_dist,
            hyper=self.training,
            averaging=self.averaging,
            t_acquisition=self.schedule.t_acquisition,
            interval_ratio=self.schedule.interval_ratio,
            max_ticks=self.sim.max_ticks,
            eval_interval=self.sim.eval_interval,
            seed=self.sim.seed,
            alpha=self.data.alpha,
            global_broadcast_tick=self.sim.global_broadcast_tick,
            temporal=self.topology.kind == "temporal",
            workers=self.sim.workers,
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        t_acq = self.schedule.t_acquisition
        return {
            "config_version": CONFIG_VERSION,
            "mode": self.mode,
            "topology": {"kind": self.topology.kind, "n": self.topology.n, "k": self.topology.k},
            "model": {
                "layer_sizes": list(self.model.layer_sizes),
                "hidden_activation": self.model.hidden_activation,
                "init_dist": self.model.init_dist,
            },
            "training": {
                "base_lr": self.training.base_lr,
                "momentum": self.training.momentum,
                "weight_decay": self.training.weight_decay,
                "lr_gamma": self.training.lr_gamma,
                "lr_power": self.training.lr_power,
                "batch_size": self.training.batch_size,
            },
            "schedule": {
                "t_acquisition": list(t_acq) if isinstance(t_acq, tuple) else t_acq,
                "interval_ratio": self.schedule.interval_ratio,
            },
            "averaging": {
                "strategy": self.averaging.strategy,
                "beta": self.averaging.beta,
                "compression_ratio": self.averaging.compression_ratio,
                "fedavg_weighted": self.averaging.fedavg_weighted,
                "post_blend_correction": self.averaging.post_blend_correction,
            },
            "data": {
                "images": self.data.images,
                "labels": self.data.labels,
                "test_images": self.data.test_images,
                "test_labels": self.data.test_labels,
                "alpha": self.data.alpha,
                "train_subset": self.data.train_subset,
                "test_subset": self.data.test_subset,
            },
            "sim": {
                "max_ticks": self.sim.max_ticks,
                "eval_interval": self.sim.eval_interval,
                "seed": self.sim.seed,
                "global_broadcast_tick": self.sim.global_broadcast_tick,
                "workers": self.sim.workers,
            },
            "output": {"directory": self.output_dir},
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _section(raw: dict, name: str, required: bool = True) -> dict:
    value = raw.get(name)
    if value is None:
        if required:
            raise ConfigError(f"missing config section '{name}'")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section '{name}' must be a mapping")
    return value


def _get(section: dict, section_name: str, key: str, default=None, required: bool = False):
    if key in section:
        return section[key]
    if required:
        raise ConfigError(f"missing config key '{section_name}.{key}'")
    return default


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    version = raw.get("config_version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"config_version must be {CONFIG_VERSION}, got {version!r}")

    mode = raw.get("mode")
    if mode not in ("gossip", "federated"):
        raise ConfigError(f"mode must be 'gossip' or 'federated', got {mode!r}")

    topo_raw = _section(raw, "topology")
    kind = _get(topo_raw, "topology", "kind", required=True)
    if kind not in TOPOLOGY_KINDS:
        raise ConfigError(f"topology.kind must be one of {TOPOLOGY_KINDS}, got {kind!r}")
    n = int(_get(topo_raw, "topology", "n", required=True))
    k = topo_raw.get("k")
    if kind in ("regular", "temporal"):
        if k is None:
            raise ConfigError(f"topology.k is required for kind '{kind}'")
        k = int(k)
    topology = TopologySpec(kind=kind, n=n, k=k)
    if mode == "federated" and kind != "star":
        raise ConfigError("federated mode requires topology.kind 'star'")

    model_raw = _section(raw, "model", required=False)
    model = ModelSpec(
        layer_sizes=[int(s) for s in model_raw.get("layer_sizes", [784, 128, 10])],
        hidden_activation=model_raw.get("hidden_activation", "relu"),
        init_dist=model_raw.get("init_dist", "normal"),
    )

    train_raw = _section(raw, "training", required=False)
    try:
        training = Hyperparams(
            base_lr=float(train_raw.get("base_lr", 0.01)),
            momentum=float(train_raw.get("momentum", 0.9)),
            weight_decay=float(train_raw.get("weight_decay", 0.0005)),
            lr_gamma=float(train_raw.get("lr_gamma", 0.0001)),
            lr_power=float(train_raw.get("lr_power", 0.75)),
            batch_size=int(train_raw.get("batch_size", 64)),
        )
    except ConfigError as exc:
        raise ConfigError(f"training: {exc}") from None

    sched_raw = _section(raw, "schedule", required=False)
    t_acq_raw = sched_raw.get("t_acquisition", 10)
    if isinstance(t_acq_raw, list):
        if len(t_acq_raw) != 2:
            raise ConfigError("schedule.t_acquisition range must be [lo, hi]")
        t_acq: int | tuple[int, int] = (int(t_acq_raw[0]), int(t_acq_raw[1]))
    else:
        t_acq = int(t_acq_raw)
    schedule = ScheduleSpec(t_acquisition=t_acq, interval_ratio=int(sched_raw.get("interval_ratio", 1)))

    avg_raw = _section(raw, "averaging", required=False)
    try:
        averaging = AveragingConfig(
            strategy=avg_raw.get("strategy", "plain"),
            beta=float(avg_raw.get("beta", 0.5)),
            compression_ratio=float(avg_raw.get("compression_ratio", 1.0)),
            fedavg_weighted=bool(avg_raw.get("fedavg_weighted", False)),
            post_blend_correction=bool(avg_raw.get("post_blend_correction", False)),
        )
    except ConfigError as exc:
        raise ConfigError(f"averaging: {exc}") from None
    if averaging.compression_ratio < 1.0 and averaging.strategy == "variance_corrected":
        warnings.warn(
            "compressed sends merge sparsely; variance correction is bypassed",
            RuntimeWarning,
        )

    data_raw = _section(raw, "data")
    alpha = data_raw.get("alpha")
    data = DataSpec(
        images=_resolve_path(_get(data_raw, "data", "images", required=True), base_dir),
        labels=_resolve_path(_get(data_raw, "data", "labels", required=True), base_dir),
        test_images=_resolve_path(_get(data_raw, "data", "test_images", required=True), base_dir),
        test_labels=_resolve_path(_get(data_raw, "data", "test_labels", required=True), base_dir),
        alpha=None if alpha is None else float(alpha),
        train_subset=int(data_raw.get("train_subset", 10000)),
        test_subset=int(data_raw.get("test_subset", 2000)),
    )

    sim_raw = _section(raw, "sim", required=False)
    broadcast = sim_raw.get("global_broadcast_tick")
    sim = SimSpec(
        max_ticks=int(sim_raw.get("max_ticks", 1000)),
        eval_interval=int(sim_raw.get("eval_interval", 10)),
        seed=int(sim_raw.get("seed", 0)),
        global_broadcast_tick=None if broadcast is None else int(broadcast),
        workers=int(sim_raw.get("workers", 1)),
    )

    output_raw = _section(raw, "output", required=False)
    output_dir = output_raw.get("directory", "run_output")
    if base_dir is not None and not Path(output_dir).is_absolute():
        output_dir = str(base_dir / output_dir)

    cfg = ExperimentConfig(
        mode=mode,
        topology=topology,
        model=model,
        training=training,
        schedule=schedule,
        averaging=averaging,
        data=data,
        sim=sim,
        output_dir=output_dir,
    )
    cfg.sim_config()  # surface cross-field problems at parse time
    return cfg


def _resolve_path(path: str, base_dir: Path | None) -> str:
    p = Path(path)
    if p.is_absolute():
        return str(p)
    root = os.environ.get(DATA_ROOT_ENV)
    if root:
        return str(Path(root) / p)
    if base_dir is not None:
        return str(base_dir / p)
    return str(p)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(raw, base_dir=path.parent)
