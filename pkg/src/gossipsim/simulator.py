"""Tick-driven engine running the gossip and federated training procedures.

Each tick proceeds in phases: (optional) global broadcast, training of all
due nodes, sends, receives with buffer-triggered averaging, then metric
collection on evaluation ticks. Training and evaluation of distinct nodes
are independent and may run on worker threads; all cross-node mutation
happens in the serialized receive phase, so results never depend on the
worker count.

Models are treated as immutable once sent: every update path (sgd_step,
blend, broadcast) rebinds a node's model to fresh arrays instead of
mutating in place, which makes zero-copy sends safe.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .averaging import (
    AveragingConfig,
    BufferEntry,
    ModelBuffer,
    SparseModel,
    blend,
    compress_sample,
    layer_weight_variances,
    merge_sparse,
    plain_average,
    rescale_to_variances,
    variance_corrected_average,
    weighted_fedavg,
)
from .data import Dataset, NodeDistribution, dirichlet_partition, sample_batch
from .errors import ConfigError
from .metrics import MetricsLog, layer_variance, model_weight_difference
from .nn import (
    Hyperparams,
    LayerSpec,
    ModelWeights,
    OptimizerState,
    backward,
    evaluate,
    sgd_step,
    validate_arch,
    xavier_init,
    zeros_like,
)
from .rng import substream
from .topology import Graph, TemporalState, force_activate, temporal_activation

MODES = ("gossip", "federated")


@dataclass
class SimConfig:
    mode: str
    arch: list[LayerSpec]
    init_dist: str
    hyper: Hyperparams
    averaging: AveragingConfig
    t_acquisition: int | tuple[int, int]  # fixed, or per-node uniform in [lo, hi]
    interval_ratio: int                   # averaging-to-training interval ratio R
    max_ticks: int
    eval_interval: int
    seed: int
    alpha: float | None = None            # None means IID sampling
    global_broadcast_tick: int | None = None
    temporal: bool = False
    holdout_size: int = 256
    workers: int = 1

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        validate_arch(self.arch)
        if self.interval_ratio < 1:
            raise ConfigError(f"interval_ratio must be >= 1, got {self.interval_ratio}")
        if self.max_ticks < 1:
            raise ConfigError(f"max_ticks must be >= 1, got {self.max_ticks}")
        if self.eval_interval < 1:
            raise ConfigError(f"eval_interval must be >= 1, got {self.eval_interval}")
        if isinstance(self.t_acquisition, tuple):
            lo, hi = self.t_acquisition
            if not 1 <= lo <= hi:
                raise ConfigError(f"t_acquisition range must satisfy 1 <= lo <= hi, got {lo}..{hi}")
            if self.mode == "federated":
                raise ConfigError("federated rounds are synchronous; t_acquisition must be a fixed integer")
        elif self.t_acquisition < 1:
            raise ConfigError(f"t_acquisition must be >= 1, got {self.t_acquisition}")
        if self.global_broadcast_tick is not None:
            if self.mode != "gossip":
                raise ConfigError("global_broadcast_tick only applies to gossip mode")
            if self.global_broadcast_tick < 0:
                raise ConfigError("global_broadcast_tick must be >= 0")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.temporal and self.mode != "gossip":
            raise ConfigError("temporal activation only applies to gossip mode")


@dataclass
class NodeState:
    id: int
    model: ModelWeights
    optimizer: OptimizerState
    buffer: ModelBuffer
    distribution: NodeDistribution | None
    t_acquisition: int
    rng_batch: np.random.Generator
    rng_compress: np.random.Generator
    temporal: TemporalState | None = None
    holdout: tuple[np.ndarray, np.ndarray] | None = None
    n_averages: int = 0


@dataclass
class EventLog:
    """Append-only (tick, node, kind, summary) trace of simulator activity."""

    events: list[tuple[int, int, str, str]] = field(default_factory=list)

    def record(self, tick: int, node: int, kind: str, summary: str = "") -> None:
        self.events.append((tick, node, kind, summary))

    def count(self, kind: str, tick_range: tuple[int, int] | None = None) -> int:
        return sum(
            1
            for tick, _, k, _ in self.events
            if k == kind and (tick_range is None or tick_range[0] <= tick <= tick_range[1])
        )


def on_receive_model(
    node: NodeState,
    incoming: ModelWeights | SparseModel,
    avg_cfg: AveragingConfig,
    sender: int | None = None,
    n_samples: int | None = None,
) -> NodeState:
    """Store an incoming model; average and blend once the buffer fills.

    Duplicate senders are kept (multiset semantics). The buffer is cleared
    after every averaging so stale models never linger.
    """
    if incoming.arch != node.model.arch:
        raise ValueError(f"node {node.id}: incoming architecture does not match")
    node.buffer.append(BufferEntry(incoming, sender=sender, n_samples=n_samples))
    if not node.buffer.full:
        return node

    sparse = isinstance(node.buffer.entries[0].model, SparseModel)
    if sparse:
        averaged = merge_sparse(node.buffer, node.model)
    elif avg_cfg.strategy == "variance_corrected":
        averaged = variance_corrected_average(node.buffer)
    else:
        averaged = plain_average(node.buffer)

    blended = blend(node.model, averaged, avg_cfg.beta)
    if avg_cfg.post_blend_correction and not sparse:
        contributors = [node.model] + [e.model for e in node.buffer.entries]
        targets = np.mean([layer_weight_variances(m) for m in contributors], axis=0)
        blended = rescale_to_variances(blended, list(targets))
    node.model = blended
    node.buffer.clear()
    node.n_averages += 1
    return node


def global_broadcast(nodes: list[NodeState]) -> list[NodeState]:
    """Replace every node's model with the plain average of all of them."""
    buf = ModelBuffer(capacity=len(nodes), entries=[BufferEntry(n.model) for n in nodes])
    averaged = plain_average(buf)
    for node in nodes:
        node.model = averaged.copy()
    return nodes


def _draw_t_acquisition(cfg: SimConfig, node_id: int) -> int:
    if isinstance(cfg.t_acquisition, tuple):
        lo, hi = cfg.t_acquisition
        return int(substream(cfg.seed, node_id, rngmod.SCHEDULE).integers(lo, hi + 1))
    return cfg.t_acquisition


def _node_distributions(cfg: SimConfig, n: int) -> list[NodeDistribution | None]:
    if cfg.alpha is None:
        return [None] * n
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, rngmod.DIRICHLET)))
    return list(dirichlet_partition(cfg.alpha, n, 10, rng))


def _init_gossip_nodes(cfg: SimConfig, graph: Graph, train: Dataset) -> list[NodeState]:
    distributions = _node_distributions(cfg, graph.n)
    nodes = []
    for i in range(graph.n):
        model = xavier_init(cfg.arch, cfg.init_dist, substream(cfg.seed, i, rngmod.INIT))
        if cfg.temporal:
            temporal = TemporalState(active=[], waiting=list(graph.adjacency[i]))
            capacity = 0
            holdout_rng = substream(cfg.seed, i, rngmod.HOLDOUT)
            holdout = sample_batch(train, distributions[i], cfg.holdout_size, holdout_rng)
        else:
            temporal = None
            capacity = graph.degree(i) * cfg.interval_ratio
            holdout = None
        nodes.append(
            NodeState(
                id=i,
                model=model,
                optimizer=OptimizerState(zeros_like(model)),
                buffer=ModelBuffer(capacity=capacity),
                distribution=distributions[i],
                t_acquisition=_draw_t_acquisition(cfg, i),
                rng_batch=substream(cfg.seed, i, rngmod.BATCH),
                rng_compress=substream(cfg.seed, i, rngmod.COMPRESS),
                temporal=temporal,
                holdout=holdout,
            )
        )
    return nodes


def _train_one(node: NodeState, cfg: SimConfig, train: Dataset) -> None:
    images, labels = sample_batch(train, node.distribution, cfg.hyper.batch_size, node.rng_batch)
    grads = backward(node.model, images, labels)
    node.model, node.optimizer = sgd_step(node.model, grads, node.optimizer, cfg.hyper)


def _map(pool: ThreadPoolExecutor | None, fn, items):
    if pool is None:
        return [fn(item) for item in items]
    return list(pool.map(fn, items))


def _active_peers(node: NodeState, graph: Graph) -> list[int]:
    if node.temporal is not None:
        return node.temporal.active
    return graph.adjacency[node.id]


def _record_metrics(
    log: MetricsLog,
    tick: int,
    nodes: list[NodeState],
    test: Dataset,
    pool: ThreadPoolExecutor | None,
    diff_nodes: list[NodeState],
) -> None:
    accs = _map(pool, lambda n: evaluate(n.model, test.images, test.labels), nodes)
    for node, acc in zip(nodes, accs):
        log.accuracy_rows.append((tick, node.id, acc))
    for node in nodes:
        for layer_name, var in layer_variance(node.model).items():
            log.variance_rows.append((tick, node.id, layer_name, var))
    if len(diff_nodes) >= 2:
        diffs = model_weight_difference([n.model for n in diff_nodes])
        for layer_name, diff in diffs.items():
            log.weight_diff_rows.append((tick, layer_name, diff))


def run_gossip(
    cfg: SimConfig,
    graph: Graph,
    train: Dataset,
    test: Dataset,
    events: EventLog | None = None,
) -> MetricsLog:
    """Fully decentralized training: every node initializes independently,
    trains on its own schedule, and exchanges weights with its peers."""
    cfg.validate()
    if cfg.mode != "gossip":
        raise ConfigError(f"run_gossip requires mode='gossip', got {cfg.mode!r}")
    events = events if events is not None else EventLog()
    nodes = _init_gossip_nodes(cfg, graph, train)
    log = MetricsLog()
    t_first_average: int | None = None
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None

    try:
        if cfg.global_broadcast_tick == 0:
            global_broadcast(nodes)
            events.record(0, -1, "broadcast")
        for tick in range(1, cfg.max_ticks + 1):
            if cfg.global_broadcast_tick == tick:
                global_broadcast(nodes)
                events.record(tick, -1, "broadcast")

            due = [node for node in nodes if tick % node.t_acquisition == 0]
            _map(pool, lambda n: _train_one(n, cfg, train), due)
            for node in due:
                events.record(tick, node.id, "train", f"batch={cfg.hyper.batch_size}")

            if cfg.temporal:
                for node in due:
                    _temporal_gate(node, nodes, cfg, events, tick)

            deliveries: list[tuple[int, int, ModelWeights | SparseModel]] = []
            for node in due:
                peers = _active_peers(node, graph)
                if not peers:
                    continue
                if cfg.averaging.compression_ratio < 1.0:
                    payload: ModelWeights | SparseModel = compress_sample(
                        node.model, cfg.averaging.compression_ratio, node.rng_compress
                    )
                else:
                    payload = node.model
                for peer in peers:
                    deliveries.append((peer, node.id, payload))
                events.record(tick, node.id, "send", f"peers={len(peers)}")

            for receiver, sender, payload in deliveries:
                node = nodes[receiver]
                before = node.n_averages
                on_receive_model(
                    node, payload, cfg.averaging, sender=sender, n_samples=cfg.hyper.batch_size
                )
                if node.n_averages > before:
                    events.record(tick, receiver, "average", f"strategy={cfg.averaging.strategy}")
                    if t_first_average is None:
                        t_first_average = tick

            if tick % cfg.eval_interval == 0:
                _record_metrics(log, tick, nodes, test, pool, diff_nodes=nodes)
    finally:
        if pool is not None:
            pool.shutdown()

    log.annotations.update(
        mode="gossip",
        n_nodes=graph.n,
        seed=cfg.seed,
        eval_interval=cfg.eval_interval,
        t_first_average=t_first_average,
        server_node=None,
    )
    return log


def _temporal_gate(
    node: NodeState, nodes: list[NodeState], cfg: SimConfig, events: EventLog, tick: int
) -> None:
    images, labels = node.holdout  # type: ignore[misc]
    acc = evaluate(node.model, images, labels)
    new_state = temporal_activation(node.temporal, acc)  # type: ignore[arg-type]
    if new_state is node.temporal:
        return
    peer_id = new_state.active[-1]
    node.temporal = new_state
    node.buffer.capacity = len(new_state.active) * cfg.interval_ratio
    peer = nodes[peer_id]
    updated = force_activate(peer.temporal, node.id)  # type: ignore[arg-type]
    if updated is not peer.temporal:
        peer.temporal = updated
        peer.buffer.capacity = len(updated.active) * cfg.interval_ratio
    events.record(tick, node.id, "activate", f"peer={peer_id} acc={acc:.3f}")


def run_federated(
    cfg: SimConfig,
    graph: Graph,
    train: Dataset,
    test: Dataset,
    events: EventLog | None = None,
) -> MetricsLog:
    """Centralized rounds on a star graph: the hub (node 0) initializes one
    model, clients train from it each round, and the hub aggregates."""
    cfg.validate()
    if cfg.mode != "federated":
        raise ConfigError(f"run_federated requires mode='federated', got {cfg.mode!r}")
    hub_degree = graph.degree(0)
    if hub_degree != graph.n - 1 or graph.n < 2:
        raise ConfigError("run_federated requires a star graph with node 0 as hub")
    events = events if events is not None else EventLog()

    period = int(cfg.t_acquisition)  # validated as a fixed integer
    server_model = xavier_init(cfg.arch, cfg.init_dist, substream(cfg.seed, 0, rngmod.INIT))
    distributions = _node_distributions(cfg, graph.n)
    clients = []
    for i in range(1, graph.n):
        model = server_model.copy()
        clients.append(
            NodeState(
                id=i,
                model=model,
                optimizer=OptimizerState(zeros_like(model)),
                buffer=ModelBuffer(capacity=0),
                distribution=distributions[i],
                t_acquisition=period,
                rng_batch=substream(cfg.seed, i, rngmod.BATCH),
                rng_compress=substream(cfg.seed, i, rngmod.COMPRESS),
            )
        )

    log = MetricsLog()
    t_first_average: int | None = None
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None

    try:
        for tick in range(1, cfg.max_ticks + 1):
            if tick % period == 0:
                for client in clients:
                    client.model = server_model  # model replacement, beta = 0
                _map(pool, lambda c: _train_one(c, cfg, train), clients)
                for client in clients:
                    events.record(tick, client.id, "train", f"batch={cfg.hyper.batch_size}")

                buf = ModelBuffer(
                    capacity=len(clients),
                    entries=[
                        BufferEntry(c.model, sender=c.id, n_samples=cfg.hyper.batch_size)
                        for c in clients
                    ],
                )
                if cfg.averaging.strategy == "variance_corrected":
                    server_model = variance_corrected_average(buf)
                elif cfg.averaging.fedavg_weighted:
                    server_model = weighted_fedavg(buf)
                else:
                    server_model = plain_average(buf)
                events.record(tick, 0, "average", f"clients={len(clients)}")
                if t_first_average is None:
                    t_first_average = tick

            if tick % cfg.eval_interval == 0:
                server_acc = evaluate(server_model, test.images, test.labels)
                log.accuracy_rows.append((tick, 0, server_acc))
                for layer_name, var in layer_variance(server_model).items():
                    log.variance_rows.append((tick, 0, layer_name, var))
                _record_metrics(log, tick, clients, test, pool, diff_nodes=clients)
    finally:
        if pool is not None:
            pool.shutdown()

    log.annotations.update(
        mode="federated",
        n_nodes=graph.n,
        seed=cfg.seed,
        eval_interval=cfg.eval_interval,
        t_first_average=t_first_average,
        server_node=0,
    )
    return log
