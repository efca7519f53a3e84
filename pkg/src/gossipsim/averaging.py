"""Model aggregation: plain mean, sample-weighted FedAvg, beta-blending,
random weight compression with sparse merge, and variance-corrected averaging.

Variance here always means the population variance (ddof=0) over a layer's
weight-matrix entries; bias vectors are excluded. The variance-corrected
average rescales each averaged weight matrix about its mean so its variance
equals the mean of the contributing models' layer variances, which undoes
the 1/N variance shrink of averaging uncorrelated models while leaving
correlated buffers essentially untouched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .nn import Layer, LayerSpec, ModelWeights

# Rescaling is skipped when the averaged layer's standard deviation falls
# below this; a (near-)constant layer carries no variance to restore.
DEGENERATE_STD = 1e-12

STRATEGIES = ("plain", "variance_corrected")


@dataclass
class BufferEntry:
    model: "ModelWeights | SparseModel"
    sender: int | None = None
    n_samples: int | None = None


@dataclass
class ModelBuffer:
    """A node's staging multiset of received models."""

    capacity: int
    entries: list[BufferEntry] = field(default_factory=list)

    def append(self, entry: BufferEntry) -> None:
        if len(self.entries) >= self.capacity:
            raise ValueError(f"buffer already at capacity {self.capacity}")
        self.entries.append(entry)

    @property
    def full(self) -> bool:
        return self.capacity > 0 and len(self.entries) >= self.capacity

    def clear(self) -> None:
        self.entries = []

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class SparseModel:
    """Randomly sampled weight-matrix entries plus full bias vectors."""

    arch: tuple[LayerSpec, ...]
    indices: list[np.ndarray]  # per layer, sorted flat indices into the weight matrix
    values: list[np.ndarray]   # matching weight values
    biases: list[np.ndarray]   # bias vectors are small and always sent whole


@dataclass
class AveragingConfig:
    strategy: str = "plain"
    beta: float = 0.5
    compression_ratio: float = 1.0
    fedavg_weighted: bool = False
    post_blend_correction: bool = False

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if not 0.0 < self.compression_ratio <= 1.0:
            raise ConfigError(
                f"compression_ratio must be in (0, 1], got {self.compression_ratio}"
            )


def _dense_entries(buffer: ModelBuffer) -> list[ModelWeights]:
    if not buffer.entries:
        raise ValueError("cannot average an empty buffer")
    models = []
    for entry in buffer.entries:
        if not isinstance(entry.model, ModelWeights):
            raise TypeError("buffer holds sparse models; use merge_sparse")
        models.append(entry.model)
    arch = models[0].arch
    for m in models[1:]:
        if m.arch != arch:
            raise ValueError("buffer entries have mismatched architectures")
    return models


def plain_average(buffer: ModelBuffer) -> ModelWeights:
    """Element-wise arithmetic mean of every layer, weights and biases."""
    models = _dense_entries(buffer)
    layers = []
    for i, spec in enumerate(models[0].arch):
        w = np.mean([m.layers[i].w for m in models], axis=0)
        b = np.mean([m.layers[i].b for m in models], axis=0)
        layers.append(Layer(spec, w, b))
    return ModelWeights(layers)


def weighted_fedavg(buffer: ModelBuffer) -> ModelWeights:
    """Convex combination weighted by each entry's local sample count."""
    models = _dense_entries(buffer)
    counts = []
    for entry in buffer.entries:
        if entry.n_samples is None or entry.n_samples < 0:
            raise ValueError("weighted_fedavg needs a non-negative sample count per entry")
        counts.append(entry.n_samples)
    total = sum(counts)
    if total == 0:
        raise ValueError("weighted_fedavg: total sample count is zero")
    weights = [c / total for c in counts]
    layers = []
    for i, spec in enumerate(models[0].arch):
        w = sum(wt * m.layers[i].w for wt, m in zip(weights, models))
        b = sum(wt * m.layers[i].b for wt, m in zip(weights, models))
        layers.append(Layer(spec, w, b))
    return ModelWeights(layers)


def blend(old: ModelWeights, avg: ModelWeights, beta: float) -> ModelWeights:
    """beta*old + (1-beta)*avg, element-wise across all layers."""
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must be in [0, 1], got {beta}")
    if old.arch != avg.arch:
        raise ValueError("blend: architecture mismatch")
    layers = []
    for lo, la in zip(old.layers, avg.layers):
        layers.append(
            Layer(lo.spec, beta * lo.w + (1 - beta) * la.w, beta * lo.b + (1 - beta) * la.b)
        )
    return ModelWeights(layers)


def layer_weight_variances(model: ModelWeights) -> list[float]:
    """Population variance of each layer's weight matrix (biases excluded)."""
    return [float(np.var(layer.w)) for layer in model.layers]


def rescale_to_variances(model: ModelWeights, targets: list[float]) -> ModelWeights:
    """Affine-rescale each weight matrix about its mean to hit a target variance.

    Layers whose current standard deviation is below DEGENERATE_STD are left
    untouched with a warning; biases are never rescaled.
    """
    layers = []
    for layer, target in zip(model.layers, targets):
        std = float(np.std(layer.w))
        if std < DEGENERATE_STD:
            warnings.warn(
                f"layer {layer.spec.name}: averaged std {std:.3e} is degenerate, "
                "skipping variance rescale",
                RuntimeWarning,
            )
            layers.append(Layer(layer.spec, layer.w.copy(), layer.b.copy()))
            continue
        mean = layer.w.mean()
        scale = np.sqrt(target) / std
        layers.append(Layer(layer.spec, (layer.w - mean) * scale + mean, layer.b.copy()))
    return ModelWeights(layers)


def variance_corrected_average(buffer: ModelBuffer) -> ModelWeights:
    """Plain average rescaled per layer to the mean of the inputs' variances.

    The rescale is affine about the layer mean, so the averaged layer's mean
    and the ordering of its weights are preserved exactly.
    """
    models = _dense_entries(buffer)
    for spec in models[0].arch:
        if spec.n_in * spec.n_out < 2:
            raise ValueError(
                f"layer {spec.name} has fewer than 2 weight entries; variance undefined"
            )
    avg = plain_average(buffer)
    per_model = np.array([layer_weight_variances(m) for m in models])
    targets = per_model.mean(axis=0)
    return rescale_to_variances(avg, list(targets))


def compress_sample(model: ModelWeights, ratio: float, rng: np.random.Generator) -> SparseModel:
    """Randomly keep round(ratio*count) weight entries per layer, minimum 1.

    Selection is uniform without replacement over each layer's flattened
    weight matrix. Bias vectors ride along uncompressed.
    """
    if not 0.0 < ratio <= 1.0:
        raise ConfigError(f"compression ratio must be in (0, 1], got {ratio}")
    indices, values, biases = [], [], []
    for layer in model.layers:
        count = layer.w.size
        keep = max(1, int(round(ratio * count)))
        idx = np.sort(rng.choice(count, size=keep, replace=False))
        indices.append(idx)
        values.append(layer.w.ravel()[idx].copy())
        biases.append(layer.b.copy())
    return SparseModel(model.arch, indices, values, biases)


def merge_sparse(buffer: ModelBuffer, base: ModelWeights) -> ModelWeights:
    """Per coordinate, mean over the models that transmitted it; untouched
    coordinates keep the base model's value. Biases (always transmitted)
    are averaged over all senders."""
    if not buffer.entries:
        raise ValueError("cannot merge an empty buffer")
    sparse_models = []
    for entry in buffer.entries:
        if not isinstance(entry.model, SparseModel):
            raise TypeError("merge_sparse expects SparseModel entries")
        if entry.model.arch != base.arch:
            raise ValueError("sparse model architecture does not match base")
        sparse_models.append(entry.model)

    out_layers = []
    n_models = len(sparse_models)
    for li, layer in enumerate(base.layers):
        count = layer.w.size
        sums = np.zeros(count)
        hits = np.zeros(count, dtype=np.int64)
        bias_sum = np.zeros_like(layer.b)
        for sm in sparse_models:
            idx = sm.indices[li]
            if idx.size and (idx.min() < 0 or idx.max() >= count):
                raise ValueError(f"sparse index out of bounds for layer {layer.spec.name}")
            np.add.at(sums, idx, sm.values[li])
            np.add.at(hits, idx, 1)
            bias_sum += sm.biases[li]
        merged = layer.w.ravel().copy()
        touched = hits > 0
        merged[touched] = sums[touched] / hits[touched]
        out_layers.append(
            Layer(layer.spec, merged.reshape(layer.w.shape), bias_sum / n_models)
        )
    return ModelWeights(out_layers)
