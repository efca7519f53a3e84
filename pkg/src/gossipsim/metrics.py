"""Run metrics: accuracy tracking, layer-wise weight differences and
variances, plateau-delay detection, and 90%-accuracy timing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ModelWeights

SMOOTHING_WINDOW = 5  # samples, centered


@dataclass
class MetricsLog:
    """Time-indexed per-node metrics plus run annotations."""

    accuracy_rows: list[tuple[int, int, float]] = field(default_factory=list)       # (tick, node, acc)
    variance_rows: list[tuple[int, int, str, float]] = field(default_factory=list)  # (tick, node, layer, var)
    weight_diff_rows: list[tuple[int, str, float]] = field(default_factory=list)    # (tick, layer, diff)
    annotations: dict = field(default_factory=dict)

    def accuracy_by_node(self, exclude: set[int] | None = None) -> dict[int, list[tuple[int, float]]]:
        series: dict[int, list[tuple[int, float]]] = {}
        for tick, node, acc in self.accuracy_rows:
            if exclude and node in exclude:
                continue
            series.setdefault(node, []).append((tick, acc))
        return series

    def mean_accuracy_series(self, exclude: set[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(ticks, mean accuracy across nodes), sorted by tick."""
        sums: dict[int, float] = {}
        counts: dict[int, int] = {}
        for tick, node, acc in self.accuracy_rows:
            if exclude and node in exclude:
                continue
            sums[tick] = sums.get(tick, 0.0) + acc
            counts[tick] = counts.get(tick, 0) + 1
        ticks = np.array(sorted(sums), dtype=np.int64)
        means = np.array([sums[t] / counts[t] for t in ticks])
        return ticks, means


def model_weight_difference(models: list[ModelWeights]) -> dict[str, float]:
    """Mean Manhattan distance around the node ring, per weight-matrix layer."""
    if len(models) < 2:
        raise ValueError("need at least 2 models")
    arch = models[0].arch
    for m in models[1:]:
        if m.arch != arch:
            raise ValueError("architecture mismatch across models")
    n = len(models)
    out: dict[str, float] = {}
    for li, spec in enumerate(arch):
        total = 0.0
        for i in range(n):
            a = models[(i + 1) % n].layers[li].w
            b = models[i].layers[li].w
            total += float(np.abs(a - b).sum())
        out[spec.name] = total / n
    return out


def layer_variance(model: ModelWeights) -> dict[str, float]:
    """Population variance of each layer's weight matrix (biases excluded)."""
    return {layer.spec.name: float(np.var(layer.w)) for layer in model.layers}


@dataclass
class PlateauReport:
    t_plateau_delay: int
    t_first_average: int
    ticks: np.ndarray
    derivative: np.ndarray
    degenerate: bool = False


def _smooth(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; the window truncates at the series edges."""
    half = window // 2
    out = np.empty_like(values, dtype=np.float64)
    for i in range(len(values)):
        lo = max(0, i - half)
        hi = min(len(values), i + half + 1)
        out[i] = values[lo:hi].mean()
    return out


def plateau_delay(
    ticks: np.ndarray,
    mean_accuracy: np.ndarray,
    t_first_average: int,
    window: int = SMOOTHING_WINDOW,
) -> PlateauReport:
    """Earliest tick strictly after the first averaging where the smoothed
    accuracy derivative peaks.

    The derivative is a central difference over the smoothed series
    (one-sided at the ends). The exclusion anchor drops the initial rise
    that comes from isolated pre-averaging training.
    """
    ticks = np.asarray(ticks, dtype=np.int64)
    mean_accuracy = np.asarray(mean_accuracy, dtype=np.float64)
    if ticks.shape != mean_accuracy.shape:
        raise ValueError("ticks and accuracy series must have equal length")
    candidates = np.nonzero(ticks > t_first_average)[0]
    if len(candidates) < 3:
        raise ValueError(
            f"need at least 3 samples after t_first_average={t_first_average}, "
            f"got {len(candidates)}"
        )
    smoothed = _smooth(mean_accuracy, window)
    derivative = np.gradient(smoothed, ticks.astype(np.float64))
    d = derivative[candidates]
    best = candidates[int(np.argmax(d))]  # argmax ties break earliest
    return PlateauReport(
        t_plateau_delay=int(ticks[best]),
        t_first_average=int(t_first_average),
        ticks=ticks,
        derivative=derivative,
        degenerate=bool(d.max() == d.min()),
    )


def reach_90(
    accuracy_rows: list[tuple[int, int, float]],
    threshold: float = 0.9,
) -> tuple[int | None, int | None]:
    """(first, most): earliest tick any node hits the threshold, and earliest
    tick at which strictly more than 90% of nodes are at or above it."""
    if not accuracy_rows:
        raise ValueError("empty accuracy series")
    nodes = {node for _, node, _ in accuracy_rows}
    by_tick: dict[int, int] = {}
    first: int | None = None
    for tick, _, acc in sorted(accuracy_rows):
        if acc >= threshold:
            by_tick[tick] = by_tick.get(tick, 0) + 1
            if first is None:
                first = tick
    most: int | None = None
    for tick in sorted(by_tick):
        if by_tick[tick] > 0.9 * len(nodes):
            most = tick
            break
    return first, most
