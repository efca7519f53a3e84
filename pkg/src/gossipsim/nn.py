"""Minimal dense feedforward network: init, forward/backward, momentum SGD.

All operations are pure functions of their arguments and use float64
throughout, so weight-variance ratios near 1.0 stay measurable and
repeated calls are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

ACTIVATIONS = ("relu", "tanh", "none")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    n_in: int
    n_out: int
    activation: str  # relu | tanh | none ("none" allowed only on the last layer)


@dataclass
class Layer:
    spec: LayerSpec
    w: np.ndarray  # (n_out, n_in)
    b: np.ndarray  # (n_out,)


@dataclass
class ModelWeights:
    layers: list[Layer]

    @property
    def arch(self) -> tuple[LayerSpec, ...]:
        return tuple(layer.spec for layer in self.layers)

    def copy(self) -> "ModelWeights":
        return ModelWeights(
            [Layer(l.spec, l.w.copy(), l.b.copy()) for l in self.layers]
        )


@dataclass
class Hyperparams:
    base_lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lr_gamma: float = 0.0001
    lr_power: float = 0.75
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be > 0, got {self.base_lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class OptimizerState:
    velocity: ModelWeights
    iteration: int = 0


def validate_arch(arch: list[LayerSpec]) -> None:
    """Raise ConfigError unless the layer chain is well-formed."""
    if not arch:
        raise ConfigError("architecture must contain at least one layer")
    names = [spec.name for spec in arch]
    if len(set(names)) != len(names):
        raise ConfigError(f"layer names must be unique, got {names}")
    for i, spec in enumerate(arch):
        if spec.n_in < 1 or spec.n_out < 1:
            raise ConfigError(f"layer {spec.name}: fans must be positive")
        if spec.activation not in ACTIVATIONS:
            raise ConfigError(f"layer {spec.name}: unknown activation {spec.activation!r}")
        if spec.activation == "none" and i != len(arch) - 1:
            raise ConfigError(f"layer {spec.name}: 'none' activation only allowed on the last layer")
        if i > 0 and arch[i - 1].n_out != spec.n_in:
            raise ConfigError(
                f"fan chain broken at {spec.name}: previous n_out {arch[i - 1].n_out} != n_in {spec.n_in}"
            )


def mlp_arch(sizes: list[int], hidden_activation: str = "relu") -> list[LayerSpec]:
    """Dense architecture from a size chain, e.g. [784, 128, 10]."""
    if len(sizes) < 2:
        raise ConfigError("need at least an input and an output size")
    arch = []
    for i in range(len(sizes) - 1):
        act = "none" if i == len(sizes) - 2 else hidden_activation
        arch.append(LayerSpec(f"fc{i + 1}", sizes[i], sizes[i + 1], act))
    validate_arch(arch)
    return arch


def xavier_init(arch: list[LayerSpec], dist: str, rng: np.random.Generator) -> ModelWeights:
    """Draw each layer's weights with variance 2/(n_in+n_out); biases start at zero.

    dist="uniform" uses the bound sqrt(6/(n_in+n_out)), dist="normal" the
    matching standard deviation; both give the same target variance.
    """
    validate_arch(arch)
    if dist not in ("uniform", "normal"):
        raise ConfigError(f"init dist must be 'uniform' or 'normal', got {dist!r}")
    layers = []
    for spec in arch:
        fan_sum = spec.n_in + spec.n_out
        if dist == "uniform":
            bound = np.sqrt(6.0 / fan_sum)
            w = rng.uniform(-bound, bound, size=(spec.n_out, spec.n_in))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / fan_sum), size=(spec.n_out, spec.n_in))
        layers.append(Layer(spec, w, np.zeros(spec.n_out)))
    return ModelWeights(layers)


def zeros_like(model: ModelWeights) -> ModelWeights:
    return ModelWeights(
        [Layer(l.spec, np.zeros_like(l.w), np.zeros_like(l.b)) for l in model.layers]
    )


def _apply_activation(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _forward_trace(model: ModelWeights, batch: np.ndarray):
    """Forward pass keeping per-layer pre- and post-activations for backprop."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2:
        raise ValueError(f"batch must be 2-D (samples, features), got shape {batch.shape}")
    if batch.shape[1] != model.layers[0].spec.n_in:
        raise ValueError(
            f"batch width {batch.shape[1]} != first layer n_in {model.layers[0].spec.n_in}"
        )
    activations = [batch]
    pre = []
    x = batch
    for layer in model.layers:
        z = x @ layer.w.T + layer.b
        pre.append(z)
        x = _apply_activation(z, layer.spec.activation)
        activations.append(x)
    return pre, activations


def forward(model: ModelWeights, batch: np.ndarray) -> np.ndarray:
    """Logits for a batch, shape (samples, n_out of last layer)."""
    _, activations = _forward_trace(model, batch)
    return activations[-1]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(model: ModelWeights, batch: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy of the batch (used by gradient checks)."""
    logits = forward(model, batch)
    labels = _check_labels(labels, logits.shape[1], logits.shape[0])
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(labels)), labels].mean())


def _check_labels(labels: np.ndarray, n_classes: int, n_samples: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n_samples,):
        raise ValueError(f"labels shape {labels.shape} != ({n_samples},)")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return labels.astype(np.intp)


def backward(model: ModelWeights, batch: np.ndarray, labels: np.ndarray) -> ModelWeights:
    """Gradient of mean softmax cross-entropy w.r.t. every weight and bias."""
    pre, activations = _forward_trace(model, batch)
    logits = activations[-1]
    n, n_classes = logits.shape
    labels = _check_labels(labels, n_classes, n)

    delta = softmax(logits)
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grads: list[Layer] = [None] * len(model.layers)  # type: ignore[list-item]
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        gw = delta.T @ activations[i]
        gb = delta.sum(axis=0)
        grads[i] = Layer(layer.spec, gw, gb)
        if i > 0:
            delta = delta @ layer.w
            act = model.layers[i - 1].spec.activation
            if act == "relu":
                delta = delta * (pre[i - 1] > 0)
            elif act == "tanh":
                delta = delta * (1.0 - activations[i] ** 2)
    return ModelWeights(grads)


def learning_rate(hp: Hyperparams, iteration: int) -> float:
    """Inverse decay schedule: base_lr * (1 + gamma*t)^(-power)."""
    return hp.base_lr * (1.0 + hp.lr_gamma * iteration) ** (-hp.lr_power)


def sgd_step(
    model: ModelWeights,
    grads: ModelWeights,
    opt: OptimizerState,
    hp: Hyperparams,
) -> tuple[ModelWeights, OptimizerState]:
    """One momentum-SGD update; returns new model and optimizer state."""
    lr = learning_rate(hp, opt.iteration)
    new_layers = []
    new_vel = []
    for layer, grad, vel in zip(model.layers, grads.layers, opt.velocity.layers):
        if layer.w.shape != grad.w.shape or layer.b.shape != grad.b.shape:
            raise ValueError(f"gradient shape mismatch on layer {layer.spec.name}")
        if not (np.isfinite(grad.w).all() and np.isfinite(grad.b).all()):
            raise ValueError(f"non-finite gradient on layer {layer.spec.name}, aborting")
        vw = hp.momentum * vel.w - lr * (grad.w + hp.weight_decay * layer.w)
        vb = hp.momentum * vel.b - lr * (grad.b + hp.weight_decay * layer.b)
        new_layers.append(Layer(layer.spec, layer.w + vw, layer.b + vb))
        new_vel.append(Layer(layer.spec, vw, vb))
    return (
        ModelWeights(new_layers),
        OptimizerState(ModelWeights(new_vel), opt.iteration + 1),
    )


def evaluate(model: ModelWeights, images: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of samples whose argmax logit matches the label.

    Ties resolve toward the lowest class index (np.argmax convention).
    """
    images = np.asarray(images)
    if images.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    predictions = np.argmax(forward(model, images), axis=1)
    return float(np.mean(predictions == np.asarray(labels)))
