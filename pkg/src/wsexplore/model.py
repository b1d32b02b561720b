"""Forward-only inference for small sequential CNNs and top-1 scoring.

Tensors are laid out height x width x channels (HWC). Convolution kernels are
stored as ``(kh, kw, in_ch, out_ch)`` and dense matrices as
``(in_features, out_features)``, both flattened row-major. Arithmetic is
float32 at layer boundaries with float64 accumulation inside conv/dense.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError, WSError

WEIGHTED_KINDS = ("conv2d", "dense")
LAYER_KINDS = ("conv2d", "dense", "maxpool", "avgpool", "relu", "tanh", "flatten")


def _frozen_f32(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float32).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class LayerSpec:
    """One layer of a sequential model.

    Only the fields relevant to ``kind`` are meaningful: ``kernel``,
    ``stride`` and ``padding`` for conv2d; ``in_features``/``out_features``
    for dense; ``window``/``stride`` for pooling.
    """

    kind: str
    kernel: Optional[tuple] = None
    in_features: Optional[int] = None
    out_features: Optional[int] = None
    window: Optional[int] = None
    stride: int = 1
    padding: str = "valid"
    weights: np.ndarray = field(default_factory=lambda: _frozen_f32([]))
    bias: np.ndarray = field(default_factory=lambda: _frozen_f32([]))

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise WSError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "weights", _frozen_f32(self.weights))
        object.__setattr__(self, "bias", _frozen_f32(self.bias))
        if self.kernel is not None:
            object.__setattr__(self, "kernel", tuple(int(d) for d in self.kernel))

    @property
    def is_weighted(self) -> bool:
        return self.kind in WEIGHTED_KINDS

    @property
    def weight_shape(self) -> tuple:
        if self.kind == "conv2d":
            return self.kernel
        if self.kind == "dense":
            return (self.in_features, self.out_features)
        return (0,)

    @property
    def n_out(self) -> int:
        return self.kernel[3] if self.kind == "conv2d" else self.out_features

    def with_weights(self, weights) -> "LayerSpec":
        return replace(self, weights=weights)

    def check(self, layer_index=None):
        """Validate parameter counts and supported modes."""
        if self.kind == "conv2d":
            if self.kernel is None or len(self.kernel) != 4 or min(self.kernel) < 1:
                raise ShapeError(f"conv2d kernel must be 4 positive dims, got {self.kernel}", layer_index)
            if self.stride != 1:
                raise ShapeError(f"only stride-1 convolution is supported, got {self.stride}", layer_index)
            if self.padding != "valid":
                raise ShapeError(f"only 'valid' padding is supported, got {self.padding!r}", layer_index)
        elif self.kind == "dense":
            if not self.in_features or not self.out_features or self.in_features < 1 or self.out_features < 1:
                raise ShapeError("dense layer needs positive in/out features", layer_index)
        elif self.kind in ("maxpool", "avgpool"):
            if not self.window or self.window < 1 or self.stride < 1:
                raise ShapeError("pooling needs positive window and stride", layer_index)
        if self.is_weighted:
            expected = int(np.prod(self.weight_shape))
            if self.weights.size != expected:
                raise ShapeError(f"expected {expected} weights, got {self.weights.size}", layer_index)
            if self.bias.size not in (0, self.n_out):
                raise ShapeError(f"bias length {self.bias.size} is neither 0 nor {self.n_out}", layer_index)
        elif self.weights.size or self.bias.size:
            raise ShapeError(f"{self.kind} layer carries no parameters", layer_index)

    def output_shape(self, in_shape: tuple, layer_index=None) -> tuple:
        if self.kind == "conv2d":
            kh, kw, cin, cout = self.kernel
            if len(in_shape) != 3 or in_shape[2] != cin:
                raise ShapeError(f"conv2d expects (H, W, {cin}) input, got {in_shape}", layer_index)
            h, w = in_shape[0] - kh + 1, in_shape[1] - kw + 1
            if h < 1 or w < 1:
                raise ShapeError(f"kernel {kh}x{kw} larger than input {in_shape}", layer_index)
            return (h, w, cout)
        if self.kind == "dense":
            if in_shape != (self.in_features,):
                raise ShapeError(f"dense expects ({self.in_features},) input, got {in_shape}", layer_index)
            return (self.out_features,)
        if self.kind in ("maxpool", "avgpool"):
            if len(in_shape) != 3:
                raise ShapeError(f"pooling expects a 3-D input, got {in_shape}", layer_index)
            h = (in_shape[0] - self.window) // self.stride + 1
            w = (in_shape[1] - self.window) // self.stride + 1
            if h < 1 or w < 1:
                raise ShapeError(f"pool window {self.window} larger than input {in_shape}", layer_index)
            return (h, w, in_shape[2])
        if self.kind == "flatten":
            return (int(np.prod(in_shape)),)
        return tuple(in_shape)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    layers: tuple
    input_shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            layer.check(i)
            shape = layer.output_shape(shape, i)
        if len(shape) != 1:
            raise ShapeError(f"model must end in a vector of class scores, got {shape}")
        if not self.weighted_indices:
            raise ShapeError("model has no conv2d or dense layer")
        object.__setattr__(self, "_output_shape", shape)

    @property
    def weighted_indices(self) -> tuple:
        """Positions in ``layers`` of the conv/dense layers, in order."""
        return tuple(i for i, layer in enumerate(self.layers) if layer.is_weighted)

    @property
    def num_weighted_layers(self) -> int:
        return len(self.weighted_indices)

    @property
    def num_classes(self) -> int:
        return self._output_shape[0]

    def replace_layers(self, updates: dict) -> "ModelSpec":
        """Return a new model with ``{layer_index: LayerSpec}`` substituted."""
        layers = list(self.layers)
        for i, layer in updates.items():
            layers[i] = layer
        return ModelSpec(layers, self.input_shape)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    samples: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float32)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if len(samples) != len(labels):
            raise WSError(f"{len(samples)} samples but {len(labels)} labels")
        if self.num_classes < 1:
            raise WSError("num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise WSError(f"labels must lie in [0, {self.num_classes})")
        samples.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)


def _conv2d(x, layer):
    kh, kw, cin, cout = layer.kernel
    h, w = x.shape[1] - kh + 1, x.shape[2] - kw + 1
    kernel = layer.weights.reshape(kh, kw, cin, cout).astype(np.float64)
    x64 = x.astype(np.float64)
    out = np.zeros((len(x), h, w, cout))
    for i in range(kh):
        for j in range(kw):
            out += x64[:, i:i + h, j:j + w, :] @ kernel[i, j]
    if layer.bias.size:
        out += layer.bias.astype(np.float64)
    return out.astype(np.float32)


def _dense(x, layer):
    w = layer.weights.reshape(layer.in_features, layer.out_features).astype(np.float64)
    out = x.astype(np.float64) @ w
    if layer.bias.size:
        out += layer.bias.astype(np.float64)
    return out.astype(np.float32)


def _pool(x, layer, reduce):
    n, h, w, c = x.shape
    k, s = layer.window, layer.stride
    if k == s:
        ho, wo = h // k, w // k
        tiles = x[:, :ho * k, :wo * k, :].reshape(n, ho, k, wo, k, c)
        return reduce(tiles, axis=(2, 4)).astype(np.float32)
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s]
    return reduce(win, axis=(-2, -1)).astype(np.float32)


def forward_batch(model: ModelSpec, inputs) -> np.ndarray:
    """Class scores for a batch of inputs shaped ``(B, *model.input_shape)``."""
    x = np.asarray(inputs, dtype=np.float32)
    if x.shape[1:] != model.input_shape:
        raise ShapeError(f"input batch shape {x.shape[1:]} does not match model input {model.input_shape}", 0)
    for i, layer in enumerate(model.layers):
        expected = layer.output_shape(x.shape[1:], i)
        if layer.kind == "conv2d":
            x = _conv2d(x, layer)
        elif layer.kind == "dense":
            x = _dense(x, layer)
        elif layer.kind == "maxpool":
            x = _pool(x, layer, np.max)
        elif layer.kind == "avgpool":
            x = _pool(x, layer, np.mean)
        elif layer.kind == "relu":
            x = np.maximum(x, np.float32(0))
        elif layer.kind == "tanh":
            x = np.tanh(x)
        elif layer.kind == "flatten":
            x = x.reshape(len(x), -1)
        if x.shape[1:] != expected:
            raise ShapeError(f"produced {x.shape[1:]}, expected {expected}", i)
    return x


def forward(model: ModelSpec, input) -> np.ndarray:
    """Class-score vector for a single input tensor."""
    x = np.asarray(input, dtype=np.float32)
    if x.shape != model.input_shape:
        raise ShapeError(f"input shape {x.shape} does not match model input {model.input_shape}", 0)
    return forward_batch(model, x[None])[0]


def predict_labels(model: ModelSpec, inputs, batch_size: int = 1024) -> np.ndarray:
    """Top-1 class per input; ``np.argmax`` already breaks ties toward the lowest index."""
    inputs = np.asarray(inputs, dtype=np.float32)
    out = [np.argmax(forward_batch(model, inputs[i:i + batch_size]), axis=1)
           for i in range(0, len(inputs), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


class _CallCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self._n = 0

    def increment(self):
        with self._lock:
            self._n += 1

    @property
    def value(self) -> int:
        return self._n

    def reset(self):
        with self._lock:
            self._n = 0


#: Number of :func:`score` invocations since the last reset. Used to audit how
#: many full-dataset evaluations an exploration strategy costs.
score_calls = _CallCounter()


def score(model: ModelSpec, dataset: LabeledDataset) -> float:
    """Top-1 accuracy of ``model`` on ``dataset`` as a fraction."""
    if len(dataset) == 0:
        raise WSError("cannot score on an empty dataset")
    score_calls.increment()
    predicted = predict_labels(model, dataset.samples)
    return int(np.count_nonzero(predicted == dataset.labels)) / len(dataset)


def accuracy_loss(baseline_acc: float, approx_acc: float) -> float:
    """Accuracy loss in percentage points; negative when the approximation wins."""
    return 100.0 * (baseline_acc - approx_acc)


def teacher_labels(model: ModelSpec, samples) -> LabeledDataset:
    """Label ``samples`` with the model's own predictions (baseline accuracy 1.0)."""
    return LabeledDataset(samples, predict_labels(model, samples), model.num_classes)


def concat_datasets(datasets: Sequence[LabeledDataset]) -> LabeledDataset:
    return LabeledDataset(
        np.concatenate([d.samples for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        datasets[0].num_classes,
    )
