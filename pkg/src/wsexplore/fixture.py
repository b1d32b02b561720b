"""Deterministic desk-scale fixture: a small 4-weighted-layer CNN on 8x8 images.

Labels are the model's own predictions, so baseline accuracy is exactly 1.0
and every accuracy loss is caused by weight sharing alone.

Run ``python -m wsexplore.fixture OUT_DIR`` to (re)write the shipped files.
"""

from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .model import LayerSpec, ModelSpec, forward_batch, teacher_labels

FIXTURE_SEED = 2025
N_SAMPLES = 512
#: Relative spread of each weight around its mode.
MODE_SPREAD = 0.02
#: Per-layer loss cap (pp) that keeps the fixture's candidate product at 500.
LAYER_BUDGET_PP = 8.0


def _raw_model(seed):
    rng = np.random.default_rng(seed)

    def he(shape, fan_in):
        # Two tight modes at +-He scale: coarse codebooks lose little, k=1 loses a lot.
        n = int(np.prod(shape))
        scale = np.sqrt(2.0 / fan_in)
        sign = rng.choice([-1, 1], n)
        return (sign * scale * (1 + MODE_SPREAD * rng.normal(size=n))).astype(np.float32)

    def small(n):
        return rng.normal(0.0, 0.05, size=n).astype(np.float32)

    layers = [
        LayerSpec("conv2d", kernel=(3, 3, 1, 4), weights=he((3, 3, 1, 4), 9), bias=small(4)),
        LayerSpec("relu"),
        LayerSpec("conv2d", kernel=(3, 3, 4, 8), weights=he((3, 3, 4, 8), 36), bias=small(8)),
        LayerSpec("relu"),
        LayerSpec("maxpool", window=2, stride=2),
        LayerSpec("flatten"),
        LayerSpec("dense", in_features=32, out_features=16, weights=he((32, 16), 32), bias=small(16)),
        LayerSpec("relu"),
        LayerSpec("dense", in_features=16, out_features=10, weights=he((16, 10), 16), bias=small(10)),
    ]
    return ModelSpec(layers, (8, 8, 1))


def make_fixture_model(seed: int = FIXTURE_SEED) -> ModelSpec:
    """Random CNN whose output layer is centred and rescaled.

    Untouched, a random network sends almost every input to one class. The
    last layer is shifted so each logit has zero mean over the fixture
    images and divided by the overall logit spread, which spreads the
    teacher labels across classes.
    """
    model = _raw_model(seed)
    x = (make_fixture_pixels(N_SAMPLES, seed).astype(np.float32) / 255.0)[..., None]
    *body, last = model.layers
    hidden = forward_batch(ModelSpec(body, model.input_shape), x).astype(np.float64)
    w = last.weights.reshape(last.in_features, last.out_features).astype(np.float64)
    logits = hidden @ w
    mean, std = logits.mean(axis=0), logits.std()
    last = replace(last, weights=(w / std).astype(np.float32), bias=(-mean / std).astype(np.float32))
    return ModelSpec([*body, last], model.input_shape)


def make_fixture_pixels(n: int = N_SAMPLES, seed: int = FIXTURE_SEED) -> np.ndarray:
    """uint8 images ``(n, 8, 8)``: smoothed noise, so neighbouring pixels correlate."""
    rng = np.random.default_rng(seed + 1)
    raw = rng.random((n, 10, 10))
    smooth = sum(raw[:, i:i + 8, j:j + 8] for i in range(3) for j in range(3)) / 9.0
    lo = smooth.min(axis=(1, 2), keepdims=True)
    hi = smooth.max(axis=(1, 2), keepdims=True)
    return np.round(255 * (smooth - lo) / (hi - lo)).astype(np.uint8)


def make_fixture(seed: int = FIXTURE_SEED, n: int = N_SAMPLES):
    """``(model, dataset)`` pair with teacher labels."""
    model = make_fixture_model(seed)
    pixels = make_fixture_pixels(n, seed)
    return model, teacher_labels(model, (pixels.astype(np.float32) / 255.0)[..., None])


def write_fixture(out_dir, seed: int = FIXTURE_SEED, n: int = N_SAMPLES) -> dict:
    from .io_formats import save_model, write_idx

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = make_fixture_model(seed)
    pixels = make_fixture_pixels(n, seed)
    data = teacher_labels(model, (pixels.astype(np.float32) / 255.0)[..., None])
    paths = {
        "model": out / "model.json",
        "blob": out / "model.bin",
        "images": out / "images.idx",
        "labels": out / "labels.idx",
    }
    save_model(model, paths["model"], paths["blob"])
    write_idx(paths["images"], pixels)
    write_idx(paths["labels"], data.labels.astype(np.uint8))
    return paths


if __name__ == "__main__":
    for name, path in write_fixture(sys.argv[1] if len(sys.argv) > 1 else "data/fixture").items():
        print(f"{name}: {path}")
