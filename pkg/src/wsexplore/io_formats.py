"""File formats: model container, IDX datasets, result CSV/JSON documents.

Model container
    ``model.json`` describes the architecture; ``model.bin`` holds all
    parameters as little-endian float32, layer by layer, weights then bias.
    Each weighted layer records ``{"offset": bytes, "count": elements}`` for
    its weights and bias.

IDX
    The classic MNIST container: two zero bytes, a dtype code, the number of
    dimensions, big-endian uint32 sizes, then row-major payload. Only
    unsigned bytes (dtype 0x08) are supported.

Every JSON document carries ``"schema_version": "1"``; CSVs use ``.`` as
decimal separator, LF line endings and a header row. Floats are written with
``repr`` so they reload bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, WSError
from .layer_explorer import CandidateSet, CurvePoint, SensitivityCurve, SweepConfig
from .model import LAYER_KINDS, LayerSpec, ModelSpec
from .network_explorer import EvalRecord, FrontComparison, ParetoFront
from .predictor import PredictionModel

SCHEMA_VERSION = "1"
IDX_UBYTE = 0x08

RECORD_COLUMNS = ["ktuple", "al_pp", "al_source", "cr", "inertia_sum", "inertia_per_layer"]
FRONT_COLUMNS = RECORD_COLUMNS + ["al_budget"]
CURVE_COLUMNS = ["layer", "k", "b_index", "al_pp", "cr", "inertia", "method"]


class BlobLengthError(FormatError):
    pass


class NonFiniteWeightError(FormatError):
    pass


class UnknownLayerError(FormatError):
    pass


class SchemaVersionError(FormatError):
    pass


# -- JSON helpers -------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(path, doc: dict):
    doc = {"schema_version": SCHEMA_VERSION, **doc}
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8", newline="\n")


def read_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"{path}: schema_version {version!r}, expected {SCHEMA_VERSION!r}")
    return doc


# -- model container ----------------------------------------------------------

def _layer_doc(layer: LayerSpec) -> dict:
    if layer.kind == "conv2d":
        return {"kind": "conv2d", "kernel": list(layer.kernel), "stride": layer.stride, "padding": layer.padding}
    if layer.kind == "dense":
        return {"kind": "dense", "in_features": layer.in_features, "out_features": layer.out_features}
    if layer.kind in ("maxpool", "avgpool"):
        return {"kind": layer.kind, "window": layer.window, "stride": layer.stride}
    return {"kind": layer.kind}


def save_model(model: ModelSpec, manifest_path, blob_path):
    chunks, layers, offset = [], [], 0
    for layer in model.layers:
        doc = _layer_doc(layer)
        if layer.is_weighted:
            for name, arr in (("weights", layer.weights), ("bias", layer.bias)):
                doc[name] = {"offset": offset, "count": int(arr.size)}
                chunks.append(arr.astype("<f4").tobytes())
                offset += 4 * arr.size
        layers.append(doc)
    Path(blob_path).write_bytes(b"".join(chunks))
    write_json(manifest_path, {
        "dtype": "f32le",
        "input_shape": list(model.input_shape),
        "layers": layers,
    })


def _read_param(blob, entry, i, name):
    try:
        offset, count = int(entry["offset"]), int(entry["count"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"layer {i}: malformed {name} entry {entry!r}") from e
    if offset < 0 or count < 0 or offset % 4 or offset + 4 * count > len(blob):
        raise BlobLengthError(f"layer {i}: {name} [{offset}, +{4 * count}) outside the {len(blob)}-byte blob")
    arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).astype(np.float32)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteWeightError(f"layer {i}: {name} contain NaN or Inf")
    return arr


def load_model(manifest_path, blob_path) -> ModelSpec:
    """Load and fully validate a model container."""
    doc = read_json(manifest_path)
    blob = Path(blob_path).read_bytes()
    if doc.get("dtype") != "f32le":
        raise FormatError(f"{manifest_path}: unsupported dtype {doc.get('dtype')!r}")
    layer_docs = doc.get("layers")
    if not isinstance(layer_docs, list) or not layer_docs:
        raise FormatError(f"{manifest_path}: 'layers' must be a non-empty list")
    declared = 0
    for ld in layer_docs:
        for name in ("weights", "bias"):
            if isinstance(ld, dict) and name in ld:
                declared += 4 * int(ld[name].get("count", 0))
    if declared != len(blob):
        raise BlobLengthError(f"{blob_path}: blob has {len(blob)} bytes, manifest declares {declared}")
    layers = []
    for i, ld in enumerate(layer_docs):
        kind = ld.get("kind") if isinstance(ld, dict) else None
        if kind not in LAYER_KINDS:
            raise UnknownLayerError(f"layer {i}: unknown layer kind {kind!r}")
        kwargs = {}
        if kind == "conv2d":
            kwargs = dict(kernel=tuple(ld["kernel"]), stride=int(ld.get("stride", 1)),
                          padding=ld.get("padding", "valid"))
        elif kind == "dense":
            kwargs = dict(in_features=int(ld["in_features"]), out_features=int(ld["out_features"]))
        elif kind in ("maxpool", "avgpool"):
            kwargs = dict(window=int(ld["window"]), stride=int(ld.get("stride", ld["window"])))
        if kind in ("conv2d", "dense"):
            if "weights" not in ld:
                raise FormatError(f"layer {i}: {kind} layer has no weights entry")
            kwargs["weights"] = _read_param(blob, ld["weights"], i, "weights")
            kwargs["bias"] = _read_param(blob, ld["bias"], i, "bias") if "bias" in ld else []
        layers.append(LayerSpec(kind, **kwargs))
    return ModelSpec(layers, tuple(doc["input_shape"]))


# -- IDX ----------------------------------------------------------------------

def read_idx(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[0] != 0 or data[1] != 0:
        raise FormatError(f"{path}: bad IDX magic {data[:4].hex()}")
    dtype_code, ndim = data[2], data[3]
    if dtype_code != IDX_UBYTE:
        raise FormatError(f"{path}: unsupported IDX dtype 0x{dtype_code:02X} (only 0x08 unsigned byte)")
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    expected = int(np.prod(dims, dtype=np.int64))
    if len(data) - header != expected:
        raise FormatError(f"{path}: payload has {len(data) - header} bytes, dims {dims} need {expected}")
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def write_idx(path, array):
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise WSError("only uint8 arrays can be written as IDX")
    header = bytes([0, 0, IDX_UBYTE, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes(order="C"))


def load_idx_images(path) -> np.ndarray:
    """Images as float32 ``(n, rows, cols, 1)`` scaled to [0, 1]."""
    raw = read_idx(path)
    if raw.ndim != 3:
        raise FormatError(f"{path}: image file must have 3 dimensions, got {raw.ndim}")
    return (raw.astype(np.float32) / np.float32(255.0))[..., None]


def load_idx_labels(path) -> np.ndarray:
    raw = read_idx(path)
    if raw.ndim != 1:
        raise FormatError(f"{path}: label file must have 1 dimension, got {raw.ndim}")
    return raw.astype(np.int64)


# -- CSV documents ------------------------------------------------------------

def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _read_csv(path, columns):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != columns:
            raise FormatError(f"{path}: expected header {columns}, got {header}")
        return [dict(zip(columns, row)) for row in reader]


def _join(values):
    return ";".join(repr(float(v)) if isinstance(v, float) else str(v) for v in values)


def _record_row(r: EvalRecord):
    return [_join(r.ktuple), repr(float(r.al)), r.al_source, repr(float(r.cr)),
            repr(r.inertia_sum), _join(float(v) for v in r.per_layer_inertia)]


def _record_from(row, path) -> EvalRecord:
    try:
        return EvalRecord(
            ktuple=tuple(int(v) for v in row["ktuple"].split(";")),
            al=float(row["al_pp"]),
            al_source=row["al_source"],
            cr=float(row["cr"]),
            per_layer_inertia=tuple(float(v) for v in row["inertia_per_layer"].split(";") if v),
        )
    except (ValueError, KeyError) as e:
        raise FormatError(f"{path}: malformed record row {row}") from e


def save_records(records, path):
    _write_csv(path, RECORD_COLUMNS, [_record_row(r) for r in records])


def load_records(path) -> list:
    return [_record_from(row, path) for row in _read_csv(path, RECORD_COLUMNS)]


def save_front(front: ParetoFront, path):
    _write_csv(path, FRONT_COLUMNS, [_record_row(r) + [repr(float(front.al_budget))] for r in front.points])


def load_front(path, al_budget=None) -> ParetoFront:
    rows = _read_csv(path, FRONT_COLUMNS)
    budgets = {row["al_budget"] for row in rows}
    if len(budgets) > 1:
        raise FormatError(f"{path}: rows disagree on al_budget")
    if budgets:
        al_budget = float(budgets.pop())
    elif al_budget is None:
        raise FormatError(f"{path}: empty front; al_budget must be supplied")
    return ParetoFront([_record_from(row, path) for row in rows], float(al_budget))


def save_curve(curve: SensitivityCurve, path):
    _write_csv(path, CURVE_COLUMNS, [
        [curve.layer_index, p.k, p.b_index, repr(float(p.al)), repr(float(p.cr)), repr(float(p.inertia)), p.method]
        for p in curve.points
    ])


def load_curve(path) -> SensitivityCurve:
    rows = _read_csv(path, CURVE_COLUMNS)
    if not rows:
        raise FormatError(f"{path}: empty curve")
    layers = {int(r["layer"]) for r in rows}
    if len(layers) != 1:
        raise FormatError(f"{path}: curve mixes layers {sorted(layers)}")
    points = [CurvePoint(int(r["k"]), float(r["al_pp"]), float(r["cr"]), int(r["b_index"]),
                         float(r["inertia"]), r["method"]) for r in rows]
    return SensitivityCurve(layers.pop(), points)


def _point_doc(p: CurvePoint) -> dict:
    return {"k": p.k, "al_pp": p.al, "cr": p.cr, "b_index": p.b_index, "inertia": p.inertia, "method": p.method}


def save_candidates(candidate_sets, cfg: SweepConfig, path):
    layers = [{"name": f"layer{n}", "layer_index": cs.layer_index,
               "candidates": [_point_doc(p) for p in cs.candidates]}
              for n, cs in enumerate(candidate_sets, start=1)]
    write_json(path, {
        "k_min": cfg.k_min, "k_max": cfg.k_max, "k_stride": cfg.stride,
        "layer_al_budget": cfg.layer_al_budget,
        "layers": layers,
        "summary": {layer["name"]: [c["k"] for c in layer["candidates"]] for layer in layers},
    })


def load_candidates(path):
    """Returns ``(candidate_sets, sweep_config)``."""
    doc = read_json(path)
    try:
        cfg = SweepConfig(int(doc["k_min"]), int(doc["k_max"]), doc["layer_al_budget"], int(doc["k_stride"]))
        sets = [CandidateSet(int(layer["layer_index"]), [
            CurvePoint(int(c["k"]), float(c["al_pp"]), float(c["cr"]), int(c["b_index"]),
                       float(c["inertia"]), c["method"]) for c in layer["candidates"]])
            for layer in doc["layers"]]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: malformed candidates document ({e})") from e
    return sets, cfg


def save_predictor(model: PredictionModel, path):
    write_json(path, {
        "alphas": [float(a) for a in model.alphas],
        "intercept": model.intercept,
        "n_samples": model.n_samples,
        "rmse_train": model.rmse_train,
        "mae_train": model.mae_train,
        "meta": model.meta,
    })


def load_predictor(path) -> PredictionModel:
    doc = read_json(path)
    try:
        return PredictionModel(
            alphas=np.array(doc["alphas"], dtype=np.float64),
            intercept=None if doc["intercept"] is None else float(doc["intercept"]),
            n_samples=int(doc["n_samples"]),
            rmse_train=float(doc["rmse_train"]),
            mae_train=float(doc.get("mae_train", 0.0)),
            meta=dict(doc.get("meta", {})),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: malformed predictor document ({e})") from e


def save_comparison(cmp: FrontComparison, path, al_budget: float):
    write_json(path, {
        "coverage": {"fraction": cmp.coverage, "eps_al": cmp.eps_al, "eps_cr": cmp.eps_cr},
        "gap": {"mean": cmp.mean_gap, "max": cmp.max_gap},
        "hypervolume": {"truth": cmp.hv_truth, "predicted": cmp.hv_predicted, "ratio": cmp.hv_ratio,
                        "reference": [al_budget, 1.0]},
        "n_truth": cmp.n_truth,
        "n_predicted": cmp.n_predicted,
    })


def load_comparison(path) -> FrontComparison:
    doc = read_json(path)

    def num(v):
        return math.inf if v is None else float(v)

    return FrontComparison(
        coverage=float(doc["coverage"]["fraction"]),
        mean_gap=num(doc["gap"]["mean"]),
        max_gap=num(doc["gap"]["max"]),
        hv_truth=float(doc["hypervolume"]["truth"]),
        hv_predicted=float(doc["hypervolume"]["predicted"]),
        hv_ratio=num(doc["hypervolume"]["ratio"]),
        eps_al=float(doc["coverage"]["eps_al"]),
        eps_cr=float(doc["coverage"]["eps_cr"]),
        n_truth=int(doc["n_truth"]),
        n_predicted=int(doc["n_predicted"]),
    )
