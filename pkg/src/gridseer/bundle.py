"""Portable, hash-verified model bundles (``.mdl``) and the directory run contract.

File layout, all integers little-endian::

    offset 0   8 bytes   magic b"GRIDSEER"
    offset 8   uint32    schema version (1)
    offset 12  uint32    manifest length in bytes
    offset 16  manifest  UTF-8 JSON, sorted keys, no whitespace
    ...        block     parameter block

The manifest always starts with ``{"bundle_id":"<64 hex>"`` because
``bundle_id`` sorts first, putting the id at bytes [30, 94). The id is the
SHA-256 of every other byte of the file, i.e. ``sha256(blob[:30] + blob[94:])``,
so any change anywhere (including to the id itself) is detected.

Parameter block::

    b"NORM" uint32 ncols  float64[ncols] min  float64[ncols] max
    b"TENS" uint32 count  then per tensor: uint32 ndim, uint32[ndim] shape,
                          float64[prod(shape)] values in C order

Tensor order is the model's ``tensors()`` order: for an MLP ``W0 b0 W1 b1
...``; for an LSTM ``W_i W_f W_o W_g U_i U_f U_o U_g b_i b_f b_o b_g head_w
head_b``.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .catalog import ModelFamily, QuestionSpec, predict_series, prediction_timestamps, resolve_question
from .errors import (
    DimensionMismatch,
    HashMismatch,
    InconsistentManifest,
    MalformedPayload,
    MissingFeatureColumn,
    MissingInputFile,
    OutputNotWritable,
    UnsupportedSchemaVersion,
)
from .models import LstmParams, Metrics, MlpParams, NormStats, denormalize, evaluate, normalize_apply, predict
from .telemetry import (
    Resolution,
    build_series,
    format_number,
    format_timestamp,
    node_ids,
    parse_csv,
)

MAGIC = b"GRIDSEER"
SCHEMA_VERSION = 1
HEADER_SIZE = 16
ID_PREFIX = b'{"bundle_id":"'
ID_START = HEADER_SIZE + len(ID_PREFIX)
ID_END = ID_START + 64
MAX_FINGERPRINT = 1024
INPUT_FILE = "telemetry.csv"
PREDICTIONS_FILE = "predictions.csv"
METRICS_FILE = "metrics.json"


@dataclass(frozen=True)
class Manifest:
    question: str
    model_family: str
    input_columns: tuple[str, ...]
    target_column: str
    resolution: str
    created_at: str
    publisher: str
    train_fingerprint: str
    interval: int
    network: dict = field(default_factory=dict)
    lookback: int | None = None
    schema_version: int = SCHEMA_VERSION
    bundle_id: str = ""

    def spec(self) -> QuestionSpec:
        spec = resolve_question(self.question, self.target_column)
        return replace(spec, resolution=Resolution(self.resolution))

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["input_columns"] = list(self.input_columns)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> Manifest:
        try:
            d = dict(d)
            d["input_columns"] = tuple(d["input_columns"])
            return cls(**d)
        except (KeyError, TypeError) as exc:
            raise MalformedPayload(f"bad manifest: {exc}") from None


@dataclass
class ModelBundle:
    manifest: Manifest
    norm_stats: NormStats
    params: MlpParams | LstmParams

    @property
    def spec(self) -> QuestionSpec:
        return self.manifest.spec()

    def predict_series(self, series) -> np.ndarray:
        return predict_series(self.spec, self.params, self.norm_stats, series)


def make_manifest(
    spec: QuestionSpec,
    params,
    *,
    created_at: str,
    publisher: str,
    train_fingerprint: str,
    interval: int,
) -> Manifest:
    return Manifest(
        question=spec.id.value,
        model_family=spec.model_family.value,
        input_columns=spec.features,
        target_column=spec.target,
        resolution=Resolution(spec.resolution).value,
        created_at=created_at,
        publisher=publisher,
        train_fingerprint=train_fingerprint,
        interval=int(interval),
        network=params.architecture(),
        lookback=params.lookback if isinstance(params, LstmParams) else None,
    )


def check_consistency(bundle: ModelBundle) -> None:
    m, params = bundle.manifest, bundle.params
    if m.schema_version != SCHEMA_VERSION:
        raise UnsupportedSchemaVersion(f"schema version {m.schema_version}")
    try:
        spec = m.spec()
    except ValueError as exc:
        raise InconsistentManifest(str(exc)) from None
    if tuple(m.input_columns) != spec.features or m.target_column != spec.target:
        raise InconsistentManifest(f"columns do not match question {m.question}")
    if m.model_family != spec.model_family.value:
        raise InconsistentManifest(f"{m.question} uses {spec.model_family.value}, manifest says {m.model_family}")
    expected_type = LstmParams if spec.model_family is ModelFamily.LSTM else MlpParams
    if not isinstance(params, expected_type):
        raise InconsistentManifest(f"params are {type(params).__name__}, manifest says {m.model_family}")
    if m.network != params.architecture():
        raise InconsistentManifest("manifest network does not describe params")
    input_dim = params.input_dim
    if input_dim != len(m.input_columns):
        raise InconsistentManifest(f"model has {input_dim} inputs for {len(m.input_columns)} columns")
    if isinstance(params, LstmParams) and m.lookback != params.lookback:
        raise InconsistentManifest("lookback disagrees with params")
    if isinstance(params, MlpParams) and m.lookback is not None:
        raise InconsistentManifest("lookback is only meaningful for Lstm")
    if bundle.norm_stats.columns != spec.columns:
        raise InconsistentManifest(f"norm stats cover {bundle.norm_stats.columns}, expected {spec.columns}")
    if len(m.train_fingerprint.encode("utf-8")) > MAX_FINGERPRINT:
        raise InconsistentManifest("train_fingerprint exceeds 1 KiB")
    if m.interval <= 0:
        raise InconsistentManifest("interval must be positive")
    if not all(np.isfinite(t).all() for t in params.tensors()):
        raise InconsistentManifest("parameters must be finite")


# ---------------------------------------------------------------------------
# binary encoding


def _f64(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def encode_block(stats: NormStats, params) -> bytes:
    parts = [b"NORM", struct.pack("<I", len(stats.columns)), _f64(stats.min), _f64(stats.max)]
    tensors = params.tensors()
    parts += [b"TENS", struct.pack("<I", len(tensors))]
    for t in tensors:
        parts.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
        parts.append(_f64(t))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data, self.pos = data, pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise MalformedPayload("truncated parameter block")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)


def decode_block(block: bytes, manifest: Manifest) -> tuple[NormStats, MlpParams | LstmParams]:
    r = _Reader(block)
    if r.take(4) != b"NORM":
        raise MalformedPayload("missing NORM section")
    ncols = r.u32()
    lo, hi = r.f64(ncols), r.f64(ncols)
    if r.take(4) != b"TENS":
        raise MalformedPayload("missing TENS section")
    tensors = []
    for _ in range(r.u32()):
        ndim = r.u32()
        if ndim > 4:
            raise MalformedPayload("tensor rank too large")
        shape = tuple(r.u32() for _ in range(ndim))
        tensors.append(r.f64(int(np.prod(shape, dtype=np.int64))).reshape(shape))
    if r.pos != len(block):
        raise MalformedPayload("trailing bytes after parameter block")

    try:
        spec = manifest.spec()
        stats = NormStats(spec.columns, lo, hi)
        net = manifest.network
        if manifest.model_family == ModelFamily.LSTM.value:
            params = LstmParams.from_tensors(net["input_dim"], net["hidden_dim"], net["lookback"], tensors)
        else:
            sizes = tuple(net["layer_sizes"])
            params = MlpParams(sizes, tensors[0::2], tensors[1::2])
    except (KeyError, IndexError, ValueError, TypeError, DimensionMismatch) as exc:
        raise MalformedPayload(f"parameters do not match manifest: {exc}") from None
    return stats, params


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False).encode()


def bundle_digest(blob: bytes) -> str:
    """SHA-256 over the whole file except the 64-byte id field."""
    return hashlib.sha256(blob[:ID_START] + blob[ID_END:]).hexdigest()


def pack(bundle: ModelBundle) -> bytes:
    """Canonical bytes for ``bundle``; fills in ``bundle_id``."""
    check_consistency(bundle)
    doc = bundle.manifest.to_json_dict()
    doc["bundle_id"] = "0" * 64
    manifest = _canonical_json(doc)
    if not manifest.startswith(ID_PREFIX):
        raise InconsistentManifest("manifest keys must sort after bundle_id")
    header = MAGIC + struct.pack("<II", SCHEMA_VERSION, len(manifest))
    blob = header + manifest + encode_block(bundle.norm_stats, bundle.params)
    digest = bundle_digest(blob).encode()
    return blob[:ID_START] + digest + blob[ID_END:]


def unpack(blob: bytes) -> ModelBundle:
    blob = bytes(blob)
    if len(blob) < ID_END:
        raise MalformedPayload("too short to be a bundle")
    claimed = blob[ID_START:ID_END]
    if bundle_digest(blob).encode() != claimed:
        raise HashMismatch("bundle content does not match its id (corrupted or tampered)")
    if blob[:8] != MAGIC:
        raise MalformedPayload("bad magic")
    version, mlen = struct.unpack("<II", blob[8:16])
    if version != SCHEMA_VERSION:
        raise UnsupportedSchemaVersion(f"schema version {version} (supported: {SCHEMA_VERSION})")
    if HEADER_SIZE + mlen > len(blob):
        raise MalformedPayload("manifest length exceeds file")
    try:
        doc = json.loads(blob[HEADER_SIZE : HEADER_SIZE + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedPayload(f"manifest is not JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedPayload("manifest must be a JSON object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise UnsupportedSchemaVersion(f"manifest schema version {doc.get('schema_version')}")
    manifest = Manifest.from_json_dict(doc)
    stats, params = decode_block(blob[HEADER_SIZE + mlen :], manifest)
    bundle = ModelBundle(manifest, stats, params)
    try:
        check_consistency(bundle)
    except InconsistentManifest as exc:
        raise MalformedPayload(str(exc)) from None
    return bundle


def read_manifest(blob: bytes) -> Manifest:
    """Manifest of a verified bundle."""
    return unpack(blob).manifest


def save_bundle(bundle: ModelBundle, path: str | Path) -> bytes:
    data = pack(bundle)
    Path(path).write_bytes(data)
    return data


def load_bundle(path: str | Path) -> ModelBundle:
    return unpack(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# run contract


@dataclass(frozen=True)
class RunReport:
    rows_read: int
    predictions_written: int
    metrics: Metrics | None
    wall_time: float


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def run_bundle(bundle: ModelBundle, input_dir: str | Path, output_dir: str | Path) -> RunReport:
    """Black-box run: read ``input_dir/telemetry.csv``, write predictions and
    metrics to ``output_dir``. Touches no other paths."""
    t0 = time.perf_counter()
    src = Path(input_dir) / INPUT_FILE
    if not src.is_file():
        raise MissingInputFile(f"{src} not found")
    records = parse_csv(src.read_bytes())
    spec = bundle.spec
    target = spec.target

    out_ts: list[int] = []
    out_nodes: list[str] = []
    preds: list[np.ndarray] = []
    truth: list[np.ndarray] = []
    if isinstance(bundle.params, LstmParams):
        for node in node_ids(records):
            series = build_series(records, node, bundle.manifest.interval)
            yhat = bundle.predict_series(series)
            ts = prediction_timestamps(bundle.params, series)
            actual = np.append(series.column(target)[bundle.params.lookback :], np.nan)
            out_ts += ts.tolist()
            out_nodes += [node] * len(ts)
            preds.append(yhat)
            truth.append(actual)
    else:
        x = np.empty((len(records), len(spec.features)))
        for i, rec in enumerate(records):
            for j, col in enumerate(spec.features):
                v = rec.value(col)
                if v is None:
                    raise MissingFeatureColumn(f"row {i + 1} lacks feature {col!r}")
                x[i, j] = v
        z = predict(bundle.params, normalize_apply(bundle.norm_stats.subset(spec.features), x)) if records else np.zeros(0)
        preds.append(denormalize(bundle.norm_stats.subset([target]), z[:, None])[:, 0])
        truth.append(np.array([np.nan if r.value(target) is None else r.value(target) for r in records]))
        out_ts = [r.timestamp for r in records]
        out_nodes = [r.node_id for r in records]

    yhat = np.concatenate(preds) if preds else np.zeros(0)
    actual = np.concatenate(truth) if truth else np.zeros(0)
    known = ~np.isnan(actual)
    metrics = evaluate(actual[known], yhat[known]) if known.any() else None

    lines = [f"timestamp,node_id,predicted_{target}"]
    lines += [f"{format_timestamp(t)},{n},{format_number(v)}" for t, n, v in zip(out_ts, out_nodes, yhat)]
    body = ("\n".join(lines) + "\n").encode("utf-8")
    doc = metrics.as_dict() if metrics else {"mae": None, "mse": None, "n": None}
    out = Path(output_dir)
    try:
        out.mkdir(exist_ok=True)
        _atomic_write(out / PREDICTIONS_FILE, body)
        _atomic_write(out / METRICS_FILE, (json.dumps(doc, sort_keys=True) + "\n").encode())
    except OSError as exc:
        raise OutputNotWritable(f"cannot write to {out}: {exc}") from None
    return RunReport(len(records), len(yhat), metrics, time.perf_counter() - t0)

