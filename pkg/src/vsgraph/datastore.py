"""On-disk formats: VSGM dense matrices, label CSVs and the dataset manifest.

Matrix file layout (all little-endian)::

    b"VSGM" | version u32 | rows u64 | cols u64 | payload f32[rows * cols]

Matrices are plain 2-D numpy arrays in memory. Single-label vectors are 1-D
int64 arrays; multi-label matrices are 2-D uint8 indicator arrays.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ContiguityError,
    FormatError,
    LengthError,
    MatrixWriteError,
    ShapeError,
    ValidationError,
)

MATRIX_MAGIC = b"VSGM"
MATRIX_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def as_matrix(x, name="matrix") -> np.ndarray:
    """Check that `x` is a finite 2-D array and return it as an ndarray."""
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ValidationError(f"{name} has a non-finite value at {tuple(bad)}")
    return arr


def matrix_bytes(matrix) -> bytes:
    arr = as_matrix(matrix)
    payload = arr.astype("<f4")
    if not np.all(np.isfinite(payload)):
        raise ValidationError("matrix value overflows 32-bit float")
    rows, cols = arr.shape
    return _HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, rows, cols) + payload.tobytes(order="C")


def save_matrix(matrix, destination) -> None:
    data = matrix_bytes(matrix)
    try:
        with open(destination, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise MatrixWriteError(destination, exc) from exc


def parse_matrix(raw: bytes, source="<bytes>") -> np.ndarray:
    if len(raw) < 4 or raw[:4] != MATRIX_MAGIC:
        raise FormatError(f"{source}: bad magic {raw[:4]!r}, expected {MATRIX_MAGIC!r}")
    if len(raw) < _HEADER.size:
        raise LengthError(f"{source}: truncated header ({len(raw)} bytes)")
    _, version, rows, cols = _HEADER.unpack_from(raw)
    if version != MATRIX_VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    expected = rows * cols * 4
    got = len(raw) - _HEADER.size
    if got != expected:
        raise LengthError(
            f"{source}: header declares {rows}x{cols} ({rows * cols} values) "
            f"but payload holds {got / 4:g}"
        )
    arr = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(rows, cols)
    arr = arr.astype(np.float32)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ValidationError(f"{source}: non-finite value at {tuple(int(v) for v in bad)}")
    arr.flags.writeable = False
    return arr


def load_matrix(source) -> np.ndarray:
    """Read a VSGM file. The result is a read-only float32 array."""
    with open(source, "rb") as fh:
        raw = fh.read()
    return parse_matrix(raw, source)


def read_matrix_shape(source) -> tuple[int, int]:
    with open(source, "rb") as fh:
        head = fh.read(_HEADER.size)
    if head[:4] != MATRIX_MAGIC:
        raise FormatError(f"{source}: bad magic {head[:4]!r}")
    if len(head) < _HEADER.size:
        raise LengthError(f"{source}: truncated header")
    _, _, rows, cols = _HEADER.unpack(head)
    return rows, cols


# ---------------------------------------------------------------- labels


def _parse_index(text, class_count, lineno, sample_id):
    try:
        value = int(text)
    except ValueError:
        raise FormatError(f"line {lineno}: label {text!r} is not an integer") from None
    if not 0 <= value < class_count:
        raise ValidationError(
            f"line {lineno} (sample {sample_id}): label {value} outside [0, {class_count})"
        )
    return value


def parse_labels(text: str, class_count: int, source="<labels>"):
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FormatError(f"{source}: empty label file") from None
    if header == ["sample_id", "label"]:
        multi = False
    elif header == ["sample_id", "labels"]:
        multi = True
    else:
        raise FormatError(f"{source}: unexpected header {header}")

    ids, values = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise FormatError(f"{source}: line {lineno} has {len(row)} fields")
        try:
            sid = int(row[0])
        except ValueError:
            raise FormatError(f"{source}: line {lineno}: bad sample id {row[0]!r}") from None
        if multi:
            cell = row[1].strip()
            parts = [p for p in cell.split(";") if p.strip()] if cell else []
            values.append([_parse_index(p, class_count, lineno, sid) for p in parts])
        else:
            values.append(_parse_index(row[1].strip(), class_count, lineno, sid))
        ids.append(sid)

    order = np.argsort(np.asarray(ids, dtype=np.int64), kind="stable")
    sorted_ids = np.asarray(ids, dtype=np.int64)[order]
    expected = np.arange(len(ids))
    if not np.array_equal(sorted_ids, expected):
        mismatch = int(np.flatnonzero(sorted_ids != expected)[0])
        raise ContiguityError(
            f"{source}: sample ids are not contiguous 0..{len(ids) - 1}; "
            f"first problem near id {mismatch}"
        )

    if not multi:
        out = np.asarray(values, dtype=np.int64)[order]
        out.flags.writeable = False
        return out
    out = np.zeros((len(ids), class_count), dtype=np.uint8)
    for pos, src in enumerate(order):
        out[pos, values[src]] = 1
    out.flags.writeable = False
    return out


def load_labels(source, class_count: int):
    """Load a label CSV.

    Returns a 1-D int64 array for ``sample_id,label`` files and a 2-D uint8
    indicator matrix for ``sample_id,labels`` files (``;``-separated indices).
    """
    with open(source, encoding="utf-8", newline="") as fh:
        return parse_labels(fh.read(), class_count, source)


def save_labels(labels, destination) -> None:
    labels = np.asarray(labels)
    lines = []
    if labels.ndim == 1:
        lines.append("sample_id,label")
        lines.extend(f"{i},{int(v)}" for i, v in enumerate(labels))
    elif labels.ndim == 2:
        if not np.isin(labels, (0, 1)).all():
            raise ValidationError("multi-label matrix entries must be 0 or 1")
        lines.append("sample_id,labels")
        for i, row in enumerate(labels):
            lines.append(f"{i}," + ";".join(str(c) for c in np.flatnonzero(row)))
    else:
        raise ShapeError(f"labels must be 1-D or 2-D, got {labels.ndim}-D")
    try:
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise MatrixWriteError(destination, exc) from exc


# -------------------------------------------------------------- manifest

_PATH_KEYS = ("features", "metadata_embeddings", "label_descriptions", "labels")
_OPTIONAL_PATH_KEYS = ("ground_truth", "cnn_labels")


@dataclass
class DatasetManifest:
    features: Path
    metadata_embeddings: Path
    label_descriptions: Path
    labels: Path
    sample_count: int
    class_count: int
    ground_truth: Path | None = None
    cnn_labels: Path | None = None
    embedding_dims: dict = field(default_factory=dict)

    def validate(self) -> None:
        """Check that referenced matrices agree with the declared counts."""
        for key in _PATH_KEYS + _OPTIONAL_PATH_KEYS:
            path = getattr(self, key)
            if path is not None and not Path(path).exists():
                raise ValidationError(f"manifest: {key} file {path} does not exist")
        n_feat, d_v = read_matrix_shape(self.features)
        n_meta, d_t = read_matrix_shape(self.metadata_embeddings)
        n_desc, d_l = read_matrix_shape(self.label_descriptions)
        if n_feat != self.sample_count or n_meta != self.sample_count:
            raise ValidationError(
                f"manifest: sample_count {self.sample_count} but features has {n_feat} "
                f"rows and metadata has {n_meta}"
            )
        if n_desc != self.class_count:
            raise ValidationError(
                f"manifest: class_count {self.class_count} but label descriptions "
                f"have {n_desc} rows"
            )
        if d_l != d_t:
            raise ValidationError(
                f"manifest: metadata dim {d_t} differs from label-description dim {d_l}"
            )
        if self.cnn_labels is not None:
            shape = read_matrix_shape(self.cnn_labels)
            if shape != (self.sample_count, self.class_count):
                raise ValidationError(f"manifest: cnn_labels has shape {shape}")
        self.embedding_dims = {"features": d_v, "metadata": d_t}

    def to_json(self, base: Path | None = None) -> dict:
        def rel(p):
            if p is None:
                return None
            p = Path(p)
            if base is not None:
                try:
                    return str(p.resolve().relative_to(Path(base).resolve()))
                except ValueError:
                    pass
            return str(p)

        out = {key: rel(getattr(self, key)) for key in _PATH_KEYS}
        out["sample_count"] = self.sample_count
        out["class_count"] = self.class_count
        for key in _OPTIONAL_PATH_KEYS:
            if getattr(self, key) is not None:
                out[key] = rel(getattr(self, key))
        if self.embedding_dims:
            out["embedding_dims"] = dict(self.embedding_dims)
        return out


def load_manifest(source) -> DatasetManifest:
    source = Path(source)
    try:
        doc = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{source}: manifest must be a JSON object")
    missing = [k for k in _PATH_KEYS + ("sample_count", "class_count") if k not in doc]
    if missing:
        raise ValidationError(f"{source}: manifest missing keys {missing}")
    base = source.parent

    def resolve(value):
        p = Path(value)
        return p if p.is_absolute() else base / p

    manifest = DatasetManifest(
        **{k: resolve(doc[k]) for k in _PATH_KEYS},
        sample_count=int(doc["sample_count"]),
        class_count=int(doc["class_count"]),
        **{k: resolve(doc[k]) for k in _OPTIONAL_PATH_KEYS if doc.get(k) is not None},
        embedding_dims=dict(doc.get("embedding_dims", {})),
    )
    return manifest


def save_manifest(manifest: DatasetManifest, destination) -> None:
    destination = Path(destination)
    text = json.dumps(manifest.to_json(destination.parent), indent=2, sort_keys=True)
    destination.write_text(text + "\n", encoding="utf-8")
