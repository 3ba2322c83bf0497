"""On-disk formats for time-average fields and partitions.

Field file layout (all integers and reals little-endian)::

    8 bytes   magic  b"QPFIELD\\0"
    uint32    format version
    uint64    header length L
    L bytes   header, UTF-8 JSON (sorted keys, compact)
    n1*n2 x 9 bytes  row-major cell records: uint8 state, float64 value

The header carries the configuration echo, observable id, grid dimensions,
axis ranges, the cell-state legend, run metadata and the SHA-256 of the body.
Escaped cells store a NaN value.

Partition files are canonical JSON text.  Both writers go through a temporary
file and an atomic rename, so a failed write never leaves a partial file.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FieldFileError
from .partition import CELL_STATES, ESCAPED, PartitionField, ScanDomain, TimeAverageField

MAGIC = b"QPFIELD\0"
VERSION = 1
RECORD = np.dtype([("state", "u1"), ("value", "<f8")])
PARTITION_FORMAT = "qpergodic-partition"


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False, ensure_ascii=False)


def atomic_write(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# fields


def _body(field: TimeAverageField):
    rec = np.empty(field.values.size, dtype=RECORD)
    rec["state"] = field.states.ravel()
    values = field.values.ravel().copy()
    values[rec["state"] == ESCAPED] = np.nan
    rec["value"] = values
    return rec.tobytes()


def encode_field(field: TimeAverageField, config=None) -> bytes:
    body = _body(field)
    meta = dict(field.metadata)
    if config is not None:
        meta["config"] = config
    header = {
        "observable": field.observable_id,
        "dims": list(field.shape),
        "domain": field.domain.describe(),
        "legend": {str(k): v for k, v in CELL_STATES.items()},
        "record": "uint8 state + float64 value, little-endian, row-major (first axis slowest)",
        "metadata": meta,
        "body_sha256": hashlib.sha256(body).hexdigest(),
    }
    head = canonical_json(header).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + body


def decode_field(data: bytes) -> TimeAverageField:
    if data[:8] != MAGIC:
        raise FieldFileError("not a field file (bad magic)")
    try:
        version, hlen = struct.unpack("<IQ", data[8:20])
    except struct.error:
        raise FieldFileError("truncated field file header") from None
    if version != VERSION:
        raise FieldFileError(f"unsupported field file version {version}")
    try:
        header = json.loads(data[20:20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FieldFileError(f"corrupt field header: {exc}") from None
    body = data[20 + hlen:]
    if hashlib.sha256(body).hexdigest() != header.get("body_sha256"):
        raise FieldFileError("field body checksum mismatch")
    n1, n2 = header["dims"]
    if len(body) != n1 * n2 * RECORD.itemsize:
        raise FieldFileError(f"body has {len(body)} bytes, expected {n1 * n2 * RECORD.itemsize}")
    rec = np.frombuffer(body, dtype=RECORD)
    states = rec["state"].reshape(n1, n2).copy()
    values = rec["value"].reshape(n1, n2).astype(float)
    meta = header["metadata"]
    field = TimeAverageField(ScanDomain.from_description(header["domain"]), header["observable"], values, states, meta)
    return field


def save_field(field: TimeAverageField, path, config=None):
    atomic_write(path, encode_field(field, config))


def load_field(path) -> TimeAverageField:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FieldFileError(f"cannot read {path}: {exc}") from exc
    return decode_field(data)


# ---------------------------------------------------------------------------
# partitions


def encode_partition(part: PartitionField, sources=()) -> bytes:
    index, tuples = part.labels()
    doc = {
        "format": PARTITION_FORMAT,
        "version": VERSION,
        "domain": part.domain.describe(),
        "dims": list(part.shape),
        "binning": part.binning,
        "labels": [list(t) for t in tuples],
        "index": index.ravel().tolist(),
        "sources": list(sources),
    }
    return (canonical_json(doc) + "\n").encode("utf-8")


def decode_partition(data: bytes):
    """Return ``(PartitionField, document)``."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FieldFileError(f"corrupt partition file: {exc}") from None
    if doc.get("format") != PARTITION_FORMAT:
        raise FieldFileError("not a partition file")
    n1, n2 = doc["dims"]
    index = np.array(doc["index"], dtype=np.int64).reshape(n1, n2)
    labels = np.array(doc["labels"], dtype=np.int64).reshape(len(doc["labels"]), -1)
    nf = len(doc["binning"])
    bins = np.zeros((nf, n1, n2), dtype=np.int64)
    live = index >= 0
    if labels.size:
        bins[:, live] = labels[index[live]].T
    part = PartitionField(ScanDomain.from_description(doc["domain"]), bins, ~live, doc["binning"])
    return part, doc


def save_partition(part: PartitionField, path, sources=()):
    atomic_write(path, encode_partition(part, sources))


def load_partition(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FieldFileError(f"cannot read {path}: {exc}") from exc
    return decode_partition(data)


def sniff(path):
    """``"field"`` or ``"partition"`` from the leading bytes."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == MAGIC:
        return "field"
    if head.startswith(b"{"):
        return "partition"
    raise FieldFileError(f"{path}: unrecognised file type")
