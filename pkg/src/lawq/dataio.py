"""File formats: IDX tensors, LAWQ weight blobs, INI configs, CSV outputs.

Readers reject malformed input with a typed error and never return partial
data.  CSV output always uses '.' decimals and '\\n' line endings.  Writers go
through a temp file and rename so failures leave no partial output behind.
"""

from __future__ import annotations

import configparser
import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (BadMagic, BadValue, CorruptRecord, MissingRequired,
                     TruncatedPayload, UnknownKey, UnsupportedDtype, VersionMismatch)
from .qset import QuantSet, build_qset

# ---------------------------------------------------------------------------
# IDX tensors (big-endian; byte 2 = dtype, byte 3 = rank)
# ---------------------------------------------------------------------------

_IDX_DTYPES = {0x08: ("u1", 1), 0x0D: (">f4", 4)}
_IDX_CODES = {np.dtype(np.uint8): 0x08, np.dtype(np.float32): 0x0D}


@dataclass(frozen=True, eq=False)
class IdxTensor:
    dtype_code: int
    dims: tuple
    payload: bytes = field(repr=False)

    def to_array(self) -> np.ndarray:
        spec, _ = _IDX_DTYPES[self.dtype_code]
        arr = np.frombuffer(self.payload, dtype=spec).reshape(self.dims)
        return arr.astype(arr.dtype.newbyteorder("="))


def parse_idx(data: bytes) -> IdxTensor:
    if len(data) < 4:
        raise TruncatedPayload("file shorter than the 4-byte header")
    pad0, pad1, dtype_code, rank = data[0], data[1], data[2], data[3]
    if pad0 != 0 or pad1 != 0:
        raise BadMagic(f"header bytes 0-1 must be zero, got {pad0:#04x} {pad1:#04x}")
    if dtype_code not in _IDX_DTYPES:
        raise UnsupportedDtype(f"dtype code {dtype_code:#04x} not supported")
    header_end = 4 + 4 * rank
    if len(data) < header_end:
        raise TruncatedPayload("file ends inside the dimension list")
    dims = struct.unpack(f">{rank}I", data[4:header_end])
    _, elem_size = _IDX_DTYPES[dtype_code]
    expected = int(np.prod(dims, dtype=np.int64)) * elem_size if rank else elem_size
    payload = data[header_end:]
    if len(payload) != expected:
        raise TruncatedPayload(
            f"payload holds {len(payload)} bytes, header declares {expected}")
    return IdxTensor(dtype_code, tuple(int(d) for d in dims), payload)


def read_idx(path) -> IdxTensor:
    with open(path, "rb") as fh:
        return parse_idx(fh.read())


def idx_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in _IDX_CODES:
        raise UnsupportedDtype(f"cannot serialize dtype {arr.dtype}")
    code = _IDX_CODES[arr.dtype]
    out = io.BytesIO()
    out.write(bytes([0, 0, code, arr.ndim]))
    out.write(struct.pack(f">{arr.ndim}I", *arr.shape))
    data = arr.astype(_IDX_DTYPES[code][0], copy=False)
    out.write(data.tobytes())
    return out.getvalue()


def write_idx(path, arr: np.ndarray) -> None:
    atomic_write_bytes(path, idx_bytes(arr))


# ---------------------------------------------------------------------------
# LAWQ weight blobs (little-endian, magic "LAWQ", version 1)
# ---------------------------------------------------------------------------

BLOB_MAGIC = b"LAWQ"
BLOB_VERSION = 1
_KIND_CODES = {"full_precision": 1, "quantized_one_scale": 2,
               "quantized_two_scale": 3, "optimizer_state": 4}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_QSET_CODES = {"ternary": 0, "linear": 1, "log": 2}
_QSET_NAMES = {v: k for k, v in _QSET_CODES.items()}


@dataclass(frozen=True, eq=False)
class FullRecord:
    name: str
    dims: tuple
    values: np.ndarray = field(repr=False)  # float64


@dataclass(frozen=True, eq=False)
class OneScaleRecord:
    name: str
    dims: tuple
    qset_kind: str
    bits: int
    alpha: float
    codes: np.ndarray = field(repr=False)  # int8 level indices
    degenerate: bool = False

    def qset(self) -> QuantSet:
        return build_qset(self.bits, "linear" if self.qset_kind == "ternary" else self.qset_kind)

    def reconstruct(self) -> np.ndarray:
        return self.alpha * self.qset().value_of(self.codes)


@dataclass(frozen=True, eq=False)
class TwoScaleRecord:
    name: str
    dims: tuple
    alpha: float
    beta: float
    codes: np.ndarray = field(repr=False)  # {-1, 0, +1}
    degenerate_pos: bool = False
    degenerate_neg: bool = False

    def reconstruct(self) -> np.ndarray:
        return (np.where(self.codes > 0, self.alpha, 0.0)
                + np.where(self.codes < 0, -self.beta, 0.0))


@dataclass(frozen=True, eq=False)
class MomentRecord:
    name: str
    dims: tuple
    m: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)


@dataclass(eq=False)
class WeightBlob:
    kind: str
    records: list
    step: int = 0


def _record_count(dims: tuple) -> int:
    return int(np.prod(dims, dtype=np.int64)) if dims else 1


def write_blob(blob: WeightBlob) -> bytes:
    if blob.kind not in _KIND_CODES:
        raise BadValue(f"unknown blob kind {blob.kind!r}")
    out = io.BytesIO()
    out.write(BLOB_MAGIC)
    out.write(struct.pack("<IBQI", BLOB_VERSION, _KIND_CODES[blob.kind],
                          blob.step, len(blob.records)))
    for rec in blob.records:
        name = rec.name.encode("utf-8")
        out.write(struct.pack("<H", len(name)))
        out.write(name)
        out.write(struct.pack("<B", len(rec.dims)))
        out.write(struct.pack(f"<{len(rec.dims)}I", *rec.dims))
        n = _record_count(rec.dims)
        if blob.kind == "full_precision":
            _check_len(rec.values, n, rec.name)
            out.write(np.ascontiguousarray(rec.values, dtype="<f8").tobytes())
        elif blob.kind == "quantized_one_scale":
            _check_len(rec.codes, n, rec.name)
            out.write(struct.pack("<BBB", _QSET_CODES[rec.qset_kind], rec.bits,
                                  int(rec.degenerate)))
            out.write(struct.pack("<d", rec.alpha))
            out.write(np.ascontiguousarray(rec.codes, dtype=np.int8).tobytes())
        elif blob.kind == "quantized_two_scale":
            _check_len(rec.codes, n, rec.name)
            flags = int(rec.degenerate_pos) | (int(rec.degenerate_neg) << 1)
            out.write(struct.pack("<Bdd", flags, rec.alpha, rec.beta))
            out.write(np.ascontiguousarray(rec.codes, dtype=np.int8).tobytes())
        else:  # optimizer_state
            _check_len(rec.m, n, rec.name)
            _check_len(rec.v, n, rec.name)
            out.write(np.ascontiguousarray(rec.m, dtype="<f8").tobytes())
            out.write(np.ascontiguousarray(rec.v, dtype="<f8").tobytes())
    return out.getvalue()


def _check_len(arr, n: int, name: str) -> None:
    if np.asarray(arr).size != n:
        raise CorruptRecord(f"record {name!r}: payload size does not match dims")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptRecord("blob ends mid-record")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_blob(data: bytes) -> WeightBlob:
    r = _Reader(data)
    if r.take(4) != BLOB_MAGIC:
        raise CorruptRecord("bad magic; not a LAWQ blob")
    version, kind_code, step, count = r.unpack("<IBQI")
    if version != BLOB_VERSION:
        raise VersionMismatch(f"blob version {version}, reader supports {BLOB_VERSION}")
    if kind_code not in _KIND_NAMES:
        raise CorruptRecord(f"unknown blob kind code {kind_code}")
    kind = _KIND_NAMES[kind_code]
    records = []
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I") if ndim else ()
        n = _record_count(dims)
        if kind == "full_precision":
            values = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64)
            records.append(FullRecord(name, dims, values))
        elif kind == "quantized_one_scale":
            qset_code, bits, degenerate = r.unpack("<BBB")
            if qset_code not in _QSET_NAMES:
                raise CorruptRecord(f"record {name!r}: unknown value-set code {qset_code}")
            (alpha,) = r.unpack("<d")
            codes = np.frombuffer(r.take(n), dtype=np.int8).copy()
            records.append(OneScaleRecord(name, dims, _QSET_NAMES[qset_code],
                                          bits, alpha, codes, bool(degenerate)))
        elif kind == "quantized_two_scale":
            flags, alpha, beta = r.unpack("<Bdd")
            codes = np.frombuffer(r.take(n), dtype=np.int8).copy()
            records.append(TwoScaleRecord(name, dims, alpha, beta, codes,
                                          bool(flags & 1), bool(flags & 2)))
        else:
            m = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64)
            v = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64)
            records.append(MomentRecord(name, dims, m, v))
    if r.pos != len(data):
        raise CorruptRecord(f"{len(data) - r.pos} trailing bytes after the last record")
    return WeightBlob(kind, records, step)


def read_blob_file(path) -> WeightBlob:
    with open(path, "rb") as fh:
        return read_blob(fh.read())


def write_blob_file(path, blob: WeightBlob) -> None:
    atomic_write_bytes(path, write_blob(blob))


def atomic_write_bytes(path, data: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# Config files (INI-style; unknown keys are hard errors)
# ---------------------------------------------------------------------------

_CONFIG_SCHEMA = {
    "quantizer": {
        "method": ("str", None),
        "bits": ("int", 2),
        "scheme": ("str", "linear"),
    },
    "train": {
        "epochs": ("int", None),
        "batch_size": ("int", 100),
        "seed": ("int", 0),
        "loss": ("str", "square_hinge"),
        "hidden": ("int_list", (128, 128)),
        "val_fraction": ("float", 0.1),
        "grad_clip": ("float", None),
        "init_scale": ("float", 0.08),
    },
    "schedule": {
        "lr": ("float", None),
        "kind": ("str", "milestones"),
        "factor": ("float", 0.1),
        "milestones": ("int_list", (15, 25)),
        "every": ("int", 1),
        "after": ("int", 0),
    },
    "data": {
        "source": ("str", None),       # "synthetic" | "idx" | "mnist"
        "n_train": ("int", 10000),
        "n_test": ("int", 2000),
        "noise": ("float", 0.55),
        "dir": ("str", None),
        "train_images": ("str", None),
        "train_labels": ("str", None),
        "test_images": ("str", None),
        "test_labels": ("str", None),
        "limit_train": ("int", None),
        "limit_test": ("int", None),
    },
}
_REQUIRED = {("quantizer", "method"), ("train", "epochs"), ("schedule", "lr"),
             ("data", "source")}


def _convert(section: str, key: str, kind: str, raw: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "int_list":
            return tuple(int(tok) for tok in raw.split(",") if tok.strip() != "")
        return raw.strip()
    except ValueError as exc:
        raise BadValue(f"[{section}] {key}={raw!r}: {exc}") from None


def parse_config(text: str) -> dict:
    """Parse an INI config into {section: {key: value}} with defaults applied.

    Unknown sections or keys are hard errors; missing required keys raise.
    """
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",),
                                       interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise BadValue(f"config does not parse: {exc}") from None

    result = {section: dict() for section in _CONFIG_SCHEMA}
    for section in parser.sections():
        if section not in _CONFIG_SCHEMA:
            raise UnknownKey(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _CONFIG_SCHEMA[section]:
                raise UnknownKey(f"unknown key {key!r} in section [{section}]")
            kind, _ = _CONFIG_SCHEMA[section][key]
            result[section][key] = _convert(section, key, kind, raw)
    for (section, key) in _REQUIRED:
        if key not in result[section]:
            raise MissingRequired(f"missing required key {key!r} in section [{section}]")
    for section, keys in _CONFIG_SCHEMA.items():
        for key, (_, default) in keys.items():
            result[section].setdefault(key, default)
    return result


def config_to_train_config(cfg: dict):
    """Build a TrainConfig (plus the data spec) from a parsed config dict."""
    from .training import ScheduleConfig, TrainConfig

    sched = ScheduleConfig(lr=cfg["schedule"]["lr"], kind=cfg["schedule"]["kind"],
                           factor=cfg["schedule"]["factor"],
                           milestones=tuple(cfg["schedule"]["milestones"]),
                           every=cfg["schedule"]["every"], after=cfg["schedule"]["after"])
    train_cfg = TrainConfig(
        method=cfg["quantizer"]["method"], bits=cfg["quantizer"]["bits"],
        scheme=cfg["quantizer"]["scheme"], epochs=cfg["train"]["epochs"],
        batch_size=cfg["train"]["batch_size"], seed=cfg["train"]["seed"],
        hidden=tuple(cfg["train"]["hidden"]), loss=cfg["train"]["loss"],
        schedule=sched, val_fraction=cfg["train"]["val_fraction"],
        grad_clip=cfg["train"]["grad_clip"], init_scale=cfg["train"]["init_scale"],
    )
    return train_cfg, cfg["data"]


# ---------------------------------------------------------------------------
# CSV outputs
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def metrics_csv(rows, n_layers: int) -> str:
    """Fixed-column metrics table; one row per (epoch, split)."""
    alpha_cols = ",".join(f"alpha_l{i + 1}" for i in range(n_layers))
    lines = [f"epoch,split,loss,error_rate,{alpha_cols},wall_seconds"]
    for row in rows:
        alphas = ",".join(_fmt(a) for a in row.alphas)
        lines.append(f"{row.epoch},{row.split},{_fmt(row.loss)},{_fmt(row.error_rate)},"
                     f"{alphas},{_fmt(row.wall_seconds)}")
    return "\n".join(lines) + "\n"


def export_histogram(data, bins: int | None = None):
    """Histogram rows (bin_left, bin_right, count).

    Full-precision input gets ``bins`` uniform bins over [min, max] with a
    right-closed last bin.  Quantized input (anything with a ``reconstruct``
    method) ignores ``bins`` and emits one row per distinct reconstructed
    value.
    """
    if hasattr(data, "reconstruct"):
        values = np.asarray(data.reconstruct(), dtype=np.float64).ravel()
        uniq, counts = np.unique(values, return_counts=True)
        return [(float(u), float(u), int(c)) for u, c in zip(uniq, counts)]
    values = np.asarray(data, dtype=np.float64).ravel()
    if bins is None or bins < 1:
        raise BadValue("bins must be >= 1 for full-precision input")
    lo = float(values.min())
    hi = float(values.max())
    if lo == hi:
        return [(lo, hi, values.size)]
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def histogram_csv(rows) -> str:
    lines = ["bin_left,bin_right,count"]
    for left, right, count in rows:
        lines.append(f"{_fmt(left)},{_fmt(right)},{count}")
    return "\n".join(lines) + "\n"
