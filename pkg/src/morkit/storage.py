"""On-disk artifacts: binary matrices, delimited plot tables, model containers.

Matrix container: magic ``MORK1``, two little-endian u64 (rows, cols), then
column-major float64 payload.  Model container: magic ``MORKM1``, u64 header
length, JSON header, then the named matrices as MORK1 blocks in header order.
Everything is written with sorted keys and fixed float formatting so repeated
runs are byte-identical.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MATRIX_MAGIC = b"MORK1"
MODEL_MAGIC = b"MORKM1"
CONTAINER_VERSION = 1


def save_matrix(path, matrix):
    """Write a 2-D float64 matrix in the binary container format."""
    A = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    payload = A.tobytes(order="F")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", A.shape[0], A.shape[1]))
        fh.write(payload)


def load_matrix(path):
    with open(path, "rb") as fh:
        data = fh.read()
    return _matrix_from_bytes(data, str(path))


def _matrix_from_bytes(data, origin):
    head = len(MATRIX_MAGIC) + 16
    if len(data) < head or data[: len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise FormatError(f"{origin}: bad magic or truncated header")
    rows, cols = struct.unpack("<QQ", data[len(MATRIX_MAGIC) : head])
    expected = head + rows * cols * 8
    if len(data) != expected:
        raise FormatError(f"{origin}: expected {expected} bytes, found {len(data)}")
    flat = np.frombuffer(data[head:], dtype="<f8")
    return np.asfortranarray(flat.reshape((rows, cols), order="F")).copy(order="F")


def _matrix_to_bytes(matrix):
    A = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    return MATRIX_MAGIC + struct.pack("<QQ", *A.shape) + A.tobytes(order="F")


def export_matrix_csv(path, matrix, header=None):
    """Decimal mirror of the binary container (17 significant digits)."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in A:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def import_matrix_csv(path, skip_header=False):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if skip_header:
        lines = lines[1:]
    try:
        rows = [[float(v) for v in ln.split(",")] for ln in lines]
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric CSV entry: {exc}") from exc
    return np.array(rows, dtype=float)


def emit_plot_data(path, columns, header, fmt=None):
    """Write a plot-ready table: whitespace ``.dat`` or comma ``.csv``.

    ``columns`` is a sequence of equal-length 1-D arrays; one header line of
    column names; fixed ``%.17g`` formatting keeps output locale-independent
    and byte-stable across runs.
    """
    path = Path(path)
    cols = [np.asarray(c, dtype=float) for c in columns]
    if not cols or any(c.ndim != 1 for c in cols):
        raise FormatError("emit_plot_data expects 1-D column arrays")
    length = len(cols[0])
    if any(len(c) != length for c in cols) or len(header) != len(cols):
        raise FormatError("column/header lengths disagree")
    if length == 0:
        raise FormatError("refusing to emit an empty table")
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "dat"
    sep = "," if fmt == "csv" else " "
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(sep.join(header) + "\n")
        for i in range(length):
            fh.write(sep.join(f"{c[i]:.17g}" for c in cols) + "\n")
    return path


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ArtifactStore:
    """Single experiment output directory with a content-hash manifest."""

    def __init__(self, root, config=None, tool_version="0.1.0"):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.config = config or {}
        self.tool_version = tool_version

    def path(self, name):
        return self.root / name

    def save_matrix(self, name, matrix):
        save_matrix(self.path(name), matrix)
        return self.path(name)

    def emit(self, name, columns, header):
        return emit_plot_data(self.path(name), columns, header)

    def write_text(self, name, text):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return self.path(name)

    def write_manifest(self):
        return self.write_manifest_as("manifest.json")

    def write_manifest_as(self, name):
        skip = {"manifest.json", "report_manifest.json"}
        files = {
            p.name: _sha256(p)
            for p in sorted(self.root.iterdir())
            if p.is_file() and p.name not in skip
        }
        manifest = {
            "tool": "morkit",
            "version": self.tool_version,
            "config": self.config,
            "files": files,
        }
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return manifest


def save_model(path, kind, meta, matrices):
    """Versioned binary container for trained models.

    ``matrices`` is a name -> 2-D array mapping; scalars/strings go in
    ``meta``.  Keys are sorted so the bytes are reproducible.
    """
    names = sorted(matrices)
    header = {
        "format_version": CONTAINER_VERSION,
        "kind": kind,
        "meta": meta,
        "matrices": names,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(_matrix_to_bytes(matrices[name]))


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    head = len(MODEL_MAGIC) + 8
    if len(data) < head or data[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad model magic or truncated header")
    (hlen,) = struct.unpack("<Q", data[len(MODEL_MAGIC) : head])
    try:
        header = json.loads(data[head : head + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt model header: {exc}") from exc
    if header.get("format_version") != CONTAINER_VERSION:
        raise FormatError(f"{path}: unsupported container version")
    matrices = {}
    offset = head + hlen
    for name in header["matrices"]:
        if len(data) < offset + len(MATRIX_MAGIC) + 16:
            raise FormatError(f"{path}: truncated before matrix {name!r}")
        rows, cols = struct.unpack(
            "<QQ", data[offset + len(MATRIX_MAGIC) : offset + len(MATRIX_MAGIC) + 16]
        )
        size = len(MATRIX_MAGIC) + 16 + rows * cols * 8
        matrices[name] = _matrix_from_bytes(data[offset : offset + size],
                                            f"{path}#{name}")
        offset += size
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    return header["kind"], header["meta"], matrices
