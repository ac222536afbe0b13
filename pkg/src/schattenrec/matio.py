"""Matrix, vector and generic file I/O.

Binary matrix container ("SMAT"): magic bytes b"SMAT", two unsigned 64-bit
little-endian dims, then row-major little-endian float64 entries.  The JSON
alternative is {"rows": n, "cols": n, "data": [row-major]}.  All writes are
atomic (temp file in the target directory, then rename).
"""

import json
import os
import struct
import tempfile

import numpy as np

from .errors import ValidationError

SMAT_MAGIC = b"SMAT"


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def save_matrix_smat(path, X):
    X = np.ascontiguousarray(X, dtype="<f8")
    if X.ndim != 2:
        raise ValidationError("SMAT stores 2-D arrays")
    header = SMAT_MAGIC + struct.pack("<QQ", X.shape[0], X.shape[1])
    atomic_write_bytes(path, header + X.tobytes(order="C"))


def load_matrix_smat(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != SMAT_MAGIC:
        raise ValidationError(f"{path}: bad magic, not an SMAT file")
    rows, cols = struct.unpack("<QQ", raw[4:20])
    body = raw[20:]
    if len(body) != rows * cols * 8:
        raise ValidationError(f"{path}: truncated SMAT payload")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)


def save_matrix_json(path, X):
    X = np.asarray(X, dtype=np.float64)
    doc = {"rows": int(X.shape[0]), "cols": int(X.shape[1]), "data": X.ravel(order="C").tolist()}
    atomic_write_text(path, json.dumps(doc))


def load_matrix_json(path):
    with open(path) as f:
        doc = json.load(f)
    try:
        rows, cols, data = doc["rows"], doc["cols"], doc["data"]
    except (TypeError, KeyError) as e:
        raise ValidationError(f"{path}: missing matrix field {e}") from e
    if len(data) != rows * cols:
        raise ValidationError(f"{path}: data length {len(data)} != rows*cols")
    return np.asarray(data, dtype=np.float64).reshape(rows, cols)


def save_matrix(path, X):
    """Dispatch on extension: .smat is binary, anything else is JSON."""
    if os.fspath(path).endswith(".smat"):
        save_matrix_smat(path, X)
    else:
        save_matrix_json(path, X)


def load_matrix(path):
    if os.fspath(path).endswith(".smat"):
        return load_matrix_smat(path)
    return load_matrix_json(path)


def save_vector(path, y):
    y = np.asarray(y, dtype=np.float64)
    atomic_write_text(path, json.dumps({"data": y.tolist()}))


def load_vector(path):
    with open(path) as f:
        doc = json.load(f)
    data = doc["data"] if isinstance(doc, dict) else doc
    return np.asarray(data, dtype=np.float64)


def save_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True))


def load_json(path):
    with open(path) as f:
        return json.load(f)
