"""Columnar text and WARC binary grid formats, written atomically."""
from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"WARC"
VERSION = 1


class FormatError(ValueError):
    pass


def atomic_write(path, data: bytes) -> None:
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


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    s = str(x)
    if any(c in s for c in ",\n"):
        raise FormatError(f"value {s!r} cannot be stored in a columnar cell")
    return s


def columnar_text(columns: dict, meta: dict | None = None) -> str:
    names = list(columns)
    for n in names:
        if any(c in n for c in ",\n#"):
            raise FormatError(f"bad column name {n!r}")
    cols = [np.asarray(columns[n]).ravel() if np.ndim(columns[n]) else np.atleast_1d(columns[n]) for n in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise FormatError(f"columns have different lengths {sorted(lengths)}")
    lines = []
    for k, v in (meta or {}).items():
        if "=" in str(k) or "\n" in str(v):
            raise FormatError(f"bad metadata entry {k!r}")
        lines.append(f"# {k}={v}")
    lines.append("# " + ",".join(names))
    n = lengths.pop() if lengths else 0
    for i in range(n):
        lines.append(",".join(_fmt(c[i].item() if hasattr(c[i], "item") else c[i]) for c in cols))
    return "\n".join(lines) + "\n"


def write_columnar(path, columns: dict, meta: dict | None = None) -> Path:
    atomic_write(path, columnar_text(columns, meta).encode("utf-8"))
    return Path(path)


def _parse_cell(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_columnar(path):
    """Return (meta, columns); numeric columns come back as numpy arrays."""
    meta, names, rows = {}, None, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body and names is None and "," not in body.split("=", 1)[0]:
                k, v = body.split("=", 1)
                meta[k] = v
            else:
                names = body.split(",") if body else []
            continue
        if line:
            rows.append([_parse_cell(c) for c in line.split(",")])
    if names is None:
        raise FormatError("missing column header")
    cols = {}
    for j, n in enumerate(names):
        vals = [r[j] for r in rows]
        if all(isinstance(v, (int, float)) for v in vals):
            cols[n] = np.array(vals, dtype=float if any(isinstance(v, float) for v in vals) else np.int64)
        else:
            cols[n] = np.array([str(v) for v in vals], dtype=object)
    return meta, cols


def binary_bytes(array) -> bytes:
    """WARC layout: magic, u32 version, u32 rank, u64 dims, u8 complex flag, LE float64 data."""
    a = np.asarray(array)
    is_complex = np.iscomplexobj(a)
    header = MAGIC + struct.pack("<II", VERSION, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    header += struct.pack("<B", 1 if is_complex else 0)
    if is_complex:
        data = np.ascontiguousarray(a, dtype="<c16").view("<f8")
    else:
        data = np.ascontiguousarray(a, dtype="<f8")
    return header + data.tobytes(order="C")


def write_binary(path, array) -> Path:
    atomic_write(path, binary_bytes(array))
    return Path(path)


def parse_binary(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise FormatError("not a WARC file")
    version, rank = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported WARC version {version}")
    off = 12
    dims = struct.unpack_from(f"<{rank}Q", buf, off)
    off += 8 * rank
    (flag,) = struct.unpack_from("<B", buf, off)
    off += 1
    count = int(np.prod(dims, dtype=np.int64)) * (2 if flag else 1)
    if len(buf) - off != 8 * count:
        raise FormatError("WARC payload size does not match header")
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=off)
    if flag:
        data = data.view("<c16")
    return data.reshape(dims).astype(complex if flag else float)


def read_binary(path) -> np.ndarray:
    return parse_binary(Path(path).read_bytes())
