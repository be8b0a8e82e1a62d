"""GEOB1 container writing and verification.

The format (shared contract with the analysis library):

    bytes 0-4   magic ``GEOB1``
    byte 5      version = 1
    u32 LE      header length
    header      UTF-8 JSON ``{n, p, c, d, ...}`` (canonical: sorted keys)
    payload     n*P little-endian float32, row-major
    labels      n little-endian uint16
    domains     n little-endian uint16

Extra header keys (``model``, ``preprocess``, ``class_names``) are
recorded so downstream tools know how the rows were produced; readers
that do not know them ignore them.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, IoError, NonFiniteEntry, TruncatedFile

MAGIC = b"GEOB1"
VERSION = 1


def write_container(
    path: str | Path,
    data: np.ndarray,
    labels: np.ndarray,
    domains: np.ndarray,
    num_classes: int,
    num_domains: int = 1,
    class_names: list[str] | None = None,
    model: str | None = None,
    preprocess: str | None = None,
) -> None:
    """Write rows as a GEOB1 container with a canonical JSON header."""
    data = np.ascontiguousarray(np.asarray(data, dtype=np.float32))
    labels = np.ascontiguousarray(np.asarray(labels, dtype=np.uint16))
    domains = np.ascontiguousarray(np.asarray(domains, dtype=np.uint16))
    if data.ndim != 2 or labels.shape != (data.shape[0],) or domains.shape != (data.shape[0],):
        raise IoError("data must be (n, P) with matching labels/domains")
    if not np.isfinite(data).all():
        bad = int(np.flatnonzero(~np.isfinite(data).all(axis=1))[0])
        raise NonFiniteEntry(f"model produced a non-finite embedding in row {bad}")
    header: dict = {
        "n": int(data.shape[0]),
        "p": int(data.shape[1]),
        "c": int(num_classes),
        "d": int(num_domains),
    }
    if class_names is not None:
        header["class_names"] = list(class_names)
    if model is not None:
        header["model"] = model
    if preprocess is not None:
        header["preprocess"] = preprocess
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blob = bytearray()
    blob += MAGIC
    blob += bytes([VERSION])
    blob += struct.pack("<I", len(header_bytes))
    blob += header_bytes
    blob += data.astype("<f4").tobytes()
    blob += labels.astype("<u2").tobytes()
    blob += domains.astype("<u2").tobytes()
    try:
        Path(path).write_bytes(bytes(blob))
    except OSError as e:
        raise IoError(f"{path}: {e.strerror or e}") from e


def verify_container(path: str | Path) -> dict:
    """Validate a GEOB1 file and report its contents.

    Returns {n, p, c, d, model?, per_class: {label: count}}.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"{path}: {e.strerror or e}") from e
    if raw[:5] != MAGIC:
        raise BadMagic(f"{path}: not a GEOB1 container")
    if len(raw) < 10:
        raise TruncatedFile(f"{path}: missing header")
    if raw[5] != VERSION:
        raise BadMagic(f"{path}: unsupported version {raw[5]}")
    (hlen,) = struct.unpack_from("<I", raw, 6)
    off = 10
    if len(raw) < off + hlen:
        raise TruncatedFile(f"{path}: truncated header")
    try:
        header = json.loads(raw[off : off + hlen].decode())
    except ValueError as e:
        raise BadMagic(f"{path}: bad header JSON: {e}") from e
    off += hlen
    n, p = header["n"], header["p"]
    need = n * p * 4 + n * 2 + n * 2
    if len(raw) - off < need:
        raise TruncatedFile(
            f"{path}: payload holds {len(raw) - off} bytes, header implies {need}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=n * p, offset=off).reshape(n, p)
    labels = np.frombuffer(raw, dtype="<u2", count=n, offset=off + n * p * 4)
    if not np.isfinite(data).all():
        bad = int(np.flatnonzero(~np.isfinite(data).all(axis=1))[0])
        raise NonFiniteEntry(f"{path}: non-finite entry in row {bad}")
    per_class = {
        int(label): int(count)
        for label, count in zip(*np.unique(labels, return_counts=True))
    }
    report = {
        "n": int(n),
        "p": int(p),
        "c": int(header["c"]),
        "d": int(header["d"]),
        "per_class": per_class,
    }
    if "model" in header:
        report["model"] = header["model"]
    return report
