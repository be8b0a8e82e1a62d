"""Embedding container format (GEOB1), indexing, and dataset partitioning.

An :class:`EmbeddingSet` is the universal currency of the package: a
labeled, domain-tagged matrix of embedding rows. On disk it lives in the
GEOB1 binary format:

    bytes 0-4   magic ``GEOB1``
    byte 5      version = 1
    u32 LE      header length
    header      UTF-8 JSON ``{n, p, c, d, class_names?, domain_names?, synthetic?}``
    payload     n*P little-endian float32, row-major
    labels      n little-endian uint16
    domains     n little-endian uint16

Samples are stored one per row (the math modules adopt the same
convention throughout). Disk precision is float32; all statistics are
computed in float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    EmptyClass,
    InvalidSpec,
    IoError,
    NonFiniteEntry,
    TruncatedFile,
)

MAGIC = b"GEOB1"
VERSION = 1


@dataclass(frozen=True)
class EmbeddingSet:
    """Immutable set of n labeled, domain-tagged P-dimensional embeddings.

    ``synthetic`` marks rows generated by augmentation; ``None`` means all
    rows are real.
    """

    data: np.ndarray  # (n, P) float32
    labels: np.ndarray  # (n,) uint16, values in [0, num_classes)
    domains: np.ndarray  # (n,) uint16, values in [0, num_domains)
    num_classes: int
    num_domains: int = 1
    class_names: tuple[str, ...] | None = None
    domain_names: tuple[str, ...] | None = None
    synthetic: np.ndarray | None = None  # (n,) bool

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.uint16))
        domains = np.ascontiguousarray(np.asarray(self.domains, dtype=np.uint16))
        if data.ndim != 2:
            raise DimensionMismatch(f"data must be 2-D, got shape {data.shape}")
        n = data.shape[0]
        if labels.shape != (n,) or domains.shape != (n,):
            raise DimensionMismatch(
                f"labels/domains length must equal row count {n}"
            )
        if data.shape[1] < 1:
            raise DimensionMismatch("embedding dimension must be >= 1")
        if not np.isfinite(data).all():
            raise NonFiniteEntry("embedding matrix contains NaN or Inf")
        if n and labels.max() >= self.num_classes:
            raise DimensionMismatch("label out of range for num_classes")
        if n and domains.max() >= self.num_domains:
            raise DimensionMismatch("domain index out of range for num_domains")
        if self.class_names is not None and len(self.class_names) != self.num_classes:
            raise DimensionMismatch("class_names length must equal num_classes")
        if self.domain_names is not None and len(self.domain_names) != self.num_domains:
            raise DimensionMismatch("domain_names length must equal num_domains")
        synthetic = self.synthetic
        if synthetic is not None:
            synthetic = np.ascontiguousarray(np.asarray(synthetic, dtype=bool))
            if synthetic.shape != (n,):
                raise DimensionMismatch("synthetic flags length must equal row count")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "domains", domains)
        object.__setattr__(self, "synthetic", synthetic)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def class_indices(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == class_id)

    def domain_indices(self, domain_id: int) -> np.ndarray:
        return np.flatnonzero(self.domains == domain_id)

    def class_counts(self) -> np.ndarray:
        """Per-class row counts as an array of length num_classes."""
        return np.bincount(self.labels, minlength=self.num_classes)

    def take(self, indices: np.ndarray | Sequence[int]) -> "EmbeddingSet":
        """Row subset preserving metadata."""
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            data=self.data[idx],
            labels=self.labels[idx],
            domains=self.domains[idx],
            synthetic=None if self.synthetic is None else self.synthetic[idx],
        )

    def rows_f64(self) -> np.ndarray:
        """Data matrix promoted to float64 for statistics."""
        return self.data.astype(np.float64)


def save_container(es: EmbeddingSet, path: str | Path) -> None:
    """Write an EmbeddingSet in GEOB1 format (bit-exact, canonical header)."""
    header: dict = {
        "n": es.n,
        "p": es.dim,
        "c": es.num_classes,
        "d": es.num_domains,
    }
    if es.class_names is not None:
        header["class_names"] = list(es.class_names)
    if es.domain_names is not None:
        header["domain_names"] = list(es.domain_names)
    if es.synthetic is not None:
        header["synthetic"] = [int(x) for x in es.synthetic]
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blob = bytearray()
    blob += MAGIC
    blob += bytes([VERSION])
    blob += struct.pack("<I", len(header_bytes))
    blob += header_bytes
    blob += es.data.astype("<f4").tobytes()
    blob += es.labels.astype("<u2").tobytes()
    blob += es.domains.astype("<u2").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_container(path: str | Path, l2_normalize: bool = False) -> EmbeddingSet:
    """Load a GEOB1 container.

    ``l2_normalize`` rescales each row to unit norm at load time (some
    embedding models ship normalized vectors, some do not; the container
    stays agnostic and the choice is made here). Default off.
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
    n, p, c, d = header["n"], header["p"], header["c"], header["d"]
    need = n * p * 4 + n * 2 + n * 2
    if len(raw) - off < need:
        raise TruncatedFile(
            f"{path}: payload holds {len(raw) - off} bytes, header implies {need}"
        )
    if len(raw) - off > need:
        raise DimensionMismatch(
            f"{path}: payload holds {len(raw) - off} bytes, header implies {need}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=n * p, offset=off).reshape(n, p)
    off += n * p * 4
    labels = np.frombuffer(raw, dtype="<u2", count=n, offset=off)
    off += n * 2
    domains = np.frombuffer(raw, dtype="<u2", count=n, offset=off)
    if not np.isfinite(data).all():
        bad = int(np.flatnonzero(~np.isfinite(data).all(axis=1))[0])
        raise NonFiniteEntry(f"{path}: non-finite entry in row {bad}")
    if l2_normalize and n:
        norms = np.linalg.norm(data.astype(np.float64), axis=1, keepdims=True)
        if (norms == 0).any():
            raise NonFiniteEntry(f"{path}: zero row cannot be normalized")
        data = (data / norms).astype(np.float32)
    synthetic = header.get("synthetic")
    return EmbeddingSet(
        data=data.copy(),
        labels=labels.copy(),
        domains=domains.copy(),
        num_classes=c,
        num_domains=d,
        class_names=tuple(header["class_names"]) if "class_names" in header else None,
        domain_names=tuple(header["domain_names"]) if "domain_names" in header else None,
        synthetic=None if synthetic is None else np.asarray(synthetic, dtype=bool),
    )


@dataclass(frozen=True)
class PartitionSpec:
    """How to split an EmbeddingSet across clients (or subsample it)."""

    kind: str  # dirichlet_label_skew | fixed_assignment | longtail_exponential
    num_clients: int = 1
    beta: float = 0.5
    imbalance_factor: float = 1.0
    seed: int = 0

    KINDS = ("dirichlet_label_skew", "fixed_assignment", "longtail_exponential")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidSpec(f"unknown partition kind {self.kind!r}")
        if self.num_clients < 1:
            raise InvalidSpec("num_clients must be >= 1")
        if self.kind == "dirichlet_label_skew" and not self.beta > 0:
            raise InvalidSpec("beta must be > 0 for dirichlet_label_skew")
        if self.kind == "longtail_exponential" and self.imbalance_factor < 1:
            raise InvalidSpec("imbalance_factor must be >= 1")


def longtail_counts(class_counts: np.ndarray, imbalance_factor: float) -> np.ndarray:
    """Exponential keep-counts n_k = n_max * IF^(-k/(C-1)), floored, min 1."""
    counts = np.asarray(class_counts, dtype=np.int64)
    c = len(counts)
    n_max = int(counts.max())
    if c == 1 or imbalance_factor == 1.0:
        kept = np.full(c, n_max, dtype=np.int64)
    else:
        k = np.arange(c, dtype=np.float64)
        kept = np.floor(n_max * imbalance_factor ** (-k / (c - 1))).astype(np.int64)
    kept = np.maximum(kept, 1)
    return np.minimum(kept, counts)


def partition(es: EmbeddingSet, spec: PartitionSpec) -> list[np.ndarray]:
    """Split rows into per-client index lists.

    dirichlet_label_skew: per class c, draw p_c ~ Dirichlet(beta * 1_K) and
    assign that class's rows to clients multinomially under p_c.

    longtail_exponential: keep n_k = n_max * IF^(-k/(C-1)) rows of class k
    (floored, min 1); clients are ignored and a single index list returns.

    fixed_assignment: client d receives exactly the rows of domain d.

    Deterministic under the spec's seed.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "fixed_assignment":
        return [es.domain_indices(d) for d in range(es.num_domains)]

    if spec.kind == "longtail_exponential":
        counts = es.class_counts()
        if (counts == 0).any():
            raise EmptyClass(
                f"classes {np.flatnonzero(counts == 0).tolist()} have no samples"
            )
        kept_counts = longtail_counts(counts, spec.imbalance_factor)
        kept: list[np.ndarray] = []
        for k in range(es.num_classes):
            idx = es.class_indices(k)
            sel = rng.choice(idx, size=int(kept_counts[k]), replace=False)
            kept.append(np.sort(sel))
        return [np.concatenate(kept)]

    # dirichlet_label_skew
    counts = es.class_counts()
    if (counts == 0).any():
        raise EmptyClass(
            f"classes {np.flatnonzero(counts == 0).tolist()} have no samples"
        )
    per_client: list[list[np.ndarray]] = [[] for _ in range(spec.num_clients)]
    for c in range(es.num_classes):
        idx = es.class_indices(c)
        props = rng.dirichlet(np.full(spec.num_clients, spec.beta))
        assignment = rng.choice(spec.num_clients, size=len(idx), p=props)
        for k in range(spec.num_clients):
            per_client[k].append(idx[assignment == k])
    return [
        np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
        for parts in per_client
    ]
