"""Server-side reconstruction of global class covariance from client stats.

Clients never share raw rows. Each uploads, per class, a (count, mean,
covariance) triple; the server recombines them exactly:

    mu    = (1/N) sum_k n_k mu_k
    Sigma = (1/N) ( sum_k n_k Sigma_k
                    + sum_k n_k (mu_k - mu)(mu_k - mu)^T )

With population (1/n) local covariances this equals the covariance of the
pooled rows to machine precision, for any split. The resulting per-class
shapes form the ShapeBank disseminated back to clients.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import EmbeddingSet
from .errors import BadMagic, DimensionMismatch, IoError, MissingClass, NoSamples, TruncatedFile
from .geometry import (
    ClassStats,
    GeometricShape,
    Prototype,
    class_stats,
    shape_of,
)

SHAPEBANK_MAGIC = b"GEOS1"
UPLOAD_MAGIC = b"GEOU1"


@dataclass(frozen=True)
class ClientUpload:
    """One client's per-class statistics (classes absent locally carry count 0)."""

    client_id: int
    stats: list[ClassStats]  # length C, indexed by class
    domain_id: int = 0

    @property
    def num_classes(self) -> int:
        return len(self.stats)

    @property
    def dim(self) -> int:
        return len(self.stats[0].mean)


def upload_from_set(
    es: EmbeddingSet, client_id: int, domain_id: int | None = None
) -> ClientUpload:
    """Compute the upload for a client's local EmbeddingSet."""
    stats = []
    for c in range(es.num_classes):
        if len(es.class_indices(c)):
            stats.append(class_stats(es, c))
        else:
            stats.append(ClassStats.empty(es.dim))
    if domain_id is None:
        domain_id = int(es.domains[0]) if es.n else 0
    return ClientUpload(client_id=client_id, stats=stats, domain_id=domain_id)


def aggregate_global(
    uploads: list[ClientUpload], class_id: int
) -> tuple[np.ndarray, np.ndarray, int]:
    """Exact pooled (mean, covariance, count) for one class from uploads."""
    if not uploads:
        raise NoSamples("no uploads")
    dim = uploads[0].dim
    for u in uploads:
        if u.dim != dim or u.num_classes != uploads[0].num_classes:
            raise DimensionMismatch("uploads disagree on C or P")
    entries = [u.stats[class_id] for u in uploads]
    total = sum(e.count for e in entries)
    if total < 1:
        raise NoSamples(f"class {class_id} has no samples across the federation")
    counts = np.array([e.count for e in entries], dtype=np.float64)
    means = np.stack([e.mean for e in entries])  # (K, P)
    mu = counts @ means / total
    centered = means - mu
    within = np.einsum("k,kij->ij", counts, np.stack([e.covariance for e in entries]))
    between = (centered.T * counts) @ centered
    sigma = (within + between) / total
    sigma = (sigma + sigma.T) / 2
    return mu, sigma, int(total)


@dataclass(frozen=True)
class ShapeBank:
    """Per-class global shapes + means + counts; optionally per-domain prototypes."""

    shapes: dict[int, GeometricShape]
    means: dict[int, np.ndarray]
    counts: dict[int, int] = field(default_factory=dict)
    prototypes: dict[int, list[Prototype]] = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.shapes)

    @property
    def m(self) -> int:
        return next(iter(self.shapes.values())).m

    @property
    def dim(self) -> int:
        return next(iter(self.shapes.values())).p


def build_shape_bank(
    uploads: list[ClientUpload], m: int, include_prototypes: bool = False
) -> ShapeBank:
    """Aggregate every class and eigendecompose; optionally attach per-(class,
    domain) prototypes pooled over the clients of each domain.
    """
    num_classes = uploads[0].num_classes
    missing = [
        c
        for c in range(num_classes)
        if sum(u.stats[c].count for u in uploads) == 0
    ]
    if missing:
        raise MissingClass(f"classes with no samples on any client: {missing}")
    shapes, means, counts = {}, {}, {}
    for c in range(num_classes):
        mu, sigma, n = aggregate_global(uploads, c)
        shapes[c] = shape_of(sigma, m)
        means[c] = mu
        counts[c] = n
    prototypes: dict[int, list[Prototype]] = {}
    if include_prototypes:
        for c in range(num_classes):
            by_domain: dict[int, tuple[np.ndarray, int]] = {}
            for u in uploads:
                st = u.stats[c]
                if st.count == 0:
                    continue
                acc, n = by_domain.get(u.domain_id, (np.zeros(u.dim), 0))
                by_domain[u.domain_id] = (acc + st.count * st.mean, n + st.count)
            prototypes[c] = [
                Prototype(vector=acc / n, class_id=c, domain_id=d)
                for d, (acc, n) in sorted(by_domain.items())
            ]
    return ShapeBank(shapes=shapes, means=means, counts=counts, prototypes=prototypes)


# --- GEOS1 serialization -------------------------------------------------

def save_shape_bank(bank: ShapeBank, path: str | Path) -> None:
    """GEOS1: magic, version, C, P, m, then per class m*P f64 eigenvectors,
    P f64 eigenvalues, P f64 global mean; then an optional prototype table
    (u32 count, then per prototype u32 class, u32 domain, P f64).
    """
    C, P, m = bank.num_classes, bank.dim, bank.m
    blob = bytearray()
    blob += SHAPEBANK_MAGIC
    blob += bytes([1])
    blob += struct.pack("<III", C, P, m)
    for c in range(C):
        shp = bank.shapes[c]
        blob += shp.eigenvectors.astype("<f8").tobytes()
        blob += shp.eigenvalues.astype("<f8").tobytes()
        blob += np.asarray(bank.means[c], dtype="<f8").tobytes()
    protos = [p for c in sorted(bank.prototypes) for p in bank.prototypes[c]]
    blob += struct.pack("<I", len(protos))
    for p in protos:
        blob += struct.pack("<II", p.class_id, p.domain_id or 0)
        blob += np.asarray(p.vector, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_shape_bank(path: str | Path) -> ShapeBank:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"{path}: {e.strerror or e}") from e
    if raw[:5] != SHAPEBANK_MAGIC:
        raise BadMagic(f"{path}: not a GEOS1 file")
    C, P, m = struct.unpack_from("<III", raw, 6)
    off = 18
    block = (m * P + P + P) * 8
    if len(raw) < off + C * block + 4:
        raise TruncatedFile(f"{path}: truncated shape bank")
    shapes, means = {}, {}
    for c in range(C):
        vecs = np.frombuffer(raw, dtype="<f8", count=m * P, offset=off).reshape(m, P)
        off += m * P * 8
        vals = np.frombuffer(raw, dtype="<f8", count=P, offset=off)
        off += P * 8
        mu = np.frombuffer(raw, dtype="<f8", count=P, offset=off)
        off += P * 8
        shapes[c] = GeometricShape(eigenvectors=vecs.copy(), eigenvalues=vals.copy())
        means[c] = mu.copy()
    (n_protos,) = struct.unpack_from("<I", raw, off)
    off += 4
    prototypes: dict[int, list[Prototype]] = {}
    for _ in range(n_protos):
        cid, did = struct.unpack_from("<II", raw, off)
        off += 8
        vec = np.frombuffer(raw, dtype="<f8", count=P, offset=off).copy()
        off += P * 8
        prototypes.setdefault(cid, []).append(
            Prototype(vector=vec, class_id=cid, domain_id=did)
        )
    return ShapeBank(shapes=shapes, means=means, prototypes=prototypes)


# --- GEOU1 serialization -------------------------------------------------

def save_upload(upload: ClientUpload, path: str | Path) -> None:
    """GEOU1: magic, client_id u32, C u32, P u32, then per class count u64,
    mean P f64, covariance P*P f64."""
    C, P = upload.num_classes, upload.dim
    blob = bytearray()
    blob += UPLOAD_MAGIC
    blob += struct.pack("<III", upload.client_id, C, P)
    for st in upload.stats:
        blob += struct.pack("<Q", st.count)
        blob += np.asarray(st.mean, dtype="<f8").tobytes()
        blob += np.asarray(st.covariance, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_upload(path: str | Path, domain_id: int = 0) -> ClientUpload:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"{path}: {e.strerror or e}") from e
    if raw[:5] != UPLOAD_MAGIC:
        raise BadMagic(f"{path}: not a GEOU1 file")
    client_id, C, P = struct.unpack_from("<III", raw, 5)
    off = 17
    block = 8 + P * 8 + P * P * 8
    if len(raw) < off + C * block:
        raise TruncatedFile(f"{path}: truncated upload")
    stats = []
    for _ in range(C):
        (count,) = struct.unpack_from("<Q", raw, off)
        off += 8
        mean = np.frombuffer(raw, dtype="<f8", count=P, offset=off).copy()
        off += P * 8
        cov = np.frombuffer(raw, dtype="<f8", count=P * P, offset=off).reshape(P, P)
        off += P * P * 8
        stats.append(ClassStats(count=count, mean=mean, covariance=cov.copy()))
    return ClientUpload(client_id=client_id, stats=stats, domain_id=domain_id)
