"""Class covariance geometry: shapes, sizes, prototypes, similarity metrics.

The geometric shape of a class is the top-m eigenvectors (plus the full
eigenvalue list) of its embedding covariance matrix. Shapes are the
transferable knowledge unit of the whole package: they travel from server
to clients, and from sample-rich donor classes to tail classes.

All computation is float64; covariance uses population normalization
(1/n). Centering is on by default; ``raw_second_moment=True`` computes the
uncentered second moment instead (some formulations skip the mean).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import EmbeddingSet
from .errors import (
    DimensionMismatch,
    EmptyClass,
    InvalidSize,
    NonFinite,
    NotSymmetric,
    ZeroVector,
)

SYMMETRY_TOL = 1e-10  # absolute
EIG_CLAMP_REL = 1e-10  # eigenvalue clamp, relative to trace
ORTHO_TOL = 1e-8

DEFAULT_M = 5


@dataclass(frozen=True)
class GeometricShape:
    """Top-m covariance eigenvectors plus the full eigenvalue spectrum.

    Eigenvectors are stored as rows in descending eigenvalue order.
    """

    eigenvectors: np.ndarray  # (m, P)
    eigenvalues: np.ndarray  # (P,), non-increasing, >= 0

    @property
    def m(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def p(self) -> int:
        return self.eigenvectors.shape[1]

    def reconstruct(self) -> np.ndarray:
        """Sum of lambda_i * xi_i xi_i^T over the retained directions."""
        lam = self.eigenvalues[: self.m]
        return (self.eigenvectors.T * lam) @ self.eigenvectors


@dataclass(frozen=True)
class ClassStats:
    """Per-class (count, mean, covariance); the only statistic clients share."""

    count: int
    mean: np.ndarray  # (P,)
    covariance: np.ndarray  # (P, P)

    @classmethod
    def empty(cls, dim: int) -> "ClassStats":
        return cls(0, np.zeros(dim), np.zeros((dim, dim)))


@dataclass(frozen=True)
class Prototype:
    """Class mean embedding, optionally tagged with its source domain."""

    vector: np.ndarray
    class_id: int
    domain_id: int | None = None


def class_stats(
    es: EmbeddingSet, class_id: int, raw_second_moment: bool = False
) -> ClassStats:
    """Mean and population covariance of one class's rows."""
    idx = es.class_indices(class_id)
    if len(idx) == 0:
        raise EmptyClass(f"class {class_id} has no samples")
    rows = es.data[idx].astype(np.float64)
    return stats_of_rows(rows, raw_second_moment=raw_second_moment)


def stats_of_rows(rows: np.ndarray, raw_second_moment: bool = False) -> ClassStats:
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    if n == 0:
        raise EmptyClass("no rows")
    mean = rows.mean(axis=0)
    centered = rows if raw_second_moment else rows - mean
    cov = centered.T @ centered / n
    cov = (cov + cov.T) / 2  # kill round-off asymmetry
    return ClassStats(count=n, mean=mean, covariance=cov)


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each eigenvector so its largest-magnitude component is positive."""
    out = vectors.copy()
    for i in range(out.shape[0]):
        j = int(np.argmax(np.abs(out[i])))
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def shape_of(cov: np.ndarray, m: int = DEFAULT_M) -> GeometricShape:
    """Symmetric eigendecomposition, descending, with deterministic signs.

    Negative eigenvalues within 1e-10 * trace of zero are clamped to 0.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionMismatch(f"covariance must be square, got {cov.shape}")
    if not np.isfinite(cov).all():
        raise NonFinite("covariance contains NaN or Inf")
    if np.abs(cov - cov.T).max(initial=0.0) > SYMMETRY_TOL:
        raise NotSymmetric("covariance is not symmetric within 1e-10")
    p = cov.shape[0]
    if not 1 <= m <= p:
        raise DimensionMismatch(f"m={m} must be in [1, {p}]")
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order].T  # rows
    clamp = EIG_CLAMP_REL * max(abs(np.trace(cov)), 1e-300)
    eigvals = np.where(eigvals < clamp, np.maximum(eigvals, 0.0), eigvals)
    eigvals[eigvals < 0] = 0.0
    return GeometricShape(
        eigenvectors=_canonical_signs(eigvecs[:m]), eigenvalues=eigvals
    )


def size_of(x: GeometricShape | np.ndarray) -> float:
    """Distribution size: trace of the covariance = sum of all eigenvalues."""
    if isinstance(x, GeometricShape):
        return float(x.eigenvalues.sum())
    x = np.asarray(x, dtype=np.float64)
    return float(np.trace(x))


def shape_similarity(
    a: GeometricShape, b: GeometricShape, normalize: bool = False
) -> float:
    """Sum over i of |<xi_a^i, xi_b^i>|, index-aligned; in [0, m].

    ``normalize=True`` divides by m for cross-m comparability.
    """
    if a.m != b.m or a.p != b.p:
        raise DimensionMismatch(
            f"shape mismatch: (m={a.m}, p={a.p}) vs (m={b.m}, p={b.p})"
        )
    s = float(np.abs(np.sum(a.eigenvectors * b.eigenvectors, axis=1)).sum())
    return s / a.m if normalize else s


def class_similarity(a: Prototype | np.ndarray, b: Prototype | np.ndarray) -> float:
    """Cosine similarity of two prototype vectors."""
    va = a.vector if isinstance(a, Prototype) else np.asarray(a, dtype=np.float64)
    vb = b.vector if isinstance(b, Prototype) else np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise ZeroVector("cannot take cosine of a zero vector")
    return float(np.dot(va, vb) / (na * nb))


def class_prototypes(es: EmbeddingSet) -> dict[int, Prototype]:
    """Per-class mean vectors for all classes present in the set."""
    out = {}
    for c in range(es.num_classes):
        idx = es.class_indices(c)
        if len(idx):
            out[c] = Prototype(
                vector=es.data[idx].astype(np.float64).mean(axis=0), class_id=c
            )
    return out


def class_shapes(
    es: EmbeddingSet, m: int = DEFAULT_M, raw_second_moment: bool = False
) -> dict[int, GeometricShape]:
    out = {}
    for c in range(es.num_classes):
        if len(es.class_indices(c)):
            out[c] = shape_of(
                class_stats(es, c, raw_second_moment=raw_second_moment).covariance, m
            )
    return out


def rank_by_cosine(
    query: np.ndarray, prototypes: dict[int, Prototype]
) -> list[tuple[int, float]]:
    """Candidate class ids sorted by descending cosine, ties by ascending id."""
    sims = [(c, class_similarity(query, p.vector)) for c, p in prototypes.items()]
    return sorted(sims, key=lambda t: (-t[1], t[0]))


def consistency_curve(
    ref_set: EmbeddingSet, cand_set: EmbeddingSet, m: int = DEFAULT_M
) -> dict[int, list[tuple[int, float, float]]]:
    """Per reference class: candidate classes ranked by prototype cosine,
    each paired with the geometric shape similarity of the two classes.

    Returns {ref_class: [(cand_class, class_similarity, shape_similarity), ...]}
    sorted by descending class similarity (ties by ascending candidate id).
    """
    if ref_set.n == 0 or cand_set.n == 0:
        raise EmptyClass("both sets must be nonempty")
    if ref_set.dim != cand_set.dim:
        raise DimensionMismatch("reference and candidate dimensions differ")
    ref_protos = class_prototypes(ref_set)
    cand_protos = class_prototypes(cand_set)
    ref_shapes = class_shapes(ref_set, m)
    cand_shapes = class_shapes(cand_set, m)
    out: dict[int, list[tuple[int, float, float]]] = {}
    for rc, rp in ref_protos.items():
        ranked = rank_by_cosine(rp.vector, cand_protos)
        out[rc] = [
            (cc, cos, shape_similarity(ref_shapes[rc], cand_shapes[cc]))
            for cc, cos in ranked
        ]
    return out


def consistency_curve_csv(curve: dict[int, list[tuple[int, float, float]]]) -> str:
    lines = ["ref_class,rank,cand_class,class_similarity,shape_similarity"]
    for rc in sorted(curve):
        for rank, (cc, cos, ss) in enumerate(curve[rc], 1):
            lines.append(f"{rc},{rank},{cc},{cos:.12g},{ss:.12g}")
    return "\n".join(lines) + "\n"


def matching_stability(
    full_set: EmbeddingSet,
    subsample_sizes: list[int],
    kb_set: EmbeddingSet,
    trials: int = 20,
    seed: int = 0,
) -> dict[int, tuple[float, float, float]]:
    """Stability of prototype matching under subsampling.

    For each class of ``full_set`` the full-sample prototype defines
    top-1/2/3 matches in ``kb_set``. For each subsample size, draw
    ``trials`` subsamples per class, match their prototypes, and report the
    fraction of (class, trial) pairs whose subsample top-1 match lies in
    the full-sample top-1 / top-2 / top-3.
    """
    if kb_set.n == 0:
        raise EmptyClass("knowledge base set is empty")
    if any(s < 1 for s in subsample_sizes):
        raise InvalidSize("subsample sizes must be >= 1")
    kb_protos = class_prototypes(kb_set)
    rng = np.random.default_rng(seed)
    full_top3: dict[int, list[int]] = {}
    for c, proto in class_prototypes(full_set).items():
        ranked = rank_by_cosine(proto.vector, kb_protos)
        full_top3[c] = [cc for cc, _ in ranked[:3]]
    out: dict[int, tuple[float, float, float]] = {}
    for size in subsample_sizes:
        hits = np.zeros(3)
        total = 0
        for c, top3 in full_top3.items():
            idx = full_set.class_indices(c)
            k = min(size, len(idx))
            for _ in range(trials):
                sub = rng.choice(idx, size=k, replace=False)
                proto = full_set.data[sub].astype(np.float64).mean(axis=0)
                best = rank_by_cosine(proto, kb_protos)[0][0]
                for depth in range(3):
                    if best in top3[: depth + 1]:
                        hits[depth] += 1
                total += 1
        out[size] = tuple(hits / total)  # type: ignore[assignment]
    return out


def matching_stability_csv(stab: dict[int, tuple[float, float, float]]) -> str:
    lines = ["subsample_size,top1_agreement,top2_agreement,top3_agreement"]
    for size in sorted(stab):
        t1, t2, t3 = stab[size]
        lines.append(f"{size},{t1:.12g},{t2:.12g},{t3:.12g}")
    return "\n".join(lines) + "\n"
