"""Synthetic anisotropic-Gaussian embedding sets.

Built in so experiments and the acceptance suite need no external files.
Each class is an anisotropic Gaussian with a controllable eigenvalue decay;
covariances can be shared across classes or independently rotated, and
multi-domain sets offset each domain's class means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import EmbeddingSet


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 10
    dim: int = 16
    samples_per_class: int = 200
    num_domains: int = 1
    seed: int = 0
    mean_scale: float = 5.0  # class mean norm
    domain_offset_scale: float = 0.0  # norm of per-domain mean offsets
    top_variance: float = 1.0  # largest covariance eigenvalue
    decay: float = 0.5  # eigenvalue geometric decay
    shared_covariance: bool = True  # one covariance for all classes
    class_counts: tuple[int, ...] | None = None  # overrides samples_per_class


@dataclass(frozen=True)
class SynthTruth:
    """Generating parameters, for oracle comparisons."""

    means: np.ndarray  # (C, D, P) per class per domain
    covariances: np.ndarray  # (C, P, P)


def _random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def synth_dataset(spec: SynthSpec) -> tuple[EmbeddingSet, SynthTruth]:
    """Draw the set and return it with its generating truth."""
    rng = np.random.default_rng(spec.seed)
    C, P, D = spec.num_classes, spec.dim, spec.num_domains
    eigvals = spec.top_variance * spec.decay ** np.arange(P)

    covs = np.empty((C, P, P))
    shared_q = _random_orthogonal(P, rng)
    for c in range(C):
        q = shared_q if spec.shared_covariance else _random_orthogonal(P, rng)
        covs[c] = (q * eigvals) @ q.T

    means = np.empty((C, D, P))
    for c in range(C):
        base = rng.standard_normal(P)
        base *= spec.mean_scale / np.linalg.norm(base)
        for d in range(D):
            off = rng.standard_normal(P)
            off *= spec.domain_offset_scale / max(np.linalg.norm(off), 1e-12)
            means[c, d] = base + (off if d else 0.0)

    counts = (
        np.asarray(spec.class_counts, dtype=np.int64)
        if spec.class_counts is not None
        else np.full(C, spec.samples_per_class, dtype=np.int64)
    )
    rows, labels, domains = [], [], []
    for c in range(C):
        chol = np.linalg.cholesky(covs[c] + 1e-12 * np.eye(P))
        for d in range(D):
            k = int(counts[c])
            z = rng.standard_normal((k, P))
            rows.append(means[c, d] + z @ chol.T)
            labels.append(np.full(k, c, dtype=np.uint16))
            domains.append(np.full(k, d, dtype=np.uint16))
    es = EmbeddingSet(
        data=np.concatenate(rows).astype(np.float32),
        labels=np.concatenate(labels),
        domains=np.concatenate(domains),
        num_classes=C,
        num_domains=D,
    )
    return es, SynthTruth(means=means, covariances=covs)


def synth_train_test(
    spec: SynthSpec, test_per_class: int = 100
) -> tuple[EmbeddingSet, EmbeddingSet, SynthTruth]:
    """Train set per the spec plus a balanced test set from the same truth."""
    train, truth = synth_dataset(spec)
    test_spec = SynthSpec(
        num_classes=spec.num_classes,
        dim=spec.dim,
        samples_per_class=test_per_class,
        num_domains=spec.num_domains,
        seed=spec.seed + 1_000_003,
        mean_scale=spec.mean_scale,
        domain_offset_scale=spec.domain_offset_scale,
        top_variance=spec.top_variance,
        decay=spec.decay,
        shared_covariance=spec.shared_covariance,
    )
    # redraw with identical truth: reuse means/covs by sampling manually
    rng = np.random.default_rng(test_spec.seed)
    C, P, D = spec.num_classes, spec.dim, spec.num_domains
    rows, labels, domains = [], [], []
    for c in range(C):
        chol = np.linalg.cholesky(truth.covariances[c] + 1e-12 * np.eye(P))
        for d in range(D):
            z = rng.standard_normal((test_per_class, P))
            rows.append(truth.means[c, d] + z @ chol.T)
            labels.append(np.full(test_per_class, c, dtype=np.uint16))
            domains.append(np.full(test_per_class, d, dtype=np.uint16))
    test = EmbeddingSet(
        data=np.concatenate(rows).astype(np.float32),
        labels=np.concatenate(labels),
        domains=np.concatenate(domains),
        num_classes=C,
        num_domains=D,
    )
    return train, test, truth
