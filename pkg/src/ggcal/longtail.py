"""Tail-class calibration from an external knowledge base, plus the online
GGEUR layer and inverse-frequency sampling used during training.

Tail classes have too few samples to reveal their covariance structure.
A sample-rich external dataset ("knowledge base") donates it: each tail
class is matched to its nearest KB class by prototype cosine, and the
donor's geometric shape drives the augmentation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import EmbeddingSet
from .errors import EmptyClass, MissingShape, ZeroCount, ZeroVector
from .geometry import (
    DEFAULT_M,
    GeometricShape,
    Prototype,
    class_prototypes,
    class_shapes,
    class_stats,
    rank_by_cosine,
    shape_similarity,
    size_of,
)
from .augment import augment_class, sample_perturbations


@dataclass(frozen=True)
class KnowledgeBase:
    """Per-class prototypes and shapes extracted from an external set."""

    prototypes: dict[int, Prototype]
    shapes: dict[int, GeometricShape]


@dataclass(frozen=True)
class TailPolicy:
    """What counts as "tail" and how far to augment.

    ``tail_threshold``: classes with fewer training samples are perturbed
    by the GGEUR layer. ``augment_target``: None means "match the most
    frequent class"; an integer is an explicit per-class target.
    ``rescale_donor_size`` scales donor eigenvalues so the donor size
    (trace) matches the tail class's own; off by default (donor sizes are
    empirically close to the target's).
    """

    tail_threshold: int = 0  # 0 -> derived as max_count / 10
    match_top_k: int = 1
    augment_target: int | None = None
    scale_mode: str = "lambda"
    rescale_donor_size: bool = False

    def __post_init__(self):
        if self.tail_threshold < 0 or self.match_top_k < 1:
            raise ValueError("invalid TailPolicy")

    def effective_threshold(self, counts: np.ndarray) -> int:
        if self.tail_threshold:
            return self.tail_threshold
        return max(1, int(counts.max()) // 10)


def build_knowledge_base(kb_set: EmbeddingSet, m: int = DEFAULT_M) -> KnowledgeBase:
    """Prototype (mean) and shape for every class of the KB set."""
    if kb_set.n == 0:
        raise EmptyClass("knowledge base set is empty")
    counts = kb_set.class_counts()
    if (counts == 0).any():
        raise EmptyClass(
            f"kb classes {np.flatnonzero(counts == 0).tolist()} are empty"
        )
    return KnowledgeBase(
        prototypes=class_prototypes(kb_set), shapes=class_shapes(kb_set, m)
    )


def match_class(
    tail_proto: Prototype | np.ndarray, kb: KnowledgeBase, top_k: int = 1
) -> list[int]:
    """KB class ids nearest to the prototype by cosine (ties: ascending id)."""
    vec = tail_proto.vector if isinstance(tail_proto, Prototype) else tail_proto
    if np.linalg.norm(vec) == 0:
        raise ZeroVector("tail prototype is zero")
    ranked = rank_by_cosine(np.asarray(vec, dtype=np.float64), kb.prototypes)
    return [c for c, _ in ranked[:top_k]]


def _donor_shape(
    shape: GeometricShape, target_size: float, rescale: bool
) -> GeometricShape:
    if not rescale:
        return shape
    donor_size = size_of(shape)
    if donor_size == 0:
        return shape
    return GeometricShape(
        eigenvectors=shape.eigenvectors,
        eigenvalues=shape.eigenvalues * (target_size / donor_size),
    )


def calibrate_tail(
    train_set: EmbeddingSet,
    kb: KnowledgeBase,
    policy: TailPolicy,
    rng: np.random.Generator,
) -> EmbeddingSet:
    """Augment every under-target class up to the target count using its
    matched KB donor's shape. Original rows are never touched."""
    counts = train_set.class_counts()
    if (counts == 0).any():
        raise EmptyClass(
            f"classes {np.flatnonzero(counts == 0).tolist()} are empty"
        )
    target = (
        policy.augment_target
        if policy.augment_target is not None
        else int(counts.max())
    )
    protos = class_prototypes(train_set)
    new_rows, new_labels, new_domains = [], [], []
    for c in range(train_set.num_classes):
        if counts[c] >= target:
            continue
        donor_id = match_class(protos[c], kb, 1)[0]
        own_size = (
            size_of(class_stats(train_set, c).covariance)
            if policy.rescale_donor_size
            else 0.0
        )
        donor = _donor_shape(
            kb.shapes[donor_id], own_size, policy.rescale_donor_size
        )
        idx = train_set.class_indices(c)
        generated = augment_class(
            train_set.data[idx].astype(np.float64),
            donor,
            target,
            rng,
            policy.scale_mode,
        )
        new_rows.append(generated.astype(np.float32))
        new_labels.append(np.full(generated.shape[0], c, dtype=np.uint16))
        new_domains.append(
            train_set.domains[idx][np.arange(generated.shape[0]) % len(idx)]
        )
    if not new_rows:
        return train_set
    synth_base = (
        train_set.synthetic
        if train_set.synthetic is not None
        else np.zeros(train_set.n, dtype=bool)
    )
    added = np.concatenate(new_rows)
    return EmbeddingSet(
        data=np.concatenate([train_set.data, added]),
        labels=np.concatenate([train_set.labels, np.concatenate(new_labels)]),
        domains=np.concatenate([train_set.domains, np.concatenate(new_domains)]),
        num_classes=train_set.num_classes,
        num_domains=train_set.num_domains,
        class_names=train_set.class_names,
        domain_names=train_set.domain_names,
        synthetic=np.concatenate([synth_base, np.ones(added.shape[0], dtype=bool)]),
    )


def match_report_csv(
    train_set: EmbeddingSet, kb: KnowledgeBase, m: int = DEFAULT_M
) -> str:
    """CSV of (tail class, donor, cosine, shape similarity) for diagnostics."""
    protos = class_prototypes(train_set)
    shapes = class_shapes(train_set, m)
    lines = ["class_id,donor_id,cosine,shape_similarity"]
    for c in sorted(protos):
        ranked = rank_by_cosine(protos[c].vector, kb.prototypes)
        donor_id, cos = ranked[0]
        ss = shape_similarity(shapes[c], kb.shapes[donor_id])
        lines.append(f"{c},{donor_id},{cos:.12g},{ss:.12g}")
    return "\n".join(lines) + "\n"


def inverse_sampling_probs(counts: np.ndarray | list[int]) -> np.ndarray:
    """Per-class sampling probabilities P_i = w_i / sum w, w_i = N_max / N_i."""
    counts = np.asarray(counts, dtype=np.float64)
    if (counts < 1).any():
        raise ZeroCount("all class counts must be >= 1")
    w = counts.max() / counts
    return w / w.sum()


def ggeur_layer(
    batch: np.ndarray,
    batch_labels: np.ndarray,
    tail_shapes: dict[int, GeometricShape],
    rng: np.random.Generator,
    scale_mode: str = "lambda",
) -> np.ndarray:
    """Perturb tail-class rows in place of themselves; pass others through.

    ``tail_shapes`` maps each tail class id to its donor shape; rows whose
    class is absent from the map are returned bit-exactly. Every tail row
    gets a fresh perturbation, so repeats of the same sample in one batch
    diverge.
    """
    batch = np.asarray(batch, dtype=np.float64)
    out = batch.copy()
    labels = np.asarray(batch_labels)
    for c in sorted(tail_shapes):
        mask = labels == c
        k = int(mask.sum())
        if k:
            out[mask] += sample_perturbations(tail_shapes[c], k, rng, scale_mode)
    return out
