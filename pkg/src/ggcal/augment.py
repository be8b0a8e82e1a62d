"""Geometry-guided embedding augmentation (GGEUR).

New embeddings are synthesized by perturbing existing samples along the
retained eigenvector directions of a class's global shape:

    beta = sum_i eps_i * s(lambda_i) * xi_i,   eps_i ~ N(0, 1)

where s is either lambda (literal scaling, perturbation variance
lambda_i^2 per axis) or sqrt(lambda) (reproduces the source variance).
Single-domain augmentation tops every local class up to a target count;
multi-domain augmentation additionally synthesizes samples around foreign
domains' class prototypes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import EmbeddingSet
from .errors import EmptySource, MissingPrototype, MissingShape
from .geometry import GeometricShape
from .aggregate import ShapeBank

SCALE_MODES = ("lambda", "sqrt_lambda")


@dataclass(frozen=True)
class AugmentPlan:
    """Targets for augmentation; counts already met are a no-op."""

    target_count_per_class: int = 2000
    per_prototype_count: int = 500
    scale_mode: str = "lambda"
    seed: int = 0

    def __post_init__(self):
        if self.scale_mode not in SCALE_MODES:
            raise ValueError(f"scale_mode must be one of {SCALE_MODES}")
        if self.target_count_per_class < 0 or self.per_prototype_count < 0:
            raise ValueError("counts must be >= 0")


def _scales(shape: GeometricShape, scale_mode: str) -> np.ndarray:
    lam = shape.eigenvalues[: shape.m]
    return lam if scale_mode == "lambda" else np.sqrt(lam)


def sample_perturbation(
    shape: GeometricShape,
    rng: np.random.Generator,
    scale_mode: str = "lambda",
) -> np.ndarray:
    """One perturbation vector in the span of the retained eigenvectors."""
    eps = rng.standard_normal(shape.m)
    return (eps * _scales(shape, scale_mode)) @ shape.eigenvectors


def sample_perturbations(
    shape: GeometricShape,
    count: int,
    rng: np.random.Generator,
    scale_mode: str = "lambda",
) -> np.ndarray:
    """(count, P) matrix of independent perturbation vectors."""
    eps = rng.standard_normal((count, shape.m))
    return (eps * _scales(shape, scale_mode)) @ shape.eigenvectors


def augment_class(
    samples: np.ndarray,
    shape: GeometricShape,
    target_count: int,
    rng: np.random.Generator,
    scale_mode: str = "lambda",
) -> np.ndarray:
    """New vectors bringing the class up to ``target_count``.

    Centers cycle round-robin over the existing samples in input order;
    each new vector is center + a fresh perturbation. Returns only the new
    vectors (possibly zero rows); existing samples are never modified.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise EmptySource("augment_class requires at least one source sample")
    n_new = max(0, target_count - samples.shape[0])
    if n_new == 0:
        return np.empty((0, samples.shape[1]))
    centers = samples[np.arange(n_new) % samples.shape[0]]
    return centers + sample_perturbations(shape, n_new, rng, scale_mode)


def _class_rng(seed: int, class_id: int, stream: int = 0) -> np.random.Generator:
    # Per-class substream so per-class work is schedule-independent.
    return np.random.default_rng([seed, class_id, stream])


def augment_single_domain(
    client_set: EmbeddingSet, bank: ShapeBank, plan: AugmentPlan
) -> EmbeddingSet:
    """Top up every local class to the plan target using its global shape.

    Synthetic rows are flagged in the output set's metadata and inherit the
    client's local domain tag.
    """
    return _augment_with_bank(client_set, bank, plan, plan.target_count_per_class)


def _augment_with_bank(
    client_set: EmbeddingSet, bank: ShapeBank, plan: AugmentPlan, target: int
) -> EmbeddingSet:
    present = sorted(
        c for c in range(client_set.num_classes) if len(client_set.class_indices(c))
    )
    missing = [c for c in present if c not in bank.shapes]
    if missing:
        raise MissingShape(f"bank has no shape for classes {missing}")
    new_rows, new_labels, new_domains = [], [], []
    for c in present:
        idx = client_set.class_indices(c)
        rng = _class_rng(plan.seed, c)
        generated = augment_class(
            client_set.data[idx].astype(np.float64),
            bank.shapes[c],
            target,
            rng,
            plan.scale_mode,
        )
        if generated.shape[0]:
            new_rows.append(generated)
            new_labels.append(np.full(generated.shape[0], c, dtype=np.uint16))
            # synthetic rows stay in the client's local domain(s)
            new_domains.append(
                client_set.domains[idx][np.arange(generated.shape[0]) % len(idx)]
            )
    return _append_rows(client_set, new_rows, new_labels, new_domains)


def augment_multi_domain(
    client_set: EmbeddingSet, bank: ShapeBank, plan: AugmentPlan
) -> EmbeddingSet:
    """Two-step augmentation for label + domain skew.

    Step 1 tops up each local class to the plan target (own domain).
    Step 2 synthesizes ``per_prototype_count`` samples around each foreign
    domain's class prototype using the shared class shape; those rows are
    tagged with the prototype's source domain.
    """
    if not bank.prototypes:
        raise MissingPrototype("bank carries no prototypes; build with prototypes")
    step1 = _augment_with_bank(client_set, bank, plan, plan.target_count_per_class)

    local_domains = set(int(d) for d in np.unique(client_set.domains)) if client_set.n else set()
    present = sorted(
        c for c in range(client_set.num_classes) if len(client_set.class_indices(c))
    )
    new_rows, new_labels, new_domains = [], [], []
    for c in present:
        if c not in bank.shapes:
            raise MissingShape(f"bank has no shape for class {c}")
        if c not in bank.prototypes:
            raise MissingPrototype(f"bank has no prototypes for class {c}")
        for proto in bank.prototypes[c]:
            if proto.domain_id in local_domains:
                continue
            rng = _class_rng(plan.seed, c, stream=1 + (proto.domain_id or 0))
            beta = sample_perturbations(
                bank.shapes[c], plan.per_prototype_count, rng, plan.scale_mode
            )
            rows = proto.vector + beta
            new_rows.append(rows)
            new_labels.append(np.full(rows.shape[0], c, dtype=np.uint16))
            new_domains.append(
                np.full(rows.shape[0], proto.domain_id or 0, dtype=np.uint16)
            )
    return _append_rows(step1, new_rows, new_labels, new_domains)


def _append_rows(
    base: EmbeddingSet,
    new_rows: list[np.ndarray],
    new_labels: list[np.ndarray],
    new_domains: list[np.ndarray],
) -> EmbeddingSet:
    if not new_rows:
        return base
    added = np.concatenate(new_rows).astype(np.float32)
    synth_base = (
        base.synthetic
        if base.synthetic is not None
        else np.zeros(base.n, dtype=bool)
    )
    return EmbeddingSet(
        data=np.concatenate([base.data, added]),
        labels=np.concatenate([base.labels, np.concatenate(new_labels)]),
        domains=np.concatenate([base.domains, np.concatenate(new_domains)]),
        num_classes=base.num_classes,
        num_domains=base.num_domains,
        class_names=base.class_names,
        domain_names=base.domain_names,
        synthetic=np.concatenate([synth_base, np.ones(added.shape[0], dtype=bool)]),
    )
