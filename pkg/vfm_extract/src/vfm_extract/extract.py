"""Extraction job: run a model over a dataset, write one GEOB1 container."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import load_dataset
from .geob import write_container
from .models import load_model


@dataclass(frozen=True)
class ExtractJob:
    model_id: str
    dataset_id: str
    split: str = "train"
    domain: int = 0
    batch_size: int = 64
    out_path: str = "embeddings.geob"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.domain < 0:
            raise ValueError("domain must be >= 0")


def extract(job: ExtractJob) -> dict:
    """Run the job; returns a small summary of what was written."""
    model = load_model(job.model_id)
    dataset = load_dataset(job.dataset_id, job.split)
    chunks: list[np.ndarray] = []
    labels: list[int] = []
    batch: list = []
    for img, label in dataset:
        batch.append(img.copy())
        labels.append(label)
        if len(batch) == job.batch_size:
            chunks.append(model.embed_batch(batch))
            batch = []
    if batch:
        chunks.append(model.embed_batch(batch))
    data = np.concatenate(chunks) if chunks else np.empty((0, model.dim), np.float32)
    n = data.shape[0]
    write_container(
        job.out_path,
        data,
        np.asarray(labels, dtype=np.uint16),
        np.full(n, job.domain, dtype=np.uint16),
        num_classes=len(dataset.class_names),
        num_domains=job.domain + 1,
        class_names=dataset.class_names,
        model=model.model_id,
        preprocess=model.preprocess,
    )
    return {
        "out": str(Path(job.out_path)),
        "n": n,
        "p": model.dim,
        "c": len(dataset.class_names),
        "model": model.model_id,
    }
