"""Image dataset loaders.

A dataset yields (PIL image, label) pairs in a fixed order, plus class
names. Supported ids:

* ``folder:<path>``: one subdirectory per class; images sorted by name,
  classes sorted by directory name. Needs only Pillow.
* ``cifar10`` / ``cifar100``: via torchvision (downloads on first use).
"""

from __future__ import annotations

from pathlib import Path

from PIL import Image

from .errors import DatasetUnavailable

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


class FolderDataset:
    def __init__(self, root: str | Path):
        root = Path(root)
        if not root.is_dir():
            raise DatasetUnavailable(f"{root}: not a directory")
        class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
        if not class_dirs:
            raise DatasetUnavailable(f"{root}: no class subdirectories")
        self.class_names = [p.name for p in class_dirs]
        self._items: list[tuple[Path, int]] = []
        for label, cdir in enumerate(class_dirs):
            files = sorted(
                f for f in cdir.iterdir() if f.suffix.lower() in IMAGE_SUFFIXES
            )
            self._items.extend((f, label) for f in files)
        if not self._items:
            raise DatasetUnavailable(f"{root}: no images found")

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        for path, label in self._items:
            with Image.open(path) as img:
                yield img.convert("RGB"), label


class TorchvisionDataset:
    NAMES = {"cifar10": "CIFAR10", "cifar100": "CIFAR100"}

    def __init__(self, name: str, split: str, root: str | Path = "datasets"):
        if split not in ("train", "test"):
            raise DatasetUnavailable(f"unknown split {split!r}")
        try:
            import torchvision.datasets as tvd

            cls = getattr(tvd, self.NAMES[name])
            self._ds = cls(str(root), train=split == "train", download=True)
        except Exception as e:
            raise DatasetUnavailable(f"{name}/{split}: {e}") from e
        self.class_names = list(self._ds.classes)

    def __len__(self) -> int:
        return len(self._ds)

    def __iter__(self):
        for img, label in self._ds:
            yield img.convert("RGB"), int(label)


def load_dataset(dataset_id: str, split: str = "train"):
    if dataset_id.startswith("folder:"):
        return FolderDataset(dataset_id[len("folder:") :])
    if dataset_id in TorchvisionDataset.NAMES:
        return TorchvisionDataset(dataset_id, split)
    raise DatasetUnavailable(
        f"unknown dataset {dataset_id!r}; use folder:<path>, cifar10, or cifar100"
    )
