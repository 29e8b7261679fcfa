"""Training-dataset directory service.

The dataset is a directory convention: one subdirectory per label, holding
image files. No database, no manifest required; an undecodable or non-image
file is skipped with a warning so every served id is a decodable image.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

log = logging.getLogger("breakable_machine.server")

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png"}


@dataclass
class DatasetManifest:
    root: Path
    labels: dict[str, list[str]] = field(default_factory=dict)  # label -> image ids

    def label_listing(self) -> list[dict]:
        return [{"label": name, "count": len(ids)} for name, ids in sorted(self.labels.items())]

    def image_path(self, label: str, image_id: str) -> Path:
        ids = self.labels.get(label)
        if ids is None or image_id not in ids:
            raise KeyError(f"{label}/{image_id}")
        return self.root / label / image_id


def scan_dataset(root: str | Path, model_labels: list[str] | None = None) -> DatasetManifest:
    """Builds a manifest from label-named subdirectories of images."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not readable: {root}")
    manifest = DatasetManifest(root=root)
    for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        ids = []
        for f in sorted(label_dir.iterdir()):
            if not f.is_file() or f.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            try:
                with Image.open(f) as im:
                    im.verify()
            except Exception:
                log.warning("dataset: skipping undecodable file under label %r", label_dir.name)
                continue
            ids.append(f.name)
        if ids:
            manifest.labels[label_dir.name] = ids
    if model_labels is not None:
        extra = set(manifest.labels) - set(model_labels)
        if extra:
            log.warning("dataset: %d label dir(s) not in the model's label list", len(extra))
    return manifest
