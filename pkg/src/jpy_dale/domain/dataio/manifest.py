import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from ...enums import Split
from ...errors import BadManifest, MissingFile, ShapeMismatch
from .formats import image_from_u8, read_f32, read_pgm, write_f32, write_pgm
from .models import Dataset, GeneratorConfig, Manifest, ManifestEntry, Sample

logger = logging.getLogger("dale.dataio.manifest")

MANIFEST_NAME = "manifest.json"


def _write_sample(root: Path, split: Split, index: int, sample: Sample) -> ManifestEntry:
    stem = f"{split.value}_{index:04d}"

    if sample.channels == 1:
        image = f"images/{stem}.pgm"
        write_pgm(root / image, np.floor(sample.image * 255.0 + 0.5).astype(np.uint8))
    else:
        image = f"images/{stem}.dlf1"
        write_f32(root / image, sample.image)

    entry = ManifestEntry(
        image=image,
        label=f"labels/{stem}.pgm",
        split=split,
        clean_label=f"clean/{stem}.pgm",
        noise_mask=f"noise/{stem}.pgm",
    )
    write_pgm(root / entry.label, sample.label)
    write_pgm(root / str(entry.clean_label), sample.clean_label)
    write_pgm(root / str(entry.noise_mask), sample.noise_mask.astype(np.uint8))
    return entry


def write_dataset(out_dir: Path, config: GeneratorConfig, train: list[Sample], test: list[Sample]) -> Manifest:
    """Write samples and ``manifest.json`` under ``out_dir``."""
    root = Path(out_dir)
    for sub in ("images", "labels", "clean", "noise"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    entries = [_write_sample(root, Split.TRAIN, i, sample) for i, sample in enumerate(train)]
    entries += [_write_sample(root, Split.TEST, i, sample) for i, sample in enumerate(test)]

    manifest = Manifest(
        height=config.height,
        width=config.width,
        classes=config.classes,
        entries=tuple(entries),
        channels=config.channels,
        generator=config.to_dict(),
    )
    (root / MANIFEST_NAME).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")

    logger.info("Wrote dataset dir=%s entries=%d", root, len(entries))
    return manifest


def _load(root: Path, relative: str) -> Path:
    path = root / relative
    if not path.is_file():
        logger.error("Manifest references missing file %s", path)
        raise MissingFile(str(path))
    return path


def _parse_manifest(data: dict[str, Any]) -> Manifest:
    try:
        entries = tuple(
            ManifestEntry(
                image=item["image"],
                label=item["label"],
                split=Split(item["split"]),
                clean_label=item.get("clean_label"),
                noise_mask=item.get("noise_mask"),
            )
            for item in data["entries"]
        )
        return Manifest(
            height=int(data["height"]),
            width=int(data["width"]),
            classes=int(data["classes"]),
            entries=entries,
            channels=int(data.get("channels", 1)),
            generator=dict(data.get("generator", {})),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise BadManifest(str(e)) from e


def read_dataset(data_dir: Path) -> Dataset:
    """Load every entry of ``manifest.json``; shapes must agree with the header.

    Raises:
        MissingFile: If the manifest or a referenced file does not exist
        BadManifest: If the manifest is not valid JSON or lacks a field
        ShapeMismatch: If a file's shape disagrees with the manifest header
    """
    root = Path(data_dir)
    path = _load(root, MANIFEST_NAME)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        logger.error("Manifest %s is not valid JSON: %s", path, e)
        raise BadManifest(f"{path}: {e}") from e

    manifest = _parse_manifest(data)
    expected = (manifest.height, manifest.width)

    samples = []
    for entry in manifest.entries:
        image_path = _load(root, entry.image)
        image = read_f32(image_path) if image_path.suffix == ".dlf1" else image_from_u8(read_pgm(image_path))
        label = read_pgm(_load(root, entry.label)).astype(np.int64)
        clean = read_pgm(_load(root, entry.clean_label)).astype(np.int64) if entry.clean_label else label.copy()

        if image.shape[-2:] != expected or label.shape != expected or clean.shape != expected:
            raise ShapeMismatch(f"{entry.image}: {image.shape} vs header {expected}")
        if label.max() >= manifest.classes or clean.max() >= manifest.classes:
            raise ShapeMismatch(f"{entry.label}: class index >= {manifest.classes}")

        samples.append(Sample(image=image, label=label, clean_label=clean, noise_mask=label != clean))

    logger.info("Read dataset dir=%s entries=%d", root, len(samples))
    return Dataset(manifest=manifest, samples=tuple(samples), splits=tuple(e.split for e in manifest.entries))
