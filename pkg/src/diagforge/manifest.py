"""Dataset manifest IO and the KSDD2-style directory adapter.

The manifest is a single JSON file listing the five splits with
relative PNG paths and labels, so the pipeline is source-agnostic
between the synthetic corpus and adapted external data.
"""

from __future__ import annotations

import json
from pathlib import Path

from .core import (
    BinaryMask,
    DatasetBundle,
    ImageGrid,
    LabeledSample,
    load_mask_png,
    load_png,
    resize_image,
    resize_mask,
    save_mask_png,
    save_png,
)
from .exceptions import ManifestError

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "diagforge-manifest"
MANIFEST_VERSION = 1

SPLIT_NAMES = ("negatives_train", "positives_train", "augmented", "test_pos", "test_neg")


def save_bundle(bundle: DatasetBundle, root, target_resolution=None) -> Path:
    """Write every sample as PNG plus a manifest.json under root."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    splits = {}
    for split in SPLIT_NAMES:
        samples = getattr(bundle, split)
        split_dir = root / split
        if samples:
            split_dir.mkdir(exist_ok=True)
        entries = []
        for i, s in enumerate(samples):
            sid = s.sample_id or f"{split}-{i:05d}"
            img_rel = f"{split}/{sid}.png"
            save_png(s.image, root / img_rel)
            mask_rel = None
            if s.mask is not None:
                mask_rel = f"{split}/{sid}_mask.png"
                save_mask_png(s.mask, root / mask_rel)
            entries.append(
                {"id": sid, "image": img_rel, "mask": mask_rel, "label": s.label, "origin": s.origin}
            )
        splits[split] = entries
    if target_resolution is None:
        first = next(iter(bundle.train_samples() + bundle.test_samples()), None)
        target_resolution = list(first.image.shape) if first else [64, 64]
    doc = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "target_resolution": list(target_resolution),
        "splits": splits,
    }
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(doc, indent=1))
    return path


def _load_entry(root: Path, entry: dict, target, channels: int) -> LabeledSample:
    for key in ("id", "image", "label"):
        if key not in entry:
            raise ManifestError(f"manifest entry missing required key {key!r}: {entry}")
    label = entry["label"]
    if label not in (0, 1):
        raise ManifestError(f"entry {entry['id']!r} has label {label!r}, expected 0 or 1")
    img_path = root / entry["image"]
    if not img_path.is_file():
        raise ManifestError(f"manifest references absent file: {img_path}")
    img = resize_image(load_png(img_path, channels=channels), target)
    mask = None
    if entry.get("mask"):
        mask_path = root / entry["mask"]
        if not mask_path.is_file():
            raise ManifestError(f"manifest references absent file: {mask_path}")
        mask = resize_mask(load_mask_png(mask_path), target)
    return LabeledSample(
        image=img,
        label=label,
        origin=entry.get("origin", "real"),
        mask=mask,
        sample_id=str(entry["id"]),
    )


def load_manifest(root, target_resolution=None, channels: int = 1) -> DatasetBundle:
    """Load a manifest directory into a DatasetBundle.

    Every referenced file is loaded and resized to target_resolution
    (the manifest's own value unless overridden).
    """
    root = Path(root)
    path = root / MANIFEST_NAME if root.is_dir() else root
    root = path.parent
    if not path.is_file():
        raise ManifestError(f"no manifest found at {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"malformed manifest {path}: {e}") from e
    if doc.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"unrecognized manifest format {doc.get('format')!r}")
    if doc.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"unsupported manifest version {doc.get('version')!r}")
    target = tuple(target_resolution or doc.get("target_resolution", (64, 64)))
    splits = doc.get("splits")
    if not isinstance(splits, dict):
        raise ManifestError("manifest has no splits table")
    kwargs = {}
    for split in SPLIT_NAMES:
        entries = splits.get(split, [])
        kwargs[split] = tuple(_load_entry(root, e, target, channels) for e in entries)
    return DatasetBundle(**kwargs)


def _read_split_ids(path: Path) -> list[str]:
    return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def _ksdd2_pairs(directory: Path) -> list[str]:
    return sorted(p.stem for p in directory.glob("*.png") if not p.stem.endswith("_GT"))


def load_ksdd2(root, target_resolution=(224, 632), channels: int = 1) -> DatasetBundle:
    """Adapt a KSDD2-style directory: <id>.png plus <id>_GT.png pairs.

    Splits come from train.txt/test.txt id lists at the root, or from
    train/ and test/ subdirectories when the lists are absent. A sample
    is positive iff its ground-truth mask has any set pixel.
    """
    root = Path(root)
    if not root.is_dir():
        raise ManifestError(f"dataset root not found: {root}")
    train_list, test_list = root / "train.txt", root / "test.txt"
    if train_list.is_file() and test_list.is_file():
        split_ids = {"train": _read_split_ids(train_list), "test": _read_split_ids(test_list)}
        split_dirs = {"train": root, "test": root}
    elif (root / "train").is_dir() and (root / "test").is_dir():
        split_dirs = {"train": root / "train", "test": root / "test"}
        split_ids = {k: _ksdd2_pairs(d) for k, d in split_dirs.items()}
    else:
        raise ManifestError(
            f"{root} has neither train.txt/test.txt lists nor train/ and test/ directories"
        )
    buckets = {"train": ([], []), "test": ([], [])}
    for split, ids in split_ids.items():
        base = split_dirs[split]
        negs, poss = buckets[split]
        for sid in ids:
            img_path = base / f"{sid}.png"
            gt_path = base / f"{sid}_GT.png"
            if not img_path.is_file():
                raise ManifestError(f"missing image file: {img_path}")
            if not gt_path.is_file():
                raise ManifestError(f"missing ground-truth file: {gt_path}")
            img = resize_image(load_png(img_path, channels=channels), target_resolution)
            mask = resize_mask(load_mask_png(gt_path), target_resolution)
            label = 1 if mask.count() > 0 else 0
            sample = LabeledSample(
                image=img,
                label=label,
                origin="real",
                mask=mask if label == 1 else None,
                sample_id=f"{split}-{sid}",
            )
            (poss if label else negs).append(sample)
    return DatasetBundle(
        negatives_train=buckets["train"][0],
        positives_train=buckets["train"][1],
        test_pos=buckets["test"][1],
        test_neg=buckets["test"][0],
    )
