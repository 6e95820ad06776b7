"""Dataset directory layouts and sample enumeration.

Three layouts are understood:

``flat-pairs``
    root/disparity/<stem>.<ext> paired with root/label/<stem>.<ext>;
    optional root/tdisp and root/rgb (or root/left) directories.
``stereo-potholes``
    root/dataset*/ subdirectories, each in flat-pairs form.  Mirrors the
    public multi-modal stereo pothole collections.
``pothole600``
    root[/training|validation|testing]/{tdisp,label,rgb}; the transformed
    disparity raster stands in as the disparity input (the collection ships
    no raw disparity).

Samples pair files by shared stem; disparity files without a label (or the
reverse) are reported as warnings and excluded.  Ordering is lexicographic
by sample id, so enumeration is deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import DatasetLayoutError

log = logging.getLogger(__name__)

LAYOUTS = ("flat-pairs", "stereo-potholes", "pothole600")
_RASTER_EXTS = (".png", ".pgm", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class DatasetSample:
    """One evaluation unit: disparity raster, optional extras, and its label."""

    id: str
    disparity_path: Path
    label_path: Path
    tdisp_path: Path | None = None
    rgb_path: Path | None = None


def _stem_map(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        return {}
    out: dict[str, Path] = {}
    for p in sorted(directory.iterdir()):
        if p.is_file() and p.suffix.lower() in _RASTER_EXTS:
            out[p.stem] = p
    return out


def _pair_directory(root: Path, prefix: str, disparity_dir: str,
                    samples: list[DatasetSample]) -> None:
    disp = _stem_map(root / disparity_dir)
    labels = _stem_map(root / "label")
    if not labels:
        labels = _stem_map(root / "labels")
    tdisp = _stem_map(root / "tdisp")
    rgb = _stem_map(root / "rgb") or _stem_map(root / "left")
    for stem in sorted(set(disp) | set(labels)):
        if stem not in disp:
            log.warning("label without %s raster, skipping: %s/%s", disparity_dir, prefix, stem)
            continue
        if stem not in labels:
            log.warning("%s raster without label, skipping: %s/%s", disparity_dir, prefix, stem)
            continue
        sample_id = f"{prefix}/{stem}" if prefix else stem
        samples.append(DatasetSample(
            id=sample_id,
            disparity_path=disp[stem],
            label_path=labels[stem],
            tdisp_path=tdisp.get(stem),
            rgb_path=rgb.get(stem),
        ))


def load_dataset(root, layout: str = "flat-pairs") -> list[DatasetSample]:
    """Enumerate dataset samples under ``root`` for the given layout."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetLayoutError(f"dataset root {str(root)!r} is not a directory")
    samples: list[DatasetSample] = []
    if layout == "flat-pairs":
        _pair_directory(root, "", "disparity", samples)
    elif layout == "stereo-potholes":
        subsets = sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("dataset"))
        if not subsets:
            raise DatasetLayoutError(f"{str(root)!r} has no dataset* subdirectories")
        for subset in subsets:
            _pair_directory(subset, subset.name, "disparity", samples)
    elif layout == "pothole600":
        splits = [p for p in (root / "training", root / "validation", root / "testing")
                  if p.is_dir()]
        if splits:
            for split in splits:
                _pair_directory(split, split.name, "tdisp", samples)
        else:
            _pair_directory(root, "", "tdisp", samples)
        # The collection ships transformed disparity only; use it as the input raster.
        samples = [
            DatasetSample(s.id, s.disparity_path, s.label_path,
                          tdisp_path=s.disparity_path, rgb_path=s.rgb_path)
            for s in samples
        ]
    else:
        raise DatasetLayoutError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    samples.sort(key=lambda s: s.id)
    return samples
