"""Histogram thresholding, connected-component labelling, and mask morphology.

Thresholds operate on a fixed-bin histogram of the observed value range, so
they apply equally to byte images and to real-valued transformed-disparity
rasters.  All tie-breaking rules are fixed to keep outputs deterministic
across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateHistogramError, EmptySelectionError
from .imaging import DamageMask, GrayImage

DEFAULT_BINS = 256
DEFAULT_MIN_REGION_AREA = 50

_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class IntensityHistogram:
    """Linear-binned histogram over the observed [lo, hi] value range."""

    counts: np.ndarray
    lo: float
    hi: float

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size < 2:
            raise ValueError("histogram needs at least two bins")
        object.__setattr__(self, "counts", counts)

    @property
    def bins(self) -> int:
        return self.counts.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / self.bins

    def edge(self, index: int) -> float:
        """Lower edge of bin ``index`` (== upper edge of bin index-1)."""
        return self.lo + index * self.bin_width


@dataclass(frozen=True)
class ThresholdResult:
    """Selected threshold intensity and the objective value at the optimum."""

    threshold: float
    criterion: float


def histogram(img: GrayImage, mask: np.ndarray | None = None,
              bins: int = DEFAULT_BINS) -> IntensityHistogram:
    """Histogram the (optionally masked) pixels of an image.

    Bins split [min, max] linearly; the maximum value lands in the last bin.
    A constant image puts all mass in bin 0.
    """
    values = img.values if mask is None else img.values[np.asarray(mask, dtype=bool)]
    values = values.ravel()
    if values.size == 0:
        raise EmptySelectionError("no pixels selected for histogram")
    lo = float(values.min())
    hi = float(values.max())
    counts = np.zeros(bins, dtype=np.int64)
    if hi > lo:
        idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
        np.clip(idx, 0, bins - 1, out=idx)
        np.add.at(counts, idx, 1)
    else:
        counts[0] = values.size
    return IntensityHistogram(counts, lo, hi)


def otsu_threshold(hist: IntensityHistogram) -> ThresholdResult:
    """Threshold maximizing the between-class variance of the two sides.

    The split is chosen by exact integer arithmetic so the argmax never
    depends on floating-point rounding; ties go to the lowest threshold.
    The returned threshold is the bin edge separating the two classes.
    """
    counts = [int(c) for c in hist.counts]
    if sum(1 for c in counts if c > 0) < 2:
        raise DegenerateHistogramError("histogram has mass in fewer than two bins")
    total = sum(counts)
    weighted_total = sum(b * c for b, c in enumerate(counts))
    # Between-class variance w0*w1*(mu0-mu1)^2 == (s0*n1 - s1*n0)^2 / (n0*n1*N^2);
    # maximize the integer ratio (s0*n1 - s1*n0)^2 / (n0*n1) by cross-multiplication.
    best_t = -1
    best_num = 0
    best_den = 1
    n0 = 0
    s0 = 0
    for t in range(hist.bins - 1):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = weighted_total - s0
        num = (s0 * n1 - s1 * n0) ** 2
        den = n0 * n1
        if best_t < 0 or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    criterion = best_num / (best_den * total * total)
    return ThresholdResult(threshold=hist.edge(best_t + 1), criterion=float(criterion))


def triangle_threshold(hist: IntensityHistogram) -> ThresholdResult:
    """Threshold at maximal distance between the histogram and the peak-tail chord.

    The chord runs from the highest bin to the farthest nonempty bin; the
    selected bin maximizes perpendicular distance among the nonempty bins
    between them (ties toward the tail).  The returned threshold is the bin
    edge separating the selected bin from its peak-side neighbour.
    """
    counts = hist.counts
    nonzero = np.flatnonzero(counts)
    if nonzero.size < 2:
        raise DegenerateHistogramError("histogram has mass in fewer than two bins")
    peak = int(np.argmax(counts))
    left, right = int(nonzero[0]), int(nonzero[-1])
    tail = right if (right - peak) >= (peak - left) else left
    px, py = float(peak), float(counts[peak])
    tx, ty = float(tail), float(counts[tail])
    chord = np.hypot(tx - px, ty - py)
    step = 1 if tail >= peak else -1
    best_bin = tail
    best_dist = -1.0
    for b in range(peak, tail + step, step):
        if counts[b] == 0:
            continue
        dist = abs((ty - py) * (b - px) - (tx - px) * (counts[b] - py)) / chord
        if dist >= best_dist:  # >= walks ties toward the tail
            best_dist = dist
            best_bin = b
    if tail >= peak:
        threshold = hist.edge(best_bin)  # selected bin and above sit on the tail side
    else:
        threshold = hist.edge(best_bin + 1)  # selected bin and below sit on the tail side
    return ThresholdResult(threshold=threshold, criterion=float(best_dist))


@dataclass(frozen=True)
class RegionStats:
    """Per-region statistics from connected-component labelling."""

    label: int
    area: int
    bbox: tuple[int, int, int, int]  # (u_min, v_min, u_max, v_max), inclusive
    centroid: tuple[float, float]    # (u_mean, v_mean)


def connected_components(mask: np.ndarray, connectivity: int = 4):
    """Label connected foreground regions of a binary raster.

    Region ids are contiguous 1..R in first-encountered raster-scan order.

    Returns
    -------
    labels : np.ndarray of int32
    stats : list of RegionStats
    """
    mask = np.asarray(mask, dtype=bool)
    if connectivity == 4:
        structure = _STRUCTURE_4
    elif connectivity == 8:
        structure = _STRUCTURE_8
    else:
        raise ValueError("connectivity must be 4 or 8")
    raw_labels, n = ndimage.label(mask, structure=structure)
    labels = np.zeros_like(raw_labels, dtype=np.int32)
    stats: list[RegionStats] = []
    if n == 0:
        return labels, stats
    flat = raw_labels.ravel()
    ids, first_seen = np.unique(flat, return_index=True)
    order = ids[np.argsort(first_seen)]
    order = order[order > 0]
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order] = np.arange(1, order.size + 1, dtype=np.int32)
    labels = remap[raw_labels]
    areas = np.bincount(labels.ravel(), minlength=order.size + 1)
    vv, uu = np.nonzero(labels)
    region_ids = labels[vv, uu]
    sum_u = np.bincount(region_ids, weights=uu, minlength=order.size + 1)
    sum_v = np.bincount(region_ids, weights=vv, minlength=order.size + 1)
    boxes = ndimage.find_objects(labels)
    for rid in range(1, order.size + 1):
        area = int(areas[rid])
        sl_v, sl_u = boxes[rid - 1]
        stats.append(RegionStats(
            label=rid,
            area=area,
            bbox=(sl_u.start, sl_v.start, sl_u.stop - 1, sl_v.stop - 1),
            centroid=(sum_u[rid] / area, sum_v[rid] / area),
        ))
    return labels, stats


def label_mask(damaged: np.ndarray, connectivity: int = 4,
               min_area: int = 0) -> DamageMask:
    """Build a DamageMask from a boolean raster, dropping regions below min_area."""
    damaged = np.asarray(damaged, dtype=bool)
    labels, stats = connected_components(damaged, connectivity)
    if min_area > 1 and stats:
        small = [s.label for s in stats if s.area < min_area]
        if small:
            damaged = damaged & ~np.isin(labels, small)
            labels, _ = connected_components(damaged, connectivity)
    return DamageMask(damaged, labels)


def filter_min_area(mask: DamageMask, min_area: int, connectivity: int = 4) -> DamageMask:
    """Drop labelled regions smaller than min_area pixels and relabel."""
    return label_mask(mask.damaged, connectivity=connectivity, min_area=min_area)


def segment_below(img: GrayImage, threshold: float,
                  validity: np.ndarray | None = None,
                  connectivity: int = 4) -> DamageMask:
    """Mark valid pixels with value strictly below the threshold as damaged."""
    damaged = img.values < threshold
    if validity is not None:
        damaged &= np.asarray(validity, dtype=bool)
    return label_mask(damaged, connectivity=connectivity)


def morphological_open(mask: np.ndarray, radius: int = 1) -> np.ndarray:
    """Erode then dilate with a (2*radius+1)^2 square element, replicated borders."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    size = 2 * radius + 1
    eroded = ndimage.minimum_filter(mask, size=size, mode="nearest")
    return ndimage.maximum_filter(eroded, size=size, mode="nearest")
