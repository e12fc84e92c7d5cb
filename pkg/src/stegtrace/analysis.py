"""Gap series, summary statistics, shared-range histograms and blur metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InsufficientDataError
from .simulator import ProbeRecord, ProbeSeries
from .traffic import GapProfile

BIN_COUNT = 100
SEPARATION_CAP = 1e6
CENTER_TOLERANCE = 1.0  # µs


@dataclass(frozen=True, eq=False)
class GapSeries:
    """Inter-arrival gaps of one stream at one probe, in arrival order.

    ``seq_order`` lists the sequence numbers in the order the packets arrived,
    so ``values[i]`` is the gap between packets ``seq_order[i]`` and
    ``seq_order[i + 1]``.
    """

    probe: int
    stream_id: str
    values: np.ndarray
    seq_order: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class DelayStats:
    min: int
    max: int
    mean: float
    stddev: float


@dataclass(frozen=True, eq=False)
class HistogramSet:
    stream_id: str
    lower: float
    bin_width: float
    counts: dict[int, np.ndarray]

    bin_count = BIN_COUNT

    @property
    def upper(self) -> float:
        return self.lower + self.bin_width * BIN_COUNT

    @property
    def probes(self) -> list[int]:
        return sorted(self.counts)

    def bin_lower(self, index: int) -> float:
        return self.lower + index * self.bin_width

    def bin_of(self, value: float) -> int | None:
        """Index of the bin holding ``value``; None outside the shared range."""
        idx = math.floor((value - self.lower) / self.bin_width)
        # the top edge is closed; index 100 is the range maximum after rounding
        if idx < 0 or idx > BIN_COUNT:
            return None
        return min(idx, BIN_COUNT - 1)


@dataclass(frozen=True, eq=False)
class GroupSegmentation:
    centers: np.ndarray
    assignments: np.ndarray
    fractions: np.ndarray
    stddevs: np.ndarray

    @property
    def k(self) -> int:
        return len(self.centers)


@dataclass(frozen=True)
class BlurMetrics:
    probe: int
    gap_stddev: float
    separation_score: float
    histogram_entropy: float


def build_gap_series(records: ProbeSeries | Sequence[ProbeRecord], probe: int | None = None, stream_id: str | None = None) -> GapSeries:
    """Sort one (probe, stream) record set by arrival time and difference it.

    Equal arrival times keep sequence order.
    """
    if isinstance(records, ProbeSeries):
        seq, arrival = records.seq, records.arrival
    else:
        records = list(records)
        if records:
            probe = records[0].probe if probe is None else probe
            stream_id = records[0].stream_id if stream_id is None else stream_id
        seq = np.fromiter((r.seq for r in records), dtype=np.int64, count=len(records))
        arrival = np.fromiter((r.arrival_time for r in records), dtype=np.int64, count=len(records))
    if len(arrival) < 2:
        raise InsufficientDataError(f"need at least 2 records for a gap series, got {len(arrival)}")
    order = np.lexsort((seq, arrival))
    return GapSeries(
        probe=-1 if probe is None else int(probe),
        stream_id="" if stream_id is None else stream_id,
        values=np.diff(arrival[order]),
        seq_order=seq[order],
    )


def compute_stats(series: GapSeries) -> DelayStats:
    g = series.values
    if len(g) == 0:
        raise InsufficientDataError("empty gap series")
    return DelayStats(int(g.min()), int(g.max()), float(g.mean()), float(g.std()))


def build_histograms(series: Iterable[GapSeries], stream_id: str = "") -> HistogramSet:
    """Bin every probe's gaps on one set of 100 edges spanning all probes.

    When every gap has the same value the range is degenerate; the bins are
    then 1 µs wide and centred on that value.
    """
    rows = [s for s in series if len(s)]
    if not rows:
        raise InsufficientDataError("no gaps to histogram")
    lo = min(int(s.values.min()) for s in rows)
    hi = max(int(s.values.max()) for s in rows)
    if hi == lo:
        width = 1.0
        lower = lo - BIN_COUNT / 2
    else:
        width = (hi - lo) / BIN_COUNT
        lower = float(lo)
    counts: dict[int, np.ndarray] = {}
    for s in rows:
        idx = np.floor((s.values - lower) / width).astype(np.int64)
        np.clip(idx, 0, BIN_COUNT - 1, out=idx)
        counts[s.probe] = np.bincount(idx, minlength=BIN_COUNT)
    return HistogramSet(stream_id or rows[0].stream_id, lower, width, counts)


def histogram_entropy(row: np.ndarray) -> float:
    """Shannon entropy in bits of a histogram row."""
    total = row.sum()
    if total == 0:
        return 0.0
    p = row[row > 0] / total
    return float(-(p * np.log2(p)).sum())


def _assign(values: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # a value exactly between two centres goes to the lower one
    boundaries = (centers[:-1] + centers[1:]) / 2
    return np.searchsorted(boundaries, values, side="left")


def _merge_close(centers: np.ndarray) -> np.ndarray:
    merged = [centers[0]]
    for c in centers[1:]:
        if c - merged[-1] < CENTER_TOLERANCE:
            continue
        merged.append(c)
    return np.asarray(merged)


def segment_groups(series: GapSeries, profile: GapProfile, max_iter: int = 200) -> GroupSegmentation:
    """One-dimensional k-means seeded at the profile's gap values.

    Iterates until no centre moves by 1 µs or more. Groups that end up empty
    and centres that coincide are dropped, so the reported k can be smaller
    than the profile's.
    """
    values = series.values.astype(float)
    if len(values) == 0:
        raise InsufficientDataError("empty gap series")
    centers = _merge_close(np.sort(np.asarray(profile.values, dtype=float)))
    for _ in range(max_iter):
        labels = _assign(values, centers)
        sums = np.bincount(labels, weights=values, minlength=len(centers))
        sizes = np.bincount(labels, minlength=len(centers))
        keep = sizes > 0
        new = sums[keep] / sizes[keep]
        shift = np.inf if keep.sum() != len(centers) else np.abs(new - centers).max()
        centers = _merge_close(new)
        if shift < CENTER_TOLERANCE:
            break
    labels = _assign(values, centers)
    sizes = np.bincount(labels, minlength=len(centers))
    fractions = sizes / len(values)
    stddevs = np.array([values[labels == i].std() if sizes[i] else 0.0 for i in range(len(centers))])
    return GroupSegmentation(centers, labels, fractions, stddevs)


def separation_score(seg: GroupSegmentation) -> float:
    """Smallest distance between group centres over the largest within-group stddev.

    A single group has nothing to separate and scores 0. Point-mass groups
    give an unbounded ratio, reported as 1e6.
    """
    if seg.k < 2:
        return 0.0
    min_dist = float(np.diff(seg.centers).min())
    spread = float(seg.stddevs.max())
    if spread == 0:
        return SEPARATION_CAP
    return min(min_dist / spread, SEPARATION_CAP)


def compute_blur(series: GapSeries, segmentation: GroupSegmentation, histogram_row: np.ndarray) -> BlurMetrics:
    return BlurMetrics(
        probe=series.probe,
        gap_stddev=compute_stats(series).stddev,
        separation_score=separation_score(segmentation),
        histogram_entropy=histogram_entropy(np.asarray(histogram_row)),
    )


@dataclass(frozen=True, eq=False)
class StreamAnalysis:
    """Everything computed for one stream across its probes."""

    stream_id: str
    gaps: dict[int, GapSeries]
    stats: dict[int, DelayStats]
    histograms: HistogramSet
    segmentations: dict[int, GroupSegmentation]
    blur: dict[int, BlurMetrics]


def analyze_stream(per_probe: Mapping[int, ProbeSeries], stream_id: str, profile: GapProfile) -> StreamAnalysis:
    """Run the full per-probe pipeline for one stream.

    Probes with fewer than two records are skipped; if none remain the stream
    is unanalyzable.
    """
    gaps: dict[int, GapSeries] = {}
    for probe in sorted(per_probe):
        try:
            gaps[probe] = build_gap_series(per_probe[probe], probe=probe, stream_id=stream_id)
        except InsufficientDataError:
            continue
    if not gaps:
        raise InsufficientDataError(f"stream {stream_id!r} has no probe with two or more records")
    hist = build_histograms(gaps.values(), stream_id)
    stats = {p: compute_stats(g) for p, g in gaps.items()}
    segs = {p: segment_groups(g, profile) for p, g in gaps.items()}
    blur = {p: compute_blur(g, segs[p], hist.counts[p]) for p, g in gaps.items()}
    return StreamAnalysis(stream_id, gaps, stats, hist, segs, blur)


def max_entropy() -> float:
    return math.log2(BIN_COUNT)
