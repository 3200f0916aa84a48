"""Eye-hand coordination analyses over aligned keylog/scanpath trials.

Four views of the same question, "where is the gaze relative to the
finger": a gaze-tap distance curve over time offsets, keyboard-gaze
ratios binned by inter-key interval, the same ratios binned by finger
travel distance, and per-key attention ratios in a pre-tap window.

Conventions shared by all functions here:

- the active fixation at time t is the one whose [onset, onset+duration)
  interval contains t; gaps between fixations yield no sample, and the
  last fixation is not held past its end,
- aggregation uses exact summation (math.fsum / statistics), so every
  reported value is invariant under permutation of the input trials,
- empty bins and uncovered keys are absent from the output rather than
  reported as zero.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import (
    KeyboardLayout,
    KeypressLog,
    Scanpath,
    ScreenGeometry,
    key_at,
    region_of,
)

__all__ = [
    "CoordinationReport",
    "gaze_tap_distance_curve",
    "ratio_by_iki",
    "ratio_by_travel",
    "per_key_attention",
    "compute_coordination_report",
]

# Pre-tap attention window, same constant as the finger-guidance loss.
ATTENTION_WINDOW_MS = 350.0

_TrialPairs = Sequence[tuple[KeypressLog, Scanpath]]


@dataclass(frozen=True)
class CoordinationReport:
    """Aggregated coordination statistics for a set of trials.

    Attributes:
        distance_curve: (time offset ms relative to tap, mean distance px),
            offsets ascending.
        ratio_by_iki: (IKI bin start ms, mean keyboard-gaze ratio),
            bins ascending; the final bin pools everything past the range.
        ratio_by_travel: (travel bin start px, mean keyboard-gaze ratio),
            same layout as ratio_by_iki.
        per_key_ratio: key label -> keyboard-gaze ratio in the pre-tap
            window; keys with no gaze coverage are absent.
        iki_stats: (mean ms, population SD ms) over all inter-tap gaps.
    """

    distance_curve: tuple[tuple[float, float], ...]
    ratio_by_iki: tuple[tuple[float, float], ...]
    ratio_by_travel: tuple[tuple[float, float], ...]
    per_key_ratio: dict[str, float]
    iki_stats: tuple[float, float]


def _check_aligned(trials: _TrialPairs) -> None:
    if not trials:
        raise ValueError("need at least one (log, scanpath) trial pair")
    for log, path in trials:
        if log.trial_id != path.trial_id:
            raise ValueError(
                f"misaligned pair: log {log.trial_id!r} vs "
                f"scanpath {path.trial_id!r}"
            )


def _fixation_at(
    onsets: Sequence[float], path: Scanpath, t: float
) -> Optional[int]:
    """Index of the fixation active at time t, or None in a gap."""
    # Onsets are strictly increasing; linear probe from bisect point.
    lo, hi = 0, len(onsets)
    while lo < hi:
        mid = (lo + hi) // 2
        if onsets[mid] <= t:
            lo = mid + 1
        else:
            hi = mid
    i = lo - 1
    if i < 0:
        return None
    if t < onsets[i] + path.fixations[i].duration_ms:
        return i
    return None


def gaze_tap_distance_curve(
    trials: _TrialPairs,
    window_ms: tuple[float, float] = (-1000.0, 500.0),
    step_ms: float = 50.0,
) -> tuple[tuple[float, float], ...]:
    """Mean gaze-tap distance as a function of time offset from the tap.

    For every tap and every offset on the window grid, the position of
    the fixation active at (tap time + offset) is sampled and its
    Euclidean distance to the tap is recorded; per-tap samples are
    pooled across trials before averaging. Offsets where no fixation is
    active anywhere are omitted from the curve.

    Raises ValueError if no tap/offset combination overlaps a fixation.
    """
    _check_aligned(trials)
    lo, hi = window_ms
    if not (step_ms > 0 and hi >= lo):
        raise ValueError(f"bad window {window_ms} / step {step_ms}")
    n_steps = int(round((hi - lo) / step_ms))
    offsets = [lo + k * step_ms for k in range(n_steps + 1)]

    samples: list[list[float]] = [[] for _ in offsets]
    for log, path in trials:
        onsets = path.onsets()
        for tap in log.taps:
            for k, off in enumerate(offsets):
                i = _fixation_at(onsets, path, tap.time_ms + off)
                if i is None:
                    continue
                f = path.fixations[i]
                samples[k].append(math.hypot(f.x - tap.x, f.y - tap.y))

    if not any(samples):
        raise ValueError("no temporal overlap between taps and fixations")
    return tuple(
        (off, math.fsum(vals) / len(vals))
        for off, vals in zip(offsets, samples)
        if vals
    )


def _keyboard_ratio_in_interval(
    path: Scanpath,
    onsets: Sequence[float],
    geom: ScreenGeometry,
    t0: float,
    t1: float,
) -> Optional[float]:
    """Fraction of fixation time in [t0, t1) spent in the keyboard band.

    Returns None when no fixation overlaps the interval.
    """
    total: list[float] = []
    keyboard: list[float] = []
    for onset, f in zip(onsets, path.fixations):
        overlap = min(onset + f.duration_ms, t1) - max(onset, t0)
        if overlap <= 0:
            continue
        total.append(overlap)
        if region_of((f.x, f.y), geom) == "keyboard":
            keyboard.append(overlap)
    if not total:
        return None
    return math.fsum(keyboard) / math.fsum(total)


def _binned_ratios(
    keyed: Sequence[tuple[float, float]],
    bin_width: float,
    bin_range: tuple[float, float],
) -> tuple[tuple[float, float], ...]:
    """Group (key value, ratio) pairs into ascending fixed-width bins.

    Keys past the range pool into one overflow bin labeled range end.
    Empty bins are absent.
    """
    lo, hi = bin_range
    n_bins = int(round((hi - lo) / bin_width))
    members: dict[int, list[float]] = {}
    for value, ratio in keyed:
        idx = int((value - lo) // bin_width) if value < hi else n_bins
        idx = max(0, min(idx, n_bins))
        members.setdefault(idx, []).append(ratio)
    return tuple(
        (lo + idx * bin_width, math.fsum(vals) / len(vals))
        for idx, vals in sorted(members.items())
    )


def _gap_ratios(
    trials: _TrialPairs, geom: ScreenGeometry
) -> list[tuple[float, float, float]]:
    """(IKI ms, travel px, keyboard ratio) per inter-tap gap with gaze."""
    out: list[tuple[float, float, float]] = []
    for log, path in trials:
        onsets = path.onsets()
        for prev, cur in zip(log.taps, log.taps[1:]):
            ratio = _keyboard_ratio_in_interval(
                path, onsets, geom, prev.time_ms, cur.time_ms
            )
            if ratio is None:
                continue
            iki = cur.time_ms - prev.time_ms
            travel = math.hypot(cur.x - prev.x, cur.y - prev.y)
            out.append((iki, travel, ratio))
    return out


def ratio_by_iki(
    trials: _TrialPairs,
    geom: ScreenGeometry,
    bin_width_ms: float = 100.0,
    max_ms: float = 1000.0,
) -> tuple[tuple[float, float], ...]:
    """Mean keyboard-gaze ratio per inter-key-interval bin.

    Each gap between consecutive taps contributes the fraction of its
    fixation time spent in the keyboard band; gaps without any fixation
    overlap contribute nothing.
    """
    _check_aligned(trials)
    gaps = _gap_ratios(trials, geom)
    return _binned_ratios(
        [(iki, r) for iki, _, r in gaps], bin_width_ms, (0.0, max_ms)
    )


def ratio_by_travel(
    trials: _TrialPairs,
    geom: ScreenGeometry,
    bin_width_px: float = 50.0,
    max_px: float = 1000.0,
) -> tuple[tuple[float, float], ...]:
    """Mean keyboard-gaze ratio per finger-travel-distance bin."""
    _check_aligned(trials)
    gaps = _gap_ratios(trials, geom)
    return _binned_ratios(
        [(travel, r) for _, travel, r in gaps], bin_width_px, (0.0, max_px)
    )


def per_key_attention(
    trials: _TrialPairs,
    layout: KeyboardLayout,
    geom: ScreenGeometry,
    window_ms: float = ATTENTION_WINDOW_MS,
) -> dict[str, float]:
    """Keyboard-gaze ratio in the window before taps of each key.

    For each key label, of the fixation time falling inside the
    window_ms interval preceding taps of that key, the fraction spent in
    the keyboard band. Taps outside every key and keys with zero window
    coverage are absent from the result.
    """
    _check_aligned(trials)
    if not window_ms > 0:
        raise ValueError(f"window_ms must be positive, got {window_ms}")
    total: dict[str, list[float]] = {}
    keyboard: dict[str, list[float]] = {}
    for log, path in trials:
        onsets = path.onsets()
        for tap in log.taps:
            label = key_at((tap.x, tap.y), layout)
            if label is None:
                continue
            t0, t1 = tap.time_ms - window_ms, tap.time_ms
            for onset, f in zip(onsets, path.fixations):
                overlap = min(onset + f.duration_ms, t1) - max(onset, t0)
                if overlap <= 0:
                    continue
                total.setdefault(label, []).append(overlap)
                if region_of((f.x, f.y), geom) == "keyboard":
                    keyboard.setdefault(label, []).append(overlap)
    return {
        label: math.fsum(keyboard.get(label, [])) / math.fsum(vals)
        for label, vals in sorted(total.items())
    }


def compute_coordination_report(
    trials: _TrialPairs,
    layout: KeyboardLayout,
    geom: ScreenGeometry,
) -> CoordinationReport:
    """Run all four analyses over one trial set."""
    _check_aligned(trials)
    ikis = [
        cur.time_ms - prev.time_ms
        for log, _ in trials
        for prev, cur in zip(log.taps, log.taps[1:])
    ]
    if ikis:
        stats = (statistics.fmean(ikis), statistics.pstdev(ikis))
    else:
        stats = (0.0, 0.0)
    return CoordinationReport(
        distance_curve=gaze_tap_distance_curve(trials),
        ratio_by_iki=ratio_by_iki(trials, geom),
        ratio_by_travel=ratio_by_travel(trials, geom),
        per_key_ratio=per_key_attention(trials, layout, geom),
        iki_stats=stats,
    )
