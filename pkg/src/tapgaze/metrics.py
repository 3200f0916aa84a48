"""Scanpath similarity metrics and statistical gaze measurements.

Three trail-level similarity metrics (DTWD, STED, MultiMatch) plus the four
aggregate gaze statistics used for evaluation. Conventions:

- Coordinates are normalized by screen width/height, fixation durations by
  1000 (seconds) where a metric mixes them with positions.
- DTWD is the accumulated (not length-averaged) cost of the optimal monotone
  alignment.
- MultiMatch here aligns raw saccade vectors (no saccade simplification) with
  a DTW-family recurrence, averages each dissimilarity with the MEAN over the
  alignment, and normalizes: direction by pi, shape/length/position by the
  screen diagonal, duration by the pairwise max. Position and duration of an
  aligned pair are taken from the saccade-start fixations.

All functions are pure and safe to evaluate in parallel over trial pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Scanpath, ScreenGeometry, region_of

__all__ = [
    "MultiMatchScores",
    "normalized_triples",
    "dtwd",
    "sted",
    "multimatch",
    "fixation_count",
    "mean_fixation_duration",
    "gaze_shifts",
    "gaze_on_keyboard_ratio",
    "proofreading_rate",
]


@dataclass(frozen=True)
class MultiMatchScores:
    """Five similarity components, each in [0, 1]; 1.0 means identical."""

    shape: float
    direction: float
    length: float
    position: float
    duration: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.shape, self.direction, self.length, self.position, self.duration)


def normalized_triples(s: Scanpath, geom: ScreenGeometry) -> np.ndarray:
    """(T, 3) array of (x/width, y/height, duration_ms/1000) per fixation."""
    if not s.fixations:
        raise ValueError(f"trial {s.trial_id!r}: empty scanpath")
    out = np.array(
        [[f.x / geom.width, f.y / geom.height, f.duration_ms / 1000.0] for f in s.fixations],
        dtype=np.float64,
    )
    return out


def dtwd(a: Scanpath, b: Scanpath, geom: ScreenGeometry) -> float:
    """Dynamic-time-warping distance over normalized (x, y, duration) triples.

    Accumulated cost of the optimal monotone alignment; symmetric, zero on
    identical inputs.
    """
    pa = normalized_triples(a, geom)
    pb = normalized_triples(b, geom)
    # Pairwise local costs, then the classical DP over the cost grid.
    diff = pa[:, None, :] - pb[None, :, :]
    cost = np.sqrt((diff * diff).sum(axis=2))
    n, m = cost.shape
    acc = np.empty((n, m), dtype=np.float64)
    acc[0, 0] = cost[0, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
        row = acc[i]
        prev = acc[i - 1]
        for j in range(1, m):
            row[j] = cost[i, j] + min(prev[j], row[j - 1], prev[j - 1])
    return float(acc[n - 1, m - 1])


def _embedding_windows(points: np.ndarray, k: int) -> np.ndarray:
    """All length-k windows of a (T, 2) trail, each translated to start at 0."""
    t = points.shape[0]
    windows = np.empty((t - k + 1, k, 2), dtype=np.float64)
    for i in range(t - k + 1):
        w = points[i : i + k]
        windows[i] = w - w[0]
    return windows.reshape(t - k + 1, 2 * k)


def sted(a: Scanpath, b: Scanpath, geom: ScreenGeometry, k: int = 3) -> float:
    """Scaled time-delay-embedding distance over normalized (x, y) trails.

    Each length-k window is translated so its first point is the origin; for
    every window of one path the minimum Euclidean distance to any window of
    the other is taken, and the means of the two directions are averaged.
    """
    if len(a) < k or len(b) < k:
        raise ValueError(
            f"sted needs length >= k={k}, got {len(a)} and {len(b)}"
        )
    wa = _embedding_windows(normalized_triples(a, geom)[:, :2], k)
    wb = _embedding_windows(normalized_triples(b, geom)[:, :2], k)
    diff = wa[:, None, :] - wb[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    return float(0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean()))


def _saccade_alignment(u: np.ndarray, v: np.ndarray) -> tuple[float, list[tuple[int, int]]]:
    """Monotone DP alignment of two saccade-vector sequences.

    Minimizes the summed vector-difference magnitude over all monotone paths
    from (0, 0) to (n-1, m-1); same recurrence family as DTW, cell (0, 0)
    included in the cost. Returns (total cost, aligned index pairs).
    """
    diff = u[:, None, :] - v[None, :, :]
    cost = np.sqrt((diff * diff).sum(axis=2))
    n, m = cost.shape
    acc = np.full((n, m), np.inf, dtype=np.float64)
    acc[0, 0] = cost[0, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
        for j in range(1, m):
            acc[i, j] = cost[i, j] + min(
                acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1]
            )
    # Backtrack; ties prefer the diagonal, then the i-step, for determinism.
    path = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            best = min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
            if acc[i - 1, j - 1] == best:
                i, j = i - 1, j - 1
            elif acc[i - 1, j] == best:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return float(acc[n - 1, m - 1]), path


def _saccades(s: Scanpath) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Saccade vectors plus start-fixation positions and durations (pixels/ms)."""
    pos = np.array([[f.x, f.y] for f in s.fixations], dtype=np.float64)
    dur = np.array([f.duration_ms for f in s.fixations], dtype=np.float64)
    return pos[1:] - pos[:-1], pos[:-1], dur[:-1]


def multimatch(a: Scanpath, b: Scanpath, geom: ScreenGeometry) -> MultiMatchScores:
    """Five-dimensional scanpath similarity over DP-aligned saccade vectors."""
    if len(a) < 2 or len(b) < 2:
        raise ValueError(
            f"multimatch needs >= 2 fixations, got {len(a)} and {len(b)}"
        )
    # Every dissimilarity is a symmetric function of an aligned pair, so
    # fixing a canonical argument order makes the result exactly invariant
    # under swapping even when DP ties would let the backtrack differ.
    ka = [(f.x, f.y, f.duration_ms) for f in a.fixations]
    kb = [(f.x, f.y, f.duration_ms) for f in b.fixations]
    if kb < ka:
        a, b = b, a
    ua, pos_a, dur_a = _saccades(a)
    ub, pos_b, dur_b = _saccades(b)
    _, path = _saccade_alignment(ua, ub)
    diag = geom.diagonal

    shape_d = []
    direction_d = []
    length_d = []
    position_d = []
    duration_d = []
    for i, j in path:
        du = ua[i] - ub[j]
        shape_d.append(math.hypot(du[0], du[1]))
        na, nb = math.hypot(*ua[i]), math.hypot(*ub[j])
        if na == 0.0 and nb == 0.0:
            ang = 0.0
        elif na == 0.0 or nb == 0.0:
            # A zero-length saccade has no direction; maximal disagreement
            # would be arbitrary, so count it as neutral (pi/2).
            ang = math.pi / 2.0
        else:
            # atan2 form: exact 0 for identical vectors, unlike acos of a
            # rounded cosine.
            dot = float(ua[i][0] * ub[j][0] + ua[i][1] * ub[j][1])
            crs = float(ua[i][0] * ub[j][1] - ua[i][1] * ub[j][0])
            ang = math.atan2(abs(crs), dot)
        direction_d.append(ang)
        length_d.append(abs(na - nb))
        position_d.append(
            math.hypot(pos_a[i][0] - pos_b[j][0], pos_a[i][1] - pos_b[j][1])
        )
        duration_d.append(
            abs(dur_a[i] - dur_b[j]) / max(dur_a[i], dur_b[j])
        )

    def sim(values: list[float], normalizer: float) -> float:
        d = sum(values) / len(values) / normalizer
        return min(1.0, max(0.0, 1.0 - d))

    return MultiMatchScores(
        shape=sim(shape_d, diag),
        direction=sim(direction_d, math.pi),
        length=sim(length_d, diag),
        position=sim(position_d, diag),
        duration=sim(duration_d, 1.0),
    )


def fixation_count(s: Scanpath) -> int:
    if not s.fixations:
        raise ValueError(f"trial {s.trial_id!r}: empty scanpath")
    return len(s.fixations)


def mean_fixation_duration(s: Scanpath) -> float:
    if not s.fixations:
        raise ValueError(f"trial {s.trial_id!r}: empty scanpath")
    return float(np.mean([f.duration_ms for f in s.fixations]))


def gaze_shifts(s: Scanpath, geom: ScreenGeometry) -> int:
    """Number of consecutive fixation pairs transitioning keyboard -> text."""
    if not s.fixations:
        raise ValueError(f"trial {s.trial_id!r}: empty scanpath")
    regions = [region_of((f.x, f.y), geom) for f in s.fixations]
    return sum(
        1 for r0, r1 in zip(regions, regions[1:]) if r0 == "keyboard" and r1 == "text"
    )


def _duration_share(s: Scanpath, geom: ScreenGeometry, region: str) -> float:
    total = sum(f.duration_ms for f in s.fixations)
    if total <= 0:
        raise ValueError(f"trial {s.trial_id!r}: zero total fixation duration")
    hit = sum(
        f.duration_ms for f in s.fixations if region_of((f.x, f.y), geom) == region
    )
    return hit / total


def gaze_on_keyboard_ratio(s: Scanpath, geom: ScreenGeometry) -> float:
    """Duration-weighted fraction of fixation time in the keyboard band."""
    return _duration_share(s, geom, "keyboard")


def proofreading_rate(s: Scanpath, geom: ScreenGeometry) -> float:
    """Duration-weighted fraction of fixation time in the text area."""
    return _duration_share(s, geom, "text")
