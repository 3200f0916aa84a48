"""Differentiable objectives aligning predicted slots with observed gaze.

Four terms, each toggleable:

- similarity: coordinate MSE minus the mean of three index-aligned
  similarity components (position, duration, saccade length),
- length: binary cross-entropy on the per-slot validity logits,
- guidance: pre-tap window statistics (mean gaze-to-tap distance and a
  soft keyboard-region fixation count),
- verification: total text-area gaze time and a soft text-region count.

Ground-truth quantities are evaluated through the same tensor subroutines
as the predicted ones, just on constant inputs, so every stated identity at
pred = gt holds to machine precision. Region membership is softened with a
sigmoid over the signed distance to the region band; timelines on both
sides are anchored at the ground truth's first onset with fixations laid
out back-to-back (gaps between observed fixations are ignored here, which
keeps the identities exact).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..core import DEFAULT_GEOMETRY, KeypressLog, Scanpath, ScreenGeometry
from .network import FixationPrediction, LossSwitches

__all__ = [
    "LossBreakdown",
    "PRETAP_WINDOW_MS",
    "REGION_SOFTNESS_PX",
    "loss_sim",
    "loss_len",
    "loss_f",
    "loss_v",
    "total_loss",
]

#: Guidance statistics cover this window before each tap.
PRETAP_WINDOW_MS = 350.0

#: Temperature (pixels) of the soft region-membership sigmoid.
REGION_SOFTNESS_PX = 20.0

#: Keeps vector norms differentiable at zero; adds at most 1e-12 error.
_NORM_EPS = 1e-24

#: Floor (seconds) of the duration-similarity denominator.
_DUR_FLOOR_S = 1e-4


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar values of the four terms; disabled terms report 0."""

    total: float
    sim: float
    len: float
    f: float
    v: float


def _check_gt(pred: FixationPrediction, gt: Scanpath) -> int:
    if not gt.fixations:
        raise ValueError(f"trial {gt.trial_id!r}: empty ground-truth scanpath")
    length = len(gt)
    if length > pred.n_slots:
        raise ValueError(
            f"trial {gt.trial_id!r}: {length} fixations exceed the "
            f"{pred.n_slots} prediction slots"
        )
    return length


def _gt_arrays(gt: Scanpath, geom: ScreenGeometry) -> tuple[np.ndarray, ...]:
    """Normalized x, y, duration-in-seconds columns of the ground truth."""
    xs = np.array([f.x / geom.width for f in gt.fixations])
    ys = np.array([f.y / geom.height for f in gt.fixations])
    durs = np.array([f.duration_ms / 1000.0 for f in gt.fixations])
    return xs, ys, durs


def _soft_text(y_px: Tensor, geom: ScreenGeometry) -> Tensor:
    """Soft membership of the text band (y below text_area_max_y)."""
    signed = ad.minimum(y_px, ad.sub(geom.text_area_max_y, y_px))
    return ad.sigmoid(ad.mul(signed, 1.0 / REGION_SOFTNESS_PX))


def _soft_keyboard(y_px: Tensor, geom: ScreenGeometry) -> Tensor:
    signed = ad.minimum(
        ad.sub(y_px, geom.keyboard_min_y), ad.sub(geom.keyboard_max_y, y_px)
    )
    return ad.sigmoid(ad.mul(signed, 1.0 / REGION_SOFTNESS_PX))


def _pair_distances(
    xs: Tensor, ys: Tensor, fix_idx: np.ndarray, tap_xy: np.ndarray, geom: ScreenGeometry
) -> Tensor:
    """Normalized gaze-to-tap distances for the given (fixation, tap) pairs."""
    dx = ad.sub(xs[fix_idx], tap_xy[:, 0] / geom.width)
    dy = ad.sub(ys[fix_idx], tap_xy[:, 1] / geom.height)
    return ad.sqrt(ad.add(ad.add(ad.square(dx), ad.square(dy)), _NORM_EPS))


def _anchored_onsets(first_onset_ms: float, durations_ms: np.ndarray) -> np.ndarray:
    """Back-to-back onsets: the shared timeline convention of this module."""
    return first_onset_ms + np.concatenate(([0.0], np.cumsum(durations_ms)[:-1]))


def _window_pairs(
    onsets_ms: np.ndarray, durations_ms: np.ndarray, tap_times_ms: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(tap_idx, fix_idx) for fixation intervals meeting a pre-tap window."""
    start = tap_times_ms[:, None] - PRETAP_WINDOW_MS
    end = tap_times_ms[:, None]
    active = (onsets_ms[None, :] < end) & (onsets_ms + durations_ms > start)
    return np.nonzero(active)


def _guidance_stats(
    xs: Tensor,
    ys: Tensor,
    onsets_ms: np.ndarray,
    durations_ms: np.ndarray,
    log: KeypressLog,
    geom: ScreenGeometry,
) -> tuple[Optional[Tensor], Tensor, int]:
    """(mean window distance, soft keyboard count, pair count) for one side."""
    tap_xy = np.array([[t.x, t.y] for t in log.taps])
    tap_t = np.array([t.time_ms for t in log.taps])
    tap_idx, fix_idx = _window_pairs(onsets_ms, durations_ms, tap_t)
    if tap_idx.size == 0:
        return None, Tensor(0.0), 0
    dist = _pair_distances(xs, ys, fix_idx, tap_xy[tap_idx], geom)
    members = _soft_keyboard(ad.mul(ys[fix_idx], geom.height), geom)
    return ad.mean(dist), ad.sum(members), int(tap_idx.size)


def loss_sim(
    pred: FixationPrediction, gt: Scanpath, geom: ScreenGeometry = DEFAULT_GEOMETRY
) -> Tensor:
    """Coordinate MSE minus the mean of three similarity components.

    The MSE runs over the first len(gt) slots' (x, y, duration) triples in
    normalized units. The similarity components are index-aligned versions
    of the evaluation metrics: position and saccade-length disagreements
    normalized by the screen diagonal, duration disagreement by the
    pairwise max (floored), each subtracted from 1 and left unclamped so
    the gradient never saturates. Identical inputs score exactly -1.
    """
    length = _check_gt(pred, gt)
    gx, gy, gdur = _gt_arrays(gt, geom)
    px, py, pt = pred.mu_x[:length], pred.mu_y[:length], pred.dur[:length]

    mse = ad.mul(
        ad.add(
            ad.add(ad.mean(ad.square(ad.sub(px, gx))), ad.mean(ad.square(ad.sub(py, gy)))),
            ad.mean(ad.square(ad.sub(pt, gdur))),
        ),
        1.0 / 3.0,
    )

    def pixel_norm(dx_norm: Tensor, dy_norm: Tensor) -> Tensor:
        return ad.sqrt(
            ad.add(
                ad.add(
                    ad.square(ad.mul(dx_norm, geom.width)),
                    ad.square(ad.mul(dy_norm, geom.height)),
                ),
                _NORM_EPS,
            )
        )

    pos_sim = ad.sub(
        1.0, ad.mul(ad.mean(pixel_norm(ad.sub(px, gx), ad.sub(py, gy))), 1.0 / geom.diagonal)
    )

    denominator = ad.maximum(ad.maximum(pt, gdur), _DUR_FLOOR_S)
    dur_sim = ad.sub(1.0, ad.mean(ad.div(ad.absolute(ad.sub(pt, gdur)), denominator)))

    if length >= 2:
        def amplitudes(xs: Tensor, ys: Tensor) -> Tensor:
            return pixel_norm(ad.sub(xs[1:], xs[:-1]), ad.sub(ys[1:], ys[:-1]))

        gt_amp = amplitudes(Tensor(gx), Tensor(gy))
        len_sim = ad.sub(
            1.0,
            ad.mul(
                ad.mean(ad.absolute(ad.sub(amplitudes(px, py), gt_amp))),
                1.0 / geom.diagonal,
            ),
        )
    else:
        # A single fixation has no saccade; the component is neutral.
        len_sim = Tensor(1.0)

    similarity = ad.mul(ad.add(ad.add(pos_sim, dur_sim), len_sim), 1.0 / 3.0)
    return ad.sub(mse, similarity)


def loss_len(logits: Tensor, gt_length: int) -> Tensor:
    """Mean binary cross-entropy of the validity logits over all slots.

    Labels are 1 for the first gt_length slots and 0 after; all-zero
    logits therefore cost ln 2 regardless of the labels.
    """
    n = logits.shape[0]
    if not 0 <= gt_length <= n:
        raise ValueError(f"gt_length={gt_length} outside [0, {n}]")
    labels = np.zeros(n, dtype=np.float64)
    labels[:gt_length] = 1.0
    # y*softplus(-z) + (1-y)*softplus(z), the overflow-safe BCE form.
    per_slot = ad.add(
        ad.mul(labels, ad.softplus(ad.mul(logits, -1.0))),
        ad.mul(1.0 - labels, ad.softplus(logits)),
    )
    return ad.mean(per_slot)


def loss_f(
    pred: FixationPrediction,
    gt: Scanpath,
    log: KeypressLog,
    geom: ScreenGeometry = DEFAULT_GEOMETRY,
) -> Tensor:
    """Pre-tap guidance term: |d_pred - 0.5 d_gt| + 0.2 |C_pred - C_gt|.

    d is the mean normalized gaze-to-tap distance over fixations whose
    anchored interval meets the 350 ms window before each tap; C is the
    soft count of those window fixations lying in the keyboard band. The
    0.5 coefficient means the term equals 0.5 * d_gt rather than 0 when
    pred equals gt. A ground truth with no window coverage contributes 0.
    """
    length = _check_gt(pred, gt)
    gx, gy, gdur = _gt_arrays(gt, geom)
    first_onset = gt.onsets()[0]

    gt_dist, gt_count, gt_pairs = _guidance_stats(
        Tensor(gx), Tensor(gy), _anchored_onsets(first_onset, gdur * 1000.0),
        gdur * 1000.0, log, geom,
    )
    if gt_pairs == 0:
        warnings.warn(
            f"trial {gt.trial_id!r}: no ground-truth fixation overlaps any "
            "pre-tap window; guidance loss contributes 0",
            RuntimeWarning,
            stacklevel=2,
        )
        return Tensor(0.0)

    pred_durs_ms = pred.dur.data[:length] * 1000.0
    pred_dist, pred_count, pred_pairs = _guidance_stats(
        pred.mu_x[:length], pred.mu_y[:length],
        _anchored_onsets(first_onset, pred_durs_ms), pred_durs_ms, log, geom,
    )
    if pred_pairs == 0:
        pred_dist = Tensor(0.0)
    distance_term = ad.absolute(ad.sub(pred_dist, 0.5 * gt_dist.item()))
    count_term = ad.absolute(ad.sub(pred_count, gt_count.item()))
    return ad.add(distance_term, ad.mul(count_term, 0.2))


def loss_v(
    pred: FixationPrediction, gt: Scanpath, geom: ScreenGeometry = DEFAULT_GEOMETRY
) -> Tensor:
    """Verification term: |D_pred - D_gt| + 0.8 |C_pred - C_gt|.

    D is the soft-membership-weighted gaze time (seconds) in the text
    band, C the soft count of text-band fixations. Zero when pred equals
    gt.
    """
    length = _check_gt(pred, gt)
    gx, gy, gdur = _gt_arrays(gt, geom)

    def stats(ys: Tensor, dur_s: Tensor) -> tuple[Tensor, Tensor]:
        members = _soft_text(ad.mul(ys, geom.height), geom)
        return ad.sum(ad.mul(dur_s, members)), ad.sum(members)

    gt_time, gt_count = stats(Tensor(gy), Tensor(gdur))
    pred_time, pred_count = stats(pred.mu_y[:length], pred.dur[:length])
    time_term = ad.absolute(ad.sub(pred_time, gt_time.item()))
    count_term = ad.absolute(ad.sub(pred_count, gt_count.item()))
    return ad.add(time_term, ad.mul(count_term, 0.8))


def total_loss(
    pred: FixationPrediction,
    gt: Scanpath,
    log: KeypressLog,
    switches: LossSwitches = LossSwitches(),
    geom: ScreenGeometry = DEFAULT_GEOMETRY,
) -> tuple[Tensor, LossBreakdown]:
    """Sum of the enabled terms plus a scalar report.

    Disabled terms are not computed at all; they report 0. Returns the
    differentiable total alongside its float breakdown.
    """
    terms: dict[str, Tensor] = {}
    if switches.sim:
        terms["sim"] = loss_sim(pred, gt, geom)
    if switches.len:
        terms["len"] = loss_len(pred.logits, _check_gt(pred, gt))
    if switches.f:
        terms["f"] = loss_f(pred, gt, log, geom)
    if switches.v:
        terms["v"] = loss_v(pred, gt, geom)

    total: Optional[Tensor] = None
    for term in terms.values():
        total = term if total is None else ad.add(total, term)
    if total is None:
        total = Tensor(0.0)

    def value(name: str) -> float:
        return terms[name].item() if name in terms else 0.0

    breakdown = LossBreakdown(
        total=total.item(),
        sim=value("sim"),
        len=value("len"),
        f=value("f"),
        v=value("v"),
    )
    return total, breakdown
