"""Parametric typist-plus-gaze simulator emitting paired trials.

Given per-user parameters theta = (e_k, f_k, lam) and a sentence, the
simulator replays an eye-finger loop: the gaze parks on the upcoming key
shortly before the finger arrives, taps land with finger-dependent
noise, and every couple of taps brings a memory-dependent opportunity to
glance at the text area, where typos may be spotted and corrected with
backspaces.

Phenomena preserved on purpose, because losses and analyses probe them:

- the mean gaze-tap distance curve reaches its minimum 150-350 ms
  before the tap (guidance leads are drawn in that range, and rushed
  guidance lands less precisely, which tilts the curve minimum away
  from the tap),
- proofreading probability rises as lam falls, so text-area gaze time
  and correction backspaces carry the memory parameter,
- inter-key intervals carry e_k through a per-tap encoding cost, and
  typo rates carry f_k through touch noise.

Every random draw comes from the caller-supplied generator, so a trial
is a pure function of (config, sentence, seed).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import (
    DEFAULT_GEOMETRY,
    Fixation,
    HumanParams,
    KeyboardLayout,
    KeypressLog,
    Scanpath,
    ScreenGeometry,
    TapEvent,
    build_default_layout,
    key_at,
)

__all__ = [
    "SimConfig",
    "SimulatedTrial",
    "DEFAULT_PHRASES",
    "MAX_TAPS",
    "simulate_trial",
    "simulate_dataset",
]

# Hard cap on taps per trial; runaway correction loops stop here.
MAX_TAPS = 48

# Guidance lead: gaze arrives this long before its tap (ms).
_LEAD_MEAN = 250.0
_LEAD_SD = 50.0
_LEAD_MIN = 150.0
_LEAD_MAX = 350.0
# Hops shorter than this need no visual search; corrective taps
# (backspaces and redone characters) are likewise unguided.
_GUIDE_SKIP_DIST = 170.0
# Gaze landing scatter: sigma = e_k * (base + rush * shortfall / 100),
# where shortfall is how far the lead fell below 250 ms. Rushed
# guidance lands worse, which keeps the distance-curve minimum early.
_JITTER_BASE = 10.0
_JITTER_RUSH = 60.0
# Movement-time noise and floor (ms).
_MOVE_NOISE_SD = 20.0
_MOVE_MIN = 30.0
# Proofreading: an opportunity to glance arises every few taps; each
# glance re-reads only the taps since the last opportunity. Detection
# follows signal-detection style: a real typo in the window is spotted
# with the hit probability, and an error-free window can still trigger
# a false alarm that redoes the last character. The dwell is long and
# does not scale with encoding speed, so the glance count stays legible
# in the timing metrics.
_CHECK_EVERY_TAPS = 2
_PROOFREAD_DWELL_MS = 500.0
_PROOFREAD_DETECT_P = 0.9
_PROOFREAD_FALSE_ALARM_P = 0.5
_RETURN_SACCADE_MS = 60.0
# Scanpath cleanup: fixations closer than the radius (px) merge when
# they overlap or follow within the gap (ms); the rest are truncated,
# and survivors must outlast the minimum duration (ms). The radius
# spans adjacent keys, so guidance hops between neighbours fold into
# one fixation, as in standard fixation-merging preprocessing.
_MERGE_RADIUS = 190.0
_MERGE_GAP_MS = 120.0
_MIN_FIX_MS = 30.0

# Short phrases on purpose: corrections add taps, and trials must stay
# inside the tap cap even for heavy correctors.
DEFAULT_PHRASES: tuple[str, ...] = (
    "we go up to the red barn",
    "he is at the bar by six",
    "my dog ate a bit of ham",
    "she put the jam on a bun",
    "it is fun to run in may",
    "we sat on a log at dusk",
    "the cat hid in a big box",
    "he met her at the old pub",
    "a fox ran by the wet hut",
    "we dig for gold in the ore",
    "she won a cup at the fair",
    "the sun set low on the bay",
    "he put his hat on the peg",
    "my mom fed the gray cat",
    "we row out to sea at dawn",
    "the boy ran up the path",
    "she saw an owl in the oak",
    "he got a job at the mill",
    "ice lay on top of the pond",
    "we ate figs at the inn",
    "the van took the far lane",
    "a bee sat on the red rose",
    "he let the big dog out now",
    "she can fix an old tin van",
)


@dataclass(frozen=True)
class SimConfig:
    """Simulator settings.

    theta=None means simulate_dataset samples one theta per user
    uniformly from [0.2, 0.8]^3; a fixed theta applies to every user.
    """

    theta: Optional[HumanParams] = None
    phrase_set: tuple[str, ...] = DEFAULT_PHRASES
    seed: int = 0
    trials_per_user: int = 5
    fitts_a: float = 100.0
    fitts_b: float = 150.0
    base_encode_ms: float = 250.0
    sigma0: float = 48.0
    proofread_base_p: float = 0.0

    def __post_init__(self) -> None:
        if not self.phrase_set:
            raise ValueError("phrase_set must not be empty")
        if not 0.0 <= self.proofread_base_p <= 1.0:
            raise ValueError(f"proofread_base_p={self.proofread_base_p}")
        if not self.fitts_b > 0:
            raise ValueError(f"fitts_b must be > 0, got {self.fitts_b}")
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be > 0, got {self.sigma0}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.trials_per_user < 1:
            raise ValueError(f"trials_per_user={self.trials_per_user}")
        if not self.base_encode_ms > 0:
            raise ValueError(f"base_encode_ms={self.base_encode_ms}")


@dataclass(frozen=True)
class SimulatedTrial:
    user_id: str
    trial_id: str
    theta: HumanParams
    log: KeypressLog
    scanpath: Scanpath


def _clip(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def _first_mismatch(typed: str, intended: str) -> int:
    for i, (a, b) in enumerate(zip(typed, intended)):
        if a != b:
            return i
    return min(len(typed), len(intended))


def _normalize_fixations(
    raw: list[tuple[float, float, float, float]],
) -> list[Fixation]:
    """Sort, merge nearby overlaps, truncate the rest; onsets end strict."""
    ordered = sorted(raw, key=lambda f: f[3])
    norm: list[list[float]] = []
    for x, y, dur, onset in ordered:
        cur: Optional[list[float]] = [x, y, dur, onset]
        while norm and cur is not None:
            px, py, pdur, ponset = norm[-1]
            pend = ponset + pdur
            near = math.hypot(px - x, py - y) <= _MERGE_RADIUS
            if onset >= pend - 1e-9:
                if near and onset - pend <= _MERGE_GAP_MS:
                    norm[-1][2] = onset + dur - ponset  # bridge the gap
                    cur = None
                break
            if near:
                norm[-1][2] = max(pend, onset + dur) - ponset
                cur = None
                break
            cut = onset - ponset
            if cut >= _MIN_FIX_MS:
                norm[-1][2] = cut
                break
            norm.pop()  # too short once cut; drop and test the one below
        if cur is not None:
            norm.append(cur)
    return [Fixation(x, y, dur, onset_ms=onset) for x, y, dur, onset in norm]


def simulate_trial(
    cfg: SimConfig,
    sentence: str,
    rng: np.random.Generator,
    trial_id: str = "t000",
    user_id: str = "u000",
    layout: Optional[KeyboardLayout] = None,
    geom: ScreenGeometry = DEFAULT_GEOMETRY,
) -> tuple[KeypressLog, Scanpath]:
    """Simulate one sentence; returns an aligned (log, scanpath) pair.

    Raises ValueError for an unset theta, an empty sentence, or a
    character with no key in the layout.
    """
    if cfg.theta is None:
        raise ValueError("simulate_trial needs cfg.theta set")
    if not sentence:
        raise ValueError("empty sentence")
    if layout is None:
        layout = build_default_layout(geom)
    labels = {k.label for k in layout.keys}
    for ch in sentence:
        if ("space" if ch == " " else ch) not in labels:
            raise ValueError(f"character {ch!r} has no key in the layout")

    e_k, f_k, lam = cfg.theta.as_tuple()
    sigma_touch = cfg.sigma0 * (0.5 + f_k)
    encode_tap = 0.5 * cfg.base_encode_ms * (0.5 + e_k)
    guide_dur = cfg.base_encode_ms * (0.5 + e_k)
    p_proofread = min(1.0, cfg.proofread_base_p + (1.0 - lam) * 0.5)

    targets = list(sentence)
    queue: deque[str] = deque(targets)
    typed: list[str] = []
    taps: list[tuple[float, float, float]] = []
    raw_fix: list[tuple[float, float, float, float]] = []
    t = 400.0
    finger = layout.key("space").center

    def tap_key(label: str, guided: bool = True) -> None:
        """Tap one key: optional guidance fixation, Fitts move, touch."""
        nonlocal t, finger
        key = layout.key(label)
        cx, cy = key.center
        dist = math.hypot(finger[0] - cx, finger[1] - cy)
        move = cfg.fitts_a + cfg.fitts_b * math.log2(1.0 + dist / key.w)
        move = max(_MOVE_MIN, move + rng.normal(0.0, _MOVE_NOISE_SD))
        t_tap = t + move + encode_tap

        if guided and dist >= _GUIDE_SKIP_DIST:
            lead = _clip(rng.normal(_LEAD_MEAN, _LEAD_SD), _LEAD_MIN, _LEAD_MAX)
            rush = max(0.0, _LEAD_MEAN - lead) / 100.0
            sigma_gaze = e_k * (_JITTER_BASE + _JITTER_RUSH * rush)
            gx = _clip(cx + rng.normal(0.0, sigma_gaze), 0.0, geom.width)
            gy = _clip(
                cy + rng.normal(0.0, sigma_gaze),
                geom.keyboard_min_y,
                geom.keyboard_max_y,
            )
            raw_fix.append((gx, gy, guide_dur, t_tap - lead))

        tx = _clip(cx + rng.normal(0.0, sigma_touch), 0.0, geom.width)
        ty = _clip(cy + rng.normal(0.0, sigma_touch), 0.0, geom.height)
        taps.append((tx, ty, t_tap))
        hit = key_at((tx, ty), layout) or label
        if hit == "backspace":
            if typed:
                typed.pop()
        elif hit == "space":
            typed.append(" ")
        else:
            typed.append(hit)
        finger = (tx, ty)
        t = t_tap

    # Proofreading re-reads only the taps since the previous opportunity
    # (a working-memory window); the window scrolls at every opportunity
    # whether or not a glance happened. Each typo therefore gets a single
    # catch-or-miss chance, keeping the caught (backspace) and missed
    # (residual error) counts separately informative about lambda.
    checked = 0
    since_check = 0
    redo = 0
    while queue and len(taps) < MAX_TAPS:
        ch = queue.popleft()
        tap_key("space" if ch == " " else ch, guided=redo == 0)
        if redo:
            redo -= 1

        since_check += 1
        if since_check < _CHECK_EVERY_TAPS and queue:
            continue
        since_check = 0
        if rng.random() < p_proofread:
            # Proofreading glance into the text area, roughly at the caret.
            dur = _PROOFREAD_DWELL_MS * rng.uniform(0.85, 1.15)
            frac = len(typed) / max(1, len(targets))
            px = _clip(90.0 + 900.0 * frac + rng.normal(0.0, 30.0), 5.0, geom.width - 5.0)
            py = _clip(rng.normal(230.0, 70.0), 10.0, geom.text_area_max_y - 5.0)
            raw_fix.append((px, py, dur, t + 40.0))
            t += 40.0 + dur + _RETURN_SACCADE_MS

            consumed = len(targets) - len(queue)
            intended = "".join(targets[:consumed])
            typed_str = "".join(typed)
            # Scan inside the window only; an error that already scrolled
            # past stays where it is (it was missed for good).
            m = checked + _first_mismatch(typed_str[checked:], intended[checked:])
            if m < len(typed_str):
                if rng.random() < _PROOFREAD_DETECT_P:
                    # Correct back to the mismatch, then requeue the rest.
                    for _ in range(len(typed) - m):
                        if len(taps) >= MAX_TAPS:
                            break
                        tap_key("backspace", guided=False)
                    queue = deque(targets[m:])
                    redo = consumed - m
                    checked = min(m, len(typed))
                    continue
            elif typed and consumed and rng.random() < _PROOFREAD_FALSE_ALARM_P:
                # False alarm on a clean window: redo the last character.
                if len(taps) < MAX_TAPS:
                    tap_key("backspace", guided=False)
                    queue.appendleft(targets[consumed - 1])
                    redo = 1
                    checked = min(checked, len(typed))
                    continue
        checked = len(typed)

    fixations = _normalize_fixations(raw_fix)
    shift = fixations[0].onset_ms if fixations else 0.0
    log = KeypressLog(
        trial_id=trial_id,
        user_id=user_id,
        reference_text=sentence,
        taps=tuple(TapEvent(x, y, tt - shift) for x, y, tt in taps),
    )
    path = Scanpath(
        trial_id=trial_id,
        fixations=tuple(
            Fixation(f.x, f.y, f.duration_ms, onset_ms=f.onset_ms - shift)
            for f in fixations
        ),
    )
    log.validate(geom)
    path.validate(geom)
    return log, path


def simulate_dataset(cfg: SimConfig, n_users: int) -> list[SimulatedTrial]:
    """Simulate trials_per_user trials for each of n_users users.

    Per-trial seeds derive from (cfg.seed, user, trial), so any single
    trial can be regenerated in isolation; per-user theta streams use
    (cfg.seed, user). Output is ordered by (user, trial).
    """
    if n_users < 1:
        raise ValueError(f"n_users must be >= 1, got {n_users}")
    layout = build_default_layout(DEFAULT_GEOMETRY)
    out: list[SimulatedTrial] = []
    for u in range(n_users):
        if cfg.theta is not None:
            theta = cfg.theta
        else:
            tr = np.random.default_rng(np.random.SeedSequence((cfg.seed, u)))
            theta = HumanParams(*(float(v) for v in tr.uniform(0.2, 0.8, size=3)))
        user_cfg = replace(cfg, theta=theta)
        user_id = f"u{u:04d}"
        for k in range(cfg.trials_per_user):
            sentence = cfg.phrase_set[
                (u * cfg.trials_per_user + k) % len(cfg.phrase_set)
            ]
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, u, k)))
            trial_id = f"{user_id}_t{k:03d}"
            log, path = simulate_trial(
                user_cfg, sentence, rng, trial_id=trial_id, user_id=user_id,
                layout=layout, geom=DEFAULT_GEOMETRY,
            )
            out.append(
                SimulatedTrial(
                    user_id=user_id,
                    trial_id=trial_id,
                    theta=theta,
                    log=log,
                    scanpath=path,
                )
            )
    return out
