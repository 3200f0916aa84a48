"""Domain types, screen geometry, and typing-metric computation.

Everything downstream (metrics, analysis, simulator, model) shares these
types. All values are immutable after construction and safe to share across
threads; every operation here is a pure function of its inputs.

Coordinate convention: portrait canvas, x grows right, y grows down from the
top of the screen, units are pixels. Times are milliseconds since trial start.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

__all__ = [
    "TapEvent",
    "KeypressLog",
    "Fixation",
    "Scanpath",
    "ScreenGeometry",
    "Key",
    "KeyboardLayout",
    "TypingMetrics",
    "HumanParams",
    "DEFAULT_GEOMETRY",
    "key_at",
    "region_of",
    "decode_text",
    "interkey_intervals",
    "compute_typing_metrics",
    "levenshtein",
    "default_layout",
    "build_default_layout",
]


@dataclass(frozen=True)
class TapEvent:
    """One touch on the screen.

    Attributes:
        x: horizontal position in pixels.
        y: vertical position in pixels (0 at the top).
        time_ms: milliseconds since trial start; strictly increasing within
            a log. The inter-key interval of the first tap is defined as 0.
    """

    x: float
    y: float
    time_ms: float


@dataclass(frozen=True)
class KeypressLog:
    """An ordered trial of touches transcribing one sentence."""

    trial_id: str
    user_id: str
    reference_text: str
    taps: tuple[TapEvent, ...]

    def validate(self, geom: Optional["ScreenGeometry"] = None) -> None:
        if not self.taps:
            raise ValueError(f"trial {self.trial_id!r}: empty tap sequence")
        for prev, cur in zip(self.taps, self.taps[1:]):
            if cur.time_ms <= prev.time_ms:
                raise ValueError(
                    f"trial {self.trial_id!r}: tap times not strictly "
                    f"increasing ({prev.time_ms} -> {cur.time_ms})"
                )
        if geom is not None:
            for t in self.taps:
                if not (0 <= t.x <= geom.width and 0 <= t.y <= geom.height):
                    raise ValueError(
                        f"trial {self.trial_id!r}: tap ({t.x}, {t.y}) "
                        f"outside {geom.width}x{geom.height} screen"
                    )


@dataclass(frozen=True)
class Fixation:
    """One gaze dwell.

    Attributes:
        x, y: position in pixels.
        duration_ms: dwell length, strictly positive.
        onset_ms: start time since trial start. May be omitted, in which
            case it is derived as the cumulative sum of prior durations
            (the first fixation then starts at 0).
    """

    x: float
    y: float
    duration_ms: float
    onset_ms: Optional[float] = None


@dataclass(frozen=True)
class Scanpath:
    """An ordered trial of fixations."""

    trial_id: str
    fixations: tuple[Fixation, ...]

    def __len__(self) -> int:
        return len(self.fixations)

    def onsets(self) -> tuple[float, ...]:
        """Materialized onset times; derived by cumulative sum when absent."""
        out: list[float] = []
        acc = 0.0
        for f in self.fixations:
            onset = f.onset_ms if f.onset_ms is not None else acc
            out.append(onset)
            acc = onset + f.duration_ms
        return tuple(out)

    def validate(self, geom: Optional["ScreenGeometry"] = None) -> None:
        if not self.fixations:
            raise ValueError(f"trial {self.trial_id!r}: empty scanpath")
        for f in self.fixations:
            if not f.duration_ms > 0:
                raise ValueError(
                    f"trial {self.trial_id!r}: non-positive fixation "
                    f"duration {f.duration_ms}"
                )
            if geom is not None and not (
                0 <= f.x <= geom.width and 0 <= f.y <= geom.height
            ):
                raise ValueError(
                    f"trial {self.trial_id!r}: fixation ({f.x}, {f.y}) "
                    f"outside {geom.width}x{geom.height} screen"
                )
        onsets = self.onsets()
        for a, b in zip(onsets, onsets[1:]):
            if b <= a:
                raise ValueError(
                    f"trial {self.trial_id!r}: fixation onsets not strictly "
                    f"increasing ({a} -> {b})"
                )


@dataclass(frozen=True)
class ScreenGeometry:
    """Screen dimensions and the vertical text/keyboard bands."""

    width: float
    height: float
    text_area_max_y: float
    keyboard_min_y: float
    keyboard_max_y: float

    def __post_init__(self) -> None:
        if not (
            0
            < self.text_area_max_y
            < self.keyboard_min_y
            < self.keyboard_max_y
            <= self.height
        ):
            raise ValueError(
                "invalid band ordering: need 0 < text_area_max_y < "
                "keyboard_min_y < keyboard_max_y <= height, got "
                f"{self.text_area_max_y}/{self.keyboard_min_y}/"
                f"{self.keyboard_max_y}/{self.height}"
            )

    @property
    def diagonal(self) -> float:
        return float((self.width**2 + self.height**2) ** 0.5)


#: Portrait canvas with the text area in the top 400px and the keyboard band
#: between y=1230 and y=1980. The canvas height is the bottom of the keyboard
#: band: the band constants require a screen taller than the nominal 1920.
DEFAULT_GEOMETRY = ScreenGeometry(
    width=1080,
    height=1980,
    text_area_max_y=400,
    keyboard_min_y=1230,
    keyboard_max_y=1980,
)


@dataclass(frozen=True)
class Key:
    """One key rectangle: top-left corner (x, y), extent (w, h)."""

    label: str
    x: float
    y: float
    w: float
    h: float

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px <= self.x + self.w and self.y <= py <= self.y + self.h


@dataclass(frozen=True)
class KeyboardLayout:
    """A set of non-overlapping key rectangles inside the keyboard band."""

    keys: tuple[Key, ...]
    version: str = "1"

    def __post_init__(self) -> None:
        labels = {k.label for k in self.keys}
        for required in ("space", "backspace"):
            if required not in labels:
                raise ValueError(f"layout is missing the {required!r} key")

    def key(self, label: str) -> Key:
        for k in self.keys:
            if k.label == label:
                return k
        raise KeyError(label)

    def validate(self, geom: ScreenGeometry) -> None:
        for k in self.keys:
            if not (geom.keyboard_min_y <= k.y and k.y + k.h <= geom.keyboard_max_y):
                raise ValueError(
                    f"key {k.label!r} leaves the keyboard band "
                    f"[{geom.keyboard_min_y}, {geom.keyboard_max_y}]"
                )
        # Interiors must be disjoint; touching edges are allowed.
        ks = self.keys
        for i in range(len(ks)):
            for j in range(i + 1, len(ks)):
                a, b = ks[i], ks[j]
                if (
                    a.x < b.x + b.w
                    and b.x < a.x + a.w
                    and a.y < b.y + b.h
                    and b.y < a.y + a.h
                ):
                    raise ValueError(f"keys {a.label!r} and {b.label!r} overlap")


@dataclass(frozen=True)
class TypingMetrics:
    """Aggregate typing performance of one trial (or averaged over trials)."""

    wpm: float
    mean_iki_ms: float
    error_rate: float
    backspace_count: float

    def as_vector(self) -> tuple[float, float, float, float]:
        return (self.wpm, self.mean_iki_ms, self.error_rate, self.backspace_count)


@dataclass(frozen=True)
class HumanParams:
    """Latent per-user parameters theta = (e_k, f_k, lambda).

    Attributes:
        e_k: vision encoding time, in [0, 1].
        f_k: finger imprecision, in [0, 1].
        lam: memory retention, in [0, 1]. Higher retention means less
            proofreading.
    """

    e_k: float
    f_k: float
    lam: float

    def __post_init__(self) -> None:
        for name, v in (("e_k", self.e_k), ("f_k", self.f_k), ("lam", self.lam)):
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.e_k, self.f_k, self.lam)


def key_at(point: tuple[float, float], layout: KeyboardLayout) -> Optional[str]:
    """Label of the key whose rectangle contains the point, or None.

    Points on a shared edge resolve to the key with smaller x, then smaller y.
    """
    px, py = point
    hits = [k for k in layout.keys if k.contains(px, py)]
    if not hits:
        return None
    return min(hits, key=lambda k: (k.x, k.y)).label


def region_of(point: tuple[float, float], geom: ScreenGeometry) -> str:
    """Partition a point into 'text', 'keyboard', or 'other' by its y band."""
    y = point[1]
    if y < geom.text_area_max_y:
        return "text"
    if geom.keyboard_min_y <= y <= geom.keyboard_max_y:
        return "keyboard"
    return "other"


def decode_text(log: KeypressLog, layout: KeyboardLayout) -> str:
    """Replay taps into the typed string.

    Character keys append their label, "space" appends ' ', "backspace"
    removes the last character if any; taps outside every key are skipped.
    """
    buf: list[str] = []
    for tap in log.taps:
        label = key_at((tap.x, tap.y), layout)
        if label is None:
            continue
        if label == "backspace":
            if buf:
                buf.pop()
        elif label == "space":
            buf.append(" ")
        elif len(label) == 1:
            buf.append(label)
    return "".join(buf)


def interkey_intervals(log: KeypressLog) -> list[float]:
    """C-1 positive inter-tap intervals; empty (degenerate) below 2 taps."""
    taps = log.taps
    return [b.time_ms - a.time_ms for a, b in zip(taps, taps[1:])]


def levenshtein(a: str, b: str) -> int:
    """Character-level edit distance (insert/delete/substitute, unit costs)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(
                min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
            )
        prev = cur
    return prev[-1]


def compute_typing_metrics(log: KeypressLog, layout: KeyboardLayout) -> TypingMetrics:
    """WPM, mean IKI, character error rate, and backspace count of a trial.

    WPM uses the 5-characters-per-word convention over the first-to-last tap
    span; error rate is Levenshtein distance to the reference, normalized by
    reference length and clamped to [0, 1].
    """
    log.validate()
    if not log.reference_text:
        raise ValueError(f"trial {log.trial_id!r}: empty reference text")
    duration_ms = log.taps[-1].time_ms - log.taps[0].time_ms
    if duration_ms <= 0:
        raise ValueError(f"trial {log.trial_id!r}: zero trial duration")
    typed = decode_text(log, layout)
    wpm = (len(typed) / 5.0) / (duration_ms / 60000.0)
    intervals = interkey_intervals(log)
    mean_iki = sum(intervals) / len(intervals)
    err = levenshtein(typed, log.reference_text) / max(1, len(log.reference_text))
    backspaces = sum(
        1 for t in log.taps if key_at((t.x, t.y), layout) == "backspace"
    )
    return TypingMetrics(
        wpm=wpm,
        mean_iki_ms=mean_iki,
        error_rate=min(1.0, err),
        backspace_count=float(backspaces),
    )


_ROW1 = "qwertyuiop"
_ROW2 = "asdfghjkl"
_ROW3 = "zxcvbnm"
_KEY_W = 98.0
_KEY_H = 173.0


def build_default_layout(geom: ScreenGeometry = DEFAULT_GEOMETRY) -> KeyboardLayout:
    """Programmatic QWERTY grid: 10/9/7 letter rows plus backspace and space.

    98x173px keys anchored at x=(width - 10*98)/2, y=keyboard_min_y; rows 2
    and 3 are centered. The fourth row holds a right-aligned 196px backspace
    and a centered 490px space bar.
    """
    x0 = (geom.width - len(_ROW1) * _KEY_W) / 2.0
    keys: list[Key] = []
    for row_idx, row in enumerate((_ROW1, _ROW2, _ROW3)):
        y = geom.keyboard_min_y + row_idx * _KEY_H
        left = x0 + (len(_ROW1) - len(row)) * _KEY_W / 2.0
        for col, ch in enumerate(row):
            keys.append(Key(ch, left + col * _KEY_W, y, _KEY_W, _KEY_H))
    y4 = geom.keyboard_min_y + 3 * _KEY_H
    space_w = 490.0
    keys.append(Key("space", (geom.width - space_w) / 2.0, y4, space_w, _KEY_H))
    back_w = 196.0
    keys.append(Key("backspace", geom.width - x0 - back_w, y4, back_w, _KEY_H))
    return KeyboardLayout(keys=tuple(keys), version="1")


def _layout_from_dict(doc: dict) -> tuple[KeyboardLayout, ScreenGeometry]:
    screen = doc["screen"]
    geom = ScreenGeometry(
        width=float(screen["width"]),
        height=float(screen["height"]),
        text_area_max_y=float(screen["text_area_max_y"]),
        keyboard_min_y=float(screen["keyboard_min_y"]),
        keyboard_max_y=float(screen["keyboard_max_y"]),
    )
    keys = tuple(
        Key(
            label=str(k["label"]),
            x=float(k["x"]),
            y=float(k["y"]),
            w=float(k["w"]),
            h=float(k["h"]),
        )
        for k in doc["keys"]
    )
    layout = KeyboardLayout(keys=keys, version=str(doc.get("layout_version", "1")))
    layout.validate(geom)
    return layout, geom


def default_layout() -> tuple[KeyboardLayout, ScreenGeometry]:
    """The packaged QWERTY layout asset and its screen geometry."""
    text = (
        resources.files("tapgaze.data")
        .joinpath("qwerty_portrait_v1.json")
        .read_text(encoding="utf-8")
    )
    return _layout_from_dict(json.loads(text))
