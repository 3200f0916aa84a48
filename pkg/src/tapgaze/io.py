"""Canonical file formats: keylog/scanpath JSONL and layout JSON.

Unknown fields are ignored on read and never emitted; all text is UTF-8.
Writers go through an atomic temp-file + rename so partially written outputs
are never observed.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

from .core import (
    Fixation,
    KeyboardLayout,
    KeypressLog,
    Scanpath,
    ScreenGeometry,
    TapEvent,
    _layout_from_dict,
)

__all__ = [
    "DataError",
    "read_keylogs",
    "write_keylogs",
    "read_scanpaths",
    "write_scanpaths",
    "load_layout",
    "save_layout",
    "atomic_write_text",
]

PathLike = Union[str, Path]


class DataError(ValueError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write text to path atomically (temp file in the same dir + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_jsonl(path: PathLike) -> Iterator[tuple[int, dict]]:
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise DataError(f"{path}:{lineno}: expected an object per line")
            yield lineno, doc


def _require(doc: dict, field: str, where: str):
    if field not in doc:
        raise DataError(f"{where}: missing field {field!r}")
    return doc[field]


def read_keylogs(
    path: PathLike, geom: Optional[ScreenGeometry] = None
) -> list[KeypressLog]:
    """Parse a keylog JSONL file; validates tap ordering (and bounds if geom)."""
    out: list[KeypressLog] = []
    for lineno, doc in _load_jsonl(path):
        where = f"{path}:{lineno}"
        taps_doc = _require(doc, "taps", where)
        try:
            taps = tuple(
                TapEvent(
                    x=float(_require(t, "x", where)),
                    y=float(_require(t, "y", where)),
                    time_ms=float(_require(t, "time_ms", where)),
                )
                for t in taps_doc
            )
        except (TypeError, ValueError) as exc:
            raise DataError(f"{where}: bad tap record: {exc}") from exc
        log = KeypressLog(
            trial_id=str(_require(doc, "trial_id", where)),
            user_id=str(_require(doc, "user_id", where)),
            reference_text=str(_require(doc, "reference_text", where)),
            taps=taps,
        )
        try:
            log.validate(geom)
        except ValueError as exc:
            raise DataError(f"{where}: {exc}") from exc
        out.append(log)
    return out


def _num(x: float) -> Union[int, float]:
    # Emit integral values without a trailing .0 so files stay diff-friendly.
    f = float(x)
    return int(f) if f.is_integer() else f


def write_keylogs(path: PathLike, logs: Iterable[KeypressLog]) -> None:
    lines = []
    for log in logs:
        doc = {
            "trial_id": log.trial_id,
            "user_id": log.user_id,
            "reference_text": log.reference_text,
            "taps": [
                {"x": _num(t.x), "y": _num(t.y), "time_ms": _num(t.time_ms)}
                for t in log.taps
            ],
        }
        lines.append(json.dumps(doc, ensure_ascii=False, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_scanpaths(
    path: PathLike, geom: Optional[ScreenGeometry] = None
) -> list[Scanpath]:
    """Parse a scanpath JSONL file; onset_ms is optional per fixation."""
    out: list[Scanpath] = []
    for lineno, doc in _load_jsonl(path):
        where = f"{path}:{lineno}"
        fixes_doc = _require(doc, "fixations", where)
        try:
            fixations = tuple(
                Fixation(
                    x=float(_require(f, "x", where)),
                    y=float(_require(f, "y", where)),
                    duration_ms=float(_require(f, "duration_ms", where)),
                    onset_ms=float(f["onset_ms"]) if "onset_ms" in f else None,
                )
                for f in fixes_doc
            )
        except (TypeError, ValueError) as exc:
            raise DataError(f"{where}: bad fixation record: {exc}") from exc
        sp = Scanpath(trial_id=str(_require(doc, "trial_id", where)), fixations=fixations)
        try:
            sp.validate(geom)
        except ValueError as exc:
            raise DataError(f"{where}: {exc}") from exc
        out.append(sp)
    return out


def write_scanpaths(path: PathLike, scanpaths: Iterable[Scanpath]) -> None:
    lines = []
    for sp in scanpaths:
        onsets = sp.onsets()
        doc = {
            "trial_id": sp.trial_id,
            "fixations": [
                {
                    "x": _num(f.x),
                    "y": _num(f.y),
                    "duration_ms": _num(f.duration_ms),
                    "onset_ms": _num(onset),
                }
                for f, onset in zip(sp.fixations, onsets)
            ],
        }
        lines.append(json.dumps(doc, ensure_ascii=False, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def load_layout(path: PathLike) -> tuple[KeyboardLayout, ScreenGeometry]:
    """Load a layout JSON file (screen geometry + key rectangles)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return _layout_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad layout: {exc}") from exc


def save_layout(path: PathLike, layout: KeyboardLayout, geom: ScreenGeometry) -> None:
    doc = {
        "layout_version": layout.version,
        "screen": {
            "width": _num(geom.width),
            "height": _num(geom.height),
            "text_area_max_y": _num(geom.text_area_max_y),
            "keyboard_min_y": _num(geom.keyboard_min_y),
            "keyboard_max_y": _num(geom.keyboard_max_y),
        },
        "keys": [
            {
                "label": k.label,
                "x": _num(k.x),
                "y": _num(k.y),
                "w": _num(k.w),
                "h": _num(k.h),
            }
            for k in layout.keys
        ],
    }
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
