from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import recursive_levenshtein
from tapgaze.core import (
    DEFAULT_GEOMETRY,
    Fixation,
    HumanParams,
    KeypressLog,
    Scanpath,
    ScreenGeometry,
    TapEvent,
    build_default_layout,
    compute_typing_metrics,
    decode_text,
    default_layout,
    interkey_intervals,
    key_at,
    levenshtein,
    region_of,
)


def tap_on(layout, label, t):
    cx, cy = layout.key(label).center
    return TapEvent(x=cx, y=cy, time_ms=t)


def log_for(layout, labels, reference="hello", start=0.0, step=300.0):
    taps = tuple(tap_on(layout, lab, start + i * step) for i, lab in enumerate(labels))
    return KeypressLog(trial_id="t", user_id="u", reference_text=reference, taps=taps)


class TestLayout:
    def test_asset_matches_programmatic_builder(self, layout, geom):
        assert layout == build_default_layout(geom)
        layout.validate(geom)

    def test_key_centers_resolve_to_their_labels(self, layout):
        for key in layout.keys:
            assert key_at(key.center, layout) == key.label

    def test_point_in_text_area_resolves_to_none(self, layout):
        assert key_at((500.0, 200.0), layout) is None

    def test_shared_edge_tie_breaks_to_smaller_x_then_y(self, layout):
        q, w = layout.key("q"), layout.key("w")
        edge_x = q.x + q.w
        assert edge_x == w.x
        assert key_at((edge_x, q.y + 10.0), layout) == "q"
        a = layout.key("a")
        edge_y = q.y + q.h
        assert edge_y == a.y
        # q and a do not share x ranges exactly; use a point inside both bands
        x_both = max(q.x, a.x) + 1.0
        assert key_at((x_both, edge_y), layout) == "q"

    def test_required_keys_present(self, layout):
        labels = {k.label for k in layout.keys}
        assert "space" in labels and "backspace" in labels
        assert set("abcdefghijklmnopqrstuvwxyz") <= labels


class TestRegions:
    def test_text_keyboard_other(self, geom):
        assert region_of((10, 200), geom) == "text"
        assert region_of((10, 1500), geom) == "keyboard"
        assert region_of((10, 800), geom) == "other"

    @given(y=st.floats(min_value=0, max_value=1980, allow_nan=False))
    def test_partition_is_total_and_unique(self, y):
        r = region_of((0.0, y), DEFAULT_GEOMETRY)
        assert r in {"text", "keyboard", "other"}

    def test_band_ordering_enforced(self):
        with pytest.raises(ValueError):
            ScreenGeometry(100, 100, 50, 40, 90)


class TestDecode:
    def test_plain_word(self, layout):
        log = log_for(layout, list("hello"))
        assert decode_text(log, layout) == "hello"

    def test_backspace_removes_last(self, layout):
        log = log_for(layout, ["h", "x", "backspace", "e"])
        assert decode_text(log, layout) == "he"

    def test_backspace_on_empty_buffer(self, layout):
        log = log_for(layout, ["backspace", "h"])
        assert decode_text(log, layout) == "h"

    def test_space_key(self, layout):
        log = log_for(layout, ["a", "space", "b"])
        assert decode_text(log, layout) == "a b"

    def test_off_key_taps_skipped(self, layout):
        taps = (
            TapEvent(500.0, 200.0, 0.0),  # text area
            tap_on(layout, "a", 300.0),
        )
        log = KeypressLog("t", "u", "a", taps)
        assert decode_text(log, layout) == "a"

    def test_output_never_longer_than_tap_count(self, layout):
        log = log_for(layout, ["a", "b", "backspace", "c", "space"])
        assert len(decode_text(log, layout)) <= len(log.taps)


class TestIntervals:
    def test_basic_subtraction(self, layout):
        log = log_for(layout, ["a", "b", "c"], start=0.0, step=0.0)
        log = KeypressLog(
            "t", "u", "abc",
            tuple(
                TapEvent(t.x, t.y, ms) for t, ms in zip(log.taps, [0.0, 300.0, 700.0])
            ),
        )
        assert interkey_intervals(log) == [300.0, 400.0]

    def test_two_taps(self, layout):
        log = log_for(layout, ["a", "b"], step=100.0)
        assert interkey_intervals(log) == [100.0]

    def test_single_tap_degenerate(self, layout):
        log = log_for(layout, ["a"])
        assert interkey_intervals(log) == []

    def test_count_and_positivity(self, layout):
        rng = np.random.default_rng(7)
        times = np.cumsum(rng.uniform(50, 500, size=20))
        taps = tuple(tap_on(layout, "a", float(t)) for t in times)
        log = KeypressLog("t", "u", "a" * 20, taps)
        ivals = interkey_intervals(log)
        assert len(ivals) == len(taps) - 1
        assert all(v > 0 for v in ivals)
        # independent re-summation: intervals must telescope to the span
        assert math.isclose(sum(ivals), times[-1] - times[0], rel_tol=1e-12)


class TestLevenshtein:
    def test_identity_is_zero(self):
        assert levenshtein("abc", "abc") == 0

    @given(st.text(alphabet="abc ", max_size=8), st.text(alphabet="abc ", max_size=8))
    @settings(max_examples=200)
    def test_matches_recursive_oracle_and_symmetry(self, a, b):
        d = levenshtein(a, b)
        assert d == recursive_levenshtein(a, b)
        assert d == levenshtein(b, a)


class TestTypingMetrics:
    def test_zero_error_rate_on_exact_transcription(self, layout):
        log = log_for(layout, list("hello"), reference="hello")
        m = compute_typing_metrics(log, layout)
        assert m.error_rate == 0.0
        assert m.backspace_count == 0

    def test_wpm_formula(self, layout):
        labels = list("hello world imagining sure")[:25]
        taps = tuple(
            tap_on(layout, lab if lab != " " else "space", i * 2500.0)
            for i, lab in enumerate(labels)
        )
        log = KeypressLog("t", "u", "".join(labels), taps)
        m = compute_typing_metrics(log, layout)
        # 25 characters typed over exactly 60 000 ms -> 5 wpm
        assert math.isclose(m.wpm, 5.0, rel_tol=1e-12)

    def test_backspaces_counted_and_error_oracle(self, layout):
        log = log_for(layout, ["h", "x", "backspace", "backspace", "e"], reference="he")
        m = compute_typing_metrics(log, layout)
        assert m.backspace_count == 2
        typed = decode_text(log, layout)
        expect = recursive_levenshtein(typed, "he") / len("he")
        assert math.isclose(m.error_rate, min(1.0, expect), rel_tol=1e-12)

    def test_zero_duration_errors(self, layout):
        log = KeypressLog("t", "u", "a", (tap_on(layout, "a", 5.0),))
        with pytest.raises(ValueError):
            compute_typing_metrics(log, layout)

    def test_error_rate_clamped(self, layout):
        log = log_for(layout, list("abcdefgh"), reference="z")
        m = compute_typing_metrics(log, layout)
        assert m.error_rate == 1.0


class TestInvariantValidation:
    def test_tap_time_ordering_enforced(self, layout):
        taps = (tap_on(layout, "a", 100.0), tap_on(layout, "b", 100.0))
        with pytest.raises(ValueError):
            KeypressLog("t", "u", "ab", taps).validate()

    def test_scanpath_onset_ordering(self):
        sp = Scanpath(
            "t",
            (
                Fixation(10, 10, 100.0, onset_ms=50.0),
                Fixation(20, 20, 100.0, onset_ms=40.0),
            ),
        )
        with pytest.raises(ValueError):
            sp.validate()

    def test_onsets_derived_by_cumsum_when_absent(self):
        sp = Scanpath("t", (Fixation(1, 1, 100.0), Fixation(2, 2, 50.0)))
        assert sp.onsets() == (0.0, 100.0)

    def test_human_params_range(self):
        with pytest.raises(ValueError):
            HumanParams(1.2, 0.0, 0.0)
