from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import make_scanpath
from oracles import brute_alignment_cost, brute_dtwd, brute_sted
from tapgaze.core import DEFAULT_GEOMETRY, Fixation, Scanpath
from tapgaze.metrics import (
    _saccade_alignment,
    _saccades,
    dtwd,
    fixation_count,
    gaze_on_keyboard_ratio,
    gaze_shifts,
    mean_fixation_duration,
    multimatch,
    normalized_triples,
    proofreading_rate,
    sted,
)

GEOM = DEFAULT_GEOMETRY


def path_of(points, trial_id="t"):
    """Scanpath from (x, y, duration_ms) triples, onsets by cumsum."""
    return Scanpath(
        trial_id,
        tuple(Fixation(x=x, y=y, duration_ms=d) for x, y, d in points),
    )


class TestDtwd:
    def test_identity_zero(self):
        rng = np.random.default_rng(1)
        for n in (1, 2, 5, 9):
            a = make_scanpath(rng, n)
            assert dtwd(a, a, GEOM) == 0.0

    def test_single_fixation_euclidean(self):
        # normalized points (0,0,0.1) vs (0.3,0.4,0.1): 3-4-5 triangle
        a = path_of([(0.0, 0.0, 100.0)])
        b = path_of([(0.3 * GEOM.width, 0.4 * GEOM.height, 100.0)])
        assert math.isclose(dtwd(a, b, GEOM), 0.5, rel_tol=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = make_scanpath(rng, int(rng.integers(1, 8)))
            b = make_scanpath(rng, int(rng.integers(1, 8)))
            assert dtwd(a, b, GEOM) == dtwd(b, a, GEOM)

    def test_matches_exhaustive_path_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = make_scanpath(rng, int(rng.integers(1, 7)))
            b = make_scanpath(rng, int(rng.integers(1, 7)))
            got = dtwd(a, b, GEOM)
            want = brute_dtwd(
                normalized_triples(a, GEOM), normalized_triples(b, GEOM)
            )
            assert math.isclose(got, want, rel_tol=0, abs_tol=1e-9)

    def test_empty_errors(self):
        a = path_of([(0, 0, 100.0)])
        with pytest.raises(ValueError):
            dtwd(a, Scanpath("t", ()), GEOM)


class TestSted:
    def test_identity_zero(self):
        rng = np.random.default_rng(4)
        a = make_scanpath(rng, 8)
        assert sted(a, a, GEOM, k=3) == 0.0

    def test_translation_invariance(self):
        pts = [(200.0, 500.0, 100.0), (400.0, 700.0, 80.0), (300.0, 900.0, 120.0),
               (500.0, 1100.0, 90.0)]
        a = path_of(pts)
        b = path_of([(x + 111.0, y + 77.0, d) for x, y, d in pts])
        assert sted(a, b, GEOM, k=3) == pytest.approx(0.0, abs=1e-12)

    def test_matches_bruteforce_windows(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            a = make_scanpath(rng, 8)
            b = make_scanpath(rng, 8)
            got = sted(a, b, GEOM, k=3)
            want = brute_sted(
                normalized_triples(a, GEOM)[:, :2],
                normalized_triples(b, GEOM)[:, :2],
                k=3,
            )
            assert math.isclose(got, want, rel_tol=0, abs_tol=1e-9)

    def test_too_short_errors(self):
        rng = np.random.default_rng(6)
        with pytest.raises(ValueError):
            sted(make_scanpath(rng, 2), make_scanpath(rng, 5), GEOM, k=3)

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        a, b = make_scanpath(rng, 6), make_scanpath(rng, 9)
        assert sted(a, b, GEOM) == sted(b, a, GEOM)


class TestMultimatch:
    def test_identity_all_ones(self):
        rng = np.random.default_rng(8)
        for n in (2, 3, 7):
            a = make_scanpath(rng, n)
            scores = multimatch(a, a, GEOM)
            assert scores.as_tuple() == (1.0, 1.0, 1.0, 1.0, 1.0)

    def test_doubled_durations_change_only_duration(self):
        rng = np.random.default_rng(9)
        a = make_scanpath(rng, 5)
        b = Scanpath(
            "t",
            tuple(
                Fixation(f.x, f.y, f.duration_ms * 2.0, onset_ms=None)
                for f in a.fixations
            ),
        )
        s = multimatch(a, b, GEOM)
        assert s.shape == 1.0 and s.direction == 1.0 and s.length == 1.0
        assert s.position == 1.0
        assert s.duration == pytest.approx(0.5, abs=1e-12)

    def test_components_in_unit_interval(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            a = make_scanpath(rng, int(rng.integers(2, 9)))
            b = make_scanpath(rng, int(rng.integers(2, 9)))
            for v in multimatch(a, b, GEOM).as_tuple():
                assert 0.0 <= v <= 1.0

    def test_swap_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            a = make_scanpath(rng, int(rng.integers(2, 8)))
            b = make_scanpath(rng, int(rng.integers(2, 8)))
            assert multimatch(a, b, GEOM) == multimatch(b, a, GEOM)

    def test_swap_invariance_with_degenerate_ties(self):
        # Repeated identical points force DP ties; scores must still agree.
        a = path_of([(100, 1300, 100), (500, 1500, 100), (100, 1300, 100),
                     (500, 1500, 100)])
        b = path_of([(500, 1500, 100), (100, 1300, 100), (500, 1500, 100)])
        assert multimatch(a, b, GEOM) == multimatch(b, a, GEOM)

    def test_alignment_cost_matches_exhaustive_search(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            a = make_scanpath(rng, int(rng.integers(2, 7)))
            b = make_scanpath(rng, int(rng.integers(2, 7)))
            ua, _, _ = _saccades(a)
            ub, _, _ = _saccades(b)
            got, _ = _saccade_alignment(ua, ub)
            assert math.isclose(
                got, brute_alignment_cost(ua, ub), rel_tol=0, abs_tol=1e-9
            )

    def test_position_similarity_formula_on_equal_lengths(self):
        # With identical saccade structure the alignment is the diagonal, so
        # position similarity reduces to 1 - mean aligned distance / diagonal.
        a = path_of([(100, 1300, 100), (300, 1400, 100), (500, 1600, 100),
                     (700, 1700, 100)])
        shift = 50.0
        b = path_of([(100 + shift, 1300, 100), (300 + shift, 1400, 100),
                     (500 + shift, 1600, 100), (700 + shift, 1700, 100)])
        s = multimatch(a, b, GEOM)
        assert s.position == pytest.approx(1.0 - shift / GEOM.diagonal, abs=1e-12)

    def test_single_fixation_errors(self):
        a = path_of([(0, 0, 100)])
        b = path_of([(0, 0, 100), (10, 10, 100)])
        with pytest.raises(ValueError):
            multimatch(a, b, GEOM)


class TestGazeStats:
    def test_count_and_mean_duration(self):
        s = path_of([(0, 0, 200), (0, 0, 300), (0, 0, 400)])
        assert fixation_count(s) == 3
        assert mean_fixation_duration(s) == pytest.approx(300.0)

    def test_single_fixation(self):
        s = path_of([(5, 5, 500)])
        assert fixation_count(s) == 1
        assert mean_fixation_duration(s) == 500.0

    def test_gaze_shifts_counts_keyboard_to_text(self):
        ys = {"K": 1500.0, "T": 200.0}
        seq = "KKTKT"
        s = path_of([(100.0, ys[c], 100.0) for c in seq])
        assert gaze_shifts(s, GEOM) == 2

    def test_gaze_shifts_zero_when_all_keyboard(self):
        s = path_of([(100.0, 1500.0, 100.0)] * 4)
        assert gaze_shifts(s, GEOM) == 0

    def test_duration_weighted_ratios(self):
        s = path_of([(100.0, 1500.0, 600.0), (100.0, 200.0, 400.0)])
        assert gaze_on_keyboard_ratio(s, GEOM) == pytest.approx(0.6)
        assert proofreading_rate(s, GEOM) == pytest.approx(0.4)

    def test_ratios_in_other_region_are_zero(self):
        s = path_of([(100.0, 800.0, 300.0)])
        assert gaze_on_keyboard_ratio(s, GEOM) == 0.0
        assert proofreading_rate(s, GEOM) == 0.0

    def test_ratio_sum_bounded(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            s = make_scanpath(rng, int(rng.integers(1, 10)))
            kb = gaze_on_keyboard_ratio(s, GEOM)
            pr = proofreading_rate(s, GEOM)
            assert kb + pr <= 1.0 + 1e-12
