"""Simulator tests: policy examples, determinism, and monotone effects."""

from __future__ import annotations

import math

import numpy as np
import pytest

from tapgaze.analysis import gaze_tap_distance_curve
from tapgaze.core import (
    DEFAULT_GEOMETRY as GEOM,
    HumanParams,
    build_default_layout,
    compute_typing_metrics,
    decode_text,
)
from tapgaze.io import read_keylogs, read_scanpaths, write_keylogs, write_scanpaths
from tapgaze.metrics import (
    gaze_on_keyboard_ratio,
    gaze_shifts,
    mean_fixation_duration,
    proofreading_rate,
)
from tapgaze.simulator import (
    DEFAULT_PHRASES,
    MAX_TAPS,
    SimConfig,
    SimulatedTrial,
    simulate_dataset,
    simulate_trial,
)

LAYOUT = build_default_layout()
MID = HumanParams(0.5, 0.5, 0.5)


def rng_for(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(key))


def spearman_perm_p(x, y, n_perm: int = 2000, seed: int = 0):
    """Spearman rho plus a permutation p-value for |rho|."""
    rx = np.argsort(np.argsort(x)).astype(float)
    ry = np.argsort(np.argsort(y)).astype(float)
    rho = float(np.corrcoef(rx, ry)[0, 1])
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_perm):
        perm = rng.permutation(ry)
        if abs(float(np.corrcoef(rx, perm)[0, 1])) >= abs(rho):
            hits += 1
    return rho, (hits + 1) / (n_perm + 1)


class TestPhrases:
    def test_phrase_set_shape(self):
        assert len(DEFAULT_PHRASES) == 24
        alphabet = set("abcdefghijklmnopqrstuvwxyz ")
        for p in DEFAULT_PHRASES:
            assert 16 <= len(p) <= 26
            assert set(p) <= alphabet


class TestSimulateTrial:
    def test_noiseless_finger_types_exactly(self):
        cfg = SimConfig(theta=HumanParams(0.5, 0.0, 0.5), sigma0=1e-9)
        log, _ = simulate_trial(cfg, "the quick brown fox", rng_for(3))
        assert decode_text(log, LAYOUT) == "the quick brown fox"
        m = compute_typing_metrics(log, LAYOUT)
        assert m.error_rate == 0.0 and m.backspace_count == 0

    def test_full_retention_never_proofreads(self):
        cfg = SimConfig(theta=HumanParams(0.5, 0.5, 1.0), proofread_base_p=0.0)
        for i in range(5):
            _, path = simulate_trial(cfg, "pack my box with jars", rng_for(4, i))
            assert proofreading_rate(path, GEOM) == 0.0
            assert gaze_on_keyboard_ratio(path, GEOM) == 1.0

    def test_realistic_theta_yields_valid_trial(self):
        cfg = SimConfig(theta=HumanParams(0.396, 0.298, 0.414))
        log, path = simulate_trial(cfg, "send the report today", rng_for(5))
        log.validate(GEOM)
        path.validate(GEOM)
        assert 1 <= len(log.taps) <= MAX_TAPS

    def test_unknown_character_rejected(self):
        cfg = SimConfig(theta=MID)
        with pytest.raises(ValueError, match="'3'"):
            simulate_trial(cfg, "about 3 things", rng_for(0))

    def test_empty_sentence_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            simulate_trial(SimConfig(theta=MID), "", rng_for(0))

    def test_unset_theta_rejected(self):
        with pytest.raises(ValueError, match="theta"):
            simulate_trial(SimConfig(), "abc", rng_for(0))

    def test_tap_cap_respected_under_heavy_correction(self):
        cfg = SimConfig(theta=HumanParams(0.8, 0.95, 0.05))
        for i in range(30):
            log, path = simulate_trial(cfg, "waves crash on the shore", rng_for(6, i))
            assert len(log.taps) <= MAX_TAPS
            log.validate(GEOM)
            path.validate(GEOM)

    def test_fixation_intervals_never_overlap(self):
        cfg = SimConfig(theta=HumanParams(0.7, 0.6, 0.2))
        for i in range(20):
            _, path = simulate_trial(cfg, "books line the old shelf", rng_for(7, i))
            onsets = path.onsets()
            for onset, f, nxt in zip(onsets, path.fixations, onsets[1:]):
                assert onset + f.duration_ms <= nxt + 1e-6

    def test_first_fixation_starts_at_zero(self):
        log, path = simulate_trial(SimConfig(theta=MID), "a bird in the hand", rng_for(8))
        assert path.fixations[0].onset_ms == 0.0
        assert all(t.time_ms > 0 for t in log.taps)


class TestConfigValidation:
    def test_empty_phrase_set_rejected(self):
        with pytest.raises(ValueError, match="phrase_set"):
            SimConfig(phrase_set=())

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"fitts_b": 0.0},
            {"sigma0": 0.0},
            {"proofread_base_p": 1.5},
            {"seed": -1},
            {"trials_per_user": 0},
        ],
    )
    def test_bad_fields_rejected(self, kwargs):
        with pytest.raises(ValueError):
            SimConfig(**kwargs)


class TestSimulateDataset:
    def test_same_seed_gives_identical_datasets(self):
        a = simulate_dataset(SimConfig(seed=9, trials_per_user=2), 3)
        b = simulate_dataset(SimConfig(seed=9, trials_per_user=2), 3)
        assert a == b

    def test_trials_reproducible_in_isolation(self):
        # Growing the user count must not disturb earlier users' trials.
        small = simulate_dataset(SimConfig(seed=12, trials_per_user=3), 2)
        large = simulate_dataset(SimConfig(seed=12, trials_per_user=3), 4)
        assert large[: len(small)] == small

    def test_fixed_theta_dataset_size_300(self):
        cfg = SimConfig(theta=MID, seed=1, trials_per_user=6)
        ds = simulate_dataset(cfg, 50)
        assert len(ds) == 300
        assert all(t.theta == MID for t in ds)
        ids = [(t.user_id, t.trial_id) for t in ds]
        assert ids == sorted(ids)

    def test_sampled_thetas_inside_sampling_box(self):
        ds = simulate_dataset(SimConfig(seed=2, trials_per_user=1), 40)
        for t in ds:
            for v in t.theta.as_tuple():
                assert 0.2 <= v <= 0.8

    def test_all_trials_pass_core_invariants(self):
        ds = simulate_dataset(SimConfig(seed=3, trials_per_user=2), 10)
        for t in ds:
            t.log.validate(GEOM)
            t.scanpath.validate(GEOM)
            assert t.log.trial_id == t.scanpath.trial_id

    def test_jsonl_roundtrip_lossless(self, tmp_path):
        ds = simulate_dataset(SimConfig(seed=4, trials_per_user=2), 4)
        kl, sp = tmp_path / "keylog.jsonl", tmp_path / "scanpath.jsonl"
        write_keylogs(kl, [t.log for t in ds])
        write_scanpaths(sp, [t.scanpath for t in ds])
        logs = read_keylogs(kl)
        paths = read_scanpaths(sp)
        assert logs == [t.log for t in ds]
        for loaded, t in zip(paths, ds):
            assert loaded.trial_id == t.scanpath.trial_id
            for lf, tf in zip(loaded.fixations, t.scanpath.fixations):
                assert lf.x == tf.x and lf.y == tf.y
                assert lf.duration_ms == tf.duration_ms
            assert loaded.onsets() == t.scanpath.onsets()

    def test_zero_users_rejected(self):
        with pytest.raises(ValueError, match="n_users"):
            simulate_dataset(SimConfig(), 0)


class TestMonotoneEffects:
    def _sweep(self, which: str, stat, n: int = 240):
        values, stats = [], []
        for i in range(n):
            v = 0.05 + 0.9 * (i / (n - 1))
            theta = HumanParams(
                v if which == "e" else 0.5,
                v if which == "f" else 0.5,
                v if which == "l" else 0.5,
            )
            cfg = SimConfig(theta=theta)
            log, path = simulate_trial(
                cfg, "light travels very fast", rng_for(1234, i)
            )
            values.append(v)
            stats.append(stat(log, path))
        return values, stats

    def test_fixation_duration_increases_with_e_k(self):
        vals, stats = self._sweep("e", lambda log, p: mean_fixation_duration(p))
        rho, p = spearman_perm_p(vals, stats)
        assert rho > 0 and p < 0.01

    def test_typo_evidence_increases_with_f_k(self):
        def typos(log, path):
            m = compute_typing_metrics(log, LAYOUT)
            return m.error_rate + m.backspace_count

        vals, stats = self._sweep("f", typos)
        rho, p = spearman_perm_p(vals, stats)
        assert rho > 0 and p < 0.01

    def test_proofreading_decreases_with_lambda(self):
        vals, stats = self._sweep("l", lambda log, p: proofreading_rate(p, GEOM))
        rho, p = spearman_perm_p(vals, stats)
        assert rho < 0 and p < 0.01

    def test_error_rate_nondecreasing_over_f_sweep_bins(self):
        # 50 users with evenly spaced f_k; binned means must not dip.
        means = []
        for u in range(50):
            f = 0.05 + 0.9 * (u / 49)
            cfg = SimConfig(theta=HumanParams(0.5, f, 0.5))
            errs = []
            for k in range(8):
                log, _ = simulate_trial(
                    cfg, "plants need some water", rng_for(77, u, k)
                )
                errs.append(compute_typing_metrics(log, LAYOUT).error_rate)
            means.append(sum(errs) / len(errs))
        binned = [sum(means[i : i + 10]) / 10 for i in range(0, 50, 10)]
        assert all(b >= a for a, b in zip(binned, binned[1:]))


class TestAggregateShape:
    def test_mid_theta_falls_in_human_envelope(self):
        ds = simulate_dataset(SimConfig(theta=MID, seed=11, trials_per_user=4), 50)
        ratios = [gaze_on_keyboard_ratio(t.scanpath, GEOM) for t in ds]
        shifts = [gaze_shifts(t.scanpath, GEOM) for t in ds]
        assert 0.63 - 0.34 <= float(np.mean(ratios)) <= 0.63 + 0.34
        assert 3.81 - 2.4 <= float(np.mean(shifts)) <= 3.81 + 2.4

    def test_distance_curve_minimum_in_guidance_window(self):
        ds = simulate_dataset(SimConfig(seed=5, trials_per_user=5), 30)
        curve = gaze_tap_distance_curve([(t.log, t.scanpath) for t in ds])
        off, _ = min(curve, key=lambda kv: kv[1])
        assert -350.0 <= off <= -150.0
