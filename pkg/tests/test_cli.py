"""CLI tests: exit codes, manifests, determinism, and output formats."""

from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from tapgaze import __version__
from tapgaze.analysis import compute_coordination_report
from tapgaze.cli import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, dispatch
from tapgaze.core import DEFAULT_GEOMETRY as GEOM
from tapgaze.core import default_layout
from tapgaze.io import read_keylogs, read_scanpaths, write_scanpaths

EVAL_HEADER = (
    "trial_id,dtwd,sted,mm_shape,mm_direction,mm_length,mm_position,mm_duration,"
    "fixation_count,mean_fixation_duration,gaze_shifts,keyboard_ratio,proofreading_rate"
)


def run(*argv: str) -> int:
    return dispatch(list(argv))


def files_without_manifest(d: Path) -> dict[str, bytes]:
    return {
        p.name: p.read_bytes()
        for p in sorted(d.iterdir())
        if p.name != "manifest.json" and not p.name.endswith(".manifest.json")
    }


@pytest.fixture(scope="module")
def ws(tmp_path_factory) -> Path:
    """Shared workspace: simulated trials, a tiny model, its predictions."""
    root = tmp_path_factory.mktemp("cli")
    sim = root / "sim"
    assert run("simulate", "--users", "3", "--trials", "2", "--seed", "3",
               "--out", str(sim), "--quiet") == EXIT_OK
    assert run("train", "--data", str(sim), "--steps", "10", "--batch", "2",
               "--seed", "0", "--out", str(root / "model.ckpt"), "--quiet") == EXIT_OK
    assert run("infer", "--ckpt", str(root / "model.ckpt"), "--from-trials", str(sim),
               "--out", str(root / "pred.jsonl"), "--quiet") == EXIT_OK
    return root


@pytest.fixture(scope="module")
def amortizer_ckpt(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("amortizer")
    path = root / "am.ckpt"
    assert run("fit-amortizer", "--users", "100", "--seed", "0",
               "--out", str(path), "--quiet") == EXIT_OK
    return path


class TestParsing:
    def test_exit_code_values(self):
        assert (EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL) == (0, 1, 2, 3)

    def test_unknown_flag_is_usage_error(self, tmp_path, capsys):
        code = run("simulate", "--users", "1", "--bogus", "--out", str(tmp_path / "o"))
        assert code == EXIT_USAGE
        assert "--bogus" in capsys.readouterr().err

    def test_unknown_command_is_usage_error(self, capsys):
        assert run("frobnicate") == EXIT_USAGE
        capsys.readouterr()

    def test_help_exits_zero(self, capsys):
        assert run("--help") == EXIT_OK
        capsys.readouterr()

    def test_missing_out_is_usage_error(self, capsys):
        assert run("simulate", "--users", "1") == EXIT_USAGE
        assert "--out" in capsys.readouterr().err

    def test_malformed_theta_is_usage_error(self, tmp_path, capsys):
        code = run("simulate", "--users", "1", "--theta", "0.5,0.5",
                   "--out", str(tmp_path / "o"))
        assert code == EXIT_USAGE
        capsys.readouterr()

    def test_out_of_range_theta_is_usage_error(self, tmp_path, capsys):
        code = run("simulate", "--users", "1", "--theta", "0.5,0.5,1.5",
                   "--out", str(tmp_path / "o"))
        assert code == EXIT_USAGE
        capsys.readouterr()

    def test_nonpositive_count_is_usage_error(self, tmp_path, capsys):
        code = run("simulate", "--users", "0", "--out", str(tmp_path / "o"))
        assert code == EXIT_USAGE
        capsys.readouterr()


class TestSimulate:
    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("simulate", "--users", "2", "--trials", "3", "--seed", "7",
                       "--out", str(out), "--quiet") == EXIT_OK
        assert files_without_manifest(a) == files_without_manifest(b)

    def test_outputs_align_and_validate(self, ws):
        sim = ws / "sim"
        logs = read_keylogs(sim / "keylog.jsonl", geom=GEOM)
        paths = read_scanpaths(sim / "scanpath.jsonl", geom=GEOM)
        assert len(logs) == len(paths) == 6
        assert [log.trial_id for log in logs] == [p.trial_id for p in paths]
        theta_lines = (sim / "theta.csv").read_text().splitlines()
        assert theta_lines[0] == "user_id,e_k,f_k,lam"
        assert len(theta_lines) == 1 + 3
        for line in theta_lines[1:]:
            values = [float(v) for v in line.split(",")[1:]]
            assert all(0.2 <= v <= 0.8 for v in values)

    def test_manifest_contents(self, ws):
        doc = json.loads((ws / "sim" / "manifest.json").read_text())
        assert doc["command"] == "simulate"
        assert doc["seed"] == 3
        assert doc["config"]["users"] == 3 and doc["config"]["trials"] == 2
        assert doc["versions"]["package"] == __version__
        assert doc["duration_s"] >= 0
        assert len(doc["outputs"]) == 3

    def test_fixed_theta_recorded(self, tmp_path):
        out = tmp_path / "fixed"
        assert run("simulate", "--users", "2", "--trials", "1", "--theta",
                   "0.5,0.5,0.5", "--out", str(out), "--quiet") == EXIT_OK
        for line in (out / "theta.csv").read_text().splitlines()[1:]:
            assert line.split(",")[1:] == ["0.5", "0.5", "0.5"]

    def test_phrase_file_used(self, tmp_path):
        phrases = tmp_path / "phrases.txt"
        phrases.write_text("the cat sat\n\n")
        out = tmp_path / "sim"
        assert run("simulate", "--users", "1", "--trials", "2", "--phrases",
                   str(phrases), "--out", str(out), "--quiet") == EXIT_OK
        for log in read_keylogs(out / "keylog.jsonl"):
            assert log.reference_text == "the cat sat"

    def test_untypeable_phrase_is_data_error(self, tmp_path, capsys):
        phrases = tmp_path / "phrases.txt"
        phrases.write_text("héllo wörld\n")
        code = run("simulate", "--users", "1", "--phrases", str(phrases),
                   "--out", str(tmp_path / "o"))
        assert code == EXIT_DATA
        capsys.readouterr()

    def test_missing_phrase_file_is_data_error(self, tmp_path, capsys):
        code = run("simulate", "--users", "1", "--phrases",
                   str(tmp_path / "nope.txt"), "--out", str(tmp_path / "o"))
        assert code == EXIT_DATA
        capsys.readouterr()


class TestTrain:
    def test_artifacts_written(self, ws):
        history = (ws / "model.ckpt.history.csv").read_text().splitlines()
        assert history[0] == "step,total,sim,len,f,v"
        assert len(history) == 1 + 10
        manifest = json.loads((ws / "model.ckpt.manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["config"]["steps"] == 10

    def test_rerun_is_byte_identical(self, ws, tmp_path):
        out = tmp_path / "model2.ckpt"
        assert run("train", "--data", str(ws / "sim"), "--steps", "10", "--batch", "2",
                   "--seed", "0", "--out", str(out), "--quiet") == EXIT_OK
        assert out.read_bytes() == (ws / "model.ckpt").read_bytes()
        assert (
            out.with_name(out.name + ".history.csv").read_bytes()
            == (ws / "model.ckpt.history.csv").read_bytes()
        )

    def test_unknown_ablate_term_is_usage_error(self, ws, tmp_path, capsys):
        code = run("train", "--data", str(ws / "sim"), "--steps", "1",
                   "--ablate", "sim,bogus", "--out", str(tmp_path / "m.ckpt"))
        assert code == EXIT_USAGE
        assert "bogus" in capsys.readouterr().err

    def test_no_input_is_usage_error(self, tmp_path, capsys):
        code = run("train", "--steps", "1", "--out", str(tmp_path / "m.ckpt"))
        assert code == EXIT_USAGE
        capsys.readouterr()

    def test_missing_theta_csv_is_data_error(self, ws, tmp_path, capsys):
        bare = tmp_path / "bare"
        bare.mkdir()
        for name in ("keylog.jsonl", "scanpath.jsonl"):
            (bare / name).write_bytes((ws / "sim" / name).read_bytes())
        code = run("train", "--data", str(bare), "--steps", "1",
                   "--out", str(tmp_path / "m.ckpt"))
        assert code == EXIT_DATA
        assert "theta.csv" in capsys.readouterr().err

    def test_ablate_params_trains_without_theta(self, ws, tmp_path):
        bare = tmp_path / "bare"
        bare.mkdir()
        for name in ("keylog.jsonl", "scanpath.jsonl"):
            (bare / name).write_bytes((ws / "sim" / name).read_bytes())
        code = run("train", "--data", str(bare), "--steps", "1", "--batch", "2",
                   "--ablate", "params", "--out", str(tmp_path / "m.ckpt"), "--quiet")
        assert code == EXIT_OK

    def test_sim_trials_source(self, tmp_path):
        code = run("train", "--sim-trials", "4", "--steps", "1", "--batch", "2",
                   "--seed", "1", "--out", str(tmp_path / "m.ckpt"), "--quiet")
        assert code == EXIT_OK


class TestInfer:
    def test_predictions_align_with_inputs(self, ws):
        sim_ids = [log.trial_id for log in read_keylogs(ws / "sim" / "keylog.jsonl")]
        preds = read_scanpaths(ws / "pred.jsonl", geom=GEOM)
        assert [p.trial_id for p in preds] == sim_ids

    def test_rerun_is_byte_identical(self, ws, tmp_path):
        out = tmp_path / "pred2.jsonl"
        assert run("infer", "--ckpt", str(ws / "model.ckpt"), "--from-trials",
                   str(ws / "sim"), "--out", str(out), "--quiet") == EXIT_OK
        assert out.read_bytes() == (ws / "pred.jsonl").read_bytes()

    def test_sample_mode_seeded(self, ws, tmp_path):
        outs = []
        for name, seed in (("s5a.jsonl", "5"), ("s5b.jsonl", "5"), ("s6.jsonl", "6")):
            out = tmp_path / name
            assert run("infer", "--ckpt", str(ws / "model.ckpt"), "--from-trials",
                       str(ws / "sim"), "--mode", "sample", "--seed", seed,
                       "--out", str(out), "--quiet") == EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert outs[0] != outs[2]

    def test_keylog_input_requires_theta(self, ws, capsys):
        code = run("infer", "--ckpt", str(ws / "model.ckpt"), "--keylog",
                   str(ws / "sim" / "keylog.jsonl"), "--out", "unused.jsonl")
        assert code == EXIT_USAGE
        assert "--theta" in capsys.readouterr().err

    def test_keylog_input_with_theta(self, ws, tmp_path):
        out = tmp_path / "pred.jsonl"
        code = run("infer", "--ckpt", str(ws / "model.ckpt"), "--keylog",
                   str(ws / "sim" / "keylog.jsonl"), "--theta", "0.5,0.5,0.5",
                   "--out", str(out), "--quiet")
        assert code == EXIT_OK
        assert len(read_scanpaths(out)) == 6

    def test_amortizer_ckpt_rejected(self, ws, amortizer_ckpt, capsys):
        code = run("infer", "--ckpt", str(amortizer_ckpt), "--from-trials",
                   str(ws / "sim"), "--out", "unused.jsonl")
        assert code == EXIT_DATA
        capsys.readouterr()


class TestEval:
    def test_self_eval_identities(self, ws, tmp_path):
        out = tmp_path / "self.csv"
        gt = ws / "sim" / "scanpath.jsonl"
        assert run("eval", "--pred", str(gt), "--gt", str(gt),
                   "--out", str(out), "--quiet") == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == EVAL_HEADER
        assert len(lines) == 1 + 6 + 1
        for line in lines[1:-1]:
            cells = line.split(",")
            assert float(cells[1]) == 0.0  # dtwd(a, a)
            assert float(cells[2]) == 0.0  # sted(a, a)
            assert all(float(c) == 1.0 for c in cells[3:8])  # multimatch(a, a)
        assert lines[-1].startswith("summary,0.0000(0.0000),0.0000(0.0000),1.0000(")

    def test_summary_row_format(self, ws, tmp_path):
        out = tmp_path / "eval.csv"
        assert run("eval", "--pred", str(ws / "pred.jsonl"), "--gt",
                   str(ws / "sim" / "scanpath.jsonl"), "--out", str(out),
                   "--quiet") == EXIT_OK
        summary = out.read_text().splitlines()[-1]
        assert re.fullmatch(
            r"summary(,\d+\.\d{4}\(\d+\.\d{4}\)){12}", summary
        ), summary

    def test_mismatched_ids_exit_2_naming_first_missing(self, ws, tmp_path, capsys):
        paths = read_scanpaths(ws / "sim" / "scanpath.jsonl")
        partial = tmp_path / "partial.jsonl"
        write_scanpaths(partial, paths[:-1])
        code = run("eval", "--pred", str(ws / "pred.jsonl"), "--gt", str(partial),
                   "--out", str(tmp_path / "e.csv"))
        assert code == EXIT_DATA
        err = capsys.readouterr().err
        assert paths[-1].trial_id in err and str(partial) in err

    def test_threads_do_not_change_output(self, ws, tmp_path):
        outs = []
        for name, threads in (("t1.csv", "1"), ("t2.csv", "2")):
            out = tmp_path / name
            assert run("eval", "--pred", str(ws / "pred.jsonl"), "--gt",
                       str(ws / "sim" / "scanpath.jsonl"), "--threads", threads,
                       "--out", str(out), "--quiet") == EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_manifest_written_next_to_csv(self, ws, tmp_path):
        out = tmp_path / "eval.csv"
        assert run("eval", "--pred", str(ws / "pred.jsonl"), "--gt",
                   str(ws / "sim" / "scanpath.jsonl"), "--out", str(out),
                   "--quiet") == EXIT_OK
        doc = json.loads((tmp_path / "eval.csv.manifest.json").read_text())
        assert doc["command"] == "eval"
        assert str(ws / "pred.jsonl") in doc["inputs"]


class TestInferTheta:
    def test_per_user_estimates(self, ws, amortizer_ckpt, tmp_path):
        out = tmp_path / "theta_inferred.csv"
        assert run("infer-theta", "--trials", str(ws / "sim"), "--ckpt",
                   str(amortizer_ckpt), "--out", str(out), "--quiet") == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "user_id,e_k,f_k,lam"
        assert len(lines) == 1 + 3
        for line in lines[1:]:
            values = [float(v) for v in line.split(",")[1:]]
            assert all(0.0 < v < 1.0 for v in values)

    def test_model_ckpt_rejected(self, ws, tmp_path, capsys):
        code = run("infer-theta", "--trials", str(ws / "sim"), "--ckpt",
                   str(ws / "model.ckpt"), "--out", str(tmp_path / "t.csv"))
        assert code == EXIT_DATA
        assert "amortizer" in capsys.readouterr().err


@pytest.fixture(scope="module")
def report_dir(ws, tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("analyze") / "report"
    assert run("analyze", "--keylog", str(ws / "sim" / "keylog.jsonl"),
               "--scanpath", str(ws / "sim" / "scanpath.jsonl"), "--svg",
               "--out", str(out), "--quiet") == EXIT_OK
    return out


class TestAnalyze:
    def test_report_files_exist(self, report_dir):
        names = {p.name for p in report_dir.iterdir()}
        assert {
            "report.json",
            "distance_curve.csv",
            "ratio_by_iki.csv",
            "ratio_by_travel.csv",
            "per_key_ratio.csv",
            "manifest.json",
        } <= names
        assert {
            "distance_curve.svg",
            "ratio_by_iki.svg",
            "ratio_by_travel.svg",
            "per_key_ratio.svg",
        } <= names

    def test_report_matches_in_process_aggregation(self, ws, report_dir):
        logs = read_keylogs(ws / "sim" / "keylog.jsonl")
        paths = {p.trial_id: p for p in read_scanpaths(ws / "sim" / "scanpath.jsonl")}
        pairs = [(log, paths[log.trial_id]) for log in logs]
        layout, geom = default_layout()
        report = compute_coordination_report(pairs, layout, geom)
        doc = json.loads((report_dir / "report.json").read_text())
        assert doc["n_trials"] == len(pairs)
        assert doc["distance_curve"] == [[a, b] for a, b in report.distance_curve]
        assert doc["ratio_by_iki"] == [[a, b] for a, b in report.ratio_by_iki]
        assert doc["ratio_by_travel"] == [[a, b] for a, b in report.ratio_by_travel]
        assert doc["per_key_ratio"] == {
            k: v for k, v in sorted(report.per_key_ratio.items())
        }

    def test_csv_headers(self, report_dir):
        heads = {
            "distance_curve.csv": "offset_ms,mean_distance_px",
            "ratio_by_iki.csv": "iki_bin_start_ms,keyboard_ratio",
            "ratio_by_travel.csv": "travel_bin_start_px,keyboard_ratio",
            "per_key_ratio.csv": "key,ratio",
        }
        for name, header in heads.items():
            assert (report_dir / name).read_text().splitlines()[0] == header

    def test_svg_documents_are_self_contained(self, report_dir):
        for name in ("distance_curve.svg", "ratio_by_iki.svg", "ratio_by_travel.svg"):
            text = (report_dir / name).read_text()
            assert text.startswith("<svg xmlns=")
            assert "<polyline" in text and text.rstrip().endswith("</svg>")
            assert "http" not in text.replace("http://www.w3.org/2000/svg", "")
        bars = (report_dir / "per_key_ratio.svg").read_text()
        assert "<rect" in bars and bars.startswith("<svg xmlns=")

    def test_rerun_is_byte_identical(self, ws, report_dir, tmp_path):
        out = tmp_path / "report2"
        assert run("analyze", "--keylog", str(ws / "sim" / "keylog.jsonl"),
                   "--scanpath", str(ws / "sim" / "scanpath.jsonl"), "--svg",
                   "--out", str(out), "--quiet") == EXIT_OK
        assert files_without_manifest(out) == files_without_manifest(report_dir)

    def test_mismatch_exit_2(self, ws, tmp_path, capsys):
        paths = read_scanpaths(ws / "sim" / "scanpath.jsonl")
        partial = tmp_path / "partial.jsonl"
        write_scanpaths(partial, paths[1:])
        code = run("analyze", "--keylog", str(ws / "sim" / "keylog.jsonl"),
                   "--scanpath", str(partial), "--out", str(tmp_path / "r"))
        assert code == EXIT_DATA
        assert paths[0].trial_id in capsys.readouterr().err


class TestQuiet:
    def test_quiet_suppresses_stdout(self, ws, tmp_path, capsys):
        out = tmp_path / "eval.csv"
        assert run("eval", "--pred", str(ws / "pred.jsonl"), "--gt",
                   str(ws / "sim" / "scanpath.jsonl"), "--out", str(out),
                   "--quiet") == EXIT_OK
        captured = capsys.readouterr()
        assert captured.out == ""

    def test_default_prints_progress(self, ws, tmp_path, capsys):
        out = tmp_path / "eval.csv"
        assert run("eval", "--pred", str(ws / "pred.jsonl"), "--gt",
                   str(ws / "sim" / "scanpath.jsonl"), "--out", str(out)) == EXIT_OK
        assert "evaluated" in capsys.readouterr().out
