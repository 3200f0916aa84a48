"""Command-line pipeline: simulate, fit-amortizer, train, infer,
infer-theta, eval, analyze.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every command writes a JSON run manifest next to its outputs (inside
``--out`` when that is a directory, else ``<out>.manifest.json``). The
manifest records wall-clock duration and is the one file allowed to
differ between reruns; all other outputs are byte-identical for
identical arguments.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .amortizer import Amortizer, AmortizerConfig, build_training_set
from .amortizer import fit as fit_amortizer
from .analysis import compute_coordination_report
from .core import (
    DEFAULT_GEOMETRY,
    HumanParams,
    KeypressLog,
    Scanpath,
    default_layout,
)
from .io import (
    DataError,
    atomic_write_text,
    load_layout,
    read_keylogs,
    read_scanpaths,
    write_keylogs,
    write_scanpaths,
)
from .metrics import (
    dtwd,
    fixation_count,
    gaze_on_keyboard_ratio,
    gaze_shifts,
    mean_fixation_duration,
    multimatch,
    proofreading_rate,
    sted,
)
from .model import (
    LossSwitches,
    ModelConfig,
    ScanpathModel,
    TrainingTrial,
    filter_trainable,
    from_simulated,
    loss_history_csv,
    train,
)
from .simulator import DEFAULT_PHRASES, SimConfig, simulate_dataset

__all__ = ["dispatch", "main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

_ABLATE_TERMS = ("sim", "len", "f", "v", "params")
_THETA_HEADER = "user_id,e_k,f_k,lam"


class UsageError(Exception):
    """Bad argument combination not caught by argparse itself."""


# ----------------------------------------------------------------------
# Argument types


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text!r}: must be >= 1")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 0:
        raise argparse.ArgumentTypeError(f"{text!r}: must be >= 0")
    return value


def _theta_type(text: str) -> HumanParams:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"{text!r}: expected three comma-separated values e,f,l"
        )
    try:
        return HumanParams(*(float(p) for p in parts))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{text!r}: {exc}")


# ----------------------------------------------------------------------
# Shared plumbing


def _say(args: argparse.Namespace, message: str) -> None:
    if not args.quiet:
        print(message)


def _thread_limits(n_threads: int):
    """BLAS thread cap when threadpoolctl is present; otherwise a no-op.

    numpy binds its BLAS thread count at load time, so without
    threadpoolctl the flag only controls this module's own thread pools.
    """
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(limits=n_threads)


def _finish(
    args: argparse.Namespace,
    config: dict,
    inputs: Sequence,
    outputs: Sequence,
    t0: float,
    versions: Optional[dict] = None,
) -> None:
    """Write the run manifest next to the command's outputs."""
    manifest = {
        "command": args.cmd,
        "config": config,
        "seed": args.seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "versions": {"package": __version__, **(versions or {})},
        "duration_s": round(time.perf_counter() - t0, 3),
    }
    anchor = Path(args.out)
    if anchor.is_dir():
        path = anchor / "manifest.json"
    else:
        path = anchor.with_name(anchor.name + ".manifest.json")
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_theta_csv(path, rows: Sequence[tuple[str, HumanParams]]) -> None:
    lines = [_THETA_HEADER]
    for user_id, theta in rows:
        e, f, lam = theta.as_tuple()
        lines.append(f"{user_id},{e!r},{f!r},{lam!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _read_theta_csv(path) -> dict[str, HumanParams]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _THETA_HEADER:
        raise DataError(f"{path}: expected header {_THETA_HEADER!r}")
    out: dict[str, HumanParams] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
        user_id = fields[0]
        if user_id in out:
            raise DataError(f"{path}:{lineno}: duplicate user_id {user_id!r}")
        try:
            out[user_id] = HumanParams(*(float(v) for v in fields[1:]))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def _index_scanpaths(paths: Sequence[Scanpath], name: str) -> dict[str, Scanpath]:
    out: dict[str, Scanpath] = {}
    for p in paths:
        if p.trial_id in out:
            raise DataError(f"{name}: duplicate trial_id {p.trial_id!r}")
        out[p.trial_id] = p
    return out


def _check_ids(
    left_ids: Sequence[str],
    right_ids: Sequence[str],
    left_name: str,
    right_name: str,
) -> None:
    """Both id sets must match; names the first id missing from the other."""
    right_set = set(right_ids)
    for tid in left_ids:
        if tid not in right_set:
            raise DataError(f"trial {tid!r} missing from {right_name}")
    left_set = set(left_ids)
    for tid in right_ids:
        if tid not in left_set:
            raise DataError(f"trial {tid!r} missing from {left_name}")


def _user_thetas(trials) -> list[tuple[str, HumanParams]]:
    rows: list[tuple[str, HumanParams]] = []
    seen: set[str] = set()
    for t in trials:
        if t.user_id not in seen:
            seen.add(t.user_id)
            rows.append((t.user_id, t.theta))
    return rows


# ----------------------------------------------------------------------
# Plot export: self-contained SVG line/bar charts, no rendering deps.

_SVG_W, _SVG_H = 640, 400
_ML, _MR, _MT, _MB = 70, 20, 42, 64


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _svg_open(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W / 2:.0f}" y="24" text-anchor="middle" font-size="14">{title}</text>',
    ]


def _svg_axes(xlabel: str, ylabel: str) -> list[str]:
    x0, y0 = _ML, _SVG_H - _MB
    x1, y1 = _SVG_W - _MR, _MT
    return [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#444"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#444"/>',
        f'<text x="{(x0 + x1) / 2:.0f}" y="{_SVG_H - 14}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.0f})">{ylabel}</text>',
    ]


def line_chart_svg(
    points: Sequence[tuple[float, float]], title: str, xlabel: str, ylabel: str
) -> str:
    """One polyline over labeled axes; returns the full SVG document."""
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * (_SVG_W - _ML - _MR)

    def py(y: float) -> float:
        return (_SVG_H - _MB) - (y - y_lo) / (y_hi - y_lo) * (_SVG_H - _MT - _MB)

    parts = _svg_open(title)
    for tx in _ticks(x_lo, x_hi):
        parts.append(
            f'<line x1="{px(tx):.1f}" y1="{_SVG_H - _MB}" x2="{px(tx):.1f}" '
            f'y2="{_SVG_H - _MB + 4}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{px(tx):.1f}" y="{_SVG_H - _MB + 18}" text-anchor="middle">{_fmt(tx)}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        parts.append(
            f'<line x1="{_ML - 4}" y1="{py(ty):.1f}" x2="{_ML}" y2="{py(ty):.1f}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{py(ty) + 4:.1f}" text-anchor="end">{_fmt(ty)}</text>'
        )
    coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in points)
    parts.append(
        f'<polyline points="{coords}" fill="none" stroke="#1f6fb4" stroke-width="1.5"/>'
    )
    parts.extend(_svg_axes(xlabel, ylabel))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bar_chart_svg(
    labels: Sequence[str], values: Sequence[float], title: str, ylabel: str
) -> str:
    """Evenly spaced vertical bars with rotated labels; full SVG document."""
    y_hi = max((max(values) if values else 0.0), 1e-12) * 1.05
    span = _SVG_W - _ML - _MR
    step = span / max(1, len(values))
    width = step * 0.7

    def py(y: float) -> float:
        return (_SVG_H - _MB) - y / y_hi * (_SVG_H - _MT - _MB)

    parts = _svg_open(title)
    for ty in _ticks(0.0, y_hi):
        parts.append(
            f'<line x1="{_ML - 4}" y1="{py(ty):.1f}" x2="{_ML}" y2="{py(ty):.1f}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{py(ty) + 4:.1f}" text-anchor="end">{_fmt(ty)}</text>'
        )
    for i, (label, value) in enumerate(zip(labels, values)):
        left = _ML + step * i + (step - width) / 2
        top = py(value)
        parts.append(
            f'<rect x="{left:.1f}" y="{top:.1f}" width="{width:.1f}" '
            f'height="{_SVG_H - _MB - top:.1f}" fill="#1f6fb4"/>'
        )
        cx = left + width / 2
        base = _SVG_H - _MB + 10
        parts.append(
            f'<text x="{cx:.1f}" y="{base}" text-anchor="end" font-size="9" '
            f'transform="rotate(-60 {cx:.1f} {base})">{label}</text>'
        )
    parts.extend(_svg_axes("", ylabel))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ----------------------------------------------------------------------
# Subcommands


def _cmd_simulate(args: argparse.Namespace, t0: float) -> int:
    inputs = []
    phrase_set = DEFAULT_PHRASES
    if args.phrases:
        text = Path(args.phrases).read_text(encoding="utf-8")
        phrase_set = tuple(ln.strip() for ln in text.splitlines() if ln.strip())
        if not phrase_set:
            raise DataError(f"{args.phrases}: no sentences found")
        inputs.append(args.phrases)
    cfg = SimConfig(
        theta=args.theta,
        phrase_set=phrase_set,
        seed=args.seed,
        trials_per_user=args.trials,
    )
    dataset = simulate_dataset(cfg, args.users)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "keylog.jsonl", out / "scanpath.jsonl", out / "theta.csv"]
    write_keylogs(files[0], [t.log for t in dataset])
    write_scanpaths(files[1], [t.scanpath for t in dataset])
    _write_theta_csv(files[2], _user_thetas(dataset))
    _say(args, f"simulated {args.users} users x {args.trials} trials -> {out}")
    _finish(
        args,
        {
            "users": args.users,
            "trials": args.trials,
            "theta": list(args.theta.as_tuple()) if args.theta else None,
            "phrases": args.phrases or "builtin",
        },
        inputs,
        files,
        t0,
        versions={"layout": default_layout()[0].version},
    )
    return EXIT_OK


def _cmd_fit_amortizer(args: argparse.Namespace, t0: float) -> int:
    if args.users < 100:
        raise UsageError("--users must be >= 100 (fitting needs 100 pairs)")
    pairs = build_training_set(SimConfig(seed=args.seed), args.users)
    result = fit_amortizer(pairs, AmortizerConfig(n_users=args.users, seed=args.seed))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.amortizer.save(out)
    mae = ", ".join(f"{v:.4f}" for v in result.holdout_mae)
    _say(
        args,
        f"held-out MAE per component: {mae} "
        f"(mse {result.holdout_mse:.5f} vs predict-mean {result.baseline_mse:.5f})",
    )
    _finish(args, {"users": args.users}, [], [out], t0)
    return EXIT_OK


def _parse_ablate(text: str) -> set[str]:
    tokens = {tok.strip() for tok in text.split(",") if tok.strip()}
    unknown = tokens.difference(_ABLATE_TERMS)
    if unknown:
        raise UsageError(
            f"--ablate: unknown term {sorted(unknown)[0]!r} "
            f"(choose from {', '.join(_ABLATE_TERMS)})"
        )
    return tokens


def _load_data_dir(data_dir, need_theta: bool) -> tuple[list[TrainingTrial], list[Path]]:
    d = Path(data_dir)
    keylog_path, scanpath_path = d / "keylog.jsonl", d / "scanpath.jsonl"
    logs = read_keylogs(keylog_path, geom=DEFAULT_GEOMETRY)
    paths = read_scanpaths(scanpath_path, geom=DEFAULT_GEOMETRY)
    path_map = _index_scanpaths(paths, str(scanpath_path))
    _check_ids(
        [log.trial_id for log in logs],
        list(path_map),
        str(keylog_path),
        str(scanpath_path),
    )
    inputs = [keylog_path, scanpath_path]
    theta_map: dict[str, HumanParams] = {}
    if need_theta:
        theta_path = d / "theta.csv"
        if not theta_path.exists():
            raise DataError(
                f"{theta_path}: required for parameter fusion (or pass --ablate params)"
            )
        theta_map = _read_theta_csv(theta_path)
        inputs.append(theta_path)
    trials: list[TrainingTrial] = []
    for log in logs:
        theta = None
        if need_theta:
            theta = theta_map.get(log.user_id)
            if theta is None:
                raise DataError(f"user {log.user_id!r} missing from theta.csv")
        trials.append(TrainingTrial(log, path_map[log.trial_id], theta))
    return trials, inputs


def _cmd_train(args: argparse.Namespace, t0: float) -> int:
    off = _parse_ablate(args.ablate)
    use_params = "params" not in off
    switches = LossSwitches(
        sim="sim" not in off, len="len" not in off, f="f" not in off, v="v" not in off
    )
    trials: list[TrainingTrial] = []
    inputs: list = []
    if args.data:
        loaded, inputs = _load_data_dir(args.data, need_theta=use_params)
        trials.extend(loaded)
    if args.sim_trials:
        sim_cfg = SimConfig(seed=args.seed)
        n_users = -(-args.sim_trials // sim_cfg.trials_per_user)
        dataset = simulate_dataset(sim_cfg, n_users)[: args.sim_trials]
        trials.extend(from_simulated(dataset))
    if not trials:
        raise UsageError("train needs --data and/or --sim-trials")

    cfg = ModelConfig(
        seed=args.seed, loss_switches=switches, use_param_inference=use_params
    )
    kept = filter_trainable(trials, cfg)
    if not kept:
        raise DataError("no trainable trials within the tap/fixation caps")
    if len(kept) < len(trials):
        _say(args, f"dropped {len(trials) - len(kept)} trials over the length caps")

    result = train(kept, cfg, steps=args.steps, batch=args.batch)
    if result.diverged:
        print(
            f"tapgaze train: diverged after {result.steps_run} steps; no output written",
            file=sys.stderr,
        )
        return EXIT_NUMERICAL
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.model.save(out, state=result.state)
    history_path = out.with_name(out.name + ".history.csv")
    atomic_write_text(history_path, loss_history_csv(result.history))
    _say(
        args,
        f"trained {result.steps_run} steps on {len(kept)} trials; "
        f"loss {result.history[0].total:.4f} -> {result.history[-1].total:.4f}",
    )
    _finish(
        args,
        {
            "data": args.data,
            "sim_trials": args.sim_trials,
            "steps": args.steps,
            "batch": args.batch,
            "ablate": sorted(off),
        },
        inputs,
        [out, history_path],
        t0,
    )
    return EXIT_OK


def _cmd_infer(args: argparse.Namespace, t0: float) -> int:
    model, _ = ScanpathModel.load(args.ckpt)
    inputs: list = [args.ckpt]
    entries: list[tuple[KeypressLog, Optional[HumanParams]]] = []
    if args.keylog:
        logs = read_keylogs(args.keylog, geom=DEFAULT_GEOMETRY)
        inputs.append(args.keylog)
        if model.cfg.use_param_inference and args.theta is None:
            raise UsageError(
                "this checkpoint fuses typist parameters; pass --theta e,f,l"
            )
        entries = [(log, args.theta) for log in logs]
    else:
        d = Path(args.from_trials)
        logs = read_keylogs(d / "keylog.jsonl", geom=DEFAULT_GEOMETRY)
        inputs.append(d / "keylog.jsonl")
        theta_map: dict[str, HumanParams] = {}
        if model.cfg.use_param_inference and args.theta is None:
            theta_path = d / "theta.csv"
            if not theta_path.exists():
                raise DataError(f"{theta_path}: not found; pass --theta instead")
            theta_map = _read_theta_csv(theta_path)
            inputs.append(theta_path)
        for log in logs:
            theta = args.theta
            if model.cfg.use_param_inference and theta is None:
                theta = theta_map.get(log.user_id)
                if theta is None:
                    raise DataError(f"user {log.user_id!r} missing from theta.csv")
            entries.append((log, theta))

    predictions: list[Scanpath] = []
    degenerate = 0
    for i, (log, theta) in enumerate(entries):
        seed = None
        if args.mode == "sample":
            # Distinct per-trial substream of --seed.
            seed = int(np.random.SeedSequence((args.seed, i)).generate_state(1)[0])
        result = model.predict(log, theta=theta, mode=args.mode, seed=seed)
        degenerate += result.degenerate
        predictions.append(result.scanpath)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scanpaths(out, predictions)
    _say(args, f"wrote {len(predictions)} scanpaths ({degenerate} degenerate)")
    _finish(
        args,
        {
            "ckpt": args.ckpt,
            "keylog": args.keylog,
            "from_trials": args.from_trials,
            "theta": list(args.theta.as_tuple()) if args.theta else None,
            "mode": args.mode,
        },
        inputs,
        [out],
        t0,
    )
    return EXIT_OK


def _cmd_infer_theta(args: argparse.Namespace, t0: float) -> int:
    amortizer = Amortizer.load(args.ckpt)
    keylog_path = Path(args.trials) / "keylog.jsonl"
    logs = read_keylogs(keylog_path, geom=DEFAULT_GEOMETRY)
    groups: dict[str, list[KeypressLog]] = {}
    for log in logs:
        groups.setdefault(log.user_id, []).append(log)
    rows = [(uid, amortizer.infer_theta(trials)) for uid, trials in groups.items()]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_theta_csv(out, rows)
    _say(args, f"inferred theta for {len(rows)} users -> {out}")
    _finish(
        args,
        {"trials": args.trials, "ckpt": args.ckpt},
        [args.ckpt, keylog_path],
        [out],
        t0,
    )
    return EXIT_OK


_EVAL_COLUMNS = (
    "trial_id,dtwd,sted,mm_shape,mm_direction,mm_length,mm_position,mm_duration,"
    "fixation_count,mean_fixation_duration,gaze_shifts,keyboard_ratio,proofreading_rate"
)


def _eval_row(pair: tuple[Scanpath, Scanpath]) -> list[float]:
    pred, gt = pair
    geom = DEFAULT_GEOMETRY
    try:
        mm = multimatch(pred, gt, geom)
        row = [
            dtwd(pred, gt, geom),
            sted(pred, gt, geom),
            *mm.as_tuple(),
            fixation_count(pred),
            mean_fixation_duration(pred),
            gaze_shifts(pred, geom),
            gaze_on_keyboard_ratio(pred, geom),
            proofreading_rate(pred, geom),
        ]
    except ValueError as exc:
        raise DataError(f"trial {pred.trial_id!r}: {exc}") from exc
    return [float(v) for v in row]


def _cmd_eval(args: argparse.Namespace, t0: float) -> int:
    preds = read_scanpaths(args.pred, geom=DEFAULT_GEOMETRY)
    gts = read_scanpaths(args.gt, geom=DEFAULT_GEOMETRY)
    gt_map = _index_scanpaths(gts, str(args.gt))
    _index_scanpaths(preds, str(args.pred))
    _check_ids(
        [p.trial_id for p in preds], list(gt_map), str(args.pred), str(args.gt)
    )
    pairs = [(p, gt_map[p.trial_id]) for p in preds]
    with _thread_limits(args.threads):
        if args.threads > 1:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                rows = list(pool.map(_eval_row, pairs))
        else:
            rows = [_eval_row(pair) for pair in pairs]

    int_cols = {7, 9}  # fixation_count, gaze_shifts
    lines = [_EVAL_COLUMNS]
    for pred_path, row in zip(preds, rows):
        cells = [
            str(int(v)) if i in int_cols else repr(v) for i, v in enumerate(row)
        ]
        lines.append(",".join([pred_path.trial_id, *cells]))
    matrix = np.array(rows, dtype=np.float64)
    means = matrix.mean(axis=0)
    sds = matrix.std(axis=0, ddof=1) if len(rows) > 1 else np.zeros(matrix.shape[1])
    summary = [f"{m:.4f}({s:.4f})" for m, s in zip(means, sds)]
    lines.append(",".join(["summary", *summary]))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out, "\n".join(lines) + "\n")
    _say(args, f"evaluated {len(pairs)} trials -> {out}")
    _finish(
        args,
        {"pred": args.pred, "gt": args.gt, "threads": args.threads},
        [args.pred, args.gt],
        [out],
        t0,
    )
    return EXIT_OK


def _pairs_csv(rows: Sequence[tuple[float, float]], header: str) -> str:
    lines = [header] + [f"{float(a)!r},{float(b)!r}" for a, b in rows]
    return "\n".join(lines) + "\n"


def _cmd_analyze(args: argparse.Namespace, t0: float) -> int:
    if args.layout:
        layout, geom = load_layout(args.layout)
    else:
        layout, geom = default_layout()
    logs = read_keylogs(args.keylog, geom=geom)
    paths = read_scanpaths(args.scanpath, geom=geom)
    path_map = _index_scanpaths(paths, str(args.scanpath))
    _check_ids(
        [log.trial_id for log in logs],
        list(path_map),
        str(args.keylog),
        str(args.scanpath),
    )
    pairs = [(log, path_map[log.trial_id]) for log in logs]
    with _thread_limits(args.threads):
        report = compute_coordination_report(pairs, layout, geom)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "n_trials": len(pairs),
        "iki_mean_ms": float(report.iki_stats[0]),
        "iki_sd_ms": float(report.iki_stats[1]),
        "distance_curve": [[float(a), float(b)] for a, b in report.distance_curve],
        "ratio_by_iki": [[float(a), float(b)] for a, b in report.ratio_by_iki],
        "ratio_by_travel": [[float(a), float(b)] for a, b in report.ratio_by_travel],
        "per_key_ratio": {
            k: float(report.per_key_ratio[k]) for k in sorted(report.per_key_ratio)
        },
    }
    outputs = [out / "report.json"]
    atomic_write_text(outputs[0], json.dumps(doc, indent=2, sort_keys=True) + "\n")
    csv_spec = [
        ("distance_curve.csv", report.distance_curve, "offset_ms,mean_distance_px"),
        ("ratio_by_iki.csv", report.ratio_by_iki, "iki_bin_start_ms,keyboard_ratio"),
        (
            "ratio_by_travel.csv",
            report.ratio_by_travel,
            "travel_bin_start_px,keyboard_ratio",
        ),
    ]
    for name, rows, header in csv_spec:
        outputs.append(out / name)
        atomic_write_text(outputs[-1], _pairs_csv(rows, header))
    keys = sorted(report.per_key_ratio)
    outputs.append(out / "per_key_ratio.csv")
    atomic_write_text(
        outputs[-1],
        "\n".join(
            ["key,ratio"] + [f"{k},{float(report.per_key_ratio[k])!r}" for k in keys]
        )
        + "\n",
    )
    if args.svg:
        charts = [
            (
                "distance_curve.svg",
                line_chart_svg(
                    report.distance_curve,
                    "Gaze-tap distance vs time offset",
                    "offset from tap (ms)",
                    "mean distance (px)",
                ),
            ),
            (
                "ratio_by_iki.svg",
                line_chart_svg(
                    report.ratio_by_iki,
                    "Keyboard-gaze ratio vs inter-key interval",
                    "IKI bin start (ms)",
                    "keyboard ratio",
                ),
            ),
            (
                "ratio_by_travel.svg",
                line_chart_svg(
                    report.ratio_by_travel,
                    "Keyboard-gaze ratio vs finger travel",
                    "travel bin start (px)",
                    "keyboard ratio",
                ),
            ),
            (
                "per_key_ratio.svg",
                bar_chart_svg(
                    keys,
                    [report.per_key_ratio[k] for k in keys],
                    "Pre-tap keyboard attention per key",
                    "keyboard ratio",
                ),
            ),
        ]
        for name, text in charts:
            outputs.append(out / name)
            atomic_write_text(outputs[-1], text)
    _say(args, f"analyzed {len(pairs)} trials -> {out}")
    _finish(
        args,
        {
            "keylog": args.keylog,
            "scanpath": args.scanpath,
            "layout": args.layout or "builtin",
            "svg": bool(args.svg),
        },
        [args.keylog, args.scanpath] + ([args.layout] if args.layout else []),
        outputs,
        t0,
        versions={"layout": layout.version},
    )
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser and dispatch


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="tapgaze",
        description="Typing-to-gaze pipeline: simulate, fit, train, infer, evaluate.",
    )
    top.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_nonneg_int, default=0, help="governs all randomness")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads for eval/analyze")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = top.add_subparsers(dest="cmd", required=True, metavar="command")

    p = sub.add_parser("simulate", parents=[common], help="generate paired keylogs and scanpaths")
    p.add_argument("--users", type=_positive_int, required=True)
    p.add_argument("--trials", type=_positive_int, default=5, help="trials per user")
    p.add_argument("--theta", type=_theta_type, metavar="E,F,L", help="fixed typist parameters (default: sample per user)")
    p.add_argument("--phrases", help="file with one sentence per line")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit-amortizer", parents=[common], help="fit the parameter-inference network on simulated users")
    p.add_argument("--users", type=_positive_int, default=5000)
    p.set_defaults(func=_cmd_fit_amortizer)

    p = sub.add_parser("train", parents=[common], help="train the scanpath model")
    p.add_argument("--data", help="directory with keylog.jsonl + scanpath.jsonl (+ theta.csv)")
    p.add_argument("--sim-trials", type=_nonneg_int, default=0, help="additional simulated trials")
    p.add_argument("--steps", type=_positive_int, default=8000)
    p.add_argument("--batch", type=_positive_int, default=16)
    p.add_argument("--ablate", default="", help="comma list from sim,len,f,v,params")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", parents=[common], help="predict scanpaths for keypress logs")
    p.add_argument("--ckpt", required=True, help="trained model checkpoint")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--keylog", help="keylog JSONL file")
    src.add_argument("--from-trials", help="directory from `simulate` (keylog.jsonl + theta.csv)")
    p.add_argument("--theta", type=_theta_type, metavar="E,F,L", help="typist parameters for --keylog input")
    p.add_argument("--mode", choices=("mean", "sample"), default="mean")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("infer-theta", parents=[common], help="infer typist parameters per user")
    p.add_argument("--trials", required=True, help="directory with keylog.jsonl")
    p.add_argument("--ckpt", required=True, help="amortizer checkpoint")
    p.set_defaults(func=_cmd_infer_theta)

    p = sub.add_parser("eval", parents=[common], help="score predicted scanpaths against ground truth")
    p.add_argument("--pred", required=True, help="predicted scanpath JSONL")
    p.add_argument("--gt", required=True, help="ground-truth scanpath JSONL")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("analyze", parents=[common], help="eye-hand coordination report and figures")
    p.add_argument("--keylog", required=True, help="keylog JSONL file")
    p.add_argument("--scanpath", required=True, help="scanpath JSONL file")
    p.add_argument("--layout", help="layout JSON (default: packaged QWERTY)")
    p.add_argument("--svg", action="store_true", help="also write SVG charts")
    p.set_defaults(func=_cmd_analyze)
    return top


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv and run one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version, 2 for usage errors.
        code = exc.code if isinstance(exc.code, int) else 1
        return EXIT_OK if code == 0 else EXIT_USAGE
    if not args.out:
        print(f"tapgaze {args.cmd}: --out is required", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        return args.func(args, t0)
    except UsageError as exc:
        print(f"tapgaze {args.cmd}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"tapgaze {args.cmd}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError) as exc:
        print(f"tapgaze {args.cmd}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RuntimeError, ArithmeticError) as exc:
        print(f"tapgaze {args.cmd}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
