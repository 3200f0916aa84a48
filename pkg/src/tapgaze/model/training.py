"""Seeded mini-batch training with checkpointing and divergence recovery."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .. import autodiff as ad
from ..autodiff import OptimizerState, Tensor
from ..core import DEFAULT_GEOMETRY, HumanParams, KeypressLog, Scanpath, ScreenGeometry
from ..io import atomic_write_text
from ..simulator import SimulatedTrial
from .losses import LossBreakdown, total_loss
from .network import FixationPrediction, ModelConfig, ScanpathModel

__all__ = [
    "TrainingTrial",
    "TrainResult",
    "from_simulated",
    "filter_trainable",
    "loss_history_csv",
    "train",
]


@dataclass(frozen=True)
class TrainingTrial:
    """One supervised example; theta is required for parameter fusion."""

    log: KeypressLog
    scanpath: Scanpath
    theta: Optional[HumanParams] = None


def from_simulated(trials: Iterable[SimulatedTrial]) -> list[TrainingTrial]:
    """Adapt simulator output, keeping each trial's generating parameters."""
    return [TrainingTrial(t.log, t.scanpath, t.theta) for t in trials]


def filter_trainable(
    trials: Iterable[TrainingTrial], cfg: ModelConfig
) -> list[TrainingTrial]:
    """Drop trials that exceed the model's tap or fixation capacity."""
    return [
        t
        for t in trials
        if 1 <= len(t.log.taps) <= cfg.max_taps
        and 1 <= len(t.scanpath) <= cfg.max_fixations
    ]


@dataclass
class TrainResult:
    """Outcome of one training run."""

    model: ScanpathModel
    state: OptimizerState
    history: list[LossBreakdown]
    diverged: bool
    steps_run: int
    checkpoint_path: Optional[Path] = None


def loss_history_csv(history: Sequence[LossBreakdown]) -> str:
    """Loss history as CSV text; floats keep full round-trip precision."""
    lines = ["step,total,sim,len,f,v"]
    for step, entry in enumerate(history):
        lines.append(
            f"{step},{entry.total!r},{entry.sim!r},{entry.len!r},"
            f"{entry.f!r},{entry.v!r}"
        )
    return "\n".join(lines) + "\n"


def _validate_trials(trials: Sequence[TrainingTrial], cfg: ModelConfig) -> None:
    if not trials:
        raise ValueError("training needs at least one trial")
    for t in trials:
        n_taps, n_fix = len(t.log.taps), len(t.scanpath)
        if not 1 <= n_taps <= cfg.max_taps:
            raise ValueError(
                f"trial {t.log.trial_id!r}: {n_taps} taps outside "
                f"[1, {cfg.max_taps}]; run filter_trainable first"
            )
        if not 1 <= n_fix <= cfg.max_fixations:
            raise ValueError(
                f"trial {t.log.trial_id!r}: {n_fix} fixations outside "
                f"[1, {cfg.max_fixations}]; run filter_trainable first"
            )
        if cfg.use_param_inference and t.theta is None:
            raise ValueError(
                f"trial {t.log.trial_id!r}: use_param_inference=True "
                "requires a theta per trial"
            )


class _Snapshot:
    """Deep copy of parameters and optimizer moments for rollback."""

    def __init__(self, model: ScanpathModel, state: OptimizerState):
        self.params = {k: v.data.copy() for k, v in model.params.items()}
        self.m = {k: v.copy() for k, v in state.m.items()}
        self.v = {k: v.copy() for k, v in state.v.items()}
        self.step = state.step

    def restore(self, model: ScanpathModel, state: OptimizerState) -> None:
        for name, arr in self.params.items():
            model.params[name] = Tensor(arr.copy(), requires_grad=True)
        state.m = {k: v.copy() for k, v in self.m.items()}
        state.v = {k: v.copy() for k, v in self.v.items()}
        state.step = self.step


def _params_finite(model: ScanpathModel) -> bool:
    return all(np.isfinite(p.data).all() for p in model.params.values())


def train(
    trials: Sequence[TrainingTrial],
    cfg: ModelConfig,
    steps: int = 8000,
    batch: int = 16,
    geom: ScreenGeometry = DEFAULT_GEOMETRY,
    out_dir: Optional[Union[str, Path]] = None,
    checkpoint_every: int = 500,
) -> TrainResult:
    """Shuffled mini-batch descent over the four-term objective.

    Fully seeded: rerunning with identical inputs reproduces the loss
    history and checkpoints byte for byte. The learning rate follows the
    step schedule; weight decay is decoupled. A non-finite loss or
    gradient aborts training and rolls parameters and optimizer state
    back to the last finite checkpoint. When out_dir is given, periodic
    checkpoints, the final model, and the loss-history CSV are written
    there atomically.
    """
    _validate_trials(trials, cfg)
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    if checkpoint_every < 1:
        raise ValueError(f"checkpoint_every must be >= 1, got {checkpoint_every}")

    out_path: Optional[Path] = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

    model = ScanpathModel(cfg)
    model.set_training(True)
    state = OptimizerState()
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 7919)))
    queue: list[int] = []
    history: list[LossBreakdown] = []
    last_good = _Snapshot(model, state)
    diverged = False
    switches = cfg.loss_switches

    for step in range(steps):
        while len(queue) < batch:
            queue.extend(shuffle_rng.permutation(len(trials)).tolist())
        chosen = [trials[i] for i in queue[:batch]]
        del queue[:batch]

        raw = model.forward_raw(
            [t.log for t in chosen], [t.theta for t in chosen], geom
        )
        batch_total: Optional[Tensor] = None
        sums = {"total": 0.0, "sim": 0.0, "len": 0.0, "f": 0.0, "v": 0.0}
        for b, trial in enumerate(chosen):
            pred = FixationPrediction.from_raw(raw[b])
            term, breakdown = total_loss(
                pred, trial.scanpath, trial.log, switches, geom
            )
            batch_total = term if batch_total is None else ad.add(batch_total, term)
            sums["total"] += breakdown.total
            sums["sim"] += breakdown.sim
            sums["len"] += breakdown.len
            sums["f"] += breakdown.f
            sums["v"] += breakdown.v

        loss = ad.mul(batch_total, 1.0 / batch)
        entry = LossBreakdown(**{k: v / batch for k, v in sums.items()})
        if not math.isfinite(entry.total):
            diverged = True
            last_good.restore(model, state)
            break
        history.append(entry)

        ad.zero_grads(model.params)
        loss.backward()
        state.lr = ad.lr_schedule(step)
        try:
            ad.adam_step(state, model.params)
        except ValueError:
            # Non-finite gradient; the partial in-place update is rolled back.
            diverged = True
            last_good.restore(model, state)
            break

        if (step + 1) % checkpoint_every == 0:
            if not _params_finite(model):
                diverged = True
                last_good.restore(model, state)
                break
            last_good = _Snapshot(model, state)
            if out_path is not None:
                model.save(out_path / f"ckpt-{step + 1:06d}.ckpt", state)

    model.set_training(False)
    checkpoint_path: Optional[Path] = None
    if out_path is not None:
        checkpoint_path = out_path / "model.ckpt"
        model.save(checkpoint_path, state)
        atomic_write_text(out_path / "history.csv", loss_history_csv(history))
    return TrainResult(
        model=model,
        state=state,
        history=history,
        diverged=diverged,
        steps_run=len(history),
        checkpoint_path=checkpoint_path,
    )
