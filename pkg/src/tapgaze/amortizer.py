"""Amortized inference of typist parameters from aggregate typing metrics.

A small feed-forward regressor learns the simulator's mapping from
(WPM, mean IKI, error rate, backspace count) back to theta on simulated
users, so that inference on new users is a single forward pass over their
averaged metrics. Outputs are squashed to (0, 1)^3 and therefore always
form a valid parameter triple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import OptimizerState, Tensor
from .core import (
    HumanParams,
    KeyboardLayout,
    KeypressLog,
    TypingMetrics,
    compute_typing_metrics,
    default_layout,
)
from .simulator import SimConfig, simulate_dataset

__all__ = [
    "AmortizerConfig",
    "Amortizer",
    "FitResult",
    "average_metrics",
    "build_training_set",
    "fit",
]

#: One training example: a user's averaged metrics and their true theta.
Pair = tuple[TypingMetrics, HumanParams]


@dataclass(frozen=True)
class AmortizerConfig:
    """Network and fitting settings.

    n_users and trials_per_user describe the default training-set size;
    holdout_frac of the pairs is reserved for the held-out error report
    when no explicit holdout set is supplied.
    """

    hidden: tuple[int, ...] = (32, 32)
    n_users: int = 5000
    trials_per_user: int = 5
    holdout_frac: float = 0.02
    epochs: int = 150
    batch: int = 64
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.hidden or any(w < 1 for w in self.hidden):
            raise ValueError(f"hidden widths must be positive, got {self.hidden}")
        if self.n_users < 1 or self.trials_per_user < 1:
            raise ValueError("n_users and trials_per_user must be >= 1")
        if not 0.0 < self.holdout_frac < 1.0:
            raise ValueError(f"holdout_frac={self.holdout_frac} outside (0, 1)")
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be >= 1")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


def _mean(values: Sequence[float]) -> float:
    # fsum keeps the average permutation-invariant; the all-equal shortcut
    # makes duplicated trials exactly idempotent.
    if min(values) == max(values):
        return float(values[0])
    return math.fsum(values) / len(values)


def average_metrics(metrics: Sequence[TypingMetrics]) -> TypingMetrics:
    """Component-wise mean; exact under duplication and reordering."""
    if not metrics:
        raise ValueError("cannot average an empty metric list")
    columns = list(zip(*(m.as_vector() for m in metrics)))
    return TypingMetrics(*(_mean(col) for col in columns))


def build_training_set(sim_cfg: SimConfig, n_users: int) -> list[Pair]:
    """(averaged metrics, theta) per simulated user, in user order."""
    if n_users < 1:
        raise ValueError(f"n_users must be >= 1, got {n_users}")
    layout, _ = default_layout()
    trials = simulate_dataset(sim_cfg, n_users)
    pairs: list[Pair] = []
    by_user: dict[str, list] = {}
    for t in trials:
        by_user.setdefault(t.user_id, []).append(t)
    for user_id in sorted(by_user):
        group = by_user[user_id]
        averaged = average_metrics(
            [compute_typing_metrics(t.log, layout) for t in group]
        )
        pairs.append((averaged, group[0].theta))
    return pairs


class Amortizer:
    """Fitted regressor: normalized metrics in, squashed theta out."""

    def __init__(
        self,
        cfg: AmortizerConfig,
        params: dict[str, Tensor],
        norm_mean: np.ndarray,
        norm_scale: np.ndarray,
    ):
        if np.any(norm_scale <= 0):
            raise ValueError("normalization scales must be > 0")
        self.cfg = cfg
        self.params = params
        self.norm_mean = np.asarray(norm_mean, dtype=np.float64)
        self.norm_scale = np.asarray(norm_scale, dtype=np.float64)

    @classmethod
    def init(cls, cfg: AmortizerConfig, norm_mean: np.ndarray, norm_scale: np.ndarray) -> "Amortizer":
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 303)))
        widths = (4, *cfg.hidden, 3)
        params: dict[str, Tensor] = {}
        for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params[f"w{i}"] = Tensor(
                rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True
            )
            params[f"b{i}"] = Tensor(np.zeros(fan_out), requires_grad=True)
        return cls(cfg, params, norm_mean, norm_scale)

    @property
    def n_layers(self) -> int:
        return len(self.cfg.hidden) + 1

    def forward(self, x_norm: Tensor) -> Tensor:
        """(B, 4) normalized metrics to (B, 3) squashed parameters."""
        h = x_norm
        for i in range(self.n_layers):
            h = ad.add(ad.matmul(h, self.params[f"w{i}"]), self.params[f"b{i}"])
            if i < self.n_layers - 1:
                h = ad.relu(h)
        return ad.sigmoid(h)

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=np.float64) - self.norm_mean) / self.norm_scale

    def predict(self, metrics: TypingMetrics) -> HumanParams:
        """Theta estimate for one user's averaged metrics."""
        x = self.normalize(np.array(metrics.as_vector())[None, :])
        out = self.forward(Tensor(x)).data[0]
        return HumanParams(float(out[0]), float(out[1]), float(out[2]))

    def infer_theta(
        self,
        trials: Sequence[KeypressLog],
        layout: Optional[KeyboardLayout] = None,
    ) -> HumanParams:
        """Average the trials' metrics, then run one forward pass.

        Permutation-invariant over the trial set; duplicating a trial does
        not move the estimate. Every trial must support metric computation
        (at least two taps spanning time, and a reference text).
        """
        if not trials:
            raise ValueError("infer_theta needs at least one trial")
        if layout is None:
            layout, _ = default_layout()
        for log in trials:
            if len(log.taps) < 2:
                raise ValueError(
                    f"trial {log.trial_id!r}: need >= 2 taps to compute metrics"
                )
        averaged = average_metrics(
            [compute_typing_metrics(log, layout) for log in trials]
        )
        return self.predict(averaged)

    def save(self, path) -> None:
        meta = {
            "format": "amortizer",
            "config": {
                "hidden": list(self.cfg.hidden),
                "n_users": self.cfg.n_users,
                "trials_per_user": self.cfg.trials_per_user,
                "holdout_frac": self.cfg.holdout_frac,
                "epochs": self.cfg.epochs,
                "batch": self.cfg.batch,
                "lr": self.cfg.lr,
                "seed": self.cfg.seed,
            },
            "norm_mean": [float(v) for v in self.norm_mean],
            "norm_scale": [float(v) for v in self.norm_scale],
        }
        ad.save_checkpoint(path, self.params, meta=meta)

    @classmethod
    def load(cls, path) -> "Amortizer":
        arrays, _, meta = ad.load_checkpoint(path)
        if meta.get("format") != "amortizer":
            raise ValueError(f"{path}: not an amortizer checkpoint")
        raw_cfg = dict(meta["config"])
        raw_cfg["hidden"] = tuple(raw_cfg["hidden"])
        cfg = AmortizerConfig(**raw_cfg)
        params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
        expected = {f"{kind}{i}" for i in range(len(cfg.hidden) + 1) for kind in "wb"}
        if set(params) != expected:
            raise ValueError(f"{path}: parameter names {sorted(params)} != {sorted(expected)}")
        return cls(
            cfg,
            params,
            np.array(meta["norm_mean"], dtype=np.float64),
            np.array(meta["norm_scale"], dtype=np.float64),
        )


@dataclass(frozen=True)
class FitResult:
    """Fitted amortizer plus its held-out error report."""

    amortizer: Amortizer
    holdout_mae: tuple[float, float, float]
    holdout_mse: float
    baseline_mse: float
    history: tuple[float, ...]
    n_train: int
    n_holdout: int


def _as_arrays(pairs: Sequence[Pair]) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([p[0].as_vector() for p in pairs], dtype=np.float64)
    y = np.array([p[1].as_tuple() for p in pairs], dtype=np.float64)
    return x, y


def fit(
    pairs: Sequence[Pair],
    cfg: AmortizerConfig = AmortizerConfig(),
    holdout_pairs: Optional[Sequence[Pair]] = None,
) -> FitResult:
    """Train the regressor with minibatch Adam on squared error.

    Metrics are normalized by the training set's mean and standard
    deviation; the constants are frozen into the returned amortizer. When
    holdout_pairs is omitted, holdout_frac of the shuffled pairs is set
    aside. The report compares against predicting the training-mean theta.
    Divergence (non-finite loss) raises instead of returning.
    """
    if len(pairs) < 100:
        raise ValueError(f"fit needs >= 100 pairs, got {len(pairs)}")
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 404)))
    perm = rng.permutation(len(pairs))
    if holdout_pairs is None:
        n_hold = max(1, int(round(len(pairs) * cfg.holdout_frac)))
        hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
        holdout = [pairs[i] for i in hold_idx]
        train_pairs = [pairs[i] for i in train_idx]
    else:
        holdout = list(holdout_pairs)
        train_pairs = [pairs[i] for i in perm]
    if not holdout:
        raise ValueError("holdout set is empty")

    x_train, y_train = _as_arrays(train_pairs)
    norm_mean = x_train.mean(axis=0)
    norm_scale = np.maximum(x_train.std(axis=0), 1e-8)
    model = Amortizer.init(cfg, norm_mean, norm_scale)
    xn = model.normalize(x_train)

    state = OptimizerState(lr=cfg.lr, weight_decay=0.0)
    n = len(train_pairs)
    history: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch):
            idx = order[start : start + cfg.batch]
            out = model.forward(Tensor(xn[idx]))
            loss = ad.mean(ad.square(ad.sub(out, y_train[idx])))
            value = loss.item()
            if not math.isfinite(value):
                raise RuntimeError("amortizer training diverged (non-finite loss)")
            epoch_loss += value * len(idx)
            ad.zero_grads(model.params)
            loss.backward()
            ad.adam_step(state, model.params)
        history.append(epoch_loss / n)

    x_hold, y_hold = _as_arrays(holdout)
    pred = model.forward(Tensor(model.normalize(x_hold))).data
    mae = np.abs(pred - y_hold).mean(axis=0)
    mse = float(((pred - y_hold) ** 2).mean())
    baseline = y_train.mean(axis=0)
    baseline_mse = float(((baseline[None, :] - y_hold) ** 2).mean())
    return FitResult(
        amortizer=model,
        holdout_mae=(float(mae[0]), float(mae[1]), float(mae[2])),
        holdout_mse=mse,
        baseline_mse=baseline_mse,
        history=tuple(history),
        n_train=len(train_pairs),
        n_holdout=len(holdout),
    )
