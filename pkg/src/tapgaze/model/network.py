"""Keypress-to-scanpath network: tap encoding, parameter fusion, decoding.

A compact encoder-decoder over tap features. Taps are embedded with
sinusoidal positions, optionally fused with the typist's latent parameters
through a single cross-attention read, self-attended by the encoder, and
decoded non-autoregressively by a fixed bank of learned fixation-slot
queries. Seven channels per slot describe a Gaussian fixation (position,
duration, their spreads) plus a validity logit whose threshold determines
the predicted scanpath length.

All arithmetic runs on the package's reverse-mode tensors in float64; a
model is fully determined by its configuration, including the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .. import autodiff as ad
from ..autodiff import OptimizerState, Tensor
from ..core import (
    DEFAULT_GEOMETRY,
    Fixation,
    HumanParams,
    KeypressLog,
    Scanpath,
    ScreenGeometry,
    interkey_intervals,
)

__all__ = [
    "LossSwitches",
    "ModelConfig",
    "FixationPrediction",
    "ScanpathInference",
    "ScanpathModel",
    "CHUNK_OVERLAP_TAPS",
]

#: Tap overlap between consecutive chunks when a log exceeds max_taps.
CHUNK_OVERLAP_TAPS = 8

#: Strictly positive floor added to softplus-mapped standard deviations.
_SIGMA_FLOOR = 1e-8

#: Decoded fixation durations are clamped to at least this many ms.
_MIN_DECODED_MS = 1.0


@dataclass(frozen=True)
class LossSwitches:
    """Which training objective terms are enabled."""

    sim: bool = True
    len: bool = True
    f: bool = True
    v: bool = True


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and training-objective settings.

    Attributes:
        d_model: feature width of every token.
        n_heads: attention heads; must divide d_model.
        n_encoder_layers, n_decoder_layers: pre-LN block counts.
        max_fixations: output slot count N; predicted length never exceeds it.
        max_taps: input width; longer logs are split into overlapping chunks.
        dropout: probability applied to residual branches while training.
        loss_switches: enabled objective terms.
        use_param_inference: fuse the typist's latent parameters into the
            tap features; when false, fusion is skipped entirely.
        seed: governs parameter init, dropout, and training-time shuffling.
    """

    d_model: int = 64
    n_heads: int = 4
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    max_fixations: int = 32
    max_taps: int = 48
    dropout: float = 0.0
    loss_switches: LossSwitches = LossSwitches()
    use_param_inference: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d_model < 1 or self.n_heads < 1:
            raise ValueError(
                f"d_model={self.d_model}, n_heads={self.n_heads}: both must be >= 1"
            )
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if self.n_encoder_layers < 1 or self.n_decoder_layers < 1:
            raise ValueError("layer counts must be >= 1")
        if self.max_fixations < 1:
            raise ValueError(f"max_fixations must be >= 1, got {self.max_fixations}")
        if self.max_taps < 1:
            raise ValueError(f"max_taps must be >= 1, got {self.max_taps}")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout={self.dropout} outside [0, 1)")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


# Head channel layout, one row per slot.
_CH_MU_X, _CH_MU_Y, _CH_DUR, _CH_LOGIT = 0, 1, 2, 3
_CH_SIG_X, _CH_SIG_Y, _CH_SIG_DUR = 4, 5, 6


@dataclass(frozen=True)
class FixationPrediction:
    """Per-slot fixation distribution, as differentiable tensors.

    Positions are normalized by screen width/height, durations by 1000
    (seconds). Standard deviations are strictly positive by construction;
    they parameterize stochastic decoding only and never enter a loss.
    """

    mu_x: Tensor
    mu_y: Tensor
    dur: Tensor
    logits: Tensor
    sigma_x: Tensor
    sigma_y: Tensor
    sigma_dur: Tensor

    @classmethod
    def from_raw(cls, raw: Tensor) -> "FixationPrediction":
        """Split an (N, 7) head output; spreads get the positive mapping."""
        if raw.ndim != 2 or raw.shape[1] != 7:
            raise ValueError(f"expected raw head output (N, 7), got {raw.shape}")

        def pos(t: Tensor) -> Tensor:
            return ad.add(ad.softplus(t), _SIGMA_FLOOR)

        return cls(
            mu_x=raw[:, _CH_MU_X],
            mu_y=raw[:, _CH_MU_Y],
            dur=raw[:, _CH_DUR],
            logits=raw[:, _CH_LOGIT],
            sigma_x=pos(raw[:, _CH_SIG_X]),
            sigma_y=pos(raw[:, _CH_SIG_Y]),
            sigma_dur=pos(raw[:, _CH_SIG_DUR]),
        )

    @property
    def n_slots(self) -> int:
        return self.mu_x.shape[0]

    def decoded_length(self) -> int:
        """Count of valid slots, truncated at the first invalid one."""
        valid = self.logits.data > 0.0  # sigmoid(s) > 0.5
        n = 0
        while n < valid.size and valid[n]:
            n += 1
        return n


@dataclass(frozen=True)
class ScanpathInference:
    """Decoded model output for one keypress log.

    For logs split into several chunks, ``scanpath`` is the stitched result
    and ``prediction`` holds the first chunk's slot tensors.
    """

    prediction: FixationPrediction
    scanpath: Scanpath
    degenerate: bool
    n_chunks: int = 1


def _sinusoidal_pe(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (i // 2) / d_model)
    pe = np.empty((length, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle[:, 0::2])
    pe[:, 1::2] = np.cos(angle[:, 1::2])
    return pe


class ScanpathModel:
    """The inference network plus its decoding conventions."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        self._pe = _sinusoidal_pe(cfg.max_taps, cfg.d_model)
        self._training = False
        # Distinct streams so data seeds never collide with model seeds.
        self._drop_rng = np.random.default_rng(
            np.random.SeedSequence((cfg.seed, 202))
        )
        self._init_params(np.random.default_rng(np.random.SeedSequence((cfg.seed, 101))))

    # ------------------------------------------------------------------
    # Parameters

    def _add_weight(self, rng: np.random.Generator, name: str, fan_in: int, fan_out: int) -> None:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        self.params[name] = Tensor(
            rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True
        )

    def _add_bias(self, name: str, size: int, value: Union[float, Sequence[float]] = 0.0) -> None:
        data = np.full(size, value, dtype=np.float64) if np.isscalar(value) else np.asarray(value, dtype=np.float64)
        self.params[name] = Tensor(data, requires_grad=True)

    def _add_ln(self, name: str, size: int) -> None:
        self.params[f"{name}.g"] = Tensor(np.ones(size), requires_grad=True)
        self.params[f"{name}.b"] = Tensor(np.zeros(size), requires_grad=True)

    def _add_attention(self, rng: np.random.Generator, prefix: str) -> None:
        d = self.cfg.d_model
        for part in ("wq", "wk", "wv", "wo"):
            self._add_weight(rng, f"{prefix}.{part}", d, d)
        for part in ("bq", "bk", "bv", "bo"):
            self._add_bias(f"{prefix}.{part}", d)

    def _add_ffn(self, rng: np.random.Generator, prefix: str) -> None:
        d = self.cfg.d_model
        hidden = 2 * d
        self._add_weight(rng, f"{prefix}.w1", d, hidden)
        self._add_bias(f"{prefix}.b1", hidden)
        self._add_weight(rng, f"{prefix}.w2", hidden, d)
        self._add_bias(f"{prefix}.b2", d)

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        d = cfg.d_model
        self._add_weight(rng, "embed.w", 3, d)
        self._add_bias("embed.b", d)
        if cfg.use_param_inference:
            # An ablated model carries no fusion weights at all; leaving
            # them in would starve the optimizer of their gradients.
            self._add_weight(rng, "fuse.theta_w", 3, d)
            self._add_bias("fuse.theta_b", d)
            self._add_attention(rng, "fuse")
        for i in range(cfg.n_encoder_layers):
            self._add_attention(rng, f"enc.{i}.attn")
            self._add_ln(f"enc.{i}.ln1", d)
            self._add_ffn(rng, f"enc.{i}.ffn")
            self._add_ln(f"enc.{i}.ln2", d)
        self._add_ln("enc.ln", d)
        self.params["slots"] = Tensor(
            rng.normal(0.0, 0.02, size=(cfg.max_fixations, d)), requires_grad=True
        )
        for i in range(cfg.n_decoder_layers):
            self._add_attention(rng, f"dec.{i}.self")
            self._add_ln(f"dec.{i}.ln1", d)
            self._add_attention(rng, f"dec.{i}.cross")
            self._add_ln(f"dec.{i}.ln2", d)
            self._add_ffn(rng, f"dec.{i}.ffn")
            self._add_ln(f"dec.{i}.ln3", d)
        self._add_ln("dec.ln", d)
        self._add_weight(rng, "head.w", d, 7)
        # Start near screen center, 150 ms, undecided validity, ~0.05 spread.
        self._add_bias("head.b", 7, (0.5, 0.5, 0.15, 0.0, -3.0, -3.0, -3.0))

    def set_training(self, flag: bool) -> None:
        """Enable dropout; inference-time calls should leave this off."""
        self._training = bool(flag)

    # ------------------------------------------------------------------
    # Forward pieces

    def _maybe_drop(self, x: Tensor) -> Tensor:
        p = self.cfg.dropout
        if not self._training or p <= 0.0:
            return x
        keep = (self._drop_rng.random(x.shape) >= p).astype(np.float64)
        return ad.mul(x, keep / (1.0 - p))

    def _ln(self, prefix: str, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.params[f"{prefix}.g"], self.params[f"{prefix}.b"])

    def _mha(
        self,
        prefix: str,
        q_in: Tensor,
        kv_in: Tensor,
        bias: Optional[np.ndarray],
        return_weights: bool = False,
    ):
        cfg = self.cfg
        heads, dh = cfg.n_heads, cfg.d_model // cfg.n_heads
        p = self.params
        q = ad.add(ad.matmul(q_in, p[f"{prefix}.wq"]), p[f"{prefix}.bq"])
        k = ad.add(ad.matmul(kv_in, p[f"{prefix}.wk"]), p[f"{prefix}.bk"])
        v = ad.add(ad.matmul(kv_in, p[f"{prefix}.wv"]), p[f"{prefix}.bv"])
        b, tq, tk = q.shape[0], q.shape[1], kv_in.shape[1]

        def split(t: Tensor, length: int) -> Tensor:
            return ad.transpose(ad.reshape(t, (b, length, heads, dh)), (0, 2, 1, 3))

        scores = ad.mul(
            ad.matmul(split(q, tq), ad.transpose(split(k, tk), (0, 1, 3, 2))),
            1.0 / math.sqrt(dh),
        )
        if bias is not None:
            scores = ad.add(scores, bias)
        weights = ad.softmax(scores, axis=-1)
        ctx = ad.reshape(
            ad.transpose(ad.matmul(weights, split(v, tk)), (0, 2, 1, 3)), (b, tq, cfg.d_model)
        )
        out = self._maybe_drop(
            ad.add(ad.matmul(ctx, p[f"{prefix}.wo"]), p[f"{prefix}.bo"])
        )
        if return_weights:
            return out, weights.data
        return out

    def _ffn(self, prefix: str, x: Tensor) -> Tensor:
        p = self.params
        hidden = ad.relu(ad.add(ad.matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
        return self._maybe_drop(
            ad.add(ad.matmul(hidden, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])
        )

    def _features(
        self, log: KeypressLog, geom: ScreenGeometry
    ) -> tuple[np.ndarray, np.ndarray]:
        """(max_taps, 3) normalized features and the real-tap mask."""
        log.validate()
        n = len(log.taps)
        if n > self.cfg.max_taps:
            raise ValueError(
                f"trial {log.trial_id!r}: {n} taps exceed max_taps="
                f"{self.cfg.max_taps}; split the log into chunks first"
            )
        feats = np.zeros((self.cfg.max_taps, 3), dtype=np.float64)
        mask = np.zeros(self.cfg.max_taps, dtype=bool)
        ikis = [0.0] + interkey_intervals(log)
        for i, tap in enumerate(log.taps):
            feats[i, 0] = tap.x / geom.width
            feats[i, 1] = tap.y / geom.height
            feats[i, 2] = ikis[i] / 1000.0
            mask[i] = True
        return feats, mask

    def _embed(self, feats: np.ndarray, mask: np.ndarray) -> Tensor:
        """(B, T, 3) constants to (B, T, d) tokens; padded rows zeroed."""
        x = ad.add(
            ad.add(ad.matmul(Tensor(feats), self.params["embed.w"]), self.params["embed.b"]),
            self._pe[None, :, :],
        )
        return ad.mul(x, mask[:, :, None].astype(np.float64))

    @staticmethod
    def _attention_bias(mask: np.ndarray) -> np.ndarray:
        """(B, 1, 1, T) additive bias excluding padded keys."""
        return np.where(mask, 0.0, -1e9)[:, None, None, :]

    def _fuse(
        self,
        features: Tensor,
        thetas: np.ndarray,
        bias: np.ndarray,
        return_weights: bool = False,
    ):
        """Read the tap sequence once with theta as the query, add residually."""
        b = features.shape[0]
        q = ad.reshape(
            ad.add(
                ad.matmul(Tensor(thetas), self.params["fuse.theta_w"]),
                self.params["fuse.theta_b"],
            ),
            (b, 1, self.cfg.d_model),
        )
        if return_weights:
            ctx, weights = self._mha("fuse", q, features, bias, return_weights=True)
            return ad.add(features, ctx), weights
        return ad.add(features, self._mha("fuse", q, features, bias))

    def _encode(self, x: Tensor, bias: np.ndarray) -> Tensor:
        for i in range(self.cfg.n_encoder_layers):
            h = self._ln(f"enc.{i}.ln1", x)
            x = ad.add(x, self._mha(f"enc.{i}.attn", h, h, bias))
            x = ad.add(x, self._ffn(f"enc.{i}.ffn", self._ln(f"enc.{i}.ln2", x)))
        return self._ln("enc.ln", x)

    def _decode(self, memory: Tensor, bias: np.ndarray) -> Tensor:
        b = memory.shape[0]
        n, d = self.cfg.max_fixations, self.cfg.d_model
        x = ad.add(ad.reshape(self.params["slots"], (1, n, d)), np.zeros((b, 1, 1)))
        for i in range(self.cfg.n_decoder_layers):
            h = self._ln(f"dec.{i}.ln1", x)
            x = ad.add(x, self._mha(f"dec.{i}.self", h, h, None))
            h = self._ln(f"dec.{i}.ln2", x)
            x = ad.add(x, self._mha(f"dec.{i}.cross", h, memory, bias))
            x = ad.add(x, self._ffn(f"dec.{i}.ffn", self._ln(f"dec.{i}.ln3", x)))
        return self._ln("dec.ln", x)

    def forward_raw(
        self,
        logs: Sequence[KeypressLog],
        thetas: Optional[Sequence[HumanParams]],
        geom: ScreenGeometry = DEFAULT_GEOMETRY,
    ) -> Tensor:
        """Batched raw head outputs, shape (len(logs), N, 7)."""
        if not logs:
            raise ValueError("empty batch")
        rows = [self._features(log, geom) for log in logs]
        feats = np.stack([r[0] for r in rows])
        mask = np.stack([r[1] for r in rows])
        bias = self._attention_bias(mask)
        x = self._embed(feats, mask)
        if self.cfg.use_param_inference:
            if thetas is None or any(t is None for t in thetas):
                raise ValueError(
                    "use_param_inference=True needs a HumanParams per trial"
                )
            theta_arr = np.array([t.as_tuple() for t in thetas], dtype=np.float64)
            x = self._fuse(x, theta_arr, bias)
        memory = self._encode(x, bias)
        decoded = self._decode(memory, bias)
        return ad.add(ad.matmul(decoded, self.params["head.w"]), self.params["head.b"])

    # ------------------------------------------------------------------
    # Public single-trial operations

    def encode_taps(
        self, log: KeypressLog, geom: ScreenGeometry = DEFAULT_GEOMETRY
    ) -> tuple[Tensor, np.ndarray]:
        """Embed one log: ((max_taps, d_model) features, real-tap mask)."""
        feats, mask = self._features(log, geom)
        return self._embed(feats[None], mask[None])[0], mask

    def fuse_params(
        self,
        tap_features: Tensor,
        theta: HumanParams,
        mask: Optional[np.ndarray] = None,
        return_weights: bool = False,
    ):
        """Mix theta into a (max_taps, d_model) feature sequence.

        Identity (the input tensor itself) when use_param_inference is off.
        """
        if not self.cfg.use_param_inference:
            return (tap_features, None) if return_weights else tap_features
        if mask is None:
            mask = np.ones(tap_features.shape[0], dtype=bool)
        lifted = ad.reshape(tap_features, (1, *tap_features.shape))
        theta_arr = np.array([theta.as_tuple()], dtype=np.float64)
        out = self._fuse(lifted, theta_arr, self._attention_bias(mask[None]), return_weights)
        if return_weights:
            return out[0][0], out[1][0]
        return out[0]

    def infer_scanpath(
        self,
        fused: Tensor,
        mask: np.ndarray,
        trial_id: str = "pred",
        geom: ScreenGeometry = DEFAULT_GEOMETRY,
        mode: str = "mean",
        seed=None,
    ) -> ScanpathInference:
        """Encode, decode, and threshold one fused (max_taps, d_model) trial.

        Deterministic in "mean" mode; "sample" draws positions and durations
        from the per-slot Gaussians with the given seed. Positions are
        de-normalized and clamped in-screen, durations clamped positive, so
        the decoded scanpath always satisfies its invariants. When every
        validity logit is below threshold the result is a single slot-0
        fixation flagged degenerate.
        """
        if mode not in ("mean", "sample"):
            raise ValueError(f"unknown decode mode {mode!r}")
        bias = self._attention_bias(mask[None])
        lifted = ad.reshape(fused, (1, *fused.shape))
        decoded = self._decode(self._encode(lifted, bias), bias)
        raw3 = ad.add(ad.matmul(decoded, self.params["head.w"]), self.params["head.b"])
        raw = raw3[0]
        pred = FixationPrediction.from_raw(raw)
        length = pred.decoded_length()
        degenerate = length == 0
        if degenerate:
            length = 1

        mu_x = pred.mu_x.data[:length]
        mu_y = pred.mu_y.data[:length]
        dur_s = pred.dur.data[:length]
        if mode == "sample":
            rng = np.random.default_rng(seed)
            mu_x = mu_x + pred.sigma_x.data[:length] * rng.standard_normal(length)
            mu_y = mu_y + pred.sigma_y.data[:length] * rng.standard_normal(length)
            dur_s = dur_s + pred.sigma_dur.data[:length] * rng.standard_normal(length)
        xs = np.clip(mu_x * geom.width, 0.0, geom.width)
        ys = np.clip(mu_y * geom.height, 0.0, geom.height)
        durs = np.maximum(dur_s * 1000.0, _MIN_DECODED_MS)
        onsets = np.concatenate(([0.0], np.cumsum(durs)[:-1]))
        fixations = tuple(
            Fixation(float(x), float(y), float(d), onset_ms=float(o))
            for x, y, d, o in zip(xs, ys, durs, onsets)
        )
        return ScanpathInference(
            prediction=pred,
            scanpath=Scanpath(trial_id=trial_id, fixations=fixations),
            degenerate=degenerate,
        )

    def _infer_chunk(
        self,
        log: KeypressLog,
        theta: Optional[HumanParams],
        geom: ScreenGeometry,
        mode: str,
        seed,
    ) -> ScanpathInference:
        features, mask = self.encode_taps(log, geom)
        if self.cfg.use_param_inference:
            if theta is None:
                raise ValueError(
                    f"trial {log.trial_id!r}: use_param_inference=True needs theta"
                )
            features = self.fuse_params(features, theta, mask)
        return self.infer_scanpath(features, mask, log.trial_id, geom, mode, seed)

    def predict(
        self,
        log: KeypressLog,
        theta: Optional[HumanParams] = None,
        geom: ScreenGeometry = DEFAULT_GEOMETRY,
        mode: str = "mean",
        seed: Optional[int] = None,
    ) -> ScanpathInference:
        """End-to-end inference for one keypress log of any length.

        Logs beyond max_taps are split into max_taps-sized chunks that
        overlap by CHUNK_OVERLAP_TAPS taps. Each chunk is predicted on its
        own clock and shifted by its first tap's offset from the trial's
        first tap; inside an overlap the later chunk's fixations win.
        """
        log.validate()
        n = len(log.taps)
        if n <= self.cfg.max_taps:
            return self._infer_chunk(log, theta, geom, mode, seed)

        stride = self.cfg.max_taps - CHUNK_OVERLAP_TAPS
        starts = [0]
        while starts[-1] + self.cfg.max_taps < n:
            starts.append(starts[-1] + stride)
        t0 = log.taps[0].time_ms
        stitched: list[Fixation] = []
        first_pred: Optional[FixationPrediction] = None
        degenerate = False
        for ci, start in enumerate(starts):
            chunk = replace(log, taps=log.taps[start : start + self.cfg.max_taps])
            chunk_seed = None if seed is None else np.random.SeedSequence((seed, ci))
            res = self._infer_chunk(chunk, theta, geom, mode, chunk_seed)
            if first_pred is None:
                first_pred = res.prediction
            degenerate = degenerate or res.degenerate
            delta = chunk.taps[0].time_ms - t0
            cut = (
                log.taps[starts[ci + 1]].time_ms - t0
                if ci + 1 < len(starts)
                else math.inf
            )
            for fix, onset in zip(res.scanpath.fixations, res.scanpath.onsets()):
                if onset + delta >= cut:
                    break
                stitched.append(
                    Fixation(fix.x, fix.y, fix.duration_ms, onset_ms=onset + delta)
                )
        return ScanpathInference(
            prediction=first_pred,
            scanpath=Scanpath(trial_id=log.trial_id, fixations=tuple(stitched)),
            degenerate=degenerate,
            n_chunks=len(starts),
        )

    # ------------------------------------------------------------------
    # Persistence

    def save(self, path, state: Optional[OptimizerState] = None) -> None:
        """Write parameters (and optionally optimizer state) to a checkpoint."""
        cfg = self.cfg
        meta = {
            "format": "scanpath-model",
            "config": {
                "d_model": cfg.d_model,
                "n_heads": cfg.n_heads,
                "n_encoder_layers": cfg.n_encoder_layers,
                "n_decoder_layers": cfg.n_decoder_layers,
                "max_fixations": cfg.max_fixations,
                "max_taps": cfg.max_taps,
                "dropout": cfg.dropout,
                "loss_switches": {
                    "sim": cfg.loss_switches.sim,
                    "len": cfg.loss_switches.len,
                    "f": cfg.loss_switches.f,
                    "v": cfg.loss_switches.v,
                },
                "use_param_inference": cfg.use_param_inference,
                "seed": cfg.seed,
            },
        }
        ad.save_checkpoint(path, self.params, state=state, meta=meta)

    @classmethod
    def load(cls, path) -> tuple["ScanpathModel", Optional[OptimizerState]]:
        """Rebuild a model from a checkpoint written by save()."""
        arrays, state, meta = ad.load_checkpoint(path)
        if meta.get("format") != "scanpath-model":
            raise ValueError(f"{path}: not a scanpath model checkpoint")
        raw_cfg = dict(meta["config"])
        raw_cfg["loss_switches"] = LossSwitches(**raw_cfg["loss_switches"])
        model = cls(ModelConfig(**raw_cfg))
        if set(arrays) != set(model.params):
            missing = sorted(set(model.params) - set(arrays))
            extra = sorted(set(arrays) - set(model.params))
            raise ValueError(
                f"{path}: parameter names mismatch (missing {missing}, extra {extra})"
            )
        for name, arr in arrays.items():
            if arr.shape != model.params[name].shape:
                raise ValueError(
                    f"{path}: parameter {name!r} shape {arr.shape} != "
                    f"{model.params[name].shape}"
                )
            model.params[name] = Tensor(arr, requires_grad=True)
        return model, state
