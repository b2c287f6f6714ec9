"""Losses, Adam with coupled L2, and the epoch loop with best-model selection."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .metrics import evaluate
from .model import ModelConfig, SdMvSumParams, forward_graph, init_params
from .numerics import Graph

log = logging.getLogger(__name__)

BCE_CLAMP = 1e-7


class TrainingError(RuntimeError):
    pass


class DivergenceError(TrainingError):
    def __init__(self, epoch, loss):
        super().__init__(f"non-finite training loss {loss} at epoch {epoch}")
        self.epoch = epoch


# --------------------------------------------------------------------------
# losses (graph ops, so they can be differentiated)


def _as_target(pred, target):
    if np.size(target) != pred.value.size:
        raise ValueError(f"length mismatch: {pred.value.size} predictions vs {np.size(target)} targets")
    return np.asarray(target, dtype=pred.graph.dtype).reshape(pred.shape)


def bce_loss(pred: nx.Tensor, target) -> nx.Tensor:
    """Mean binary cross-entropy; predictions clamped to [1e-7, 1-1e-7]."""
    t = _as_target(pred, target)
    p = pred.value
    pc = np.clip(p, BCE_CLAMP, 1 - BCE_CLAMP)
    n = p.size
    loss = -(t * np.log(pc) + (1 - t) * np.log(1 - pc)).mean()
    inside = (p > BCE_CLAMP) & (p < 1 - BCE_CLAMP)

    def back(g):
        return (g * inside * (pc - t) / (pc * (1 - pc)) / n,)

    return pred.graph.record(np.asarray(loss, dtype=pred.graph.dtype).reshape(1, 1), (pred,), back)


def mse_loss(pred: nx.Tensor, target) -> nx.Tensor:
    t = _as_target(pred, target)
    diff = pred.value - t
    n = diff.size

    def back(g):
        return (g * 2 * diff / n,)

    return pred.graph.record(np.asarray((diff * diff).mean(), dtype=pred.graph.dtype).reshape(1, 1), (pred,), back)


LOSSES = {"bce": bce_loss, "mse": mse_loss}


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, tensors):
        return cls({k: np.zeros_like(v) for k, v in tensors.items()},
                   {k: np.zeros_like(v) for k, v in tensors.items()})


def adam_step(params, grads, state: AdamState, lr, weight_decay=0.0):
    """In-place Adam update of the ``params`` dict; L2 term added to the gradient."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.step
    c2 = 1 - b2 ** state.step
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise nx.DimensionError(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        g = g + weight_decay * theta
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        theta -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(theta.dtype)
    return params, state


# --------------------------------------------------------------------------
# loop


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "bce"
    epochs: int = 50
    batch_size: int = 4
    lr: float = 5e-5
    weight_decay: float = 1e-4
    seed: int = 0
    protocol: str = "multi-gt"
    fraction: float = 0.15
    train_split: str = "train"
    val_split: str = "val"

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {sorted(LOSSES)}, got {self.loss!r}")
        if self.lr < 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("lr must be >= 0, batch_size >= 1, epochs >= 1")


@dataclass
class TrainResult:
    best: SdMvSumParams
    best_epoch: int
    best_metric: float
    history: list[dict] = field(default_factory=list)
    final: SdMvSumParams | None = None

    def history_jsonl(self):
        return "".join(json.dumps(h, sort_keys=True) + "\n" for h in self.history)


def sample_target(gt, loss):
    if loss == "mse":
        if gt.frame_importance is None:
            raise TrainingError(f"ground truth {gt.script_id}: MSE needs frame importance scores")
        return gt.frame_importance
    return gt.summary_mask


def sample_grads(params: SdMvSumParams, frames, script, transcripts, target, loss="bce",
                 training=True, rng=None, dtype=np.float32):
    """Loss value and parameter gradients of a single (video, script) sample."""
    g = Graph(dtype)
    t = {k: g.param(k, v) for k, v in params.tensors.items()}
    scores = forward_graph(g, t, params.config, frames, script, transcripts, training, rng)
    loss_t = LOSSES[loss](scores, target)
    return float(loss_t.value[0, 0]), g.backward(loss_t)


def train(corpus, train_cfg: TrainConfig, model_cfg: ModelConfig | None = None,
          init: SdMvSumParams | None = None) -> TrainResult:
    """Per-sample gradients averaged over mini-batches, Adam, best validation F kept."""
    if model_cfg is None:
        model_cfg = init.config if init is not None else ModelConfig(dim=corpus.dim)
    if model_cfg.dim != corpus.dim:
        raise TrainingError(f"model dim {model_cfg.dim} != corpus dim {corpus.dim}")
    samples = corpus.samples(train_cfg.train_split)
    if not samples:
        raise TrainingError(f"split {train_cfg.train_split!r} has no training samples")
    if not corpus.split(train_cfg.val_split):
        raise TrainingError(f"split {train_cfg.val_split!r} is empty")

    params = init.copy() if init is not None else init_params(model_cfg, train_cfg.seed)
    rng = np.random.default_rng(train_cfg.seed)
    state = AdamState.zeros_like(params.tensors)
    use_tr = model_cfg.use_transcript_branch
    transcripts = {v.video_id: corpus.expanded_transcripts(v.video_id) for v, _, _ in samples} if use_tr else {}

    best, best_epoch, best_metric = params.copy(), 0, -math.inf
    history = []
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(samples))
        losses = []
        for lo in range(0, len(order), train_cfg.batch_size):
            batch = order[lo:lo + train_cfg.batch_size]
            acc = None
            for i in batch:
                video, script, gt = samples[i]
                value, grads = sample_grads(
                    params, video.frames, script.sentences, transcripts.get(video.video_id),
                    sample_target(gt, train_cfg.loss), train_cfg.loss, True, rng,
                )
                if not math.isfinite(value):
                    raise DivergenceError(epoch, value)
                losses.append(value)
                if acc is None:
                    acc = {k: g.astype(np.float64) for k, g in grads.items()}
                else:
                    for k, g in grads.items():
                        acc[k] += g
            mean = {k: (g / len(batch)).astype(np.float32) for k, g in acc.items()}
            adam_step(params.tensors, mean, state, train_cfg.lr, train_cfg.weight_decay)

        report = evaluate(params, corpus, train_cfg.protocol, train_cfg.val_split, train_cfg.fraction)
        rec = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_f": report.f_score,
            "val_tau": report.tau,
            "val_rho": report.rho,
        }
        history.append(rec)
        log.info("epoch %d loss %.5f val F %.4f", epoch, rec["train_loss"], rec["val_f"])
        if report.f_score > best_metric:
            best, best_epoch, best_metric = params.copy(), epoch, report.f_score
    return TrainResult(best, best_epoch, best_metric, history, params)
