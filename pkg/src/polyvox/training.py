"""Two-stage training: momentum-SGD pretraining on short chunks, then
adaptive-moment finetuning on full sentences, with class-weighted loss and
seeded determinism throughout.

Stage defaults follow the experimental recipe: stage 1 uses SGD with batch
32, learning rate 0.1, momentum 0.75 on utterances of at most 800 frames
split into parts of at most 200 frames; stage 2 uses the adaptive-moment
optimizer with batch 64, learning rate 1e-4 and decay rates (0.9, 0.98).
Stage lengths are step counts (corpus sizes vary per strategy, so epochs
would not be comparable) and default to desk-scale values.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acoustic import AcousticModel
from .corpus import Utterance, UtterancePart, chunk_for_pretraining, part_from_utterance
from .tensor import Tensor, backward, record
from .weighting import SampleWeights


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class StageConfig:
    optimizer: str                # "sgd" or "adam"
    steps: int
    batch_size: int
    learning_rate: float
    momentum: float = 0.0         # sgd only
    beta1: float = 0.9            # adam only
    beta2: float = 0.98
    epsilon: float = 1e-8

    def to_dict(self) -> dict:
        return {
            "optimizer": self.optimizer, "steps": self.steps,
            "batch_size": self.batch_size, "learning_rate": self.learning_rate,
            "momentum": self.momentum, "beta1": self.beta1, "beta2": self.beta2,
            "epsilon": self.epsilon,
        }


@dataclass(frozen=True)
class TrainPlan:
    """Both stage recipes plus the run seed."""

    stage1: StageConfig = field(default_factory=lambda: StageConfig(
        optimizer="sgd", steps=1000, batch_size=32, learning_rate=0.1, momentum=0.75))
    stage2: StageConfig = field(default_factory=lambda: StageConfig(
        optimizer="adam", steps=1000, batch_size=64, learning_rate=1e-4,
        beta1=0.9, beta2=0.98))
    seed: int = 0
    max_sentence_frames: int = 800
    max_part_frames: int = 200
    grad_clip_norm: float = 1.0   # safety net, not part of the published recipe
    divergence_factor: float = 10.0
    divergence_patience: int = 100

    def to_dict(self) -> dict:
        return {
            "stage1": self.stage1.to_dict(), "stage2": self.stage2.to_dict(),
            "seed": self.seed,
            "max_sentence_frames": self.max_sentence_frames,
            "max_part_frames": self.max_part_frames,
            "grad_clip_norm": self.grad_clip_norm,
        }


def config_hash(model_config_dict: dict, plan: TrainPlan) -> str:
    """Stable digest over everything that determines the run."""
    payload = json.dumps({"model": model_config_dict, "plan": plan.to_dict()},
                         sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class TrainLog:
    """Append-only per-step records plus run metadata."""

    stage: str
    seed: int
    config_hash: str
    stage_config: dict
    records: list[dict] = field(default_factory=list)

    def append(self, step: int, loss: float, per_class: dict[str, float],
               wall: float) -> None:
        self.records.append({"step": step, "stage": self.stage, "loss": loss,
                             "per_class": per_class, "wall": wall})

    def losses(self) -> list[float]:
        return [r["loss"] for r in self.records]

    def write_jsonl(self, path: str | Path, append: bool = False) -> None:
        mode = "a" if append else "w"
        with open(path, mode, encoding="utf-8") as fh:
            meta = {"meta": True, "stage": self.stage, "seed": self.seed,
                    "config_hash": self.config_hash, "stage_config": self.stage_config}
            fh.write(json.dumps(meta) + "\n")
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")


class MomentumSGD:
    """v <- momentum * v + g;  p <- p - lr * v"""

    def __init__(self, learning_rate: float, momentum: float = 0.0):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self._velocity: dict[int, np.ndarray] = {}

    def step(self, params: dict[str, Tensor], grads: dict[Tensor, np.ndarray]) -> None:
        for tensor in params.values():
            g = grads[tensor]
            v = self._velocity.get(id(tensor))
            if v is None:
                v = np.zeros_like(tensor.data)
                self._velocity[id(tensor)] = v
            v *= self.momentum
            v += g
            tensor.data -= (self.learning_rate * v).astype(tensor.dtype, copy=False)


class Adam:
    """Adaptive-moment estimation with bias correction."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.98,
                 epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}
        self._t = 0

    def step(self, params: dict[str, Tensor], grads: dict[Tensor, np.ndarray]) -> None:
        self._t += 1
        b1t = 1.0 - self.beta1 ** self._t
        b2t = 1.0 - self.beta2 ** self._t
        for tensor in params.values():
            g = grads[tensor].astype(np.float64, copy=False)
            m = self._m.get(id(tensor))
            if m is None:
                m = np.zeros(tensor.shape, dtype=np.float64)
                v = np.zeros(tensor.shape, dtype=np.float64)
                self._m[id(tensor)] = m
                self._v[id(tensor)] = v
            else:
                v = self._v[id(tensor)]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / b1t) / (np.sqrt(v / b2t) + self.epsilon)
            tensor.data -= (self.learning_rate * update).astype(tensor.dtype, copy=False)


def make_optimizer(stage: StageConfig):
    if stage.optimizer == "sgd":
        return MomentumSGD(stage.learning_rate, stage.momentum)
    if stage.optimizer == "adam":
        return Adam(stage.learning_rate, stage.beta1, stage.beta2, stage.epsilon)
    raise ValueError(f"unknown optimizer {stage.optimizer!r}")


def clip_gradients(grads: dict[Tensor, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class _BatchSampler:
    """Seeded epoch shuffling; yields index batches in a reproducible order."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._order: list[int] = []

    def next_batch(self) -> list[int]:
        while len(self._order) < self.batch_size:
            self._order.extend(self.rng.permutation(self.n).tolist())
        batch, self._order = self._order[:self.batch_size], self._order[self.batch_size:]
        return batch


def _run_stage(model: AcousticModel, samples: list[UtterancePart], stage: StageConfig,
               stage_name: str, seed: int, weights: SampleWeights | None,
               grad_clip_norm: float, divergence_factor: float,
               divergence_patience: int, cfg_hash: str,
               progress: bool = False) -> TrainLog:
    if not samples:
        raise ValueError(f"{stage_name}: no training samples")
    rng = np.random.default_rng(seed)
    sampler = _BatchSampler(len(samples), stage.batch_size, rng)
    optimizer = make_optimizer(stage)
    params = model.parameters()
    param_list = list(params.values())
    log = TrainLog(stage=stage_name, seed=seed, config_hash=cfg_hash,
                   stage_config=stage.to_dict())
    initial_loss = None
    bad_streak = 0
    t0 = time.monotonic()
    for step in range(stage.steps):
        batch = [samples[i] for i in sampler.next_batch()]
        with record() as tape:
            loss, diag = model.teacher_forced_loss(batch, weights)
        grads = backward(loss, tape, param_list)
        clip_gradients(grads, grad_clip_norm)
        optimizer.step(params, grads)
        value = float(loss.data)
        if initial_loss is None:
            initial_loss = value
        if value > divergence_factor * initial_loss:
            bad_streak += 1
            if bad_streak >= divergence_patience:
                raise TrainingDiverged(
                    f"{stage_name}: loss {value:.4g} above {divergence_factor}x initial "
                    f"({initial_loss:.4g}) for {bad_streak} consecutive steps")
        else:
            bad_streak = 0
        per_class: dict[str, list[float]] = {}
        for d in diag["samples"]:
            per_class.setdefault(f"{d['speaker']}/{d['language']}", []).append(d["loss"])
        class_means = {k: float(np.mean(v)) for k, v in sorted(per_class.items())}
        log.append(step, value, class_means, time.monotonic() - t0)
        if progress and (step % 50 == 0 or step == stage.steps - 1):
            print(f"[{stage_name}] step {step + 1}/{stage.steps} loss {value:.5f}")
    return log


def pretraining_parts(utterances: list[Utterance], plan: TrainPlan) -> list[UtterancePart]:
    parts: list[UtterancePart] = []
    for utt in utterances:
        parts.extend(chunk_for_pretraining(utt, plan.max_sentence_frames,
                                           plan.max_part_frames))
    return parts


def pretrain(model: AcousticModel, utterances: list[Utterance], plan: TrainPlan,
             weights: SampleWeights | None = None, progress: bool = False) -> TrainLog:
    """Stage 1: momentum SGD over chunked parts of short sentences."""
    parts = pretraining_parts(utterances, plan)
    cfg_hash = config_hash(model.config.to_dict(), plan)
    return _run_stage(model, parts, plan.stage1, "pretrain", plan.seed, weights,
                      plan.grad_clip_norm, plan.divergence_factor,
                      plan.divergence_patience, cfg_hash, progress)


def finetune(model: AcousticModel, utterances: list[Utterance], plan: TrainPlan,
             weights: SampleWeights | None = None, progress: bool = False) -> TrainLog:
    """Stage 2: adaptive-moment updates over full sentences."""
    samples = [part_from_utterance(u) for u in utterances]
    cfg_hash = config_hash(model.config.to_dict(), plan)
    # distinct stream from stage 1 so "both" runs do not reuse batch orders
    return _run_stage(model, samples, plan.stage2, "finetune", plan.seed + 1, weights,
                      plan.grad_clip_norm, plan.divergence_factor,
                      plan.divergence_patience, cfg_hash, progress)


def train_two_stage(model: AcousticModel, utterances: list[Utterance], plan: TrainPlan,
                    weights: SampleWeights | None = None,
                    progress: bool = False) -> tuple[TrainLog, TrainLog]:
    log1 = pretrain(model, utterances, plan, weights, progress)
    log2 = finetune(model, utterances, plan, weights, progress)
    return log1, log2
