"""Loss, optimiser, training loop and the scorer adapter used by the task runners."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .._rng import child_seed
from ..priors import PriorsGraph
from ..sgm import SceneGraphMemory
from . import tensor as T
from .model import ModelConfig, Sample, as_tensors, forward_logits, init_params, make_batch, samples_from_memory


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 25
    batch_size: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("learning_rate and epochs must be >= 0, batch_size >= 1")


def class_weights(labels: np.ndarray) -> np.ndarray:
    """1 for true edges; n_true / n_false for false edges (1 when there are no false edges)."""
    y = np.asarray(labels, dtype=bool)
    n_true, n_false = int(y.sum()), int((~y).sum())
    ratio = n_true / n_false if n_false else 1.0
    return np.where(y, 1.0, ratio)


def bce_loss(probabilities, labels) -> float:
    """Reweighted binary cross-entropy on probabilities clamped to [1e-7, 1-1e-7]."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if p.shape != y.shape:
        raise ValueError("probabilities and labels differ in length")
    if p.size == 0:
        raise ValueError("loss of an empty batch")
    p = np.clip(p, T.PROB_CLAMP, 1.0 - T.PROB_CLAMP)
    per = -np.where(y, np.log(p), np.log1p(-p))
    return float(np.mean(class_weights(y) * per))


def batch_loss(P: dict, batch, cfg: ModelConfig) -> T.Tensor:
    if batch.labels is None:
        raise ValueError("training batch without labels")
    logits = forward_logits(P, batch, cfg)
    return T.weighted_bce_with_logits(logits, batch.labels, class_weights(batch.labels))


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def backward_and_step(params: dict[str, np.ndarray], config: TrainConfig, samples: list[Sample],
                      model_cfg: ModelConfig, state: AdamState) -> float:
    """One Adam update in place; returns the batch loss before the update."""
    P = as_tensors(params, requires_grad=True)
    loss = batch_loss(P, make_batch(samples, model_cfg), model_cfg)
    value = float(loss.data)
    if not math.isfinite(value):
        worst = max(params, key=lambda k: float(np.max(np.abs(params[k]))))
        raise FloatingPointError(f"non-finite loss {value} at step {state.step}; "
                                 f"largest parameter magnitude in {worst!r}")
    loss.backward()
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    for k, p in P.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.get(k, np.zeros_like(g))
        v = state.v.get(k, np.zeros_like(g))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[k], state.v[k] = m, v
        m_hat = m / (1 - b1 ** state.step)
        v_hat = v / (1 - b2 ** state.step)
        params[k] = params[k] - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return value


def gradients(params: dict[str, np.ndarray], samples: list[Sample], model_cfg: ModelConfig) -> tuple[float, dict]:
    P = as_tensors(params, requires_grad=True)
    loss = batch_loss(P, make_batch(samples, model_cfg), model_cfg)
    loss.backward()
    return float(loss.data), {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in P.items()}


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    epoch_loss: list[float]
    step_loss: list[float]


def train(groups: list[list[Sample]], config: TrainConfig, model_cfg: ModelConfig,
          params: dict[str, np.ndarray] | None = None) -> TrainResult:
    """Train on SGM-level groups of samples; each batch holds ``batch_size`` SGMs."""
    if not groups:
        raise ValueError("empty dataset")
    for g in groups:
        for s in g:
            if s.labels is None:
                raise ValueError("dataset without labels")
    params = init_params(model_cfg, config.seed) if params is None else {k: v.copy() for k, v in params.items()}
    state = AdamState()
    epoch_loss, step_loss = [], []
    for epoch in range(config.epochs):
        order = np.random.default_rng(child_seed(config.seed, "shuffle", epoch)).permutation(len(groups))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [s for i in order[start:start + config.batch_size] for s in groups[int(i)]]
            if not batch:
                continue
            losses.append(backward_and_step(params, config, batch, model_cfg, state))
        step_loss.extend(losses)
        epoch_loss.append(float(np.mean(losses)))
    return TrainResult(params, epoch_loss, step_loss)


def groups_from_records(records: list[dict], priors: PriorsGraph, model_cfg: ModelConfig,
                        embedding=None) -> list[list[Sample]]:
    """Featurise every dataset record; one group per stored memory snapshot."""
    groups = []
    for n, r in enumerate(records):
        m = SceneGraphMemory.from_dict(r["memory"], priors, embedding)
        groups.append(samples_from_memory(m, model_cfg, r["query_ids"], r["t"], with_labels=True, group=n))
    return groups


def loss_trace_csv(result: TrainResult) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["epoch", "mean_loss"])
    for i, v in enumerate(result.epoch_loss, start=1):
        w.writerow([i, repr(float(v))])
    return out.getvalue()


@dataclass
class NEPScorer:
    """Scores query candidates with a trained model; plugs into the task runners."""

    params: dict
    model_cfg: ModelConfig

    def __call__(self, m: SceneGraphMemory, env, query_id, candidates, seed: int):
        samples = samples_from_memory(m, self.model_cfg, [query_id])
        if not samples:
            raise ValueError(f"query {query_id!r} has no candidates")
        s = samples[0]
        batch = make_batch([s], self.model_cfg)
        probs = T._sigmoid(forward_logits(as_tensors(self.params), batch, self.model_cfg).data)
        by_key = dict(zip(s.keys, probs.tolist()))
        return [(k, by_key[k]) for k in candidates]
