"""Training loop, evaluation and checkpoints for the toy transduction task."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import model as m
from .estimator import MonotonicSeq2Seq, token_accuracy
from .numkit import SeededRng
from .task import TaskSpec, generate_task, sample_pairs

log = logging.getLogger(__name__)

METRIC_FIELDS = ("step", "loss", "token_acc_soft", "token_acc_hard", "seq_acc", "agreement")


@dataclass
class TrainConfig:
    vocab_size: int = 20
    task_seed: int = 0
    len_range: tuple = (5, 20)
    energy: str = "modified"
    embed_dim: int = 32
    hidden_dim: int = 64
    decoder_dim: int = 64
    attention_dim: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 2.0
    batch_size: int = 16
    max_steps: int = 20000
    noise_std: float = 1.0
    tau: float = 0.5
    eps: float = 1e-10
    denom_mode: str = "clamped"
    r_init: float = -2.0
    init_scale: float = 0.1
    eval_interval: int = 500
    n_eval: int = 100
    # stop once soft and hard token accuracy on the eval set both reach this
    stop_accuracy: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        self.len_range = tuple(int(x) for x in self.len_range)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        if self.max_steps < 0 or self.eval_interval < 1 or self.batch_size < 1:
            raise ValueError("max_steps >= 0, eval_interval >= 1 and batch_size >= 1 are required")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["len_range"] = list(self.len_range)
        return d

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def estimator(self) -> MonotonicSeq2Seq:
        return MonotonicSeq2Seq(
            energy=self.energy, n_inputs=self.vocab_size, n_outputs=self.vocab_size,
            embed_dim=self.embed_dim, hidden_dim=self.hidden_dim, decoder_dim=self.decoder_dim,
            attention_dim=self.attention_dim, learning_rate=self.learning_rate, beta1=self.beta1,
            beta2=self.beta2, adam_eps=self.adam_eps, clip_norm=self.clip_norm,
            batch_size=self.batch_size, max_steps=self.max_steps, noise_std=self.noise_std,
            tau=self.tau, eps=self.eps, denom_mode=self.denom_mode, r_init=self.r_init,
            init_scale=self.init_scale, random_state=self.seed,
        )


@dataclass
class ModelCheckpoint:
    params: dict
    task: TaskSpec
    config: TrainConfig
    step: int
    rng_state: dict = field(default_factory=dict)

    def to_estimator(self) -> MonotonicSeq2Seq:
        est = self.config.estimator()
        est._initialize(self.task.vocab_size, self.task.vocab_size)
        for k, v in self.params.items():
            est.params_[k][...] = v
        est.n_steps_ = self.step
        if self.rng_state:
            est.noise_rng_ = SeededRng.from_state(self.rng_state["noise"])
        return est

    @classmethod
    def from_estimator(cls, est: MonotonicSeq2Seq, task: TaskSpec, config: TrainConfig,
                       data_rng: Optional[SeededRng] = None) -> "ModelCheckpoint":
        rng_state = {"noise": est.noise_rng_.get_state()}
        if data_rng is not None:
            rng_state["data"] = data_rng.get_state()
        params = {k: v.copy() for k, v in est.params_.items()}
        return cls(params, task, config, est.n_steps_, rng_state)


def evaluate_pairs(est: MonotonicSeq2Seq, xs, ys) -> dict:
    """Greedy hard and soft decodes scored against targets that end in EOS."""
    eos = est.dims_.eos
    hits_s = hits_h = total = exact = agree = 0
    for x, y in zip(xs, ys):
        max_len = len(y) + 5
        soft = est.decode(x, "soft", max_len)
        hard = est.decode(x, "hard", max_len)
        pred_s = soft.tokens + ([eos] if soft.ended else [])
        pred_h = hard.tokens + ([eos] if hard.ended else [])
        h_s, n = token_accuracy(pred_s, y)
        h_h, _ = token_accuracy(pred_h, y)
        hits_s += h_s
        hits_h += h_h
        total += n
        exact += pred_h == list(y)
        agree += pred_h == pred_s
    n_ex = len(xs)
    return {
        "token_acc_soft": hits_s / total,
        "token_acc_hard": hits_h / total,
        "seq_acc": exact / n_ex,
        "agreement": agree / n_ex,
    }


def evaluate(task: TaskSpec, checkpoint, n_examples: int, rng: SeededRng, len_range=None) -> dict:
    """Accuracies on ``n_examples`` fresh pairs; ``checkpoint`` may also be a fitted estimator.

    ``seq_acc`` is exact-match rate of the hard (test-time) decode;
    ``agreement`` is the share of examples whose hard and soft decodes are
    identical.
    """
    if n_examples < 1:
        raise ValueError("n_examples must be >= 1")
    if isinstance(checkpoint, ModelCheckpoint):
        est = checkpoint.to_estimator()
        len_range = len_range or checkpoint.config.len_range
    else:
        est = checkpoint
    xs, ys = sample_pairs(task, rng, n_examples, len_range or (5, 20))
    return evaluate_pairs(est, xs, ys)


def train_loop(task: Optional[TaskSpec], cfg: TrainConfig, callback=None):
    """Train on freshly sampled pairs; returns ``(ModelCheckpoint, history)``.

    ``history`` holds one dict per evaluation (keys ``METRIC_FIELDS``), the
    first at step 0. ``loss`` is the mean training loss since the previous
    row. Everything is a function of ``cfg.seed`` and the task.
    """
    if task is None:
        task = generate_task(cfg.task_seed, cfg.vocab_size)
    est = cfg.estimator()
    est._initialize(task.vocab_size, task.vocab_size)
    data_rng = SeededRng(cfg.seed, 10)
    eval_x, eval_y = sample_pairs(task, SeededRng(cfg.seed, 11), cfg.n_eval, cfg.len_range)

    def record(step, loss):
        row = {"step": step, "loss": loss, **evaluate_pairs(est, eval_x, eval_y)}
        history.append(row)
        log.info("step %d loss %.4f soft %.4f hard %.4f", step, loss,
                 row["token_acc_soft"], row["token_acc_hard"])
        if callback is not None:
            callback(row)
        return row

    history = []
    xs, ys = sample_pairs(task, data_rng, cfg.batch_size, cfg.len_range)
    loss0, _ = m.forward(est.params_, est.dims_, xs, ys)
    record(0, float(loss0))
    losses = []
    for step in range(1, cfg.max_steps + 1):
        losses.append(est.train_step(xs, ys))
        xs, ys = sample_pairs(task, data_rng, cfg.batch_size, cfg.len_range)
        if step % cfg.eval_interval == 0 or step == cfg.max_steps:
            row = record(step, float(np.mean(losses)))
            losses = []
            if (cfg.stop_accuracy is not None and row["token_acc_soft"] >= cfg.stop_accuracy
                    and row["token_acc_hard"] >= cfg.stop_accuracy):
                break
    return ModelCheckpoint.from_estimator(est, task, cfg, data_rng), history
