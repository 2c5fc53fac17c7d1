"""Adam, the plateau learning-rate rule, and the shared epoch loop."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidConfig, NumericalError


@dataclass(frozen=True)
class OptConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    patience: int = 3
    decay: float = 0.3
    min_delta: float = 1e-5
    min_lr: float = 1e-6
    max_epochs: int = 10
    monitor: str = "loss"  # or "metric" (higher is better)

    def __post_init__(self):
        if not self.lr > 0:
            raise InvalidConfig("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidConfig("Adam betas must lie in [0, 1)")
        if not 0 < self.decay < 1:
            raise InvalidConfig("decay must lie in (0, 1)")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 0:
            raise InvalidConfig("batch_size and patience must be >= 1, max_epochs >= 0")
        if self.monitor not in ("loss", "metric"):
            raise InvalidConfig("monitor must be 'loss' or 'metric'")

    def to_dict(self):
        return asdict(self)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params, grads, state, cfg, lr=None):
    """Bias-corrected Adam update, in place.  Nothing is touched if any
    gradient is non-finite."""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name!r}")
    lr = cfg.lr if lr is None else lr
    state.step += 1
    t = state.step
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return params, state


def plateau_schedule(history, cfg):
    """Learning rate after the given per-epoch monitored values.

    The rate is multiplied by ``cfg.decay`` whenever ``cfg.patience``
    consecutive epochs pass without an improvement of at least
    ``cfg.min_delta``; it never drops below ``cfg.min_lr``.
    """
    lr = cfg.lr
    best = None
    stale = 0
    sign = 1.0 if cfg.monitor == "loss" else -1.0
    for value in history:
        value = sign * value
        if best is None or value < best - cfg.min_delta:
            best = value
            stale = 0
            continue
        stale += 1
        if stale >= cfg.patience:
            lr = max(lr * cfg.decay, cfg.min_lr)
            stale = 0
    return lr


def run_epochs(params, corpus, loss_fn, cfg, rng, log=None):
    """Mini-batch training loop.

    ``loss_fn(params, batch, rng)`` returns ``(loss, grads, metric)`` with
    gradients already averaged over the batch.  Every epoch reshuffles the
    corpus.  Returns the updated parameter dict and the per-epoch history;
    ``log`` (a callable) receives each history record as it is produced.
    """
    if len(corpus) == 0:
        raise InvalidConfig("cannot train on an empty corpus")
    state = AdamState()
    history = []
    monitored = []
    lr = cfg.lr
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(corpus))
        loss_sum = metric_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [corpus[i] for i in order[start : start + cfg.batch_size]]
            loss, grads, metric = loss_fn(params, batch, rng)
            adam_step(params, grads, state, cfg, lr)
            loss_sum += loss * len(batch)
            metric_sum += metric * len(batch)
        record = {
            "epoch": epoch,
            "loss": loss_sum / len(corpus),
            "metric": metric_sum / len(corpus),
            "lr": lr,
        }
        history.append(record)
        if log is not None:
            log(record)
        monitored.append(record[cfg.monitor])
        lr = plateau_schedule(monitored, cfg)
    return params, history


def history_jsonl(history):
    return "".join(json.dumps(r) + "\n" for r in history)
