"""Joint min-max training of the classifier and the budget scheduler.

Per batch (``ades`` mode): cues -> scheduler score -> budgets -> PGD -> outer
CE loss on the adversarial batch. The classifier gets the ordinary backprop
gradient; the scheduler gets the envelope surrogate dL/d eps pushed through
d eps/d sigma = lambda and the scheduler graph. Both update in the same step.

Randomness comes from named per-epoch streams (shuffle, mc_dropout,
attack_init, train_dropout) so a run resumed at an epoch boundary replays
the uninterrupted run exactly.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attack import AttackConfig, pgd_attack
from .autodiff import SeededRng
from .cues import assemble_cues
from .errors import ConfigError, DimensionError
from .models import MlpClassifier, ParamSet, SchedulerNet, build_models
from .scheduler import ScheduleConfig, epsilon_from_sigma, epsilon_grad_surrogate, static_fusion

log = logging.getLogger(__name__)

TRAIN_MODES = ("ades", "static_des", "pgd_at", "clean")
SCHEDULER_FOR_MODE = {"ades": "learnable", "static_des": "static", "pgd_at": "fixed", "clean": "fixed"}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    lr_theta: float = 0.1
    lr_milestones: tuple = (38, 45)
    lr_decay: float = 0.1
    lr_omega: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    mc_passes: int = 3
    mode: str = "ades"
    seed: int = 0
    fixed_eps: float | None = None

    def validate(self) -> "TrainConfig":
        if self.mode not in TRAIN_MODES:
            raise ConfigError(f"mode {self.mode!r} not in {TRAIN_MODES}")
        if self.lr_theta <= 0 or self.lr_omega <= 0:
            raise ConfigError("learning rates must be > 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        ms = list(self.lr_milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigError(f"lr_milestones must be strictly increasing, got {ms}")
        if self.mc_passes < 1:
            raise ConfigError("mc_passes must be >= 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        return self


@dataclass
class TrainState:
    classifier: MlpClassifier
    scheduler: SchedulerNet
    paramset: ParamSet
    epoch: int = 0
    eps_seen_min: float = np.inf
    eps_seen_max: float = -np.inf
    eps_violations: int = 0
    history: list = field(default_factory=list)


def init_state(sizes, dropout, scheduler_hidden, seed) -> TrainState:
    clf, sched, ps = build_models(sizes, dropout, scheduler_hidden, seed)
    return TrainState(clf, sched, ps)


def lr_at(epoch: int, lr0: float, milestones=(), factor: float = 0.1) -> float:
    """Step decay; a milestone counts as passed from its own epoch onward."""
    return lr0 * factor ** sum(1 for m in milestones if epoch >= m)


def sgd_momentum_step(params: ParamSet, grads: dict, lr: float, momentum: float,
                      weight_decay: float = 0.0, names=None) -> None:
    """In-place heavy-ball update: v = m v + g + wd p; p -= lr v."""
    for name in (grads if names is None else names):
        p = params.params[name]
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        v = momentum * params.momentum[name] + g
        if weight_decay:
            v = v + weight_decay * p.data
        params.momentum[name] = v
        p.data = p.data - lr * v


@dataclass
class StepMetrics:
    loss: float
    mean_eps: float
    eps_min: float
    eps_max: float
    cue_means: tuple = (np.nan, np.nan, np.nan)
    sigma_mean: float = np.nan


class EpochStreams:
    """The per-epoch named rng streams used by :func:`train_step`."""

    def __init__(self, seed: int, epoch: int):
        root = SeededRng(seed)
        self.shuffle = root.stream("shuffle", epoch)
        self.mc_dropout = root.stream("mc_dropout", epoch)
        self.attack_init = root.stream("attack_init", epoch)
        self.train_dropout = root.stream("train_dropout", epoch)


def fixed_budget(sched_cfg: ScheduleConfig, train_cfg: TrainConfig) -> float:
    if train_cfg.fixed_eps is not None:
        return float(train_cfg.fixed_eps)
    return sched_cfg.eps_min + 0.5 * sched_cfg.lam


def train_step(state: TrainState, x, y, train_cfg: TrainConfig, sched_cfg: ScheduleConfig,
               attack_cfg: AttackConfig, streams: EpochStreams, lr_theta: float) -> StepMetrics:
    mode = train_cfg.mode
    clf, sched = state.classifier, state.scheduler
    n = x.shape[0]
    if n == 0:
        raise ConfigError("empty batch")
    sigma_node = None
    cue_means = (np.nan, np.nan, np.nan)

    if mode == "clean":
        eps = None
        x_in = x
    else:
        if mode == "pgd_at":
            eps = np.full(n, fixed_budget(sched_cfg, train_cfg))
        else:
            z = assemble_cues(clf, x, y, train_cfg.mc_passes, streams.mc_dropout)
            cue_means = tuple(float(c.mean()) for c in (z.g, z.H, z.u))
            if mode == "static_des":
                sigma = static_fusion(z, sched_cfg.static_weights)
            else:
                sigma_node = sched.forward(z.as_matrix())
                sigma = sigma_node.data.reshape(-1)
            eps = epsilon_from_sigma(sigma, sched_cfg).eps
        x_in = pgd_attack(clf, x, y, eps, attack_cfg, streams.attack_init)
        lo, hi = sched_cfg.eps_min, sched_cfg.eps_max
        if mode != "pgd_at":
            state.eps_violations += int(np.sum((eps < lo) | (eps > hi)))
        state.eps_seen_min = min(state.eps_seen_min, float(eps.min()))
        state.eps_seen_max = max(state.eps_seen_max, float(eps.max()))

    ps = state.paramset
    theta = ps.names("classifier.")
    loss = ad.softmax_cross_entropy(clf.forward(x_in, train=True, rng=streams.train_dropout), y)
    theta_grads = dict(zip(theta, ad.grad(loss, [ps.params[k] for k in theta])))

    omega_grads = None
    if sigma_node is not None:
        omega = ps.names("scheduler.")
        if sched_cfg.lam > 0:
            dl_deps = epsilon_grad_surrogate(clf, x_in, x, y, eps)
        else:
            dl_deps = np.zeros(n)
        weights = (dl_deps * sched_cfg.lam / n).reshape(-1, 1)
        root = ad.tsum(ad.mul(sigma_node, weights))
        omega_grads = dict(zip(omega, ad.grad(root, [ps.params[k] for k in omega])))

    sgd_momentum_step(ps, theta_grads, lr_theta, train_cfg.momentum, train_cfg.weight_decay)
    if omega_grads is not None:
        sgd_momentum_step(ps, omega_grads, train_cfg.lr_omega, train_cfg.momentum, 0.0)

    if eps is None:
        return StepMetrics(loss.item(), 0.0, 0.0, 0.0)
    return StepMetrics(loss.item(), float(eps.mean()), float(eps.min()), float(eps.max()),
                       cue_means, float(sigma_node.data.mean()) if sigma_node is not None else np.nan)


def train_epoch(state: TrainState, x, y, train_cfg, sched_cfg, attack_cfg) -> dict:
    """One pass over (x, y) in a seeded shuffled order; advances ``state.epoch``."""
    epoch = state.epoch
    streams = EpochStreams(train_cfg.seed, epoch)
    lr = lr_at(epoch, train_cfg.lr_theta, train_cfg.lr_milestones, train_cfg.lr_decay)
    order = streams.shuffle.permutation(x.shape[0])
    losses, eps_sum, counted = [], 0.0, 0
    for start in range(0, len(order), train_cfg.batch_size):
        idx = order[start:start + train_cfg.batch_size]
        m = train_step(state, x[idx], y[idx], train_cfg, sched_cfg, attack_cfg, streams, lr)
        losses.append(m.loss * len(idx))
        eps_sum += m.mean_eps * len(idx)
        counted += len(idx)
    state.epoch += 1
    return {"train_loss": float(np.sum(losses) / counted), "mean_eps": eps_sum / counted, "lr": lr}


def train(train_cfg: TrainConfig, sched_cfg: ScheduleConfig, attack_cfg: AttackConfig, x, y,
          sizes, dropout=0.0, scheduler_hidden=16, state: TrainState | None = None,
          on_epoch=None) -> TrainState:
    """Run epochs ``state.epoch .. train_cfg.epochs - 1``.

    ``on_epoch(state, stats)`` is called after every epoch (evaluation and
    checkpoint hooks live there).
    """
    train_cfg.validate()
    sched_cfg.validate()
    attack_cfg.validate()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ConfigError("empty training set")
    if state is None:
        state = init_state(sizes, dropout, scheduler_hidden, train_cfg.seed)
    while state.epoch < train_cfg.epochs:
        t0 = time.perf_counter()
        stats = train_epoch(state, x, y, train_cfg, sched_cfg, attack_cfg)
        stats["wall_ms"] = (time.perf_counter() - t0) * 1e3
        state.history.append(stats)
        log.info("epoch %d mode=%s loss=%.4f mean_eps=%.4f", state.epoch, train_cfg.mode,
                 stats["train_loss"], stats["mean_eps"])
        if on_epoch is not None:
            on_epoch(state, stats)
    return state
