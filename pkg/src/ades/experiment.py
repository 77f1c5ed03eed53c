"""JSON experiment configs and the train/evaluate/persist pipeline."""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .attack import AttackConfig
from .autodiff import SeededRng
from .data import Dataset, load_csv_dataset, make_blobs
from .errors import ConfigError
from .evaluation import EvalResult, MetricsRecord, evaluate, write_metrics_csv
from .models import load_checkpoint, models_from_paramset, save_checkpoint
from .scheduler import SCHEDULER_MODES, ScheduleConfig
from .training import SCHEDULER_FOR_MODE, TRAIN_MODES, TrainConfig, TrainState, init_state, train

log = logging.getLogger(__name__)

CHOICES = {
    "mode": TRAIN_MODES,
    "scheduler_mode": SCHEDULER_MODES,
    "dataset": ("blobs", "csv"),
}


@dataclass
class ExperimentConfig:
    seed: int = 0
    # data
    dataset: str = "blobs"
    num_classes: int = 2
    input_dim: int = 2
    n_per_class: int = 1000
    n_per_class_test: int = 500
    spread: float = 0.08
    blob_radius: float = 0.2
    train_csv: str | None = None
    test_csv: str | None = None
    # models
    hidden_sizes: list = field(default_factory=lambda: [64, 64])
    dropout: float = 0.1
    scheduler_hidden: int = 16
    # scheduling
    mode: str = "ades"
    modes: list | None = None
    scheduler_mode: str | None = None
    eps_min: float = 2 / 255
    # "lambda" in JSON
    lam: float = 12 / 255
    static_weights: list = field(default_factory=lambda: [1 / 3, 1 / 3, 1 / 3])
    fixed_eps: float | None = None
    # attacks
    train_steps: int = 10
    train_alpha: float = 2 / 255
    eval_steps: int = 20
    eval_alpha: float = 2 / 255
    random_start: bool = True
    domain: list = field(default_factory=lambda: [0.0, 1.0])
    # optimisation
    epochs: int = 50
    batch_size: int = 128
    lr_theta: float = 0.1
    lr_milestones: list = field(default_factory=lambda: [38, 45])
    lr_decay: float = 0.1
    lr_omega: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    mc_passes: int = 3
    # evaluation and output
    eval_budgets: list = field(default_factory=lambda: [4 / 255, 6 / 255, 8 / 255, 10 / 255])
    eval_batch_size: int = 500
    eval_every: int = 1
    checkpoint_every: int = 0
    output_dir: str = "runs/ades"
    record_wall_ms: bool = False

    @classmethod
    def allowed_keys(cls) -> list[str]:
        return sorted("lambda" if f.name == "lam" else f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        allowed = cls.allowed_keys()
        kwargs = {}
        for key, value in raw.items():
            if key not in allowed:
                raise ConfigError(f"unknown config key {key!r}; allowed keys: {', '.join(allowed)}")
            if key in CHOICES and value is not None and value not in CHOICES[key]:
                raise ConfigError(f"invalid value {value!r} for {key!r}; allowed: {', '.join(CHOICES[key])}")
            kwargs["lam" if key == "lambda" else key] = value
        cfg = cls(**kwargs)
        for m in cfg.modes or []:
            if m not in TRAIN_MODES:
                raise ConfigError(f"invalid value {m!r} in 'modes'; allowed: {', '.join(TRAIN_MODES)}")
        if cfg.scheduler_mode is not None and cfg.modes is None \
                and SCHEDULER_FOR_MODE[cfg.mode] != cfg.scheduler_mode and cfg.mode != "clean":
            raise ConfigError(f"scheduler_mode {cfg.scheduler_mode!r} is inconsistent with mode {cfg.mode!r}")
        cfg._check_model_and_eval()
        cfg.schedule_config(cfg.mode)
        cfg.train_config(cfg.mode)
        cfg.train_attack()
        cfg.eval_attack()
        return cfg

    def _check_model_and_eval(self) -> None:
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.scheduler_hidden < 1 or any(int(h) < 1 for h in self.hidden_sizes):
            raise ConfigError("layer widths must be positive")
        if self.num_classes < 2 or self.input_dim < 1:
            raise ConfigError("num_classes must be >= 2 and input_dim >= 1")
        if any(b < 0 for b in self.eval_budgets):
            raise ConfigError("eval_budgets must be non-negative")
        if self.eval_batch_size < 1 or self.eval_every < 0 or self.checkpoint_every < 0:
            raise ConfigError("eval_batch_size must be positive; eval_every/checkpoint_every non-negative")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        return dict(sorted(d.items()))

    def with_mode(self, mode: str) -> "ExperimentConfig":
        return dataclasses.replace(self, mode=mode, modes=None, scheduler_mode=None)

    def schedule_config(self, mode: str | None = None) -> ScheduleConfig:
        mode = mode or self.mode
        return ScheduleConfig(self.eps_min, self.lam, SCHEDULER_FOR_MODE[mode], tuple(self.static_weights),
                              self.domain[1] - self.domain[0]).validate()

    def train_config(self, mode: str | None = None) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.lr_theta, tuple(self.lr_milestones), self.lr_decay,
                           self.lr_omega, self.momentum, self.weight_decay, self.mc_passes, mode or self.mode,
                           self.seed, self.fixed_eps).validate()

    def train_attack(self) -> AttackConfig:
        return AttackConfig(self.train_steps, self.train_alpha, self.random_start, tuple(self.domain)).validate()

    def eval_attack(self) -> AttackConfig:
        return AttackConfig(self.eval_steps, self.eval_alpha, self.random_start, tuple(self.domain)).validate()

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_sizes, self.num_classes]


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset == "csv":
        if not cfg.train_csv or not cfg.test_csv:
            raise ConfigError("dataset 'csv' needs train_csv and test_csv")
        train_ds = load_csv_dataset(cfg.train_csv, cfg.num_classes, "train")
        test_ds = load_csv_dataset(cfg.test_csv, cfg.num_classes, "test")
    else:
        train_ds = make_blobs(cfg.n_per_class, cfg.num_classes, cfg.input_dim, cfg.spread, cfg.seed,
                              "train", cfg.blob_radius)
        test_ds = make_blobs(cfg.n_per_class_test, cfg.num_classes, cfg.input_dim, cfg.spread, cfg.seed,
                             "test", cfg.blob_radius)
    if train_ds.dim != cfg.input_dim:
        raise ConfigError(f"dataset has {train_ds.dim} features but input_dim is {cfg.input_dim}")
    return train_ds, test_ds


def evaluate_model(cfg: ExperimentConfig, classifier, test_ds: Dataset, tag: int) -> EvalResult:
    rng = SeededRng(cfg.seed).stream("eval", tag)
    return evaluate(classifier, test_ds, cfg.eval_budgets, cfg.eval_attack(), cfg.eval_batch_size, rng)


def run_single(cfg: ExperimentConfig, out_dir, datasets=None, state: TrainState | None = None) -> tuple:
    """Train one mode, writing metrics.csv, checkpoints and a config snapshot."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = datasets or load_datasets(cfg)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    records: list[MetricsRecord] = []

    def on_epoch(st: TrainState, stats: dict) -> None:
        log.info("%s epoch %d: %.1f ms", cfg.mode, st.epoch, stats["wall_ms"])
        last = st.epoch == cfg.epochs
        if cfg.eval_every and (st.epoch % cfg.eval_every == 0 or last):
            res = evaluate_model(cfg, st.classifier, test_ds, st.epoch)
            wall = stats["wall_ms"] if cfg.record_wall_ms else 0.0
            records.append(MetricsRecord(st.epoch, cfg.mode, stats["train_loss"], res.clean_acc,
                                         res.robust_acc, stats["mean_eps"], wall))
            write_metrics_csv(out / "metrics.csv", records, len(cfg.eval_budgets))
        if cfg.checkpoint_every and st.epoch % cfg.checkpoint_every == 0:
            save_checkpoint(out / f"checkpoint_epoch{st.epoch:04d}.bin", st.paramset, st.epoch)

    if state is None:
        state = init_state(cfg.sizes, cfg.dropout, cfg.scheduler_hidden, cfg.seed)
    state = train(cfg.train_config(), cfg.schedule_config(), cfg.train_attack(), train_ds.features,
                  train_ds.labels, cfg.sizes, cfg.dropout, cfg.scheduler_hidden, state, on_epoch)
    write_metrics_csv(out / "metrics.csv", records, len(cfg.eval_budgets))
    save_checkpoint(out / "checkpoint_final.bin", state.paramset, state.epoch)
    return state, records


def run_experiment(config_path, output_dir=None, seed: int | None = None) -> dict:
    """Run every mode listed in the config (or its single ``mode``).

    With a ``modes`` list each mode gets ``<output_dir>/<mode>/``; otherwise
    artifacts go straight into ``output_dir``.
    """
    cfg = ExperimentConfig.load(config_path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    out = Path(output_dir or cfg.output_dir)
    datasets = load_datasets(cfg)
    results = {}
    if cfg.modes:
        for mode in cfg.modes:
            t0 = time.perf_counter()
            results[mode] = run_single(cfg.with_mode(mode), out / mode, datasets)
            log.info("mode %s done in %.1fs", mode, time.perf_counter() - t0)
    else:
        results[cfg.mode] = run_single(cfg, out, datasets)
    return results


def resume(cfg: ExperimentConfig, checkpoint, out_dir, datasets=None):
    """Continue training from a checkpoint written at an epoch boundary."""
    ps, epoch = load_checkpoint(checkpoint)
    clf, sched = models_from_paramset(ps, cfg.dropout)
    state = TrainState(clf, sched, ps, epoch or 0)
    return run_single(cfg, out_dir, datasets, state)
