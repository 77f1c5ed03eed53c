"""Clean and fixed-budget PGD accuracy, plus the metrics CSV format."""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attack import AttackConfig, pgd_attack
from .autodiff import SeededRng


def worker_threads() -> int:
    """Worker cap from ADES_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("ADES_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class MetricsRecord:
    epoch: int
    mode: str
    train_loss: float
    clean_acc: float
    robust_acc: list = field(default_factory=list)
    mean_eps: float = 0.0
    wall_ms: float = 0.0


@dataclass
class EvalResult:
    clean_acc: float
    robust_acc: list
    mean_linf: list
    mean_l2: list


def _attack_batch(model, x, y, eps, cfg, rng):
    x_adv = pgd_attack(model, x, y, eps, cfg, rng)
    correct = int(np.sum(model.predict(x_adv) == y))
    diff = x_adv - x
    return correct, float(np.abs(diff).max(axis=1).sum()), float(np.linalg.norm(diff, axis=1).sum())


def evaluate(model, dataset, budgets, attack_cfg: AttackConfig, batch_size: int = 500,
             rng: SeededRng | None = None, threads: int | None = None) -> EvalResult:
    """Clean accuracy and robust accuracy under uniform-budget PGD for each budget.

    Each (budget, batch) pair draws from its own rng stream, so the result does
    not depend on the thread count.
    """
    rng = rng or SeededRng(0)
    threads = threads or worker_threads()
    batches = list(dataset.batches(batch_size))
    n = len(dataset)
    clean = sum(int(np.sum(model.predict(x) == y)) for x, y in batches)
    jobs = [(bi, ei, x, y, float(eps)) for ei, eps in enumerate(budgets) for bi, (x, y) in enumerate(batches)]

    def run(job):
        bi, ei, x, y, eps = job
        return _attack_batch(model, x, y, eps, attack_cfg, rng.stream("eval", ei, bi))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    robust, linf, l2 = [], [], []
    per_budget = len(batches)
    for ei in range(len(budgets)):
        chunk = results[ei * per_budget:(ei + 1) * per_budget]
        robust.append(sum(c[0] for c in chunk) / n)
        linf.append(sum(c[1] for c in chunk) / n)
        l2.append(sum(c[2] for c in chunk) / n)
    return EvalResult(clean / n, robust, linf, l2)


def fmt(v) -> str:
    """Shortest round-tripping text for a float."""
    return repr(float(v))


def metrics_header(n_budgets: int) -> list[str]:
    return (["epoch", "mode", "train_loss", "clean_acc"]
            + [f"robust_acc_eps{i + 1}" for i in range(n_budgets)] + ["mean_eps", "wall_ms"])


def write_metrics_csv(path, records, n_budgets: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(metrics_header(n_budgets))
        for r in records:
            w.writerow([r.epoch, r.mode, fmt(r.train_loss), fmt(r.clean_acc)]
                       + [fmt(a) for a in r.robust_acc] + [fmt(r.mean_eps), fmt(r.wall_ms)])


def read_metrics_csv(path) -> list[MetricsRecord]:
    out = []
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    nb = sum(1 for h in header if h.startswith("robust_acc_eps"))
    for row in body:
        out.append(MetricsRecord(int(row[0]), row[1], float(row[2]), float(row[3]),
                                 [float(v) for v in row[4:4 + nb]], float(row[4 + nb]), float(row[5 + nb])))
    return out
