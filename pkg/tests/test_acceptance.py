"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v -s`` or
``python3 tests/test_acceptance.py``.
"""
import csv
import io
import json
import sys
import time

import numpy as np
import pytest

from ades import autodiff as ad
from ades.attack import AttackConfig, pgd_attack
from ades.autodiff import SeededRng
from ades.cli import main as cli_main
from ades.experiment import ExperimentConfig, load_datasets, run_single
from ades.gradcheck import TOLERANCE, run_gradchecks
from ades.models import MlpClassifier
from ades.scheduler import ScheduleConfig, epsilon_from_sigma, epsilon_grad_surrogate, static_fusion

TOY = {
    "seed": 0, "num_classes": 2, "input_dim": 2, "n_per_class": 1000, "n_per_class_test": 500, "spread": 0.08,
    "hidden_sizes": [64, 64], "dropout": 0.1, "epochs": 50, "eps_min": 0.02, "lambda": 0.12,
    "train_steps": 10, "train_alpha": 0.02, "eval_steps": 20, "eval_alpha": 0.01, "eval_budgets": [0.08],
    "eval_every": 1,
}
MODES = ("clean", "pgd_at", "static_des", "ades")


def report(number, passed, detail, capsys):
    with capsys.disabled():
        print(f"\nACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} | {detail}")
    assert passed, detail


@pytest.fixture(scope="module")
def toy_runs(tmp_path_factory):
    """The comparative toy experiment, every mode, shared by criteria 3, 5 and 6."""
    root = tmp_path_factory.mktemp("toy")
    base = ExperimentConfig.from_dict(TOY)
    datasets = load_datasets(base)
    runs, t0 = {}, time.perf_counter()
    for mode in MODES:
        runs[mode] = run_single(base.with_mode(mode), root / mode, datasets)
    return runs, datasets, time.perf_counter() - t0


def test_criterion_1_gradient_oracle(capsys):
    t0 = time.perf_counter()
    worst = run_gradchecks(seed=0, instances=20)
    elapsed = time.perf_counter() - t0
    failing = {k: v for k, v in worst.items() if not v < TOLERANCE}
    detail = (f"{len(worst)} checks x 20 instances, worst {max(worst.values()):.2e} "
              f"({max(worst, key=worst.get)}), {elapsed:.1f}s; failing={failing or 'none'}")
    report(1, not failing and elapsed < 30, detail, capsys)


def test_criterion_2_attack_feasibility(capsys):
    r = SeededRng(2).stream("acceptance.attack").generator
    t0 = time.perf_counter()
    triples = violations = zero_mismatch = zero_rows = 0
    worst_excess = -np.inf
    for m in range(40):
        d, k = int(r.integers(2, 6)), int(r.integers(2, 5))
        model = MlpClassifier([d, int(r.integers(4, 33)), k], dropout=0.1, seed=int(r.integers(2**31)))
        x = r.uniform(0, 1, size=(250, d))
        x[r.random(x.shape) < 0.1] = 0.0
        x[r.random(x.shape) < 0.1] = 1.0
        y = r.integers(0, k, size=250)
        eps = r.uniform(0, 0.3, size=250)
        eps[r.random(250) < 0.1] = 0.0
        cfg = AttackConfig(int(r.integers(1, 11)), float(r.uniform(0.005, 0.05)), bool(m % 4))
        xa = pgd_attack(model, x, y, eps, cfg, SeededRng(m))
        excess = np.abs(xa - x).max(axis=1) - eps
        worst_excess = max(worst_excess, excess.max())
        violations += int(np.sum(excess > 1e-12)) + int(np.sum((xa < 0) | (xa > 1)) > 0)
        zero = eps == 0
        zero_rows += int(zero.sum())
        zero_mismatch += int(xa[zero].tobytes() != x[zero].tobytes())
        xz = pgd_attack(model, x, y, 0.0, cfg, SeededRng(m))
        zero_mismatch += int(xz.tobytes() != x.tobytes())
        triples += len(x)
    elapsed = time.perf_counter() - t0
    ok = triples >= 10_000 and violations == 0 and zero_mismatch == 0 and elapsed < 60
    detail = (f"{triples} triples, {violations} violations, max(linf - eps)={worst_excess:.1e}, "
              f"{zero_rows} eps=0 rows bitwise={'yes' if zero_mismatch == 0 else 'NO'}, {elapsed:.1f}s")
    report(2, ok, detail, capsys)


def test_criterion_3_schedule_bounds(toy_runs, capsys):
    runs, _, _ = toy_runs
    state, records = runs["ades"]
    lo, hi = TOY["eps_min"], TOY["eps_min"] + TOY["lambda"]
    means = [rec.mean_eps for rec in records]
    in_range = all(lo <= m <= hi for m in means)
    ok = (state.eps_violations == 0 and lo <= state.eps_seen_min and state.eps_seen_max <= hi
          and in_range and len(means) == TOY["epochs"])
    detail = (f"violations={state.eps_violations}, emitted eps in [{state.eps_seen_min:.4f}, "
              f"{state.eps_seen_max:.4f}] vs [{lo}, {hi}], {len(means)} epoch means in "
              f"[{min(means):.4f}, {max(means):.4f}]")
    report(3, ok, detail, capsys)


def _rows_without_mode(path):
    rows = list(csv.reader(io.StringIO(path.read_text())))
    col = rows[0].index("mode")
    return [r[:col] + r[col + 1:] for r in rows]


def test_criterion_4_mode_reduction(tmp_path, capsys):
    # the mode column names the run and is the only field allowed to differ
    cfg = ExperimentConfig.from_dict({**TOY, "lambda": 0.0, "epochs": 5, "eval_budgets": [0.02, 0.08]})
    run_single(cfg.with_mode("ades"), tmp_path / "ades")
    run_single(cfg.with_mode("pgd_at"), tmp_path / "pgd_at")
    a, b = _rows_without_mode(tmp_path / "ades" / "metrics.csv"), _rows_without_mode(tmp_path / "pgd_at" / "metrics.csv")
    ck_same = (tmp_path / "ades" / "checkpoint_final.bin").read_bytes() == \
        (tmp_path / "pgd_at" / "checkpoint_final.bin").read_bytes()
    ok = a == b and len(a) == 6 and ck_same
    detail = f"{len(a) - 1} epochs, metrics identical outside mode column={a == b}, checkpoints identical={ck_same}"
    report(4, ok, detail, capsys)


def test_criterion_5_envelope_surrogate(toy_runs, capsys):
    runs, (_, test_ds), _ = toy_runs
    model = runs["ades"][0].classifier
    x, y = test_ds.features, test_ds.labels
    eps = np.full(len(x), 0.08)
    cfg = AttackConfig(20, 0.01, True)

    def per_sample_loss(e):
        xa = pgd_attack(model, x, y, e, cfg, SeededRng(5))
        return ad.softmax_cross_entropy(model.forward(xa), y, reduction="none").data, xa

    _, xa = per_sample_loss(eps)
    s = epsilon_grad_surrogate(model, xa, x, y, eps)
    h = 1e-4
    fd = (per_sample_loss(eps + h)[0] - per_sample_loss(eps - h)[0]) / (2 * h)
    active = (s != 0) & (fd != 0)
    rel = np.abs(s[active] - fd[active]) / np.abs(fd[active])
    med, p90 = np.median(rel), np.percentile(rel, 90)
    ok = active.sum() >= 50 and med < 0.10 and p90 < 0.30
    report(5, ok, f"{int(active.sum())} active samples, median rel err {med:.2e}, p90 {p90:.2e}", capsys)


def test_criterion_6_comparative_toy(toy_runs, capsys):
    runs, _, elapsed = toy_runs
    final = {m: runs[m][1][-1] for m in MODES}
    clean = {m: r.clean_acc for m, r in final.items()}
    robust = {m: r.robust_acc[0] for m, r in final.items()}
    gap = robust["ades"] - robust["pgd_at"]
    ok = (all(clean[m] > 0.9 for m in ("pgd_at", "static_des", "ades"))
          and robust["clean"] < robust["pgd_at"]
          and gap >= -0.02
          and elapsed < 300)
    table = ", ".join(f"{m} {clean[m]:.3f}/{robust[m]:.3f}" for m in MODES)
    report(6, ok, f"clean/robust@0.08: {table}; ADES - PGD-AT = {100 * gap:+.1f} pp; {elapsed:.0f}s", capsys)


def test_criterion_7_static_monotonicity(capsys):
    r = SeededRng(7).stream("acceptance.static").generator
    cfg = ScheduleConfig(0.02, 0.12, mode="static")
    w = (1 / 3, 1 / 3, 1 / 3)
    z = r.uniform(0, 1, size=(1000, 3))
    coord = r.integers(0, 3, size=1000)
    z_up = z.copy()
    z_up[np.arange(1000), coord] = r.uniform(z[np.arange(1000), coord], 1.0)
    eps = epsilon_from_sigma(static_fusion(z, w), cfg).eps
    eps_up = epsilon_from_sigma(static_fusion(z_up, w), cfg).eps
    bad = int(np.sum(eps_up < eps))
    report(7, bad == 0, f"1000 pairs, {bad} decreasing", capsys)


def test_criterion_8_cli_determinism(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ADES_THREADS", "1")
    cfg = tmp_path / "cfg.json"
    small = {**TOY, "n_per_class": 100, "n_per_class_test": 60, "hidden_sizes": [16], "epochs": 3,
             "eval_budgets": [0.04, 0.08], "checkpoint_every": 2}
    cfg.write_text(json.dumps(small))
    outputs = {}
    for rep in ("a", "b"):
        d = tmp_path / rep
        assert cli_main(["train", "--config", str(cfg), "--seed", "3", "--out", str(d / "run")]) == 0
        ck = str(d / "run" / "checkpoint_final.bin")
        for cmd in ("eval", "attack", "cues"):
            assert cli_main([cmd, "--config", str(cfg), "--seed", "3", "--checkpoint", ck,
                             "--out", str(d / f"{cmd}.csv")]) == 0
        cli_main(["gradcheck", "--seed", "3", "--instances", "2", "--out", str(d / "gradcheck.csv")])
        outputs[rep] = {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}
    files = sorted(outputs["a"])
    differing = [f for f in files if outputs["a"][f] != outputs["b"].get(f)]
    ok = not differing and set(outputs["a"]) == set(outputs["b"]) and len(files) >= 8
    report(8, ok, f"{len(files)} files compared ({', '.join(files)}); differing={differing or 'none'}", capsys)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
