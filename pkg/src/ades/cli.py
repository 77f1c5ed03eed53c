"""Command-line entry point: ``ades {train,attack,eval,cues,gradcheck}``.

Every subcommand takes ``--config`` (JSON experiment file) and ``--seed``
(overrides the config seed). ADES_THREADS caps worker and BLAS threads.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from contextlib import contextmanager

from threadpoolctl import threadpool_limits

from .autodiff import SeededRng
from .cues import batch_minmax_normalize, extract_raw_cues
from .errors import AdesError
from .evaluation import evaluate, fmt, worker_threads
from .experiment import ExperimentConfig, load_datasets, run_experiment
from .gradcheck import TOLERANCE, run_gradchecks
from .models import MlpClassifier, load_checkpoint, models_from_paramset

log = logging.getLogger("ades")


@contextmanager
def _csv_out(path):
    if path is None:
        yield csv.writer(sys.stdout, lineterminator="\n")
        return
    with open(path, "w", newline="") as fh:
        yield csv.writer(fh, lineterminator="\n")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _classifier(cfg: ExperimentConfig, checkpoint) -> MlpClassifier:
    if checkpoint is None:
        return MlpClassifier(cfg.sizes, cfg.dropout, seed=SeededRng(cfg.seed).stream("init.classifier"))
    ps, _ = load_checkpoint(checkpoint)
    return models_from_paramset(ps, cfg.dropout)[0]


def _split(cfg, name):
    train_ds, test_ds = load_datasets(cfg)
    return train_ds if name == "train" else test_ds


def cmd_train(args) -> int:
    results = run_experiment(args.config, args.out, args.seed)
    for mode, (_, records) in results.items():
        if records:
            r = records[-1]
            log.info("%s: clean_acc=%s robust_acc=%s", mode, fmt(r.clean_acc), [fmt(a) for a in r.robust_acc])
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    clf = _classifier(cfg, args.checkpoint)
    res = evaluate(clf, _split(cfg, args.split), cfg.eval_budgets, cfg.eval_attack(), cfg.eval_batch_size,
                   SeededRng(cfg.seed).stream("eval.cli"))
    with _csv_out(args.out) as w:
        w.writerow(["eps", "clean_acc", "robust_acc"])
        for eps, acc in zip(cfg.eval_budgets, res.robust_acc):
            w.writerow([fmt(eps), fmt(res.clean_acc), fmt(acc)])
    return 0


def cmd_attack(args) -> int:
    cfg = _config(args)
    clf = _classifier(cfg, args.checkpoint)
    res = evaluate(clf, _split(cfg, args.split), cfg.eval_budgets, cfg.eval_attack(), cfg.eval_batch_size,
                   SeededRng(cfg.seed).stream("attack.cli"))
    with _csv_out(args.out) as w:
        w.writerow(["eps", "adv_acc", "mean_linf", "mean_l2"])
        for row in zip(cfg.eval_budgets, res.robust_acc, res.mean_linf, res.mean_l2):
            w.writerow([fmt(v) for v in row])
    return 0


def cmd_cues(args) -> int:
    cfg = _config(args)
    clf = _classifier(cfg, args.checkpoint)
    ds = _split(cfg, args.split)
    rng = SeededRng(cfg.seed).stream("cues.cli")
    with _csv_out(args.out) as w:
        w.writerow(["sample_index", "g", "H", "u", "g_norm", "H_norm", "u_norm"])
        index = 0
        for x, y in ds.batches(cfg.batch_size):
            raw = extract_raw_cues(clf, x, y, cfg.mc_passes, rng)
            norm = [batch_minmax_normalize(v) for v in (raw.g, raw.H, raw.u)]
            for i in range(len(y)):
                w.writerow([index] + [fmt(v[i]) for v in (raw.g, raw.H, raw.u, *norm)])
                index += 1
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _config(args)
    results = run_gradchecks(cfg.seed, args.instances)
    with _csv_out(args.out) as w:
        w.writerow(["check", "instances", "max_rel_err", "passed"])
        for name, err in results.items():
            w.writerow([name, args.instances, fmt(err), int(err < TOLERANCE)])
    return 0 if all(e < TOLERANCE for e in results.values()) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ades", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, checkpoint=False, split=False):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="output path (CSV commands default to stdout)")
        if checkpoint:
            sp.add_argument("--checkpoint", default=None, help="ADESCKPT checkpoint (default: fresh init)")
        if split:
            sp.add_argument("--split", choices=("train", "test"), default="test")
        sp.set_defaults(func=fn)
        return sp

    tr = add("train", cmd_train, "train every configured mode and write metrics.csv + checkpoints")
    tr.set_defaults(needs_config=True)
    add("eval", cmd_eval, "clean and PGD accuracy of a checkpoint", checkpoint=True, split=True)
    add("attack", cmd_attack, "adversarial accuracy and perturbation norms", checkpoint=True, split=True)
    add("cues", cmd_cues, "dump raw and normalized per-sample cues", checkpoint=True, split=True)
    gc = add("gradcheck", cmd_gradcheck, "finite-difference gradient checks")
    gc.add_argument("--instances", type=int, default=20)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "needs_config", False) and not args.config:
        print("ades train: --config is required", file=sys.stderr)
        return 2
    try:
        with threadpool_limits(limits=worker_threads()):
            return args.func(args)
    except (AdesError, OSError) as exc:
        print(f"ades {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
