"""Randomized finite-difference checks for every differentiable op and both networks."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import SeededRng, Tensor
from .models import MlpClassifier, SchedulerNet

STEP = 1e-5
TOLERANCE = 1e-6
KINK_MARGIN = 1e-3


def _signs(r, shape):
    return r.choice([-1.0, 1.0], size=shape)


def _with_param(model, name, fn):
    def f(t):
        saved = model.params[name]
        model.params[name] = t
        try:
            return fn()
        finally:
            model.params[name] = saved
    return f


def _op_matmul(r):
    a, b, w = r.normal(size=(3, 4)), r.normal(size=(4, 2)), _signs(r, (3, 2))
    return max(ad.finite_diff_check(lambda t: ad.tsum(ad.mul(ad.matmul(t, Tensor(b)), w)), a, STEP),
               ad.finite_diff_check(lambda t: ad.tsum(ad.mul(ad.matmul(Tensor(a), t), w)), b, STEP))


def _op_add_bias(r):
    # positive weights: the bias gradient sums a column and must not cancel to 0
    x, b, w = r.normal(size=(4, 3)), r.normal(size=3), r.uniform(0.5, 1.5, size=(4, 3))
    return max(ad.finite_diff_check(lambda t: ad.tsum(ad.mul(ad.add_bias(t, Tensor(b)), w)), x, STEP),
               ad.finite_diff_check(lambda t: ad.tsum(ad.mul(ad.add_bias(Tensor(x), t), w)), b, STEP))


def _op_relu(r):
    x = r.uniform(-10, 10, size=(5, 4))
    x = np.where(np.abs(x) < KINK_MARGIN, 1.0, x)
    w = _signs(r, x.shape)
    return ad.finite_diff_check(lambda t: ad.tsum(ad.mul(ad.relu(t), w)), x, STEP)


def _op_sigmoid(r):
    x, w = r.uniform(-6, 6, size=(5, 4)), _signs(r, (5, 4))
    return ad.finite_diff_check(lambda t: ad.tsum(ad.mul(ad.sigmoid(t), w)), x, STEP)


def _op_cross_entropy(r):
    logits, labels = r.normal(size=(5, 3)), r.integers(0, 3, size=5)
    return max(ad.finite_diff_check(lambda t: ad.softmax_cross_entropy(t, labels, "mean"), logits, STEP),
               ad.finite_diff_check(lambda t: ad.softmax_cross_entropy(t, labels, "sum"), logits, STEP))


def _op_dropout(r):
    x, seed = r.normal(size=(4, 6)), int(r.integers(2**31))
    w = _signs(r, x.shape)
    return ad.finite_diff_check(lambda t: ad.tsum(ad.mul(ad.dropout(t, 0.3, True, SeededRng(seed)), w)), x, STEP)


def _randomize_biases(model, r):
    # zero biases put fully-dropped samples exactly on a ReLU kink
    for name, t in model.params.items():
        if ".b" in name:
            t.data = r.normal(0.0, 0.5, size=t.shape)


def _min_hidden_preactivation(params, prefix, x, rate=0.0, seed=None):
    """Smallest |pre-ReLU| value in a forward pass, replaying the dropout masks."""
    rng = SeededRng(seed) if rate else None
    n = sum(1 for k in params if k.startswith(prefix + ".W"))
    h, worst = x, np.inf
    for i in range(n - 1):
        pre = h @ params[f"{prefix}.W{i}"].data + params[f"{prefix}.b{i}"].data
        worst = min(worst, np.abs(pre).min())
        h = ad.dropout(Tensor(np.maximum(pre, 0.0)), rate, bool(rate), rng).data
    return worst


def _classifier_loss(r):
    # redraw instances with a ReLU input within 1e-3 of its kink
    while True:
        seed = int(r.integers(2**31))
        model = MlpClassifier([4, 8, 8, 3], dropout=0.2, seed=seed)
        _randomize_biases(model, r)
        x, y = r.uniform(0, 1, size=(6, 4)), r.integers(0, 3, size=6)
        if _min_hidden_preactivation(model.params, "classifier", x, 0.2, seed) > KINK_MARGIN:
            break

    def loss(inp=x):
        return ad.softmax_cross_entropy(model.forward(inp, train=True, rng=SeededRng(seed)), y)

    worst = ad.finite_diff_check(lambda t: loss(t), x, STEP)
    for name in list(model.params):
        worst = max(worst, ad.finite_diff_check(_with_param(model, name, loss), model.params[name].data.copy(), STEP))
    return worst


def _scheduler_loss(r):
    while True:
        net = SchedulerNet(16, seed=int(r.integers(2**31)))
        _randomize_biases(net, r)
        z = r.uniform(0, 1, size=(8, 3))
        if _min_hidden_preactivation(net.params, "scheduler", z) > KINK_MARGIN:
            break

    def loss(inp=z):
        return ad.tmean(net.forward(inp))

    worst = ad.finite_diff_check(lambda t: loss(t), z, STEP)
    for name in list(net.params):
        worst = max(worst, ad.finite_diff_check(_with_param(net, name, loss), net.params[name].data.copy(), STEP))
    return worst


CHECKS = {
    "matmul": _op_matmul,
    "add_bias": _op_add_bias,
    "relu": _op_relu,
    "sigmoid": _op_sigmoid,
    "softmax_cross_entropy": _op_cross_entropy,
    "dropout": _op_dropout,
    "classifier_loss": _classifier_loss,
    "scheduler_loss": _scheduler_loss,
}


def run_gradchecks(seed: int = 0, instances: int = 20) -> dict[str, float]:
    """Worst relative error per check over ``instances`` random draws."""
    out = {}
    for name, check in CHECKS.items():
        r = SeededRng(seed).stream("gradcheck." + name).generator
        out[name] = max(check(r) for _ in range(instances))
    return out
