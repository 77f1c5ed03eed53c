"""Small dense-tensor autodiff engine.

Every value is a float64 numpy array wrapped in a :class:`Tensor`. Ops record
their parents and a backward closure; :func:`backward` and :func:`grad` walk
the graph in reverse topological order.

Broadcasting is deliberately limited to :func:`add_bias` (matrix + row vector).
"""
from __future__ import annotations

import zlib

import numpy as np

from .errors import ConfigError, ContractError, DimensionError

RNG_ALGORITHM = "PCG64"


class Tensor:
    """A graph node: value, lazily-allocated gradient, and backward rule."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "probs")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self.probs = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(value, parents, backward) -> Tensor:
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(value, requires_grad=True, _parents=parents, _backward=backward)
    return Tensor(value)


class SeededRng:
    """Portable seeded generator (numpy PCG64) with named sub-streams.

    Streams are derived from ``(seed, crc32(name), *extra)`` through
    ``SeedSequence`` so they do not depend on Python's salted ``hash``.
    """

    def __init__(self, seed: int, key: tuple = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self.algorithm = RNG_ALGORITHM
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def stream(self, name: str, *extra: int) -> "SeededRng":
        return SeededRng(self.seed, self.key + (zlib.crc32(name.encode()),) + tuple(extra))

    def uniform(self, low, high, size):
        return self.generator.uniform(low, high, size)

    def random(self, size):
        return self.generator.random(size)

    def normal(self, size):
        return self.generator.standard_normal(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)


# ---------------------------------------------------------------- ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} and {b.shape}")
    A, B = a.data, b.data

    def backward(g, needs):
        return (g @ B.T if needs[0] else None, A.T @ g if needs[1] else None)

    return _result(A @ B, (a, b), backward)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Matrix [n, m] plus row vector [m]; the only broadcasting op."""
    x, b = as_tensor(x), as_tensor(b)
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DimensionError(f"add_bias shape mismatch: {x.shape} and {b.shape}")

    def backward(g, needs):
        return (g if needs[0] else None, g.sum(axis=0) if needs[1] else None)

    return _result(x.data + b.data, (x, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add_bias(matmul(x, w), b)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g, needs):
        return (g * mask,)

    return _result(np.where(mask, x.data, 0.0), (x,), backward)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = _stable_sigmoid(x.data)

    def backward(g, needs):
        return (g * s * (1.0 - s),)

    return _result(s, (x,), backward)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels, reduction: str = "mean") -> Tensor:
    """Cross-entropy of integer ``labels`` under ``softmax(logits)``.

    ``reduction`` is ``"mean"`` (the training loss), ``"sum"`` (keeps per-sample
    input gradients independent) or ``"none"`` (per-sample losses, shape [B]).
    The softmax probabilities are attached to the result as ``.probs``.
    """
    logits = as_tensor(logits)
    if logits.data.ndim != 2:
        raise DimensionError(f"logits must be [B, K], got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"label out of range [0, {k})")
    logp = log_softmax(logits.data)
    probs = np.exp(logp)
    rows = np.arange(n)
    per_sample = -logp[rows, labels]
    if reduction == "mean":
        value, scale = per_sample.mean(), 1.0 / n
    elif reduction == "sum":
        value, scale = per_sample.sum(), 1.0
    elif reduction == "none":
        value, scale = per_sample, None
    else:
        raise ConfigError(f"unknown reduction {reduction!r}")

    def backward(g, needs):
        d = probs.copy()
        d[rows, labels] -= 1.0
        if scale is None:
            return (d * g[:, None],)
        return (d * (g * scale),)

    out = _result(value, (logits,), backward)
    out.probs = probs
    return out


def dropout(x: Tensor, rate: float, train: bool, rng: SeededRng | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-rate) so eval mode is identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("train-mode dropout needs an rng")
    keep = rng.random(x.shape) >= rate
    scale = keep / (1.0 - rate)

    def backward(g, needs):
        return (g * scale,)

    return _result(x.data * scale, (x,), backward)


def mul(x: Tensor, c) -> Tensor:
    """Elementwise product with a constant array of the same shape."""
    x = as_tensor(x)
    c = np.asarray(c, dtype=np.float64)
    if c.shape != x.shape and c.shape != ():
        raise DimensionError(f"mul shape mismatch: {x.shape} and {c.shape}")

    def backward(g, needs):
        return (g * c,)

    return _result(x.data * c, (x,), backward)


def tsum(x: Tensor) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def backward(g, needs):
        return (np.full(shape, float(g)),)

    return _result(x.data.sum(), (x,), backward)


def tmean(x: Tensor) -> Tensor:
    x = as_tensor(x)
    shape, n = x.shape, x.data.size

    def backward(g, needs):
        return (np.full(shape, float(g) / n),)

    return _result(x.data.mean(), (x,), backward)


# ---------------------------------------------------------------- backward


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _propagate(root: Tensor, wanted=None):
    if root.data.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    grads: dict[int, np.ndarray] = {}
    if not root.requires_grad:
        return [], grads
    order = _topo_order(root)
    if wanted is None:
        live = None
    else:
        # only nodes that depend on a wanted input need a gradient
        live = set(wanted)
        for node in order:
            if any(id(p) in live for p in node._parents):
                live.add(id(node))
    grads[id(root)] = np.ones_like(root.data)
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        needs = tuple(
            p.requires_grad and (live is None or id(p) in live) for p in node._parents
        )
        for p, pg, need in zip(node._parents, node._backward(g, needs), needs):
            if not need or pg is None:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
    return order, grads


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(node) into ``.grad`` of every reachable node.

    Gradients accumulate across calls; zero them first when that is not wanted.
    """
    order, grads = _propagate(root)
    for node in order:
        g = grads.get(id(node))
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g


def grad(root: Tensor, inputs) -> list[np.ndarray]:
    """Gradients of ``root`` w.r.t. ``inputs`` without touching any ``.grad``."""
    inputs = list(inputs)
    _, grads = _propagate(root, wanted=[id(t) for t in inputs])
    return [grads.get(id(t), np.zeros_like(t.data)) for t in inputs]


def finite_diff_check(f, x, step: float = 1e-5) -> float:
    """Max relative error between backward gradients and central differences.

    ``f`` maps a Tensor to a scalar Tensor and must be deterministic.
    """
    if step <= 0:
        raise ContractError("step must be positive")
    x0 = np.array(as_tensor(x).data, dtype=np.float64)
    leaf = Tensor(x0.copy(), requires_grad=True)
    analytic = grad(f(leaf), [leaf])[0]
    numeric = np.zeros_like(x0)
    flat = numeric.reshape(-1)
    for i in range(x0.size):
        xp = x0.copy().reshape(-1)
        xm = x0.copy().reshape(-1)
        xp[i] += step
        xm[i] -= step
        fp = f(Tensor(xp.reshape(x0.shape))).item()
        fm = f(Tensor(xm.reshape(x0.shape))).item()
        flat[i] = (fp - fm) / (2.0 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    err = np.abs(analytic - numeric) / denom
    return float(err.max()) if err.size else 0.0
