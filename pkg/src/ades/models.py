"""Classifier and scheduler networks, parameter sets and checkpoint I/O."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import SeededRng, Tensor
from .errors import ConfigError, DimensionError

CHECKPOINT_MAGIC = b"ADESCKPT"
CHECKPOINT_VERSION = 1


def glorot_uniform(fan_in: int, fan_out: int, rng: SeededRng) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


def init_params(prefix: str, sizes, seed) -> dict[str, Tensor]:
    """Glorot-uniform weights and zero biases for an MLP with layer ``sizes``.

    ``seed`` is an int or a :class:`SeededRng`; the result is a pure function of it.
    """
    rng = seed if isinstance(seed, SeededRng) else SeededRng(seed)
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"{prefix}.W{i}"] = Tensor(glorot_uniform(fan_in, fan_out, rng), requires_grad=True,
                                          name=f"{prefix}.W{i}")
        params[f"{prefix}.b{i}"] = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{prefix}.b{i}")
    return params


class MlpClassifier:
    """affine -> ReLU -> dropout for each hidden layer, then a final affine layer."""

    def __init__(self, sizes, dropout: float = 0.0, params=None, seed=0):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ConfigError(f"bad layer sizes {sizes}")
        if not 0.0 <= dropout < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {dropout}")
        self.sizes = sizes
        self.dropout = float(dropout)
        self.params = params if params is not None else init_params("classifier", sizes, seed)

    @property
    def num_classes(self) -> int:
        return self.sizes[-1]

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    def layers(self):
        n = len(self.sizes) - 1
        return [(self.params[f"classifier.W{i}"], self.params[f"classifier.b{i}"]) for i in range(n)]

    def forward(self, x, train: bool = False, rng: SeededRng | None = None) -> Tensor:
        x = ad.as_tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(f"classifier expects [B, {self.input_dim}] input, got {x.shape}")
        layers = self.layers()
        h = x
        for w, b in layers[:-1]:
            h = ad.relu(ad.linear(h, w, b))
            h = ad.dropout(h, self.dropout, train, rng)
        w, b = layers[-1]
        return ad.linear(h, w, b)

    __call__ = forward

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.forward(np.asarray(x)).data, axis=1)


class SchedulerNet:
    """Two affine layers with a ReLU between and a sigmoid on the single output."""

    def __init__(self, hidden: int = 16, params=None, seed=0):
        self.hidden = int(hidden)
        self.sizes = [3, self.hidden, 1]
        self.params = params if params is not None else init_params("scheduler", self.sizes, seed)

    def forward(self, z) -> Tensor:
        z = ad.as_tensor(z)
        if z.data.ndim != 2 or z.shape[1] != 3:
            raise DimensionError(f"scheduler expects [B, 3] cues, got {z.shape}")
        p = self.params
        h = ad.relu(ad.linear(z, p["scheduler.W0"], p["scheduler.b0"]))
        return ad.sigmoid(ad.linear(h, p["scheduler.W1"], p["scheduler.b1"]))

    __call__ = forward


@dataclass
class ParamSet:
    """Named parameters (classifier first, then scheduler) with momentum buffers."""

    params: dict[str, Tensor]
    momentum: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, t in self.params.items():
            if name not in self.momentum:
                self.momentum[name] = np.zeros_like(t.data)
            elif self.momentum[name].shape != t.shape:
                raise DimensionError(f"momentum buffer for {name} has shape "
                                     f"{self.momentum[name].shape}, parameter {t.shape}")

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self.params if n.startswith(prefix)]

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def copy(self) -> "ParamSet":
        return ParamSet({n: Tensor(t.data.copy(), requires_grad=True, name=n) for n, t in self.params.items()},
                        {n: m.copy() for n, m in self.momentum.items()})


def build_models(sizes, dropout, scheduler_hidden, seed: int):
    """Fresh classifier, scheduler and their joint :class:`ParamSet`."""
    root = SeededRng(seed)
    clf = MlpClassifier(sizes, dropout, seed=root.stream("init.classifier"))
    sched = SchedulerNet(scheduler_hidden, seed=root.stream("init.scheduler"))
    return clf, sched, ParamSet({**clf.params, **sched.params})


# ---------------------------------------------------------------- checkpoints


def _write_record(buf: bytearray, name: str, arr: np.ndarray) -> None:
    raw = name.encode("utf-8")
    buf += struct.pack("<I", len(raw)) + raw
    buf += struct.pack("<I", arr.ndim)
    buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
    buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()


def checkpoint_bytes(paramset: ParamSet, epoch: int | None = None) -> bytes:
    """Serialize parameters then momentum buffers in the same order.

    Momentum records are named ``momentum/<param name>``. A trailing rank-0
    ``meta/epoch`` record is written when ``epoch`` is given.
    """
    buf = bytearray(CHECKPOINT_MAGIC)
    buf += struct.pack("<I", CHECKPOINT_VERSION)
    ordered = paramset.names("classifier.") + paramset.names("scheduler.")
    ordered += [n for n in paramset.params if n not in ordered]
    for name in ordered:
        _write_record(buf, name, paramset.params[name].data)
    for name in ordered:
        _write_record(buf, f"momentum/{name}", paramset.momentum[name])
    if epoch is not None:
        _write_record(buf, "meta/epoch", np.array(float(epoch)))
    return bytes(buf)


def save_checkpoint(path, paramset: ParamSet, epoch: int | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(paramset, epoch))


def load_checkpoint(path) -> tuple[ParamSet, int | None]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not an ADES checkpoint")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    records = {}
    while pos < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(dims)
        pos += 8 * count
        records[name] = arr
    epoch = records.pop("meta/epoch", None)
    params = {n: Tensor(a.copy(), requires_grad=True, name=n) for n, a in records.items()
              if not n.startswith("momentum/")}
    momentum = {n[len("momentum/"):]: a.copy() for n, a in records.items() if n.startswith("momentum/")}
    return ParamSet(params, momentum), None if epoch is None else int(epoch)


def models_from_paramset(paramset: ParamSet, dropout: float = 0.0):
    """Rebuild classifier and scheduler objects sharing ``paramset``'s tensors."""
    clf_params = {n: t for n, t in paramset.params.items() if n.startswith("classifier.")}
    n_layers = len(clf_params) // 2
    sizes = [clf_params["classifier.W0"].shape[0]] + [clf_params[f"classifier.W{i}"].shape[1]
                                                      for i in range(n_layers)]
    clf = MlpClassifier(sizes, dropout, params=clf_params)
    sched_params = {n: t for n, t in paramset.params.items() if n.startswith("scheduler.")}
    sched = SchedulerNet(sched_params["scheduler.W0"].shape[1], params=sched_params) if sched_params else None
    return clf, sched
