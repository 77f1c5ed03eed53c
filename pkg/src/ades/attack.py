"""L-infinity PGD under per-sample budgets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import SeededRng
from .cues import input_gradient
from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class AttackConfig:
    steps: int = 10
    alpha: float = 2 / 255
    random_start: bool = True
    domain: tuple = (0.0, 1.0)

    def validate(self) -> "AttackConfig":
        if self.steps < 1:
            raise ConfigError(f"attack steps must be >= 1, got {self.steps}")
        if not self.alpha > 0:
            raise ConfigError(f"attack alpha must be > 0, got {self.alpha}")
        if self.domain[0] >= self.domain[1]:
            raise ConfigError(f"bad domain {self.domain}")
        return self


def linf_project(delta, eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=np.float64).reshape(-1, 1)
    return np.clip(delta, -eps, eps)


def pgd_attack(model, x, y, eps, cfg: AttackConfig, rng: SeededRng | None = None) -> np.ndarray:
    """Signed-gradient ascent on the CE loss, projected onto each sample's ball.

    ``eps`` is a per-sample array (or a scalar for a uniform budget). Samples
    with a zero budget are returned unchanged. The random start draws
    u ~ U[-1, 1] per coordinate and scales it by eps, so with a fixed rng the
    start point moves radially as eps changes.
    """
    cfg.validate()
    x = np.asarray(x, dtype=np.float64)
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), (x.shape[0],)).copy()
    if np.any(eps < 0) or not np.all(np.isfinite(eps)):
        raise ContractError("attack budgets must be finite and nonnegative")
    lo, hi = cfg.domain
    live = eps > 0
    if not live.any():
        return x.copy()
    col = eps[:, None]
    if cfg.random_start:
        if rng is None:
            raise ConfigError("random_start needs an rng")
        delta = rng.uniform(-1.0, 1.0, x.shape) * col
        x_adv = np.clip(x + delta, lo, hi)
    else:
        x_adv = x.copy()
    for _ in range(cfg.steps):
        g = input_gradient(model, x_adv, y)
        x_adv = x_adv + cfg.alpha * np.sign(g)
        x_adv = np.clip(x + linf_project(x_adv - x, eps), lo, hi)
    x_adv[~live] = x[~live]
    return x_adv
