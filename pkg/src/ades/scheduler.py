"""Budget scheduling: cue vector -> score sigma -> per-sample epsilon.

``learnable`` uses :class:`~ades.models.SchedulerNet`, ``static`` a clamped
weighted sum of cues, ``fixed`` ignores the cues entirely.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cues import input_gradient
from .errors import ConfigError, ContractError

SCHEDULER_MODES = ("learnable", "static", "fixed")
ACTIVE_TOL = 1e-9


@dataclass(frozen=True)
class ScheduleConfig:
    eps_min: float = 2 / 255
    lam: float = 12 / 255
    mode: str = "learnable"
    static_weights: tuple = (1 / 3, 1 / 3, 1 / 3)
    domain_width: float = 1.0

    def validate(self) -> "ScheduleConfig":
        if self.mode not in SCHEDULER_MODES:
            raise ConfigError(f"scheduler_mode {self.mode!r} not in {SCHEDULER_MODES}")
        if self.eps_min < 0 or self.lam < 0:
            raise ConfigError("eps_min and lambda must be >= 0")
        if self.eps_min + self.lam > self.domain_width:
            raise ConfigError(f"eps_min + lambda = {self.eps_min + self.lam} exceeds "
                              f"domain width {self.domain_width}")
        if len(self.static_weights) != 3 or not np.all(np.isfinite(self.static_weights)):
            raise ConfigError("static_weights must be three finite reals")
        return self

    @property
    def eps_max(self) -> float:
        return self.eps_min + self.lam


@dataclass
class EpsilonSchedule:
    eps: np.ndarray
    sigma: np.ndarray
    config: ScheduleConfig = field(default_factory=ScheduleConfig)


def epsilon_from_sigma(sigma, cfg: ScheduleConfig) -> EpsilonSchedule:
    cfg.validate()
    sigma = np.asarray(sigma, dtype=np.float64).reshape(-1)
    if np.any(sigma < 0) or np.any(sigma > 1):
        raise ContractError("sigma must lie in [0, 1]")
    return EpsilonSchedule(cfg.eps_min + cfg.lam * sigma, sigma, cfg)


def static_fusion(z, weights) -> np.ndarray:
    """Clamped weighted sum of normalized cues; ``z`` is [B, 3] or a CueVector."""
    z = z.as_matrix() if hasattr(z, "as_matrix") else np.asarray(z, dtype=np.float64)
    return np.clip(z @ np.asarray(weights, dtype=np.float64), 0.0, 1.0)


def epsilon_grad_surrogate(model, x_adv, x, y, eps) -> np.ndarray:
    """First-order dL_i/d eps_i at the attack's solution.

    At an active constraint the perturbation scales radially with the budget,
    so dL/d eps ~ grad_x L(x_adv) . (delta / eps). Samples whose perturbation
    sits strictly inside the ball get zero.
    """
    eps = np.asarray(eps, dtype=np.float64).reshape(-1)
    if np.any(eps <= 0):
        raise ContractError("epsilon_grad_surrogate needs eps > 0 for every sample")
    delta = np.asarray(x_adv, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    active = np.abs(delta).max(axis=1) >= eps - ACTIVE_TOL
    g = input_gradient(model, x_adv, y)
    out = np.einsum("ij,ij->i", g, delta) / eps
    return np.where(active, out, 0.0)
