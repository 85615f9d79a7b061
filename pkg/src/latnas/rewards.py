"""Scalar rewards trading model quality against inference latency.

Three shapes, all parameterized by a target latency T0 and a negative
cost exponent beta:

  soft_exponential   r = Q * (T / T0)^beta
  hard_exponential   r = Q               if T <= T0
                         Q * (T/T0)^beta otherwise
  absolute           r = Q + beta * |T/T0 - 1|

The absolute form is maximized in T exactly at T0 and is scale-invariant
in latency: rescaling T and T0 together leaves it unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REWARD_KINDS = ("soft_exponential", "hard_exponential", "absolute")

# Cost exponent defaults: the midpoint of the usual soft-reward grid for
# the exponential shapes, and a documented choice for the absolute shape.
DEFAULT_BETA = {"soft_exponential": -0.07, "hard_exponential": -0.07, "absolute": -0.30}


@dataclass(frozen=True)
class RewardConfig:
    kind: str
    beta: float
    T0: float

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise ValueError(f"unknown reward kind {self.kind!r}")
        if not np.isfinite(self.beta) or self.beta >= 0:
            raise ValueError("cost exponent beta must be finite and negative")
        if self.T0 <= 0:
            raise ValueError("target latency T0 must be positive")

    @classmethod
    def make(cls, kind: str, T0: float, beta: float | None = None) -> "RewardConfig":
        if beta is None:
            beta = DEFAULT_BETA[kind]
        return cls(kind=kind, beta=beta, T0=T0)


def reward(config: RewardConfig, Q: float, T: float) -> float:
    """Reward of a candidate with quality ``Q`` and latency ``T`` ms."""
    if T <= 0:
        raise ValueError(f"latency must be positive, got {T}")
    ratio = T / config.T0
    if config.kind == "soft_exponential":
        return Q * ratio**config.beta
    if config.kind == "hard_exponential":
        return Q if T <= config.T0 else Q * ratio**config.beta
    return Q + config.beta * abs(ratio - 1.0)


def contour_grid(
    config: RewardConfig,
    Q_range: tuple[float, float],
    T_range: tuple[float, float],
    resolution: int = 64,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense reward evaluations for contour plotting.

    Returns (Q_values, T_values, grid) with grid[i, j] = reward at
    (Q_values[i], T_values[j]).
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    q_lo, q_hi = Q_range
    t_lo, t_hi = T_range
    if q_hi <= q_lo or t_hi <= t_lo:
        raise ValueError("ranges must be nonempty")
    if t_lo <= 0:
        raise ValueError("latency range must be positive")
    qs = np.linspace(q_lo, q_hi, resolution)
    ts = np.linspace(t_lo, t_hi, resolution)
    grid = np.empty((resolution, resolution))
    for i, q in enumerate(qs):
        for j, t in enumerate(ts):
            grid[i, j] = reward(config, float(q), float(t))
    return qs, ts, grid
