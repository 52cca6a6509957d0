"""Linear beta noise schedule with cached derived quantities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class NoiseSchedule:
    t_train: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    betas: np.ndarray = field(init=False)
    alphas: np.ndarray = field(init=False)
    alpha_cumprod: np.ndarray = field(init=False)

    def __post_init__(self):
        self.betas = np.linspace(self.beta_start, self.beta_end, self.t_train)
        if not (np.all(self.betas > 0) and np.all(self.betas < 1)):
            raise ValueError("betas must lie in (0, 1)")
        self.alphas = 1.0 - self.betas
        self.alpha_cumprod = np.cumprod(self.alphas)

    def inference_steps(self, steps: int) -> list[int]:
        """Uniform subsample of the training schedule, decreasing order."""
        if not 1 <= steps <= self.t_train:
            raise ValueError(f"steps={steps} outside [1, {self.t_train}]")
        ts = np.linspace(self.t_train - 1, 0, steps)
        out = sorted({int(round(t)) for t in ts}, reverse=True)
        return out
