"""One-sided Gaussian bounds with excess mass."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .stdnorm import std_normal_cdf, std_normal_quantile


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class GaussianBound:
    mu: float
    sigma: float
    side: Side = Side.LEFT
    epsilon: float = 0.0

    def __post_init__(self):
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"bound sigma must be positive and finite, got {self.sigma!r}")
        if not np.isfinite(self.mu):
            raise ValueError("bound mean must be finite")
        object.__setattr__(self, "side", Side(self.side))
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    def cdf(self, x):
        return std_normal_cdf((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def overbound_quantile(self, tau):
        """Quantile of the overbounding cdf on this bound's half.

        Left: ``mu + Q^-1(tau/(1+eps)) sigma``; right:
        ``mu + Q^-1((tau+eps)/(1+eps)) sigma``.
        """
        tau = np.asarray(tau, dtype=float)
        if self.side is Side.LEFT:
            u = tau / (1.0 + self.epsilon)
        else:
            u = (tau + self.epsilon) / (1.0 + self.epsilon)
        return self.mu + std_normal_quantile(u) * self.sigma

    def mirror(self):
        """The same bound seen on the negated axis (left <-> right)."""
        other = Side.RIGHT if self.side is Side.LEFT else Side.LEFT
        return GaussianBound(-self.mu, self.sigma, other, self.epsilon)

    def to_dict(self):
        return {"mu": self.mu, "sigma": self.sigma, "side": self.side.value, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mu"], d["sigma"], Side(d["side"]), d.get("epsilon", 0.0))
