"""Protection levels, tightness and quality metrics, and conservatism checks.

Right-tail metrics are evaluated by mirroring: the right bound and the truth are
negated and the left-tail formulas applied.  Reported right-side violating
ranges are therefore in the mirrored frame, i.e. levels ``1 - tau``.
"""

from dataclasses import dataclass, field

import numpy as np

from .bounds import GaussianBound, Side
from .distributions import EmpiricalSample, GaussianMixture
from .stdnorm import std_normal_cdf, std_normal_pdf, std_normal_quantile

__all__ = [
    "protection_level", "bonferroni_pl", "wasserstein_tail", "overbound_factor",
    "verify_overbound", "certify_continuum", "ConservatismReport", "CertificationReport",
    "Truth", "as_truth", "format_range",
]


def _tail_prob(ir, epsilon, n):
    if not 0 < ir < 0.5:
        raise ValueError("integrity risk must lie in (0, 0.5)")
    if n < 1:
        raise ValueError("n must be >= 1")
    p = ir / (1.0 + epsilon) ** n
    if not 0 < p < 1:
        raise ValueError("ir / (1 + eps)^n must lie in (0, 1)")
    return p


def protection_level(bound, ir=1e-3, n=1):
    """Protection level of the mean of ``n`` independent errors under ``bound``."""
    p = _tail_prob(ir, bound.epsilon, n)
    z = std_normal_quantile(p)
    if bound.side is Side.RIGHT:
        z = -z
    return float(z * bound.sigma / np.sqrt(n) + bound.mu)


def bonferroni_pl(bound, ir=1e-3, n=1):
    """Union-bound protection level; ignores the excess mass and the averaging."""
    if n < 1 or not 0 < ir / n < 1:
        raise ValueError("ir / n must lie in (0, 1)")
    z = std_normal_quantile(ir / n)
    if bound.side is Side.RIGHT:
        z = -z
    return float(z * bound.sigma + bound.mu)


class Truth:
    """Quantile and cdf access to a reference distribution.

    Wraps a :class:`GaussianMixture`, an :class:`EmpiricalSample`, or a pair of
    callables ``(quantile, cdf)``.
    """

    def __init__(self, quantile, cdf, negate=None):
        self.quantile = quantile
        self.cdf = cdf
        self._negate = negate

    def negate(self):
        if self._negate is not None:
            return as_truth(self._negate())
        q, c = self.quantile, self.cdf
        return Truth(lambda p: -np.asarray(q(1.0 - np.asarray(p))),
                     lambda x: 1.0 - np.asarray(c(-np.asarray(x))))


def as_truth(obj):
    if isinstance(obj, Truth):
        return obj
    if isinstance(obj, (GaussianMixture, EmpiricalSample)):
        return Truth(obj.quantile, obj.cdf, obj.negate)
    if isinstance(obj, GaussianBound):
        b = GaussianBound(obj.mu, obj.sigma, Side.LEFT, 0.0)
        return Truth(lambda p: b.overbound_quantile(p), b.cdf,
                     lambda: GaussianMixture((1.0,), (-obj.mu,), (obj.sigma,)))
    if isinstance(obj, tuple) and len(obj) == 2 and all(callable(f) for f in obj):
        return Truth(*obj)
    if hasattr(obj, "quantile") and hasattr(obj, "cdf"):
        return Truth(obj.quantile, obj.cdf, getattr(obj, "negate", None))
    raise TypeError(f"cannot use {type(obj).__name__} as a reference distribution")


def _levels(grid):
    return np.asarray(getattr(grid, "levels", grid), dtype=float)


def _left_frame(truth, bound):
    """Truth and bound seen as a left-tail problem."""
    truth = as_truth(truth)
    if bound.side is Side.RIGHT:
        return truth.negate(), bound.mirror()
    return truth, bound


def wasserstein_tail(truth, bound, grid):
    """Sum over lower-half levels of the quantile gap between truth and bound."""
    truth, bound = _left_frame(truth, bound)
    lv = _levels(grid)
    lv = lv[lv < 0.5]
    if lv.size == 0:
        return 0.0
    q = np.asarray(truth.quantile(lv), dtype=float)
    return float(np.abs(q - bound.overbound_quantile(lv)).sum())


def overbound_factor(truth, bound, grid):
    """Mean relative excess of the bound's tail probability over the level."""
    truth, bound = _left_frame(truth, bound)
    lv = _levels(grid)
    lv = lv[lv < 0.5]
    if lv.size == 0:
        return 0.0
    q = np.asarray(truth.quantile(lv), dtype=float)
    ratio = (1.0 + bound.epsilon) * bound.cdf(q) / lv
    return float(np.mean(ratio - 1.0))


@dataclass
class ConservatismReport:
    side: Side
    passed: bool
    levels: np.ndarray
    margins: np.ndarray
    violating_range: tuple | None = None

    def to_dict(self):
        return {"side": self.side.value, "passed": self.passed,
                "violating_range": None if self.violating_range is None else list(self.violating_range),
                "violating_range_label": format_range(self.violating_range),
                "min_margin": float(self.margins.min()),
                "n_levels": int(self.levels.size)}


def format_range(rng):
    """Table-style label such as ``0.19-0.84`` (``"yes"`` when nothing violates)."""
    if rng is None:
        return "yes"
    return f"{_short(rng[0])}-{_short(rng[1])}"


def _short(x):
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return s or "0"


def verify_overbound(truth, bound, grid, rtol=1e-12):
    """Check the one-sided conservatism inequality at every grid level.

    Margins are ``(1+eps) F_bound(q_tau) - tau`` in the left frame (for a right
    bound, on the negated truth at level ``1 - tau``).  A margin counts as
    violated only below ``-rtol * tau`` so exact self-bounding is not flagged
    by rounding.  The violating range is the hull of the violating levels,
    reported in the left frame.
    """
    side = bound.side
    truth, lb = _left_frame(truth, bound)
    lv = _levels(grid)
    q = np.asarray(truth.quantile(lv), dtype=float)
    margins = (1.0 + lb.epsilon) * lb.cdf(q) - lv
    bad = margins < -rtol * lv
    rng = None
    if bad.any():
        rng = (float(lv[bad].min()), float(lv[bad].max()))
    return ConservatismReport(side, not bad.any(), lv, margins, rng)


@dataclass
class CertificationReport:
    m_T: float
    L_q: float
    L_qbar: float
    h_T: float
    slack: float
    certified: bool
    interval: tuple
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"m_T": self.m_T, "L_q": self.L_q, "L_qbar": self.L_qbar, "h_T": self.h_T,
                "slack": self.slack, "certified": self.certified, "interval": list(self.interval),
                **self.details}


def quantile_gap(truth, bound, tau):
    """``g(tau) = F^-1(tau) - F_bound^-1(tau / (1 + eps))`` in the left frame."""
    truth, bound = _left_frame(truth, bound)
    tau = np.asarray(tau, dtype=float)
    return np.asarray(truth.quantile(tau), dtype=float) - bound.overbound_quantile(tau)


def certify_continuum(truth, bound, grid, tau_min=None, refine=10, safety=1.5):
    """Extend grid conservatism to every level in ``[tau_min, 1/2]``.

    ``h_T`` is the largest gap between consecutive points of
    ``{tau_min} + grid + {1/2}``, so the whole interval is covered.
    """
    truth_l, bound_l = _left_frame(truth, bound)
    lv = _levels(grid)
    lv = lv[lv <= 0.5]
    if lv.size == 0:
        raise ValueError("grid has no levels in (0, 1/2]")
    tau_min = float(lv[0]) if tau_min is None else float(tau_min)
    if not 0 < tau_min <= lv[0]:
        raise ValueError("tau_min must be positive and no larger than the first grid level")
    if refine < 1 or safety < 1:
        raise ValueError("refine must be >= 1 and safety >= 1")
    g = quantile_gap(truth_l, bound_l, lv)
    m_T = float(g.min())
    knots = np.unique(np.concatenate(([tau_min], lv, [0.5])))
    h_T = float(np.diff(knots).max()) if knots.size > 1 else 0.0
    # the bound's quantile slope is largest at the lower end of the interval
    eps = bound_l.epsilon
    z_min = std_normal_quantile(tau_min / (1.0 + eps))
    L_qbar = float(bound_l.sigma / ((1.0 + eps) * std_normal_pdf(z_min)))
    fine = np.linspace(tau_min, 0.5, (knots.size - 1) * refine + 1)
    qf = np.asarray(truth_l.quantile(fine), dtype=float)
    L_q = float(safety * np.max(np.diff(qf) / np.diff(fine)))
    slack = m_T - (L_q + L_qbar) * h_T
    return CertificationReport(m_T, L_q, L_qbar, h_T, float(slack), bool(slack > 0),
                               (tau_min, 0.5), {"refine": refine, "safety": safety})
