"""Reference overbounding constructions used for comparison.

All of them read the data through the same quantile grid as the learned method.
Right-tail bounds are built by running the left-tail procedure on the negated
sample and mirroring the result.
"""

import numpy as np

from .bounds import GaussianBound, Side
from .metrics import as_truth
from .stdnorm import std_normal_quantile


class InfeasibleBoundError(ValueError):
    """No Gaussian satisfies the constraints within the search range."""


class InapplicableBoundError(ValueError):
    """The construction does not apply to this tail of the data."""


def _grid_levels(grid):
    return np.asarray(getattr(grid, "levels", grid), dtype=float)


def _check_size(sample, grid):
    count = getattr(sample, "count", None)
    if count is not None and count < _grid_levels(grid).size:
        raise ValueError(f"sample of {count} values is smaller than the grid")


def _paired_left(q, lv, epsilon, mean, spread, step_frac=1e-3, max_ranges=2.0, chunk=4096):
    """Scan means downward from ``mean``; first feasible one with its smallest sigma."""
    z = np.atleast_1d(std_normal_quantile(lv / (1.0 + epsilon)))
    neg = z < 0
    pos = z > 0
    zero = ~(neg | pos)
    step = step_frac * spread
    n_steps = int(np.ceil(max_ranges / step_frac))
    for start in range(0, n_steps + 1, chunk):
        mu = mean - step * np.arange(start, min(start + chunk, n_steps + 1))
        mu_col = mu[:, None]
        # sigma >= (mu - q) / (-z) on the lower levels, sigma <= (q - mu) / z above
        lower = np.max(np.where(neg, (mu_col - q) / np.where(neg, -z, 1.0), -np.inf), axis=1)
        upper = np.min(np.where(pos, (q - mu_col) / np.where(pos, z, 1.0), np.inf), axis=1)
        lower = np.maximum(lower, 0.0)
        ok = upper >= lower * (1.0 - 1e-12)
        ok &= upper > 0
        if zero.any():
            ok &= np.all(q[zero] >= mu_col, axis=1)
        # sigma must be strictly positive
        sig = np.where(lower > 0, lower, np.minimum(upper, spread * 1e-6))
        ok &= sig > 0
        hit = np.flatnonzero(ok)
        if hit.size:
            i = hit[0]
            return float(mu[i]), float(sig[i])
    raise InfeasibleBoundError("paired overbound: no feasible (mean, sigma) within the scan range")


def _paired_side(truth, lv, epsilon):
    q = np.asarray(truth.quantile(lv), dtype=float)
    if hasattr(truth, "values"):
        mean = float(np.mean(truth.values))
    elif isinstance(getattr(truth, "mean", None), float):
        mean = truth.mean
    else:
        mean = float(truth.quantile(0.5))
    spread = float(q.max() - q.min())
    if spread <= 0:
        raise InfeasibleBoundError("paired overbound: degenerate sample with zero range")
    return _paired_left(q, lv, epsilon, mean, spread)


def paired_overbound(sample, epsilon, grid):
    """Paired Gaussian overbound with excess mass, one bound per tail.

    Returns ``(left, right)`` bounds.
    """
    _check_size(sample, grid)
    lv = _grid_levels(grid)
    mu_l, s_l = _paired_side(sample, lv, epsilon)
    neg = sample.negate() if hasattr(sample, "negate") else as_truth(sample).negate()
    mu_r, s_r = _paired_side(neg, lv, epsilon)
    return (GaussianBound(mu_l, s_l, Side.LEFT, epsilon),
            GaussianBound(-mu_r, s_r, Side.RIGHT, epsilon))


def _two_step_left(truth, lv, epsilon):
    quant = truth.quantile
    c = float(quant(0.5))
    p = lv[lv < 0.5]
    if p.size == 0:
        raise InfeasibleBoundError("two-step overbound needs grid levels below 1/2")
    # step 1: symmetric unimodal envelope about the median, widened by the excess mass
    lo_p = np.clip(p * (1.0 + epsilon), None, np.nextafter(1.0, 0.0))
    hi_p = np.clip(1.0 - p * (1.0 + epsilon), np.nextafter(0.0, 1.0), None)
    h = np.maximum(c - np.asarray(quant(lo_p)), np.asarray(quant(hi_p)) - c)
    # step 2: Gaussian stddev covering the envelope
    sigma = float(np.max(h / -np.atleast_1d(std_normal_quantile(p))))
    if not sigma > 0:
        raise InfeasibleBoundError("two-step overbound: non-positive envelope")
    # shift the mean so the tightest grid constraint holds with equality
    z = np.atleast_1d(std_normal_quantile(lv / (1.0 + epsilon)))
    q = np.asarray(quant(lv), dtype=float)
    mu = float(np.min(q - z * sigma))
    return mu, sigma


def two_step_overbound(sample, epsilon, grid):
    """Symmetric envelope about the median, then a per-tail mean shift.

    Returns ``(left, right)`` bounds.
    """
    _check_size(sample, grid)
    lv = _grid_levels(grid)
    truth = as_truth(sample)
    mu_l, s_l = _two_step_left(truth, lv, epsilon)
    mu_r, s_r = _two_step_left(truth.negate(), lv, epsilon)
    return (GaussianBound(mu_l, s_l, Side.LEFT, epsilon),
            GaussianBound(-mu_r, s_r, Side.RIGHT, epsilon))


def quantile_overbound(sample, tau_star=0.99):
    """Zero-mean Gaussians through one empirical quantile per tail.

    Returns ``(left, right)``.  A tail whose quantile lies on the wrong side of
    zero raises :class:`InapplicableBoundError`.
    """
    if not 0.5 < tau_star < 1:
        raise ValueError("tau_star must lie in (1/2, 1)")
    quant = as_truth(sample).quantile
    z = std_normal_quantile(tau_star)
    q_hi = float(quant(tau_star))
    q_lo = float(quant(1.0 - tau_star))
    if not q_hi > 0:
        raise InapplicableBoundError(f"right tail: quantile {q_hi} at {tau_star} is not positive")
    if not q_lo < 0:
        raise InapplicableBoundError(f"left tail: quantile {q_lo} at {1 - tau_star} is not negative")
    return (GaussianBound(0.0, q_lo / -z, Side.LEFT, 0.0),
            GaussianBound(0.0, q_hi / z, Side.RIGHT, 0.0))
