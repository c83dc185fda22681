"""Gaussian mixtures (analytic truth), empirical samples and seeded sampling."""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .stdnorm import std_normal_cdf, std_normal_quantile

MAX_MEAN_OF_N_COMPONENTS = 10**6


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted normal components; ``stds`` are standard deviations."""

    weights: tuple
    means: tuple
    stds: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        s = np.asarray(self.stds, dtype=float)
        if w.ndim != 1 or len(w) == 0 or not (len(w) == len(m) == len(s)):
            raise ValueError("mixture needs at least one component and matching lengths")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be positive and sum to 1 (sum={w.sum()!r})")
        if np.any(s <= 0) or not np.all(np.isfinite(m)):
            raise ValueError("component stddevs must be positive and means finite")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        object.__setattr__(self, "means", tuple(float(v) for v in m))
        object.__setattr__(self, "stds", tuple(float(v) for v in s))

    @classmethod
    def from_components(cls, components):
        """Build from ``[(weight, mean, std), ...]``."""
        w, m, s = zip(*components)
        return cls(w, m, s)

    @property
    def n_components(self):
        return len(self.weights)

    @property
    def mean(self):
        return float(np.dot(self.weights, self.means))

    def negate(self):
        return GaussianMixture(self.weights, tuple(-v for v in self.means), self.stds)

    def cdf(self, x):
        return mixture_cdf(self, x)

    def quantile(self, p):
        return mixture_quantile(self, p)

    def to_dict(self):
        return {"components": [list(c) for c in zip(self.weights, self.means, self.stds)]}

    @classmethod
    def from_dict(cls, d):
        return cls.from_components(d["components"])


_THIRD = 1.0 / 3.0
MIXTURE_TYPES = {
    # multimodal, left-concentrated
    "type1": ((_THIRD, -5.0, 1.0), (_THIRD, 0.0, 2.0), (_THIRD, 5.0, 4.0)),
    # negative mean, left-heavy
    "type2": ((_THIRD, -5.0, 1.0), (_THIRD, 0.0, 2.0), (_THIRD, 0.0, 4.0)),
    # positive mean, heavy right tail
    "type3": ((_THIRD, 0.0, 1.0), (_THIRD, 0.0, 2.0), (_THIRD, 5.0, 4.0)),
}


def mixture_type(name):
    try:
        comps = MIXTURE_TYPES[name]
    except KeyError:
        raise ValueError(f"unknown mixture type {name!r}; expected one of {sorted(MIXTURE_TYPES)}")
    w, m, s = zip(*comps)
    # equal thirds do not sum to exactly 1 in floating point
    w = np.asarray(w) / np.sum(w)
    return GaussianMixture(tuple(w), m, s)


def mixture_cdf(mix, x):
    x = np.asarray(x, dtype=float)
    w = np.asarray(mix.weights)
    m = np.asarray(mix.means)
    s = np.asarray(mix.stds)
    out = std_normal_cdf((x[..., None] - m) / s) @ w
    return float(out) if np.ndim(x) == 0 else out


class QuantileConvergenceError(RuntimeError):
    pass


def mixture_quantile(mix, p, tol=1e-12, max_iter=400):
    """Bisection on the mixture cdf.

    The bracket combines the component extremes (+/- 10 sigma) with
    ``min/max_i(mu_i + sigma_i * z_p)``, which always contains the answer.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(~(p_arr > 0) | ~(p_arr < 1)):
        raise ValueError("probabilities must lie in (0, 1)")
    flat = np.atleast_1d(p_arr).ravel()
    m = np.asarray(mix.means)
    s = np.asarray(mix.stds)
    z = np.asarray(std_normal_quantile(flat))[:, None]
    lo = np.minimum((m + s * z).min(axis=1), (m - 10 * s).min())
    hi = np.maximum((m + s * z).max(axis=1), (m + 10 * s).max())
    mid = 0.5 * (lo + hi)
    # relative to the tail mass so tiny p is not accepted at the bracket edge
    tol_p = tol * np.minimum(flat, 1.0 - flat)
    done = np.zeros(flat.shape, dtype=bool)
    for _ in range(max_iter):
        mid = np.where(done, mid, 0.5 * (lo + hi))
        f = mixture_cdf(mix, mid)
        err = f - flat
        done |= (np.abs(err) <= tol_p) | (hi - lo <= 4 * np.spacing(np.maximum(abs(lo), abs(hi))))
        if np.all(done):
            break
        below = err < 0
        lo = np.where(~done & below, mid, lo)
        hi = np.where(~done & ~below, mid, hi)
    else:
        raise QuantileConvergenceError("mixture quantile bisection did not converge")
    out = mid.reshape(p_arr.shape)
    return float(out) if p_arr.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    """Sorted sample values."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size < 1 or not np.all(np.isfinite(v)):
            raise ValueError("sample must be non-empty and finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def count(self):
        return self.values.size

    def negate(self):
        return EmpiricalSample(-self.values[::-1])

    def quantile(self, p):
        return empirical_quantile(self, p)

    def cdf(self, x):
        """Right-continuous empirical cdf."""
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(self.values, x, side="right") / self.count
        return float(out) if x.ndim == 0 else out


def empirical_quantile(sample, p):
    """Linear interpolation of order statistics at rank ``p * (count - 1)``."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~(p_arr > 0) | ~(p_arr < 1)):
        raise ValueError("probabilities must lie in (0, 1)")
    v = sample.values
    h = p_arr * (v.size - 1)
    i = np.minimum(np.floor(h).astype(int), v.size - 1)
    j = np.minimum(i + 1, v.size - 1)
    out = v[i] + (h - i) * (v[j] - v[i])
    return float(out) if p_arr.ndim == 0 else out


def make_rng(seed):
    """PCG64 bit generator; numpy documents its stream as platform independent."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.PCG64(int(seed)))


def sample_mixture(mix, n, seed):
    """Draw ``n`` values: component by inverse cdf on the weights, then a ziggurat normal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    u = rng.random(n)
    cum = np.cumsum(mix.weights)
    idx = np.minimum(np.searchsorted(cum, u, side="right"), mix.n_components - 1)
    z = rng.standard_normal(n)
    values = np.asarray(mix.means)[idx] + np.asarray(mix.stds)[idx] * z
    return EmpiricalSample(values)


def mixture_mean_of_n(mix, n, max_components=MAX_MEAN_OF_N_COMPONENTS):
    """Exact distribution of the mean of ``n`` iid mixture draws.

    One component per multinomial count vector; the mixture of Gaussians is
    closed under this operation.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    m = mix.n_components
    size = math.comb(n + m - 1, m - 1)
    if size > max_components:
        raise ValueError(f"mean-of-{n} mixture would have {size} components (cap {max_components})")
    if n == 1:
        return mix
    counts = np.array([np.bincount(c, minlength=m)
                       for c in itertools.combinations_with_replacement(range(m), n)], dtype=float)
    logw = (gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
            + counts @ np.log(np.asarray(mix.weights)))
    w = np.exp(logw)
    means = counts @ np.asarray(mix.means) / n
    stds = np.sqrt(counts @ np.asarray(mix.stds) ** 2) / n
    # drop components that underflowed to zero weight, renormalise rounding
    keep = w > 0
    w = w[keep] / w[keep].sum()
    return GaussianMixture(tuple(w), tuple(means[keep]), tuple(stds[keep]))
