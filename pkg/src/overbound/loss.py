"""The overbounding loss: case-parameterised quantiles, penalties and gradients.

For a grid level ``tau`` the predicted quantile is

    q_tau = mu_tau + Q^-1(k_tau * tau / (1 + eps)) * sigma_tau

and the loss is the weighted, ``t``-scaled pinball loss over all levels, plus
``lam`` times the left-tail Wasserstein gap to the extracted bound, plus
``beta`` times the monotonicity penalty.  Which of ``mu``, ``sigma`` and ``k``
are shared across levels is set by the :class:`Case`.
"""

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .bounds import GaussianBound, Side
from .stdnorm import std_normal_pdf, std_normal_quantile

__all__ = [
    "Case", "CaseConfig", "QuantileGrid", "TrainableParams", "GaussianBound", "Side",
    "quantile_weight", "scaled_pinball", "predicted_quantile", "predicted_quantiles",
    "wasserstein_penalty", "monotonicity_penalty", "full_loss", "loss_gradients",
    "loss_and_gradients", "extract_bound", "scaling_factor_bound", "case1_sigma_conflict",
    "effective_grid",
]


class Case(str, Enum):
    CASE1 = "case1"  # shared mu and k, per-level sigma
    CASE2 = "case2"  # shared sigma and k, per-level mu
    CASE3 = "case3"  # shared mu and sigma, per-level k


def quantile_weight(tau):
    tau = np.asarray(tau, dtype=float)
    out = 1.0 / (4.0 * tau * (1.0 - tau))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class QuantileGrid:
    """Strictly increasing quantile levels in (0, 1) with their loss weights."""

    levels: np.ndarray
    weighted: bool = True
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float).ravel().copy()
        if lv.size == 0 or np.any(lv <= 0) or np.any(lv >= 1) or np.any(np.diff(lv) <= 0):
            raise ValueError("grid levels must be strictly increasing inside (0, 1)")
        w = quantile_weight(lv) if self.weighted else np.ones_like(lv)
        w = np.atleast_1d(w)
        lv.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n=100, weighted=True):
        """``n`` levels ``i / (n + 1)``; symmetric, and avoids 1/2 for even ``n``."""
        return cls(np.arange(1, n + 1) / (n + 1), weighted)

    @property
    def size(self):
        return self.levels.size

    @property
    def left_mask(self):
        return self.levels < 0.5

    def lower_half(self):
        return QuantileGrid(self.levels[self.left_mask], self.weighted)

    def to_dict(self):
        return {"levels": self.levels.tolist(), "weighted": self.weighted}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["levels"]), d.get("weighted", True))


@dataclass(frozen=True)
class CaseConfig:
    case: Case = Case.CASE2
    epsilon: float = 0.0025
    lam: float = 1e-5
    beta: float = 1e-3
    t: float | None = None  # None -> 1 - 200 * lam
    half_constrained: bool = False
    # "grid": drop levels >= 1/2 everywhere; "constraints": keep the full
    # pinball grid and only take the bound mean over levels < 1/2
    half_mode: str = "grid"
    sigma_min: float = 0.0
    s_clamp: float = 15.0
    learn_k: bool = True

    def __post_init__(self):
        object.__setattr__(self, "case", Case(self.case))
        if self.epsilon < 0 or self.lam < 0 or self.beta < 0 or self.sigma_min < 0:
            raise ValueError("epsilon, lam, beta and sigma_min must be non-negative")
        if self.s_clamp <= 0:
            raise ValueError("s_clamp must be positive")
        if not 0 < self.t_value <= 1:
            raise ValueError(f"scaling factor t must lie in (0, 1], got {self.t_value}")
        if self.half_mode not in ("grid", "constraints"):
            raise ValueError("half_mode must be 'grid' or 'constraints'")

    @property
    def t_value(self):
        return 1.0 - 200.0 * self.lam if self.t is None else float(self.t)

    def to_dict(self):
        return {"case": self.case.value, "epsilon": self.epsilon, "lambda": self.lam,
                "beta": self.beta, "t": self.t_value, "half_constrained": self.half_constrained,
                "half_mode": self.half_mode, "sigma_min": self.sigma_min,
                "s_clamp": self.s_clamp, "learn_k": self.learn_k}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


def effective_grid(cfg, grid):
    """The grid the loss actually runs on (lower half in half-constrained grid mode)."""
    if cfg.half_constrained and cfg.half_mode == "grid":
        return grid.lower_half()
    return grid


def _constraint_mask(cfg, grid):
    if cfg.half_constrained and cfg.half_mode == "constraints":
        return grid.left_mask
    return np.ones(grid.size, dtype=bool)


@dataclass
class TrainableParams:
    """Raw parameters; length-1 arrays are shared across grid levels."""

    mu: np.ndarray
    log_sigma: np.ndarray
    s_k: np.ndarray

    FIELDS = ("mu", "log_sigma", "s_k")

    def __post_init__(self):
        for name in self.FIELDS:
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).copy())

    @staticmethod
    def shapes(case, n_levels):
        case = Case(case)
        if case is Case.CASE1:
            return {"mu": 1, "log_sigma": n_levels, "s_k": 1}
        if case is Case.CASE2:
            return {"mu": n_levels, "log_sigma": 1, "s_k": 1}
        return {"mu": 1, "log_sigma": 1, "s_k": n_levels}

    @classmethod
    def zeros(cls, case, n_levels):
        return cls(**{k: np.zeros(n) for k, n in cls.shapes(case, n_levels).items()})

    def check(self, case, n_levels):
        want = self.shapes(case, n_levels)
        got = {k: getattr(self, k).size for k in self.FIELDS}
        if want != got:
            raise ValueError(f"parameter sizes {got} do not match {Case(case).value} on {n_levels} levels")

    def copy(self):
        return TrainableParams(self.mu, self.log_sigma, self.s_k)

    def flatten(self):
        return np.concatenate([getattr(self, k) for k in self.FIELDS])

    def unflatten(self, vec):
        out, i = [], 0
        for k in self.FIELDS:
            n = getattr(self, k).size
            out.append(vec[i:i + n])
            i += n
        return TrainableParams(*out)

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in self.FIELDS}

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.asarray(d[k], dtype=float) for k in cls.FIELDS))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class _Forward:
    """Everything the loss and its gradient need at one parameter point."""

    tau: np.ndarray
    mu: np.ndarray  # per level
    sigma: np.ndarray
    exp_ls: np.ndarray
    k: np.ndarray
    dk_ds: np.ndarray
    z: np.ndarray  # Q^-1(k tau / (1+eps))
    zbar: np.ndarray  # Q^-1(tau / (1+eps))
    qhat: np.ndarray


def _forward(params, cfg, grid):
    tau = grid.levels
    n = tau.size
    params.check(cfg.case, n)
    eps = cfg.epsilon
    mu = np.broadcast_to(params.mu, (n,))
    exp_ls = np.broadcast_to(np.exp(params.log_sigma), (n,))
    sigma = cfg.sigma_min + exp_ls
    if cfg.learn_k:
        sg = _sigmoid(np.broadcast_to(params.s_k, (n,)))
        span = (1.0 + eps) / tau - 1.0 if cfg.case is Case.CASE3 else np.full(n, eps)
        k = 1.0 + span * sg
        dk_ds = span * sg * (1.0 - sg)
    else:
        k = np.ones(n)
        dk_ds = np.zeros(n)
    u = k * tau / (1.0 + eps)
    if np.any(~(u > 0) | ~(u < 1)):
        raise ValueError("k * tau / (1 + eps) left (0, 1)")
    z = np.atleast_1d(std_normal_quantile(u))
    zbar = np.atleast_1d(std_normal_quantile(tau / (1.0 + eps)))
    return _Forward(tau, mu, sigma, exp_ls, k, dk_ds, z, zbar, mu + z * sigma)


def predicted_quantiles(params, cfg, grid):
    grid = effective_grid(cfg, grid)
    return _forward(params, cfg, grid).qhat


def predicted_quantile(params, cfg, grid, grid_index):
    q = predicted_quantiles(params, cfg, grid)
    return float(q[grid_index])


def scaled_pinball(residual, tau, t=1.0):
    residual = np.asarray(residual, dtype=float)
    out = residual * (t * np.asarray(tau) - (residual < 0))
    return float(out) if out.ndim == 0 else out


def _bound_mean(fw, cfg, grid):
    return fw.mu[_constraint_mask(cfg, grid)].min()


def _jp_terms(fw, cfg, grid):
    """Signed gaps ``s_tau`` on the left levels and the bound (mu, sigma)."""
    if cfg.case is Case.CASE1:
        raise ValueError("the Wasserstein penalty is undefined for case1 (per-level sigma)")
    left = grid.left_mask
    mu = _bound_mean(fw, cfg, grid)
    sigma = fw.sigma[0]
    s = fw.qhat[left] - (mu + fw.zbar[left] * sigma)
    return left, s


def wasserstein_penalty(params, cfg, grid):
    grid = effective_grid(cfg, grid)
    _, s = _jp_terms(_forward(params, cfg, grid), cfg, grid)
    return float(np.abs(s).sum())


def monotonicity_penalty(params, cfg, grid):
    q = predicted_quantiles(params, cfg, grid)
    return float(np.maximum(q[:-1] - q[1:], 0.0).sum())


def full_loss(batch, params, cfg, grid):
    """Loss on a batch, computed directly from the residual matrix."""
    grid = effective_grid(cfg, grid)
    y = np.asarray(getattr(batch, "values", batch), dtype=float).ravel()
    if y.size == 0:
        raise ValueError("batch must be non-empty")
    fw = _forward(params, cfg, grid)
    resid = y[:, None] - fw.qhat[None, :]
    pin = scaled_pinball(resid, fw.tau, cfg.t_value).mean(axis=0)
    total = float(np.dot(grid.weights, pin))
    if cfg.lam > 0 or cfg.case is not Case.CASE1:
        if cfg.case is Case.CASE1:
            raise ValueError("case1 has no Wasserstein penalty; set lam=0")
        _, s = _jp_terms(fw, cfg, grid)
        total += cfg.lam * float(np.abs(s).sum())
    total += cfg.beta * float(np.maximum(fw.qhat[:-1] - fw.qhat[1:], 0.0).sum())
    return total


def _sorted_pinball(sorted_y, prefix, qhat, tau, t):
    """Mean scaled pinball per level and its derivative in ``qhat``.

    ``prefix[j]`` is the sum of the ``j`` smallest values.  Residual zero takes
    the ``t*tau`` branch, so only strictly smaller samples count as below.
    """
    n = sorted_y.size
    c = np.searchsorted(sorted_y, qhat, side="left")
    total = prefix[-1]
    below = prefix[c] - c * qhat
    loss = (t * tau * (total - n * qhat) - below) / n
    grad = c / n - t * tau
    return loss, grad


def _objective(sorted_y, prefix, params, cfg, grid, need_grad=True):
    """Loss and gradient; ``grid`` must already be the effective grid."""
    fw = _forward(params, cfg, grid)
    t = cfg.t_value
    pin, dpin = _sorted_pinball(sorted_y, prefix, fw.qhat, fw.tau, t)
    w = grid.weights
    loss = float(np.dot(w, pin))
    g_q = w * dpin
    jp_mu = 0.0
    jp_sigma = 0.0
    tie = None
    if cfg.case is not Case.CASE1:
        left, s = _jp_terms(fw, cfg, grid)
        loss += cfg.lam * float(np.abs(s).sum())
        # s == 0 takes the conservative (+1) branch
        sgn = np.where(s >= 0, 1.0, -1.0)
        g_q[left] += cfg.lam * sgn
        jp_mu = -cfg.lam * sgn.sum()
        jp_sigma = -cfg.lam * float(np.dot(sgn, fw.zbar[left]))
        cmask = _constraint_mask(cfg, grid)
        tie = cmask & (fw.mu == fw.mu[cmask].min())
    elif cfg.lam > 0:
        raise ValueError("case1 has no Wasserstein penalty; set lam=0")
    d = fw.qhat[:-1] - fw.qhat[1:]
    loss += cfg.beta * float(np.maximum(d, 0.0).sum())
    if not need_grad:
        return loss, None
    active = (d > 0).astype(float) * cfg.beta
    g_q[:-1] += active
    g_q[1:] -= active

    g_mu = g_q.copy()
    if tie is not None:
        # equal split of the bound-mean subgradient over tied minima
        g_mu[tie] += jp_mu / tie.sum()
    g_sigma = g_q * fw.z
    g_k = g_q * fw.sigma * (fw.tau / (1.0 + cfg.epsilon)) / std_normal_pdf(fw.z)
    g_s = g_k * fw.dk_ds

    def reduce(g, like):
        return g if like.size > 1 else np.array([g.sum()])

    d_mu = reduce(g_mu, params.mu)
    if params.log_sigma.size > 1:
        d_ls = g_sigma * fw.exp_ls
    else:
        d_ls = np.array([(g_sigma.sum() + jp_sigma) * fw.exp_ls[0]])
    d_s = reduce(g_s, params.s_k)
    return loss, TrainableParams(d_mu, d_ls, d_s)


def _prepare_batch(batch):
    y = np.sort(np.asarray(getattr(batch, "values", batch), dtype=float).ravel())
    if y.size == 0:
        raise ValueError("batch must be non-empty")
    prefix = np.concatenate(([0.0], np.cumsum(y)))
    return y, prefix


def loss_and_gradients(batch, params, cfg, grid):
    grid = effective_grid(cfg, grid)
    y, prefix = _prepare_batch(batch)
    return _objective(y, prefix, params, cfg, grid)


def loss_gradients(batch, params, cfg, grid):
    """Analytic subgradient of :func:`full_loss`, shaped like ``params``."""
    return loss_and_gradients(batch, params, cfg, grid)[1]


def extract_bound(params, cfg, grid, side=Side.LEFT):
    """Final Gaussian bound: smallest level mean and the shared sigma.

    For the right side ``params`` are the ones fitted on negated targets, so the
    mean flips sign and sigma is kept.
    """
    grid = effective_grid(cfg, grid)
    fw = _forward(params, cfg, grid)
    if cfg.case is Case.CASE1:
        raise ValueError("case1 yields no single bound; see case1_sigma_conflict")
    mu = _bound_mean(fw, cfg, grid)
    sigma = fw.sigma[0]
    side = Side(side)
    if side is Side.RIGHT:
        mu = -mu
    return GaussianBound(mu, sigma, side, cfg.epsilon)


def case1_sigma_conflict(params, cfg, grid):
    """Opposing sigma requirements of a case1 fit.

    Levels below ``(1+eps)/(2k)`` need ``sigma >= max sigma_tau``, levels above
    need ``sigma <= min sigma_tau``; the fit is infeasible when these cross.
    """
    grid = effective_grid(cfg, grid)
    fw = _forward(params, cfg, grid)
    pivot = (1.0 + cfg.epsilon) / (2.0 * fw.k[0])
    lower = fw.tau <= pivot
    upper = fw.tau >= pivot
    sigma_up = float(fw.sigma[lower].max()) if lower.any() else 0.0
    sigma_lo = float(fw.sigma[upper].min()) if upper.any() else np.inf
    return {"sigma_up": sigma_up, "sigma_lo": sigma_lo, "feasible": bool(sigma_up <= sigma_lo),
            "pivot_level": float(pivot)}


def scaling_factor_bound(grid, lam):
    """Worst-case admissible ``t`` for case2: ``1 - (n_L - 1) lam / min(w tau)``."""
    left = grid.left_mask
    n_left = int(left.sum())
    if n_left == 0:
        return 1.0
    return 1.0 - (n_left - 1) * lam / float(np.min(grid.weights[left] * grid.levels[left]))


def with_t(cfg, t):
    return replace(cfg, t=t)
