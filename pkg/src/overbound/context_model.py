"""Feature-conditioned overbounds from a small MLP with hand-written backprop.

A shared trunk feeds two linear heads, one per tail.  Each head emits a full
case2 parameter row ``(mu_1..mu_T, log_sigma, s_k)``; the right head is trained
on negated residuals.  Head biases are warm-started at the unconditional
initialisation, so a network that ignores its inputs reduces to the
unconditional fit.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import GaussianBound, Side
from .distributions import EmpiricalSample, make_rng
from .loss import Case, CaseConfig, QuantileGrid, _constraint_mask, effective_grid
from .metrics import protection_level, verify_overbound
from .stdnorm import std_normal_pdf, std_normal_quantile
from .trainer import (AdamState, DivergenceError, TrainConfig, adam_update, initial_params,
                      learning_rate)

WEIGHTS_SCHEMA = "overbound.mlp/1"
ACTIVATIONS = ("relu", "tanh")
# published ionosphere backbone, kept expressible
IONOSPHERE_HIDDEN = (512, 1024, 2048, 1024, 512)


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden: tuple = (64, 64)
    activation: str = "relu"
    n_levels: int = 100
    head_init_scale: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.n_levels < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("input_dim, n_levels and all hidden widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def head_dim(self):
        return self.n_levels + 2

    def to_dict(self):
        return {"input_dim": self.input_dim, "hidden": list(self.hidden),
                "activation": self.activation, "n_levels": self.n_levels,
                "head_init_scale": self.head_init_scale}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Network:
    """Weights as a list of ``(W, b)``; the last two pairs are the left and right heads."""

    spec: NetworkSpec
    layers: list
    feature_mean: np.ndarray = None
    feature_scale: np.ndarray = None

    def __post_init__(self):
        d = self.spec.input_dim
        if self.feature_mean is None:
            self.feature_mean = np.zeros(d)
        if self.feature_scale is None:
            self.feature_scale = np.ones(d)

    @classmethod
    def init(cls, spec, seed):
        """Fan-in scaled uniform trunk; near-zero head weights."""
        rng = make_rng(seed)
        layers = []
        fan_in = spec.input_dim
        for width in spec.hidden:
            bound = 1.0 / math.sqrt(fan_in)
            layers.append((rng.uniform(-bound, bound, (fan_in, width)), np.zeros(width)))
            fan_in = width
        for _ in range(2):
            bound = spec.head_init_scale / math.sqrt(fan_in)
            layers.append((rng.uniform(-bound, bound, (fan_in, spec.head_dim)), np.zeros(spec.head_dim)))
        return cls(spec, layers)

    def copy(self):
        return Network(self.spec, [(w.copy(), b.copy()) for w, b in self.layers],
                       self.feature_mean.copy(), self.feature_scale.copy())

    def flatten(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self.layers])

    def unflatten(self, vec):
        out, i = [], 0
        for w, b in self.layers:
            nw = w.size
            out.append((vec[i:i + nw].reshape(w.shape), vec[i + nw:i + nw + b.size].copy()))
            i += nw + b.size
        return Network(self.spec, out, self.feature_mean, self.feature_scale)

    def to_dict(self):
        return {"schema": WEIGHTS_SCHEMA, "spec": self.spec.to_dict(),
                "feature_mean": self.feature_mean.tolist(),
                "feature_scale": self.feature_scale.tolist(),
                "layers": [{"W": w.tolist(), "b": b.tolist()} for w, b in self.layers]}

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != WEIGHTS_SCHEMA:
            raise ValueError(f"unsupported weights schema {d.get('schema')!r}, expected {WEIGHTS_SCHEMA}")
        spec = NetworkSpec.from_dict(d["spec"])
        layers = [(np.asarray(l["W"], dtype=float), np.asarray(l["b"], dtype=float)) for l in d["layers"]]
        return cls(spec, layers, np.asarray(d["feature_mean"]), np.asarray(d["feature_scale"]))


def save_network(net, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(net.to_dict(), fh, sort_keys=True)


def load_network(path):
    with open(path, encoding="utf-8") as fh:
        return Network.from_dict(json.load(fh))


def _check_features(net, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != net.spec.input_dim:
        raise ValueError(f"expected features with {net.spec.input_dim} columns, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    return x


def forward(net, features, standardize=True):
    """Raw head outputs ``(left, right)`` and the cache for :func:`backward`."""
    x = _check_features(net, features)
    if standardize:
        x = (x - net.feature_mean) / net.feature_scale
    acts = [x]
    pre = []
    h = x
    for w, b in net.layers[:-2]:
        a = h @ w + b
        pre.append(a)
        h = np.maximum(a, 0.0) if net.spec.activation == "relu" else np.tanh(a)
        acts.append(h)
    (wl, bl), (wr, br) = net.layers[-2:]
    return h @ wl + bl, h @ wr + br, (acts, pre)


def backward(net, cache, d_left, d_right):
    """Weight gradients, in the layout of :meth:`Network.flatten`."""
    acts, pre = cache
    h = acts[-1]
    (wl, _), (wr, _) = net.layers[-2:]
    grads = [(h.T @ d_left, d_left.sum(axis=0)), (h.T @ d_right, d_right.sum(axis=0))]
    dh = d_left @ wl.T + d_right @ wr.T
    trunk = []
    for i in range(len(net.layers) - 3, -1, -1):
        w, _ = net.layers[i]
        if net.spec.activation == "relu":
            da = dh * (pre[i] > 0)
        else:
            da = dh * (1.0 - acts[i + 1] ** 2)
        trunk.append((acts[i].T @ da, da.sum(axis=0)))
        dh = da @ w.T
    grads = trunk[::-1] + grads
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


def _row_params(raw, cfg):
    """Split raw head rows into level means, sigma and k, with derivatives."""
    mu = raw[:, :-2]
    ls = raw[:, -2]
    s_raw = raw[:, -1]
    s = np.clip(s_raw, -cfg.s_clamp, cfg.s_clamp)
    exp_ls = np.exp(ls)
    sigma = cfg.sigma_min + exp_ls
    if cfg.learn_k:
        sg = 0.5 * (1.0 + np.tanh(0.5 * s))
        k = 1.0 + cfg.epsilon * sg
        dk = cfg.epsilon * sg * (1.0 - sg) * (np.abs(s_raw) <= cfg.s_clamp)
    else:
        k = np.ones_like(s)
        dk = np.zeros_like(s)
    return mu, exp_ls, sigma, k, dk


def conditional_loss(y, raw, cfg, grid, need_grad=True):
    """Mean over rows of the case2 loss of each row's own residual.

    Returns ``(loss, d_loss/d_raw)``.
    """
    if cfg.case is not Case.CASE2:
        raise ValueError("the conditional model uses the case2 parameterisation")
    y = np.asarray(y, dtype=float)
    n, width = raw.shape
    tau = grid.levels
    if width != tau.size + 2 or y.shape != (n,):
        raise ValueError("raw rows do not match grid size or targets")
    mu, exp_ls, sigma, k, dk = _row_params(raw, cfg)
    eps = cfg.epsilon
    t = cfg.t_value
    w = grid.weights
    u = k[:, None] * tau / (1.0 + eps)
    z = std_normal_quantile(u)
    zbar = std_normal_quantile(tau / (1.0 + eps))
    qhat = mu + z * sigma[:, None]
    r = y[:, None] - qhat
    below = r < 0
    loss = float(np.sum((r * (t * tau - below)) @ w) / n)
    left = grid.left_mask
    cmask = _constraint_mask(cfg, grid)
    mu_min = mu[:, cmask].min(axis=1)
    gap = qhat[:, left] - (mu_min[:, None] + zbar[left] * sigma[:, None])
    loss += cfg.lam * float(np.abs(gap).sum()) / n
    d = qhat[:, :-1] - qhat[:, 1:]
    loss += cfg.beta * float(np.maximum(d, 0.0).sum()) / n
    if not need_grad:
        return loss, None
    g_q = (below - t * tau) * w / n
    sgn = np.where(gap >= 0, 1.0, -1.0)
    g_q[:, left] += cfg.lam * sgn / n
    active = (d > 0) * (cfg.beta / n)
    g_q[:, :-1] += active
    g_q[:, 1:] -= active
    g_mu = g_q.copy()
    tie = cmask & (mu == mu_min[:, None])
    g_mu += tie * (-cfg.lam * sgn.sum(axis=1) / n / tie.sum(axis=1))[:, None]
    g_sigma = (g_q * z).sum(axis=1) - cfg.lam * (sgn @ zbar[left]) / n
    g_k = (g_q * sigma[:, None] * (tau / (1.0 + eps)) / std_normal_pdf(z)).sum(axis=1)
    out = np.empty_like(raw)
    out[:, :-2] = g_mu
    out[:, -2] = g_sigma * exp_ls
    out[:, -1] = g_k * dk
    return loss, out


@dataclass
class ConditionalBound:
    """Per-row left and right Gaussian bounds."""

    mu_left: np.ndarray
    sigma_left: np.ndarray
    mu_right: np.ndarray
    sigma_right: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self):
        if np.any(~(self.sigma_left > 0)) or np.any(~(self.sigma_right > 0)):
            raise ValueError("conditional sigmas must be positive")

    def __len__(self):
        return self.mu_left.size

    def side(self, side):
        side = Side(side)
        if side is Side.LEFT:
            return self.mu_left, self.sigma_left
        return self.mu_right, self.sigma_right

    def row(self, i, side):
        mu, sigma = self.side(side)
        return GaussianBound(mu[i], sigma[i], side, self.epsilon)


def _bound_rows(raw, cfg, grid):
    mu, _, sigma, _, _ = _row_params(raw, cfg)
    return mu[:, _constraint_mask(cfg, grid)].min(axis=1), sigma


def predict(net, features, cfg, grid):
    grid = effective_grid(cfg, grid)
    left, right, _ = forward(net, features)
    mu_l, s_l = _bound_rows(left, cfg, grid)
    mu_r, s_r = _bound_rows(right, cfg, grid)
    return ConditionalBound(mu_l, s_l, -mu_r, s_r, cfg.epsilon)


def normalize_residuals(y, bounds, side=Side.LEFT):
    mu, sigma = bounds.side(side)
    return (np.asarray(y, dtype=float) - mu) / sigma


def aggregate_pl(bounds, ir=1e-3, n=1, side=Side.LEFT):
    """Mean of the per-row protection levels."""
    if len(bounds) == 0:
        raise ValueError("no rows to aggregate")
    mu, sigma = bounds.side(side)
    # the protection level is affine in (mu, sigma), so the mean of rows
    # equals the protection level at the mean parameters
    unit = protection_level(GaussianBound(0.0, 1.0, side, bounds.epsilon), ir, n)
    return float(np.mean(mu + unit * sigma))


def normalized_conservatism(y, bounds, grid, side=Side.LEFT):
    """Grid domination check of pooled normalised residuals against N(0, 1)."""
    side = Side(side)
    z = normalize_residuals(y, bounds, side)
    unit = GaussianBound(0.0, 1.0, side, bounds.epsilon)
    return verify_overbound(EmpiricalSample(z), unit, grid)


@dataclass
class ConditionalFit:
    network: Network
    loss_history: list
    diagnostics: dict = field(default_factory=dict)


def _standardizer(x):
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    # constant columns map to zero rather than dividing by zero
    scale = np.where(scale > 0, scale, 1.0)
    return mean, scale


def fit_conditional(features, y, spec, cfg=None, tcfg=None, grid=None):
    """Train the two-headed network on ``(features, y)``."""
    cfg = cfg or CaseConfig(sigma_min=1e-3)
    tcfg = tcfg or TrainConfig()
    grid = effective_grid(cfg, grid or QuantileGrid.uniform())
    if not cfg.sigma_min > 0:
        raise ValueError("conditional fits need sigma_min > 0")
    if spec.n_levels != grid.size:
        raise ValueError(f"network head has {spec.n_levels} levels but the grid has {grid.size}")
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != y.size or y.size == 0:
        raise ValueError("features and targets must have the same, non-zero, row count")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")
    seeds = np.random.SeedSequence(int(tcfg.seed)).spawn(2)
    net = Network.init(spec, int(seeds[0].generate_state(1, np.uint64)[0]))
    net.feature_mean, net.feature_scale = _standardizer(x)
    for head, values in ((-2, y), (-1, -y)):
        p0 = initial_params(np.sort(values), cfg, grid)
        w, b = net.layers[head]
        b[:] = np.concatenate([p0.mu, p0.log_sigma, p0.s_k])
    xs = (x - net.feature_mean) / net.feature_scale
    rng = np.random.Generator(np.random.PCG64(seeds[1]))
    vec = net.flatten()
    state = AdamState.zeros_like(vec)
    history = []
    avg_sum, avg_count = None, 0
    cool_start = tcfg.epochs - tcfg.cooldown_epochs
    for epoch in range(tcfg.epochs):
        lr = learning_rate(tcfg, epoch)
        perm = rng.permutation(y.size)
        total = 0.0
        for start in range(0, y.size, tcfg.batch_size):
            idx = perm[start:start + tcfg.batch_size]
            cur = net.unflatten(vec)
            left, right, cache = forward(cur, xs[idx], standardize=False)
            ll, gl = conditional_loss(y[idx], left, cfg, grid)
            lr_, gr = conditional_loss(-y[idx], right, cfg, grid)
            loss = ll + lr_
            grad = backward(cur, cache, gl, gr)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise DivergenceError(f"non-finite conditional loss at epoch {epoch}")
            total += loss * idx.size
            if lr > 0:
                vec, state = adam_update(vec, grad, state, lr, tcfg)
        if epoch % tcfg.history_every == 0 or epoch == tcfg.epochs - 1:
            history.append((epoch, total / y.size))
        if cool_start - tcfg.cooldown_epochs <= epoch < cool_start:
            avg_sum = vec.copy() if avg_sum is None else avg_sum + vec
            avg_count += 1
    if avg_count:
        vec = avg_sum / avg_count
    net = net.unflatten(vec)
    return ConditionalFit(net, history, {"averaged_epochs": avg_count})


def conditional_ensemble(features, y, spec, cfg, tcfg, seeds, grid=None, ir=1e-3):
    """Per-tail most conservative member by mean protection level."""
    grid = grid or QuantileGrid.uniform()
    fits = []
    for seed in seeds:
        d = tcfg.to_dict()
        d["seed"] = int(seed)
        fits.append(fit_conditional(features, y, spec, cfg, TrainConfig(**d), grid))
    bounds = [predict(f.network, features, cfg, grid) for f in fits]
    pl_left = [aggregate_pl(b, ir, 1, Side.LEFT) for b in bounds]
    pl_right = [aggregate_pl(b, ir, 1, Side.RIGHT) for b in bounds]
    jl, jr = int(np.argmin(pl_left)), int(np.argmax(pl_right))
    selection = {"seeds": [int(s) for s in seeds], "left_pl": pl_left, "right_pl": pl_right,
                 "selected_left": jl, "selected_right": jr}
    return fits, selection


def combine_members(fits, selection, features, cfg, grid):
    """Bounds taking the left tail from one member and the right from another."""
    bl = predict(fits[selection["selected_left"]].network, features, cfg, grid)
    br = predict(fits[selection["selected_right"]].network, features, cfg, grid)
    return ConditionalBound(bl.mu_left, bl.sigma_left, br.mu_right, br.sigma_right, cfg.epsilon)


def synthetic_conditional(n, seed, low=-1.0, high=1.0):
    """``x ~ U(low, high)``, ``y | x ~ N(2x, (1 + |x|)^2)``; returns ``(x, y)``."""
    rng = make_rng(seed)
    x = rng.uniform(low, high, n)
    y = 2.0 * x + (1.0 + np.abs(x)) * rng.standard_normal(n)
    return x, y
