"""Adam training of the overbound parameters and the tail-wise ensemble."""

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import GaussianBound, Side
from .distributions import EmpiricalSample, empirical_quantile
from .loss import (Case, CaseConfig, QuantileGrid, TrainableParams, _forward, _objective,
                   _prepare_batch, case1_sigma_conflict, effective_grid, extract_bound)
from .metrics import protection_level


SIGMA_INITS = ("sample-std", "unit")


class DivergenceError(ArithmeticError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50000
    batch_size: int = 10000
    lr: float = 0.01
    warmup_epochs: int = 20
    cooldown_epochs: int = 30
    weight_decay: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    history_every: int = 100
    # starting sigma: "sample-std" or "unit"
    sigma_init: str = "sample-std"

    def __post_init__(self):
        if self.warmup_epochs < 0 or self.cooldown_epochs < 0:
            raise ValueError("warmup and cooldown epochs must be non-negative")
        if self.warmup_epochs + self.cooldown_epochs >= self.epochs:
            raise ValueError("warmup + cooldown must be smaller than epochs")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.history_every < 1:
            raise ValueError("history_every must be >= 1")
        if self.sigma_init not in SIGMA_INITS:
            raise ValueError(f"sigma_init must be one of {SIGMA_INITS}")

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class EnsembleConfig:
    n_members: int = 5
    seeds: tuple = (0, 1, 2, 3, 4)

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.n_members < 1 or len(self.seeds) != self.n_members:
            raise ValueError("need n_members >= 1 and exactly n_members seeds")

    @classmethod
    def from_base_seed(cls, n_members, seed):
        """Member seeds spawned from one base seed."""
        ss = np.random.SeedSequence(int(seed))
        return cls(n_members, tuple(int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(n_members)))


def learning_rate(cfg, epoch):
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    if epoch < cfg.warmup_epochs:
        return cfg.lr * (epoch + 1) / cfg.warmup_epochs
    main = cfg.epochs - cfg.warmup_epochs - cfg.cooldown_epochs
    if epoch >= cfg.epochs - cfg.cooldown_epochs:
        return 0.0
    u = (epoch - cfg.warmup_epochs) / main
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * u))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, vec):
        return cls(np.zeros_like(vec), np.zeros_like(vec))


def adam_update(x, g, state, lr, cfg):
    """Bias-corrected Adam on flat vectors; returns ``(new_x, new_state)``."""
    if x.shape != g.shape or x.shape != state.m.shape:
        raise ValueError("parameter, gradient and state shapes differ")
    if cfg.weight_decay:
        g = g + cfg.weight_decay * x
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    step = state.step + 1
    m = b1 * state.m + (1 - b1) * g
    v = b2 * state.v + (1 - b2) * g * g
    m_hat = m / (1 - b1 ** step)
    v_hat = v / (1 - b2 ** step)
    return x - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps), AdamState(m, v, step)


_DEFAULT_ADAM = TrainConfig(epochs=2, warmup_epochs=0, cooldown_epochs=0)


def adam_step(params, grads, state, lr, cfg=None, s_clamp=15.0):
    """One Adam update of :class:`TrainableParams`; ``s_k`` is clamped afterwards.

    Returns ``(new_params, new_state, clamp_hits)``.
    """
    x, state = adam_update(params.flatten(), grads.flatten(), state, lr, cfg or _DEFAULT_ADAM)
    new = params.unflatten(x)
    hits = int(np.count_nonzero(np.abs(new.s_k) > s_clamp))
    new.s_k = np.clip(new.s_k, -s_clamp, s_clamp)
    return new, state, hits


def initial_params(values, cfg, grid, sigma_init="sample-std"):
    """Warm start: level means at empirical quantiles, ``s_k = 0``.

    Sigma starts at the sample stddev or at 1 (``sigma_init="unit"``); the
    level means are then placed so every predicted quantile sits on the
    empirical one.  ``values`` must be sorted.
    """
    n = grid.size
    std = float(np.std(values)) if values.size > 1 else 1.0
    if sigma_init == "unit":
        std = 1.0 + cfg.sigma_min
    sigma0 = max(std - cfg.sigma_min, 1e-3 * max(std, 1.0))
    params = TrainableParams.zeros(cfg.case, n)
    params.log_sigma[:] = math.log(sigma0)
    sigma = cfg.sigma_min + sigma0
    q = empirical_quantile(EmpiricalSample(values), grid.levels)
    fw = _forward(params, cfg, grid)
    if cfg.case is Case.CASE2:
        params.mu[:] = q - fw.z * sigma
    elif cfg.case is Case.CASE3:
        params.mu[:] = float(np.median(q - fw.z * sigma))
    else:
        params.mu[:] = float(np.median(values))
        params.log_sigma[:] = math.log(sigma0)
    return params


@dataclass
class SideFit:
    params: TrainableParams
    bound: GaussianBound | None
    loss_history: list
    diagnostics: dict

    def to_dict(self):
        return {"params": self.params.to_dict(),
                "bound": None if self.bound is None else self.bound.to_dict(),
                "loss_history": [[int(e), float(v)] for e, v in self.loss_history],
                "diagnostics": self.diagnostics}


@dataclass
class FitResult:
    left: GaussianBound
    right: GaussianBound
    left_fit: SideFit
    right_fit: SideFit
    config: dict = field(default_factory=dict)

    @property
    def loss_history(self):
        return {"left": self.left_fit.loss_history, "right": self.right_fit.loss_history}

    def to_dict(self):
        return {"left": self.left.to_dict(), "right": self.right.to_dict(),
                "left_fit": self.left_fit.to_dict(), "right_fit": self.right_fit.to_dict(),
                "config": self.config}


def _side_seed(seed, side):
    child = np.random.SeedSequence(int(seed)).spawn(2)[0 if side is Side.LEFT else 1]
    return np.random.Generator(np.random.PCG64(child))


def train_side(values, cfg, tcfg, grid, side=Side.LEFT, init=None, callback=None):
    """Fit one tail on ``values`` (already negated for the right tail).

    ``callback(epoch, params, loss)`` is called whenever the loss history is
    recorded.
    """
    side = Side(side)
    grid_eff = effective_grid(cfg, grid)
    y = np.sort(np.asarray(values, dtype=float))
    if y.size == 0:
        raise ValueError("no training data")
    if cfg.case is Case.CASE1 and cfg.lam > 0:
        raise ValueError("case1 has no Wasserstein penalty; set lam=0")
    rng = _side_seed(tcfg.seed, side)
    params = init.copy() if init is not None else initial_params(y, cfg, grid_eff, tcfg.sigma_init)
    params.check(cfg.case, grid_eff.size)
    init_params = params.copy()
    state = AdamState.zeros_like(params.flatten())
    full_batch = tcfg.batch_size >= y.size
    if full_batch:
        prefix_full = np.concatenate(([0.0], np.cumsum(y)))
    history = []
    clamp_hits = 0
    grad_norms = []
    avg_sum = None
    avg_count = 0
    first_grad_norm = None
    cool_start = tcfg.epochs - tcfg.cooldown_epochs
    for epoch in range(tcfg.epochs):
        lr = learning_rate(tcfg, epoch)
        if full_batch:
            batches = [(y, prefix_full)]
        else:
            perm = rng.permutation(y.size)
            batches = []
            for start in range(0, y.size, tcfg.batch_size):
                # y is sorted, so sorting the indices sorts the batch
                idx = np.sort(perm[start:start + tcfg.batch_size])
                b = y[idx]
                batches.append((b, np.concatenate(([0.0], np.cumsum(b)))))
        epoch_loss = 0.0
        for b, prefix in batches:
            loss, grad = _objective(b, prefix, params, cfg, grid_eff)
            if not math.isfinite(loss) or not np.all(np.isfinite(grad.flatten())):
                raise DivergenceError(f"non-finite loss at epoch {epoch} ({side.value} tail): {loss}")
            gnorm = float(np.linalg.norm(grad.flatten()))
            if first_grad_norm is None:
                first_grad_norm = gnorm
            epoch_loss += loss * b.size
            if lr > 0:
                params, state, hits = adam_step(params, grad, state, lr, tcfg, cfg.s_clamp)
                clamp_hits += hits
        epoch_loss /= y.size
        if epoch % tcfg.history_every == 0 or epoch == tcfg.epochs - 1:
            history.append((epoch, epoch_loss))
            grad_norms.append((epoch, gnorm))
            if callback is not None:
                callback(epoch, params, epoch_loss)
        # trailing average over the last main-phase epochs, used during cooldown
        if cool_start - tcfg.cooldown_epochs <= epoch < cool_start:
            vec = params.flatten()
            avg_sum = vec if avg_sum is None else avg_sum + vec
            avg_count += 1
    if avg_count:
        params = params.unflatten(avg_sum / avg_count)
        params.s_k = np.clip(params.s_k, -cfg.s_clamp, cfg.s_clamp)
    final_loss, final_grad = _objective(y, np.concatenate(([0.0], np.cumsum(y))), params, cfg, grid_eff)
    if not math.isfinite(final_loss):
        raise DivergenceError(f"non-finite final loss ({side.value} tail)")
    diagnostics = {
        "side": side.value,
        "init_params": init_params.to_dict(),
        "init_scheme": f"level means at empirical quantiles, sigma {tcfg.sigma_init}, s_k = 0",
        "clamp_hits": clamp_hits,
        "first_grad_norm": first_grad_norm,
        "final_full_grad_norm": float(np.linalg.norm(final_grad.flatten())),
        "final_full_loss": final_loss,
        "grad_norms": [[int(e), float(v)] for e, v in grad_norms],
        "averaged_epochs": avg_count,
    }
    if cfg.case is Case.CASE1:
        diagnostics["case1_conflict"] = case1_sigma_conflict(params, cfg, grid)
        bound = None
    else:
        bound = extract_bound(params, cfg, grid, side)
    return SideFit(params, bound, history, diagnostics)


class InfeasibleCaseError(ValueError):
    """A case1 fit ended with contradictory sigma requirements."""

    def __init__(self, message, fit):
        super().__init__(message)
        self.fit = fit


def fit_overbound(data, cfg=None, tcfg=None, grid=None):
    """Left tail on ``y``, right tail on ``-y``, identical procedure.

    Case 1 has no single bound; its fits end in :class:`InfeasibleCaseError`
    carrying the conflicting sigma requirements.
    """
    cfg = cfg or CaseConfig()
    tcfg = tcfg or TrainConfig()
    grid = grid or QuantileGrid.uniform()
    y = np.asarray(getattr(data, "values", data), dtype=float)
    left = train_side(y, cfg, tcfg, grid, Side.LEFT)
    right = train_side(-y, cfg, tcfg, grid, Side.RIGHT)
    config = {"case": cfg.to_dict(), "train": tcfg.to_dict(), "grid": grid.to_dict()}
    if cfg.case is Case.CASE1:
        raise InfeasibleCaseError(
            "case1 yields no single Gaussian bound: "
            f"left {left.diagnostics['case1_conflict']}, right {right.diagnostics['case1_conflict']}",
            {"left": left, "right": right, "config": config})
    return FitResult(left.bound, right.bound, left, right, config)


def select_members(left_pls, right_pls):
    """Most conservative member per tail: argmin of left PL, argmax of right PL."""
    return int(np.argmin(left_pls)), int(np.argmax(right_pls))


def ensemble_fit(data, cfg=None, tcfg=None, ecfg=None, grid=None, ir=1e-3):
    """Train one member per seed and keep the most conservative tail of each."""
    cfg = cfg or CaseConfig()
    tcfg = tcfg or TrainConfig()
    ecfg = ecfg or EnsembleConfig()
    members = []
    for seed in ecfg.seeds:
        members.append(fit_overbound(data, cfg, _with_seed(tcfg, seed), grid))
    left_pls = [protection_level(m.left, ir, 1) for m in members]
    right_pls = [protection_level(m.right, ir, 1) for m in members]
    jl, jr = select_members(left_pls, right_pls)
    config = dict(members[0].config)
    config["train"] = dict(config["train"], seed=None)
    config["ensemble"] = {"n_members": ecfg.n_members, "seeds": list(ecfg.seeds),
                          "selected_left": jl, "selected_right": jr,
                          "left_pl": left_pls, "right_pl": right_pls, "ir": ir}
    return FitResult(members[jl].left, members[jr].right, members[jl].left_fit,
                     members[jr].right_fit, config), members


def _with_seed(tcfg, seed):
    d = tcfg.to_dict()
    d["seed"] = int(seed)
    return TrainConfig(**d)
