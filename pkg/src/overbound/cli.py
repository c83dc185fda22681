"""Command line interface: generate data, fit, run baselines, report.

Every command reads one JSON config with the sections ``data``, ``case``,
``train``, ``ensemble``, ``metrics`` (and ``network`` for conditional fits);
missing keys take the defaults below.  Outputs are written to ``--out`` and
embed the effective config and a schema version.

Exit codes: 0 success, 2 config/validation/IO error, 3 numerical failure.
"""

import argparse
import copy
import csv
import json
import math
import os
import sys

import numpy as np

from .baselines import (InapplicableBoundError, InfeasibleBoundError, paired_overbound,
                        quantile_overbound, two_step_overbound)
from .bounds import GaussianBound, Side
from .context_model import (NetworkSpec, aggregate_pl, combine_members, conditional_ensemble,
                            normalized_conservatism, save_network, synthetic_conditional)
from .distributions import (EmpiricalSample, GaussianMixture, QuantileConvergenceError,
                            mixture_mean_of_n, mixture_type, sample_mixture)
from .loss import CaseConfig, QuantileGrid, case1_sigma_conflict, effective_grid
from .metrics import (as_truth, bonferroni_pl, certify_continuum, format_range, overbound_factor,
                      protection_level, verify_overbound, wasserstein_tail)
from .trainer import (DivergenceError, EnsembleConfig, InfeasibleCaseError, TrainConfig,
                      ensemble_fit, fit_overbound)

RESULT_SCHEMA = "overbound.result/1"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULT_CONFIG = {
    "data": {"type": "type1", "n": 300000, "seed": 0},
    "case": {"case": "case2", "epsilon": 0.0025, "lambda": 1e-5, "beta": 1e-3, "t": None,
             "half_constrained": False, "half_mode": "grid", "sigma_min": 0.0,
             "s_clamp": 15.0, "learn_k": True, "n_levels": 100, "weighted": True},
    "train": {"epochs": 50000, "batch_size": 10000, "lr": 0.01, "warmup_epochs": 20,
              "cooldown_epochs": 30, "weight_decay": 0.0, "adam_beta1": 0.9,
              "adam_beta2": 0.999, "adam_eps": 1e-8, "seed": 0, "history_every": 100,
              "sigma_init": "sample-std"},
    "ensemble": {"n_members": 1, "seeds": None},
    "metrics": {"ir": 1e-3, "n_values": [1, 10], "truth": "analytic", "tau_min": None,
                "refine": 10, "safety": 1.5, "tau_star": 0.99, "max_mean_components": 10**6},
    "network": {"hidden": [64, 64], "activation": "relu", "head_init_scale": 1e-3,
                "sigma_min": 1e-3},
}

ABLATIONS = ("no-penalty", "no-weights", "t-1", "t-50", "t-200", "fixed-k",
             "case1", "case2", "case3", "half-constrained")


class ConfigError(ValueError):
    pass


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path, seed=None, ablation=None):
    """Read a config file, fill defaults, apply ``--seed`` and ``--ablation``."""
    user = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(user) - set(DEFAULT_CONFIG) - {"schema_version"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for section, val in user.items():
        if section in DEFAULT_CONFIG and not isinstance(val, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        if section in DEFAULT_CONFIG and section != "data":
            extra = set(val) - set(DEFAULT_CONFIG[section])
            if extra:
                raise ConfigError(f"unknown keys in {section!r}: {sorted(extra)}")
    cfg = _merge(DEFAULT_CONFIG, user)
    cfg.pop("schema_version", None)
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        cfg["data"]["seed"] = seed
        cfg["train"]["seed"] = seed
        cfg["ensemble"]["base_seed"] = seed
        cfg["ensemble"]["seeds"] = None
    if ablation is not None:
        apply_ablation(cfg, ablation)
    return cfg


def apply_ablation(cfg, name):
    """Modify the ``case`` section in place for a named ablation."""
    case = cfg["case"]
    lam = case["lambda"]
    base_t = 1.0 - 200.0 * lam if case["t"] is None else case["t"]
    if name == "no-penalty":
        # J_p removed; the scaling factor keeps its base value
        case["lambda"] = 0.0
        case["t"] = base_t
    elif name == "no-weights":
        case["weighted"] = False
    elif name == "t-1":
        case["t"] = 1.0
    elif name == "t-50":
        case["t"] = 1.0 - 50.0 * lam
    elif name == "t-200":
        case["t"] = 1.0 - 200.0 * lam
    elif name == "fixed-k":
        case["learn_k"] = False
    elif name in ("case1", "case2", "case3"):
        case["case"] = name
        if name == "case1":
            # per-level sigma leaves the penalty undefined
            case["lambda"] = 0.0
            case["t"] = base_t
    elif name == "half-constrained":
        case["half_constrained"] = True
    else:
        raise ConfigError(f"unknown ablation {name!r}; expected one of {ABLATIONS}")
    cfg["ablation"] = name


def build_case(cfg, conditional=False):
    c = dict(cfg["case"])
    n_levels = c.pop("n_levels")
    weighted = c.pop("weighted")
    if conditional:
        c["sigma_min"] = cfg["network"]["sigma_min"]
    try:
        case = CaseConfig.from_dict(c)
        grid = QuantileGrid.uniform(int(n_levels), bool(weighted))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid case section: {exc}") from exc
    return case, grid


def build_train(cfg):
    try:
        return TrainConfig.from_dict(cfg["train"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid train section: {exc}") from exc


def build_ensemble(cfg):
    e = cfg["ensemble"]
    n = int(e["n_members"])
    try:
        if e.get("seeds"):
            return EnsembleConfig(n, tuple(e["seeds"]))
        return EnsembleConfig.from_base_seed(n, e.get("base_seed", cfg["train"]["seed"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid ensemble section: {exc}") from exc


def data_mixture(cfg):
    """The analytic distribution named by the data section, or None."""
    d = cfg["data"]
    kind = d.get("type")
    try:
        if kind in ("type1", "type2", "type3"):
            return mixture_type(kind)
        if kind == "custom":
            return GaussianMixture.from_components(d["components"])
    except KeyError as exc:
        raise ConfigError(f"data section is missing {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid custom mixture: {exc}") from exc
    return None


# -- CSV -----------------------------------------------------------------

def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path):
    """Header plus float columns; errors name the offending row and column."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        if "value" not in header:
            raise ConfigError(f"{path}: header must contain a 'value' column")
        cols = {h: [] for h in header}
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigError(f"{path}: row {line} has {len(row)} fields, expected {len(header)}")
            for name, cell in zip(header, row):
                try:
                    val = float(cell)
                except ValueError:
                    raise ConfigError(f"{path}: row {line}, column {name!r}: "
                                      f"cannot parse {cell!r} as a number") from None
                if not math.isfinite(val):
                    raise ConfigError(f"{path}: row {line}, column {name!r}: non-finite value")
                cols[name].append(val)
    if not cols["value"]:
        raise ConfigError(f"{path}: no data rows")
    return header, {k: np.asarray(v) for k, v in cols.items()}


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=1, allow_nan=False)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# -- metrics bundle ----------------------------------------------------------

def _truth_for(cfg, sample):
    mode = cfg["metrics"]["truth"]
    if mode not in ("analytic", "empirical"):
        raise ConfigError("metrics.truth must be 'analytic' or 'empirical'")
    mix = data_mixture(cfg) if mode == "analytic" else None
    return (mix, "analytic") if mix is not None else (sample, "empirical")


def bound_metrics(bound, truth, grid, cfg):
    """PLs, W, K, grid conservatism and continuum certification for one bound."""
    m = cfg["metrics"]
    out = {"mu": bound.mu, "sigma": bound.sigma, "epsilon": bound.epsilon, "side": bound.side.value}
    for n in m["n_values"]:
        out[f"pl_{n}"] = protection_level(bound, m["ir"], int(n))
        out[f"bonferroni_pl_{n}"] = bonferroni_pl(bound, m["ir"], int(n))
    out["W"] = wasserstein_tail(truth, bound, grid)
    out["K"] = overbound_factor(truth, bound, grid)
    rep = verify_overbound(truth, bound, grid)
    out["conservatism"] = rep.to_dict()
    out["OB"] = format_range(rep.violating_range) if not rep.passed else True
    cert = certify_continuum(truth, bound, grid, m["tau_min"], m["refine"], m["safety"])
    out["certification"] = cert.to_dict()
    return out


def _flat_row(name, left, right, n_values):
    row = {"method": name}
    for side, key in ((left, "l"), (right, "r")):
        if side is None:
            continue
        row[f"mu_{key}"] = side["mu"]
        row[f"sigma_{key}"] = side["sigma"]
        row[f"ob_{key}"] = side["OB"]
        for n in n_values:
            row[f"pl_{key}_{n}"] = side[f"pl_{n}"]
        row[f"w_{key}"] = side["W"]
        row[f"k_{key}"] = side["K"]
    return row


def truth_pls(mix, cfg):
    """Ground-truth protection levels from the analytic mixture (mean of n)."""
    m = cfg["metrics"]
    out = {}
    for n in m["n_values"]:
        mean_n = mixture_mean_of_n(mix, int(n), m["max_mean_components"])
        out[f"pl_l_{n}"] = mean_n.quantile(m["ir"])
        out[f"pl_r_{n}"] = mean_n.quantile(1.0 - m["ir"])
    return out


def _envelope(kind, cfg, extra):
    return {"schema_version": RESULT_SCHEMA, "kind": kind, "config": cfg, **extra}


# -- commands --------------------------------------------------------------

def cmd_generate(args):
    cfg = load_config(args.config, args.seed)
    d = cfg["data"]
    n = int(d.get("n", 0))
    if n < 1:
        raise ConfigError("data.n must be >= 1")
    seed = int(d.get("seed", 0))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "data.csv")
    if d.get("type") == "conditional":
        x, y = synthetic_conditional(n, seed, d.get("low", -1.0), d.get("high", 1.0))
        write_csv(path, ["value", "x"], zip(y, x))
    else:
        mix = data_mixture(cfg)
        if mix is None:
            raise ConfigError("data.type must be type1, type2, type3, custom or conditional")
        # keep draw order so the file reflects the generator stream
        sample = _unsorted_sample(mix, n, seed)
        write_csv(path, ["value"], ((v,) for v in sample))
    write_json(os.path.join(args.out, "generate.json"), _envelope("generate", cfg, {"path": "data.csv", "rows": n}))
    return path


def _unsorted_sample(mix, n, seed):
    from .distributions import make_rng
    rng = make_rng(seed)
    u = rng.random(n)
    idx = np.minimum(np.searchsorted(np.cumsum(mix.weights), u, side="right"), mix.n_components - 1)
    z = rng.standard_normal(n)
    return np.asarray(mix.means)[idx] + np.asarray(mix.stds)[idx] * z


def cmd_fit(args):
    ablation = args.ablation
    if args.case is not None:
        if ablation is not None and ablation != args.case:
            raise ConfigError("--case and --ablation name different variants")
        ablation = args.case
    cfg = load_config(args.config, args.seed, ablation)
    _, cols = read_csv(args.data)
    sample = EmpiricalSample(cols["value"])
    case, grid = build_case(cfg)
    tcfg = build_train(cfg)
    ecfg = build_ensemble(cfg)
    truth, truth_mode = _truth_for(cfg, sample)
    result = {"truth_mode": truth_mode, "n_samples": sample.count}
    try:
        if ecfg.n_members > 1:
            fit, members = ensemble_fit(sample, case, tcfg, ecfg, grid, cfg["metrics"]["ir"])
            result["ensemble"] = fit.config["ensemble"]
        else:
            fit = fit_overbound(sample, case, tcfg, grid)
    except InfeasibleCaseError as exc:
        result["bound"] = None
        result["infeasible"] = {
            "message": str(exc),
            "left": exc.fit["left"].diagnostics["case1_conflict"],
            "right": exc.fit["right"].diagnostics["case1_conflict"],
        }
        result["fit"] = {"left": exc.fit["left"].to_dict(), "right": exc.fit["right"].to_dict()}
    else:
        left = bound_metrics(fit.left, truth, grid, cfg)
        right = bound_metrics(fit.right, truth, grid, cfg)
        result["bound"] = {"left": fit.left.to_dict(), "right": fit.right.to_dict()}
        result["left"] = left
        result["right"] = right
        result["table"] = [_flat_row("learned", left, right, cfg["metrics"]["n_values"])]
        result.update({k: v for k, v in result["table"][0].items() if k.startswith("pl_")})
        result["fit"] = {"left": fit.left_fit.to_dict(), "right": fit.right_fit.to_dict()}
    result["effective"] = {"case": case.to_dict(), "grid": grid.to_dict(), "train": tcfg.to_dict(),
                           "ensemble": {"n_members": ecfg.n_members, "seeds": list(ecfg.seeds)}}
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "fit.json")
    write_json(path, _envelope("fit", cfg, result))
    return path


def cmd_baselines(args):
    cfg = load_config(args.config, args.seed)
    _, cols = read_csv(args.data)
    sample = EmpiricalSample(cols["value"])
    case, grid = build_case(cfg)
    eps = case.epsilon
    truth, truth_mode = _truth_for(cfg, sample)
    n_values = cfg["metrics"]["n_values"]
    rows, details = [], {}
    builders = (
        ("paired", lambda: paired_overbound(sample, eps, grid)),
        ("two-step", lambda: two_step_overbound(sample, eps, grid)),
        ("quantile", lambda: quantile_overbound(sample, cfg["metrics"]["tau_star"])),
    )
    for name, build in builders:
        try:
            left, right = build()
        except (InfeasibleBoundError, InapplicableBoundError) as exc:
            details[name] = {"error": str(exc)}
            continue
        lm = bound_metrics(left, truth, grid, cfg)
        rm = bound_metrics(right, truth, grid, cfg)
        details[name] = {"left": lm, "right": rm}
        rows.append(_flat_row(name, lm, rm, n_values))
    extra = {"truth_mode": truth_mode, "methods": details, "table": rows}
    mix = data_mixture(cfg)
    if mix is not None:
        extra["truth_pl"] = truth_pls(mix, cfg)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "baselines.json")
    write_json(path, _envelope("baselines", cfg, extra))
    return path


def _load_result(path):
    try:
        with open(path, encoding="utf-8") as fh:
            res = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if res.get("schema_version") != RESULT_SCHEMA:
        raise ConfigError(f"{path}: schema version {res.get('schema_version')!r} != {RESULT_SCHEMA}")
    return res


TABLE_COLUMNS = ("method", "mu_l", "sigma_l", "ob_l", "pl_l_1", "pl_l_10", "w_l", "k_l",
                 "mu_r", "sigma_r", "ob_r", "pl_r_1", "pl_r_10", "w_r", "k_r")


def _result_bounds(res):
    """``[(method, left GaussianBound, right GaussianBound)]`` from one result file."""
    out = []
    if res["kind"] == "fit" and res.get("bound"):
        b = res["bound"]
        name = "learned" if not res["config"].get("ablation") else f"learned[{res['config']['ablation']}]"
        out.append((name, GaussianBound.from_dict(b["left"]), GaussianBound.from_dict(b["right"])))
    elif res["kind"] == "baselines":
        for name, d in sorted(res["methods"].items()):
            if "left" in d:
                out.append((name, GaussianBound(d["left"]["mu"], d["left"]["sigma"], Side.LEFT, d["left"]["epsilon"]),
                            GaussianBound(d["right"]["mu"], d["right"]["sigma"], Side.RIGHT, d["right"]["epsilon"])))
    return out


def cmd_report(args):
    if not args.results:
        raise ConfigError("report needs at least one result file")
    results = [_load_result(p) for p in args.results]
    rows = []
    bounds = []
    for res in results:
        if res["kind"] not in ("fit", "baselines"):
            raise ConfigError(f"cannot report on a {res['kind']!r} result")
        for row in res.get("table", []):
            if res["kind"] == "fit" and res["config"].get("ablation"):
                row = dict(row, method=f"learned[{res['config']['ablation']}]")
            rows.append([row.get(c, "") for c in TABLE_COLUMNS])
        bounds.extend(_result_bounds(res))
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "table.csv"), TABLE_COLUMNS, rows)

    cfg = results[0]["config"]
    levels = np.asarray(QuantileGrid.uniform(int(cfg["case"]["n_levels"])).levels)
    sample = None
    if args.data:
        _, cols = read_csv(args.data)
        sample = EmpiricalSample(cols["value"])
    mix = data_mixture(cfg)
    ref = sample if sample is not None else mix
    if ref is None:
        raise ConfigError("report needs --data or an analytic data section for plot series")
    ref_q = np.asarray(as_truth(ref).quantile(levels))

    # QQ: reference quantile against the bound quantile at the excess-mass mapped level
    qq = []
    for name, left, right in bounds:
        for b in (left, right):
            bq = b.overbound_quantile(levels)
            qq.extend((name, b.side.value, t, q, bb) for t, q, bb in zip(levels, ref_q, bq))
    write_csv(os.path.join(args.out, "qq.csv"),
              ["method", "side", "tau", "reference_quantile", "bound_quantile"], qq)

    lo = float(min(ref_q[0], *(l.overbound_quantile(levels[0]) for _, l, _ in bounds))) if bounds else ref_q[0]
    hi = float(max(ref_q[-1], *(r.overbound_quantile(levels[-1]) for _, _, r in bounds))) if bounds else ref_q[-1]
    span = hi - lo
    xs = np.linspace(lo - 0.5 * span, hi + 0.5 * span, 401)

    # histogram of the data (or the analytic density) with bound densities at bin centres
    edges = np.linspace(lo - 0.25 * span, hi + 0.25 * span, 101)
    centres = 0.5 * (edges[:-1] + edges[1:])
    if sample is not None:
        counts, _ = np.histogram(sample.values, bins=edges)
        dens = counts / (sample.count * np.diff(edges))
    else:
        dens = np.diff(mix.cdf(edges)) / np.diff(edges)
    header = ["bin_left", "bin_right", "centre", "reference_density"]
    cols_out = [edges[:-1], edges[1:], centres, dens]
    for name, left, right in bounds:
        for b in (left, right):
            header.append(f"{name}_{b.side.value}_pdf")
            cols_out.append(np.exp(-0.5 * ((centres - b.mu) / b.sigma) ** 2) / (b.sigma * math.sqrt(2 * math.pi)))
    write_csv(os.path.join(args.out, "hist.csv"), header, zip(*cols_out))

    # log-scale cdf curves: left bounds on the cdf, right bounds on the survival function
    truth = as_truth(ref)
    header = ["x", "reference_cdf", "reference_sf"]
    ref_cdf = np.asarray(truth.cdf(xs), dtype=float)
    cols_out = [xs, ref_cdf, 1.0 - ref_cdf]
    for name, left, right in bounds:
        header += [f"{name}_left_cdf", f"{name}_right_sf"]
        cols_out.append(np.minimum((1 + left.epsilon) * left.cdf(xs), 1.0))
        cols_out.append(np.minimum((1 + right.epsilon) * (1.0 - right.cdf(xs)), 1.0))
    write_csv(os.path.join(args.out, "cdf.csv"), header, zip(*cols_out))
    return os.path.join(args.out, "table.csv")


def cmd_fit_conditional(args):
    cfg = load_config(args.config, args.seed)
    header, cols = read_csv(args.data)
    feats = [h for h in header if h != "value"]
    if not feats:
        raise ConfigError(f"{args.data}: need at least one feature column besides 'value'")
    x = np.column_stack([cols[h] for h in feats])
    y = cols["value"]
    case, grid = build_case(cfg, conditional=True)
    tcfg = build_train(cfg)
    ecfg = build_ensemble(cfg)
    net_cfg = cfg["network"]
    grid_eff = effective_grid(case, grid)
    try:
        spec = NetworkSpec(len(feats), tuple(net_cfg["hidden"]), net_cfg["activation"],
                           grid_eff.size, net_cfg["head_init_scale"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid network section: {exc}") from exc
    fits, selection = conditional_ensemble(x, y, spec, case, tcfg, ecfg.seeds, grid, cfg["metrics"]["ir"])
    bounds = combine_members(fits, selection, x, case, grid)
    m = cfg["metrics"]
    result = {"features": feats, "n_samples": int(y.size), "selection": selection}
    for side in (Side.LEFT, Side.RIGHT):
        key = "l" if side is Side.LEFT else "r"
        for n in m["n_values"]:
            result[f"pl_{key}_{n}"] = aggregate_pl(bounds, m["ir"], int(n), side)
        rep = normalized_conservatism(y, bounds, grid, side)
        result[f"normalized_conservatism_{key}"] = rep.to_dict()
        z = (y - bounds.side(side)[0]) / bounds.side(side)[1]
        unit = GaussianBound(0.0, 1.0, side, case.epsilon)
        result[f"normalized_k_{key}"] = overbound_factor(EmpiricalSample(z), unit, grid)
    os.makedirs(args.out, exist_ok=True)
    weights = {}
    for label, idx in (("left", selection["selected_left"]), ("right", selection["selected_right"])):
        name = f"weights_{label}.json"
        save_network(fits[idx].network, os.path.join(args.out, name))
        weights[label] = name
    result["weights"] = weights
    result["loss_history"] = {str(s): f.loss_history for s, f in zip(ecfg.seeds, fits)}
    path = os.path.join(args.out, "fit_conditional.json")
    write_json(path, _envelope("fit-conditional", cfg, result))
    return path


def build_parser():
    p = argparse.ArgumentParser(prog="overbound", description="Learned Gaussian overbounds.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        if data:
            sp.add_argument("data", help="CSV file with a 'value' column")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="overrides every seed in the config")

    g = sub.add_parser("generate", help="sample a synthetic dataset")
    common(g, data=False)
    g.set_defaults(func=cmd_generate)
    f = sub.add_parser("fit", help="fit the learned overbound")
    common(f)
    f.add_argument("--ablation", choices=ABLATIONS)
    f.add_argument("--case", choices=("case1", "case2", "case3"),
                   help="shorthand for --ablation with a case name")
    f.set_defaults(func=cmd_fit)
    b = sub.add_parser("baselines", help="paired, two-step and quantile overbounds")
    common(b)
    b.set_defaults(func=cmd_baselines)
    r = sub.add_parser("report", help="comparison table and plot series")
    r.add_argument("results", nargs="*", help="result JSON files")
    r.add_argument("--out", required=True)
    r.add_argument("--data", help="CSV used for histogram and QQ series")
    r.set_defaults(func=cmd_report)
    c = sub.add_parser("fit-conditional", help="train the feature-conditioned model")
    common(c)
    c.set_defaults(func=cmd_fit_conditional)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        path = args.func(args)
    except (DivergenceError, QuantileConvergenceError, FloatingPointError, ArithmeticError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
