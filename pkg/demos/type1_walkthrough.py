"""Fit a learned overbound to Type 1 data and compare it with the baselines.

Usage: python3 demos/type1_walkthrough.py [epochs]

The default budget (2000 epochs on 100k samples) runs in a few minutes on one
core.  Sigma moves slowly under the Wasserstein penalty, so short budgets stay
close to the sample-stddev initialisation; raise ``epochs`` to watch it shrink.
"""

import sys

from overbound.baselines import paired_overbound, quantile_overbound, two_step_overbound
from overbound.distributions import mixture_mean_of_n, mixture_type, sample_mixture
from overbound.loss import CaseConfig, QuantileGrid
from overbound.metrics import (format_range, overbound_factor, protection_level, verify_overbound,
                               wasserstein_tail)
from overbound.trainer import TrainConfig, fit_overbound


def row(name, left, right, truth, grid):
    cells = [name]
    for b in (left, right):
        rep = verify_overbound(truth, b, grid)
        cells += [f"{b.mu:8.3f}", f"{b.sigma:7.3f}", f"{format_range(rep.violating_range):>10}",
                  f"{protection_level(b, 1e-3, 1):8.3f}", f"{protection_level(b, 1e-3, 10):8.3f}",
                  f"{wasserstein_tail(truth, b, grid):8.2f}", f"{overbound_factor(truth, b, grid):7.3f}"]
    print(" ".join(f"{c:>10}" if i == 0 else c for i, c in enumerate(cells)))


def main():
    epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
    truth = mixture_type("type1")
    data = sample_mixture(truth, 100_000, 7)
    grid = QuantileGrid.uniform()

    m10 = mixture_mean_of_n(truth, 10)
    print(f"ground truth PL1 [{truth.quantile(1e-3):.3f}, {truth.quantile(1 - 1e-3):.3f}]  "
          f"PL10 [{m10.quantile(1e-3):.3f}, {m10.quantile(1 - 1e-3):.3f}]")

    fit = fit_overbound(data, CaseConfig(), TrainConfig(epochs=epochs, seed=1), grid)
    print("columns per side: mu sigma OB PL1 PL10 W K  (OB 'yes' means every grid level is bounded)")
    row("learned", fit.left, fit.right, truth, grid)
    row("paired", *paired_overbound(truth, 0.0025, grid), truth, grid)
    row("two-step", *two_step_overbound(truth, 0.0025, grid), truth, grid)
    row("quantile", *quantile_overbound(truth, 0.99), truth, grid)


if __name__ == "__main__":
    main()
