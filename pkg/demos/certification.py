"""Grid-to-continuum certification on a few hand-made cases.

Usage: python3 demos/certification.py
"""

import numpy as np

from overbound.bounds import GaussianBound, Side
from overbound.distributions import GaussianMixture
from overbound.loss import QuantileGrid
from overbound.metrics import certify_continuum, quantile_gap

N01 = GaussianMixture((1.0,), (0.0,), (1.0,))


def show(label, bound, grid, tau_min):
    rep = certify_continuum(N01, bound, grid, tau_min=tau_min)
    fine = np.linspace(tau_min, 0.5, 20001)
    print(f"{label:28s} m_T {rep.m_T:6.3f}  (L_q+L_qbar)h_T {rep.m_T - rep.slack:6.3f}  "
          f"certified {str(rep.certified):5s}  min g on fine grid {quantile_gap(N01, bound, fine).min():6.3f}")


def main():
    left = Side.LEFT
    show("(-0.5, 1), 49 levels", GaussianBound(-0.5, 1.0, left, 0.0), QuantileGrid(np.linspace(0.01, 0.5, 49)), 0.01)
    show("(-0.5, 1), 491 levels", GaussianBound(-0.5, 1.0, left, 0.0), QuantileGrid(np.linspace(0.01, 0.5, 491)), 0.01)
    show("(-3, 1), 46 levels from 0.05", GaussianBound(-3.0, 1.0, left, 0.0), QuantileGrid(np.linspace(0.05, 0.5, 46)), 0.05)
    show("(0, 1), touching", GaussianBound(0.0, 1.0, left, 0.0), QuantileGrid(np.linspace(0.01, 0.5, 49)), 0.01)


if __name__ == "__main__":
    main()
