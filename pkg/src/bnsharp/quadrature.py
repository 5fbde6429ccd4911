"""Composite Simpson rule on a symmetric interval, as nodes and weights.

Keeping explicit weights (instead of calling an integrator on sampled
values) lets the same rule weight scalar losses and gradient vectors
identically, and fixes the summation order for reproducibility.
"""

from __future__ import annotations

import numpy as np


def simpson_nodes_weights(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the composite Simpson rule with n points on [a, b].

    n must be odd and at least 3.
    """
    if n < 3 or n % 2 == 0:
        raise ValueError("composite Simpson needs an odd number of points >= 3")
    nodes = np.linspace(a, b, n)
    h = (b - a) / (n - 1)
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return nodes, w * (h / 3.0)
