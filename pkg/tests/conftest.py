"""Shared test helpers: independent oracles and random-instance generators.

The oracles here deliberately avoid the library code paths they are used
to check: W1 comes from a brute-force CDF sweep over candidate breakpoints,
and the transport plan from a dense linear program.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from boltzlab.measure import DiscreteMeasure, make_measure


def w1_cdf_oracle(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Area between CDFs, summed segment by segment in pure python."""
    grid = sorted(set(mu.locations.tolist()) | set(nu.locations.tolist()))
    total = 0.0
    for a, b in zip(grid[:-1], grid[1:]):
        fa = sum(w for x, w in zip(mu.locations, mu.weights) if x <= a)
        ga = sum(w for x, w in zip(nu.locations, nu.weights) if x <= a)
        total += abs(fa - ga) * (b - a)
    return total


def w1_lp_oracle(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Optimal-transport LP value with |x - y| cost (dense formulation)."""
    n, m = len(mu), len(nu)
    cost = np.abs(mu.locations[:, None] - nu.locations[None, :]).ravel()
    a_eq = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m : (i + 1) * m] = 1.0
        a_eq.append(row)
    for j in range(m):
        row = np.zeros(n * m)
        row[j::m] = 1.0
        a_eq.append(row)
    b_eq = np.concatenate([mu.weights, nu.weights])
    res = linprog(cost, A_eq=np.array(a_eq), b_eq=b_eq, bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


def random_measure(rng: np.random.Generator, n_atoms: int, scale: float = 2.0) -> DiscreteMeasure:
    x = rng.random(n_atoms) * scale
    w = rng.random(n_atoms) + 0.05
    w = w / w.sum()
    return make_measure(x, w)


def random_unit_mean_measure(rng: np.random.Generator, n_atoms: int) -> DiscreteMeasure:
    """Random probability measure rescaled so its mean is exactly 1."""
    mu = random_measure(rng, n_atoms)
    return make_measure(mu.locations / mu.mean, mu.weights)
