"""Exact algebra of finitely-atomic measures on the half line [0, inf).

A measure is a sorted array of atom locations with strictly positive
weights.  Construction merges near-duplicate locations by weight-preserving
barycenter, so convolution and product operations stay exact while
floating-point sums cannot split atoms.  All operations are pure; atom
arrays are frozen after construction and safe to share between threads.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AtomOverflow,
    EmptyMeasure,
    MassOutOfTolerance,
    NegativeLocation,
    NegativeWeight,
    POutOfRange,
)

# Locations closer than this relative distance merge at construction.
MERGE_RTOL = 1e-14

# Default cap on atom pairs materialized by convolve/scale_product.
HARD_ATOM_CAP = 2**20

# Coarsening runs a vectorized equal-mass prepass down to this multiple of
# the budget before the greedy merge stage takes over.
_PREPASS_FACTOR = 2


def _normalize_atoms(locations, weights) -> tuple[np.ndarray, np.ndarray]:
    """Sort, validate and merge raw atom arrays.

    Merging replaces a run of nearly-equal locations by their weighted
    barycenter, which preserves total mass and first moment exactly.
    """
    x = np.asarray(locations, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if x.shape != w.shape:
        raise ValueError(f"locations/weights length mismatch: {x.size} vs {w.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
        raise ValueError("non-finite atom data")
    if np.any(w < 0):
        raise NegativeWeight(f"min weight {w.min()!r}")
    keep = w > 0
    if not np.all(keep):
        x, w = x[keep], w[keep]
    if x.size == 0:
        raise EmptyMeasure("no atoms with positive weight")
    if np.any(x < 0):
        raise NegativeLocation(f"min location {x.min()!r}")

    order = np.argsort(x)
    x, w = x[order], w[order]
    if x.size > 1:
        gaps = np.diff(x)
        split = gaps > MERGE_RTOL * x[1:]
        if not np.all(split):
            starts = np.concatenate(([0], np.flatnonzero(split) + 1))
            wm = np.add.reduceat(w, starts)
            xm = np.add.reduceat(w * x, starts) / wm
            x, w = xm, wm
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely-atomic nonnegative measure: ascending locations, positive weights.

    `mass_tolerance` is the slack allowed when the measure is used where a
    probability measure is required.
    """

    locations: np.ndarray
    weights: np.ndarray
    mass_tolerance: float = 1e-9

    def __len__(self) -> int:
        return self.locations.size

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def mean(self) -> float:
        return float(np.sum(self.weights * self.locations))

    @property
    def min_location(self) -> float:
        return float(self.locations[0])

    @property
    def max_location(self) -> float:
        return float(self.locations[-1])

    @property
    def is_probability(self) -> bool:
        return abs(self.mass - 1.0) <= self.mass_tolerance

    def require_probability(self) -> None:
        if not self.is_probability:
            raise MassOutOfTolerance(
                f"total mass {self.mass!r} outside 1 +/- {self.mass_tolerance!r}"
            )

    def moment(self, r: float) -> float:
        """r-th raw moment; 0**0 counts as 1 so moment(0) is the total mass."""
        if r < 0:
            raise ValueError("moment order must be >= 0")
        return float(np.sum(self.weights * np.power(self.locations, r)))

    @property
    def variance(self) -> float:
        m1 = self.mean
        return self.moment(2.0) - m1 * m1

    def cdf(self, x):
        """Right-continuous distribution function, scalar or array argument."""
        self.require_probability()
        cw = np.concatenate(([0.0], np.cumsum(self.weights)))
        idx = np.searchsorted(self.locations, x, side="right")
        out = cw[idx]
        return float(out) if np.isscalar(x) else out

    def quantile(self, p):
        """Generalized (left-continuous) inverse of the CDF.

        Defined for p in [0, 1] (levels within mass_tolerance above 1 are
        accepted so cdf outputs can be fed back in); p = 0 returns the
        smallest atom location.
        """
        parr = np.asarray(p, dtype=float)
        if np.any(parr < 0) or np.any(parr > 1 + self.mass_tolerance):
            raise POutOfRange(f"quantile level outside [0, 1]: {p!r}")
        self.require_probability()
        cw = np.cumsum(self.weights)
        idx = np.searchsorted(cw, parr, side="left")
        idx = np.minimum(idx, len(self) - 1)
        out = self.locations[idx]
        return float(out) if np.isscalar(p) else out

    @property
    def median(self) -> float:
        return self.quantile(0.5)

    def tail_first_moment(self, threshold: float) -> float:
        """Sum of w * x over atoms with x >= threshold."""
        if threshold < 0:
            raise ValueError("threshold must be >= 0")
        k = np.searchsorted(self.locations, threshold, side="left")
        return float(np.sum(self.weights[k:] * self.locations[k:]))

    # -- serialization ----------------------------------------------------

    def to_csv(self, path) -> None:
        """Write `location,weight` rows; floats use repr so the round trip is bit-exact."""
        lines = ["location,weight"]
        lines += [f"{float(x)!r},{float(w)!r}" for x, w in zip(self.locations, self.weights)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path, mass_tolerance: float = 1e-9) -> "DiscreteMeasure":
        rows = Path(path).read_text().strip().splitlines()
        if not rows or rows[0].strip() != "location,weight":
            raise ValueError(f"{path}: expected header 'location,weight'")
        pairs = [row.split(",") for row in rows[1:]]
        locs = [float(a) for a, _ in pairs]
        wts = [float(b) for _, b in pairs]
        return make_measure(locs, wts, tol=mass_tolerance)

    def json_atoms(self) -> list[list[float]]:
        return [[float(x), float(w)] for x, w in zip(self.locations, self.weights)]

    def to_json(self) -> str:
        return json.dumps(self.json_atoms())

    @classmethod
    def from_json(cls, text: str, mass_tolerance: float = 1e-9) -> "DiscreteMeasure":
        pairs = json.loads(text)
        return make_measure(
            [p[0] for p in pairs], [p[1] for p in pairs], tol=mass_tolerance
        )


def make_measure(locations, weights, tol: float = 1e-9, probability: bool = False) -> DiscreteMeasure:
    """Build a DiscreteMeasure from raw atom arrays.

    Atoms are sorted, zero weights dropped and near-duplicate locations
    merged by barycenter.  With `probability=True` the total mass must be
    1 within `tol`.
    """
    x, w = _normalize_atoms(locations, weights)
    mu = DiscreteMeasure(x, w, mass_tolerance=tol)
    if probability:
        mu.require_probability()
    return mu


def dirac(location: float, tol: float = 1e-9) -> DiscreteMeasure:
    return make_measure([location], [1.0], tol=tol)


def mixture(components: list[tuple[float, DiscreteMeasure]], tol: float = 1e-9) -> DiscreteMeasure:
    """Weighted sum of measures, combined in the given (fixed) order."""
    locs = np.concatenate([m.locations for _, m in components])
    wts = np.concatenate([a * m.weights for a, m in components])
    return make_measure(locs, wts, tol=tol)


def convolve(mu: DiscreteMeasure, nu: DiscreteMeasure, max_atoms: int = HARD_ATOM_CAP) -> DiscreteMeasure:
    """Distribution of the sum of independent draws; mass multiplies, means add."""
    n_pairs = len(mu) * len(nu)
    if n_pairs > max_atoms:
        raise AtomOverflow(f"convolution needs {n_pairs} atom pairs > cap {max_atoms}")
    locs = (mu.locations[:, None] + nu.locations[None, :]).ravel()
    wts = (mu.weights[:, None] * nu.weights[None, :]).ravel()
    return make_measure(locs, wts, tol=max(mu.mass_tolerance, nu.mass_tolerance))


def scale_product(phi: DiscreteMeasure, mu: DiscreteMeasure, max_atoms: int = HARD_ATOM_CAP) -> DiscreteMeasure:
    """Distribution of the product of independent draws; means multiply."""
    n_pairs = len(phi) * len(mu)
    if n_pairs > max_atoms:
        raise AtomOverflow(f"product needs {n_pairs} atom pairs > cap {max_atoms}")
    locs = (phi.locations[:, None] * mu.locations[None, :]).ravel()
    wts = (phi.weights[:, None] * mu.weights[None, :]).ravel()
    return make_measure(locs, wts, tol=max(phi.mass_tolerance, mu.mass_tolerance))


@dataclass(frozen=True)
class CoarsenReceipt:
    """Coarsened measure plus a bound on the W1 distance moved."""

    result: DiscreteMeasure
    w1_error_bound: float


def _cluster_stats(x, w, starts):
    """Per-cluster weight, barycenter and W1 cost, computed from the original atoms."""
    wsum = np.add.reduceat(w, starts)
    xbar = np.add.reduceat(w * x, starts) / wsum
    counts = np.diff(np.concatenate((starts, [x.size])))
    cost = w * np.abs(x - np.repeat(xbar, counts))
    csum = np.add.reduceat(cost, starts)
    return wsum, xbar, csum


def coarsen(mu: DiscreteMeasure, budget: int) -> CoarsenReceipt:
    """Reduce to at most `budget` atoms by merging contiguous clusters.

    Each cluster is replaced by its weight-preserving barycenter, so total
    mass and first moment are conserved.  The reported bound is the summed
    within-cluster spread sum_j w_j |x_j - xbar|, which dominates the true
    W1 displacement (move every atom to its cluster barycenter).

    Adjacent clusters merge greedily by smallest spread-increase, scored on
    the cluster barycenters; above `_PREPASS_FACTOR * budget` atoms an
    equal-mass quantile prepass bounds the greedy work.  The final bound is
    recomputed exactly from the original atoms.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n = len(mu)
    if n <= budget:
        return CoarsenReceipt(mu, 0.0)

    x = np.asarray(mu.locations)
    w = np.asarray(mu.weights)

    # initial contiguous clusters
    m0 = _PREPASS_FACTOR * budget
    if n > m0:
        cum = np.cumsum(w)
        targets = cum[-1] * np.arange(1, m0) / m0
        cuts = np.searchsorted(cum, targets, side="left") + 1
        starts = np.unique(np.concatenate(([0], cuts)))
        starts = starts[starts < n]
    else:
        starts = np.arange(n)

    k = len(starts)
    if k > budget:
        # Greedy stage on cluster summaries (weight, weight*barycenter).
        # Merge cost for point masses a, b is w_a|x_a - xbar| + w_b|x_b - xbar|.
        ssum = np.add.reduceat(w, starts)
        swx = np.add.reduceat(w * x, starts)
        W = ssum.tolist()
        WX = swx.tolist()
        right = list(range(1, k)) + [-1]
        left = [-1] + list(range(k - 1))
        alive = [True] * k
        stamp = [0] * k

        def pair_cost(i: int, j: int) -> float:
            wi, wj = W[i], W[j]
            xb = (WX[i] + WX[j]) / (wi + wj)
            return wi * abs(WX[i] / wi - xb) + wj * abs(WX[j] / wj - xb)

        heap = [(pair_cost(i, i + 1), i, i + 1, 0, 0) for i in range(k - 1)]
        heapq.heapify(heap)
        push = heapq.heappush
        pop = heapq.heappop

        remaining = k
        while remaining > budget:
            _, i, j, si, sj = pop(heap)
            if not (alive[i] and alive[j]) or stamp[i] != si or stamp[j] != sj:
                continue
            alive[j] = False
            W[i] += W[j]
            WX[i] += WX[j]
            stamp[i] += 1
            nxt = right[j]
            right[i] = nxt
            if nxt != -1:
                left[nxt] = i
            remaining -= 1
            prv = left[i]
            if prv != -1:
                push(heap, (pair_cost(prv, i), prv, i, stamp[prv], stamp[i]))
            if nxt != -1:
                push(heap, (pair_cost(i, nxt), i, nxt, stamp[i], stamp[nxt]))

        starts = starts[np.asarray(alive)]

    wsum, xbar, csum = _cluster_stats(x, w, starts)
    result = make_measure(xbar, wsum, tol=mu.mass_tolerance)
    return CoarsenReceipt(result, float(np.sum(csum)))


def convolve_power(
    mu: DiscreteMeasure,
    i: int,
    budget: int,
    max_atoms: int = HARD_ATOM_CAP,
) -> tuple[DiscreteMeasure, float]:
    """i-fold self-convolution with coarsening to `budget` atoms after each fold.

    Returns the coarsened power and an accumulated W1 error bound.  The
    bound is valid because convolution is nonexpansive in W1 in each
    argument, so coarsening error passes through later folds unamplified.
    Operands are pre-coarsened when a fold would exceed `max_atoms` pairs;
    those receipts enter the same bound.
    """
    mu.require_probability()
    if i < 1:
        raise ValueError("convolution order must be >= 1")
    if i == 1:
        return mu, 0.0

    # one pre-coarsened copy of mu serves every fold
    op = mu
    op_bound = 0.0
    side = max(1, int(np.sqrt(max_atoms)))
    if len(op) > side:
        rcpt = coarsen(op, side)
        op, op_bound = rcpt.result, rcpt.w1_error_bound

    acc = op
    total = op_bound
    for _ in range(i - 1):
        cap = max(1, max_atoms // len(op))
        if len(acc) > cap:
            rcpt = coarsen(acc, cap)
            acc = rcpt.result
            total += rcpt.w1_error_bound
        acc_next = convolve(acc, op, max_atoms=max_atoms)
        total += op_bound
        if len(acc_next) > budget:
            rcpt = coarsen(acc_next, budget)
            acc_next = rcpt.result
            total += rcpt.w1_error_bound
        acc = acc_next
    return acc, total


# -- discretization of continuous laws ------------------------------------


def _quantile_midpoint(quantile_fn, exact_mean: float, n: int, tol: float = 1e-9) -> DiscreteMeasure:
    """n equal-weight atoms at quantile midpoints, last atom shifted to match the mean.

    The barycentric shift keeps locations ascending and pins the first
    moment to `exact_mean` at machine precision.
    """
    if n < 1:
        raise ValueError("discretization size must be >= 1")
    levels = (np.arange(n) + 0.5) / n
    locs = np.asarray(quantile_fn(levels), dtype=float)
    wts = np.full(n, 1.0 / n)
    deficit = exact_mean - float(np.sum(wts * locs))
    locs = locs.copy()
    locs[-1] += deficit / wts[-1]
    if n > 1 and locs[-1] <= locs[-2]:
        raise ValueError("moment correction would reorder atoms")
    return make_measure(locs, wts, tol=tol)


def discretize_uniform(lo: float, hi: float, n: int) -> DiscreteMeasure:
    if not 0 <= lo < hi:
        raise ValueError(f"invalid uniform support [{lo}, {hi}]")
    return _quantile_midpoint(lambda p: lo + p * (hi - lo), (lo + hi) / 2.0, n)


def discretize_exponential(rate: float, n: int) -> DiscreteMeasure:
    if rate <= 0:
        raise ValueError("rate must be positive")
    return _quantile_midpoint(lambda p: -np.log1p(-p) / rate, 1.0 / rate, n)


@dataclass(frozen=True)
class MixingLaw:
    """Energy-redistribution law attached to collision order `index`.

    Exact kinds: `atoms` (explicit DiscreteMeasure) or `uniform` on
    [lo, hi].  Moments of the uniform kind use the closed form; the atomic
    form used inside the operator is produced by `as_measure`.
    """

    index: int
    kind: str  # "atoms" | "uniform"
    atoms: DiscreteMeasure | None = None
    lo: float = 0.0
    hi: float = 0.0
    n_atoms: int = 256

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("index must be >= 1")
        if self.kind == "atoms":
            if self.atoms is None:
                raise ValueError("atoms kind needs an atomic measure")
        elif self.kind == "uniform":
            if not 0 <= self.lo < self.hi:
                raise ValueError(f"invalid uniform support [{self.lo}, {self.hi}]")
            if self.n_atoms < 1:
                raise ValueError("n_atoms must be >= 1")
        else:
            raise ValueError(f"unknown mixing-law kind {self.kind!r}")

    @property
    def mean(self) -> float:
        return self.moment(1.0)

    def moment(self, r: float) -> float:
        """Exact r-th moment of the law (not of its discretization)."""
        if self.kind == "atoms":
            return self.atoms.moment(r)
        lo, hi = self.lo, self.hi
        return (hi ** (r + 1) - lo ** (r + 1)) / ((r + 1) * (hi - lo))

    def as_measure(self) -> DiscreteMeasure:
        if self.kind == "atoms":
            return self.atoms
        return discretize_uniform(self.lo, self.hi, self.n_atoms)


def uniform_mixing_law(index: int, n_atoms: int = 256) -> MixingLaw:
    """Uniform law on [0, 2/index]: mean 1/index, the conservative choice."""
    return MixingLaw(index=index, kind="uniform", lo=0.0, hi=2.0 / index, n_atoms=n_atoms)


def deterministic_mixing_law(index: int) -> MixingLaw:
    """Point mass at 1/index: pure averaging redistribution."""
    return MixingLaw(index=index, kind="atoms", atoms=dirac(1.0 / index))
