"""Seeded Monte Carlo oracle for the collision operator.

One draw picks a channel count tau with the retained renormalized channel
probabilities, an energy fraction eta from the channel's mixing-law
discretization, and tau independent energies from the input law; the
sample is eta times the energy sum.  The empirical law of many draws
cross-validates the exact operator.

Streams use the counter-based Philox generator keyed by (seed, stream_id),
so a worker's draws depend only on its stream id and draw count, never on
scheduling.  Batches partition across streams deterministically and
aggregate in stream order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .collision import CollisionModel
from .measure import DiscreteMeasure, make_measure


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream: same (seed, stream_id, draw count) means
    the same draws on every platform."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(key))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(int(rng)).generator()


def sample_measure(mu: DiscreteMeasure, rng, size: int | None = None):
    """Inverse-CDF draws from an atomic measure."""
    gen = _as_generator(rng)
    u = gen.random(size)
    return mu.quantile(u)


def sample_zeta(model: CollisionModel, mu: DiscreteMeasure, rng, size: int | None = None):
    """Post-collision energy draws; scalar unless `size` is given."""
    gen = _as_generator(rng)
    n = 1 if size is None else int(size)
    indices = model.indices
    probs = np.array([model.alpha_hat(i) for i in indices])
    probs = probs / probs.sum()
    tau = gen.choice(len(indices), size=n, p=probs)
    out = np.empty(n)
    for k, i in enumerate(indices):
        mask = tau == k
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        eta = sample_measure(model.phi_measure(i), gen, cnt)
        xi = sample_measure(mu, gen, (cnt, i))
        out[mask] = eta * xi.sum(axis=1)
    return float(out[0]) if size is None else out


def empirical_apply(
    model: CollisionModel,
    mu: DiscreteMeasure,
    n_draws: int,
    rng,
    n_streams: int = 1,
    workers: int = 1,
) -> DiscreteMeasure:
    """Empirical measure of `n_draws` post-collision samples.

    Draws split evenly over `n_streams` independent substreams (a fixed
    function of the base stream, not of `workers`), so the result is
    byte-identical for any worker count.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    if n_streams < 1:
        raise ValueError("n_streams must be >= 1")
    base = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    counts = [n_draws // n_streams] * n_streams
    for k in range(n_draws % n_streams):
        counts[k] += 1

    def draw(k: int) -> np.ndarray:
        sub = RngStream(base.seed, base.stream_id + k)
        return sample_zeta(model, mu, sub, size=counts[k])

    if workers > 1 and n_streams > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(draw, range(n_streams)))
    else:
        parts = [draw(k) for k in range(n_streams)]
    values = np.concatenate([p for p in parts if p.size])
    return make_measure(values, np.full(values.size, 1.0 / n_draws))
