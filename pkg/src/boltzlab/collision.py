"""The collision mixture operator on atomic probability measures.

A model is a family of channels (i, alpha_i, phi_i): channel i convolves
the input i times (total energy of i colliding particles) and rescales by
an independent draw from the mixing law phi_i with mean 1/i, so the unit
mean is conserved.  The operator is the alpha-mixture of the channels.

Infinite families (power-law tails) are truncated to the smallest prefix
whose dropped alpha mass is below ``tail_tolerance`` and the retained
alphas are renormalized, so the truncated mixture still maps unit-mean
measures to unit-mean measures.  Tail channels are generated on demand;
their moment sums use closed forms, so validation stays cheap even when
the retained prefix is long.  Every apply returns the result together
with a W1 error bound itemizing coarsening and truncation contributions.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta as hurwitz_zeta

from .measure import (
    DiscreteMeasure,
    HARD_ATOM_CAP,
    MixingLaw,
    coarsen,
    convolve_power,
    mixture,
    scale_product,
    uniform_mixing_law,
)

# Tolerance on m1(phi_i) - 1/i for a channel to count as mean-conserving.
_MEAN_TOL = 1e-12


@dataclass(frozen=True)
class Finding:
    """One validation observation; severity is 'error', 'warning' or 'info'."""

    code: str
    severity: str
    message: str
    index: int | None = None
    value: float | None = None

    def as_dict(self) -> dict:
        out = {"code": self.code, "severity": self.severity, "message": self.message}
        if self.index is not None:
            out["index"] = self.index
        if self.value is not None:
            out["value"] = float(self.value)
        return out


@dataclass(frozen=True)
class PowerLawTail:
    """alpha_i = coefficient * i^(-exponent) for i >= first_index.

    Exact partial and tail sums come from the Hurwitz zeta function.  Tail
    channels carry the uniform mixing law on [0, 2/i] (mean 1/i)
    discretized at `phi_n` atoms.
    """

    exponent: float
    first_index: int = 1
    phi_n: int = 64
    coefficient: float = 1.0

    def __post_init__(self):
        if self.exponent <= 1.0:
            raise ValueError("power-law exponent must exceed 1 for a finite tail")
        if self.first_index < 1:
            raise ValueError("first_index must be >= 1")

    def total(self) -> float:
        return self.coefficient * float(hurwitz_zeta(self.exponent, self.first_index))

    def residual_after(self, index: int) -> float:
        """Dropped alpha mass when channels > index are discarded."""
        return self.coefficient * float(hurwitz_zeta(self.exponent, index + 1))

    def alpha(self, index: int) -> float:
        return self.coefficient * index ** (-self.exponent)

    def weighted_power_sum(self, power: float, last_index: int) -> float:
        """sum of alpha_i * i^power for first_index <= i <= last_index, exact."""
        s = self.exponent - power
        full = float(hurwitz_zeta(s, self.first_index))
        rest = float(hurwitz_zeta(s, last_index + 1))
        return self.coefficient * (full - rest)


class CollisionModel:
    """Truncated, renormalized collision mixture.

    Parameters
    ----------
    channels : explicit (index, alpha, law) entries, indices distinct
    tail_rule : optional PowerLawTail extending the family past the
        explicit entries
    tail_tolerance : alpha mass allowed to be dropped before renormalizing
    atom_budget : coarsening target for operator outputs
    r_exponent : moment order in (1, 2) used by contraction diagnostics
    hard_atom_cap : cap on atom pairs materialized by one pairwise product;
        operands are pre-coarsened (and the receipts ledgered) to respect it
    """

    def __init__(
        self,
        channels: list[tuple[int, float, MixingLaw]],
        tail_rule: PowerLawTail | None = None,
        tail_tolerance: float = 1e-9,
        atom_budget: int = 4096,
        r_exponent: float = 1.5,
        hard_atom_cap: int = HARD_ATOM_CAP,
    ):
        if tail_tolerance <= 0:
            raise ValueError("tail_tolerance must be positive")
        if atom_budget < 1:
            raise ValueError("atom_budget must be >= 1")
        if not 1.0 < r_exponent < 2.0:
            raise ValueError("r_exponent must lie in (1, 2)")

        explicit: dict[int, tuple[float, MixingLaw]] = {}
        for index, alpha, law in channels:
            if index in explicit:
                raise ValueError(f"duplicate channel index {index}")
            if alpha < 0:
                raise ValueError(f"negative alpha at index {index}")
            if law.index != index:
                raise ValueError(f"law bound to index {law.index}, channel says {index}")
            explicit[int(index)] = (float(alpha), law)

        self.tail_rule = tail_rule
        self.tail_tolerance = float(tail_tolerance)
        self.atom_budget = int(atom_budget)
        self.r_exponent = float(r_exponent)
        self.hard_atom_cap = int(hard_atom_cap)
        self._explicit = dict(sorted(explicit.items()))
        self._phi_cache: dict[int, DiscreteMeasure] = {}

        explicit_sum = sum(a for a, _ in self._explicit.values())
        if tail_rule is not None:
            if self._explicit and tail_rule.first_index <= max(self._explicit):
                raise ValueError("tail rule overlaps explicit channel indices")
            total = explicit_sum + tail_rule.total()
            cutoff = self.tail_tolerance * total
            lo = tail_rule.first_index - 1
            hi = lo + 1
            while tail_rule.residual_after(hi) > cutoff:
                hi *= 2
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if tail_rule.residual_after(mid) > cutoff:
                    lo = mid
                else:
                    hi = mid
            self.truncation_index = hi
            self.dropped_alpha = tail_rule.residual_after(hi)
            self._tail_span = (tail_rule.first_index, hi)
            tail_sum = tail_rule.total() - self.dropped_alpha
        else:
            self.truncation_index = max(self._explicit) if self._explicit else 0
            self.dropped_alpha = 0.0
            self._tail_span = None
            tail_sum = 0.0

        self.retained_alpha_sum = explicit_sum + tail_sum
        if self.retained_alpha_sum <= 0:
            raise ValueError("model retains no alpha mass")

    @property
    def indices(self) -> list[int]:
        """Retained active set: indices with positive renormalized alpha."""
        out = [i for i, (a, _) in self._explicit.items() if a > 0]
        if self._tail_span is not None:
            lo, hi = self._tail_span
            out.extend(range(lo, hi + 1))
        return sorted(out)

    def alpha_raw(self, index: int) -> float:
        if index in self._explicit:
            return self._explicit[index][0]
        if self._tail_span is not None and self._tail_span[0] <= index <= self._tail_span[1]:
            return self.tail_rule.alpha(index)
        raise KeyError(f"index {index} not retained")

    def alpha_hat(self, index: int) -> float:
        return self.alpha_raw(index) / self.retained_alpha_sum

    def law(self, index: int) -> MixingLaw:
        if index in self._explicit:
            return self._explicit[index][1]
        if self._tail_span is not None and self._tail_span[0] <= index <= self._tail_span[1]:
            return uniform_mixing_law(index, self.tail_rule.phi_n)
        raise KeyError(f"index {index} not retained")

    def phi_measure(self, index: int) -> DiscreteMeasure:
        if index not in self._phi_cache:
            self._phi_cache[index] = self.law(index).as_measure()
        return self._phi_cache[index]

    def _tail_moment_weighted(self, power: float) -> float:
        """sum over retained tail channels of alpha_i m_r(phi_i) i^power, exact.

        Tail laws are uniform on [0, 2/i], so m_r = (2/i)^r / (r + 1) and
        the sum telescopes into Hurwitz zeta differences.
        """
        if self._tail_span is None:
            return 0.0
        r = self.r_exponent
        lo, hi = self._tail_span
        return (2.0**r / (r + 1.0)) * self.tail_rule.weighted_power_sum(power - r, hi)


def tjon_wu_model(phi_n: int = 512, atom_budget: int = 4096, r_exponent: float = 1.5, **kw) -> CollisionModel:
    """Two-particle channel with uniform redistribution on [0, 1]."""
    law = MixingLaw(index=2, kind="uniform", lo=0.0, hi=1.0, n_atoms=phi_n)
    return CollisionModel([(2, 1.0, law)], atom_budget=atom_budget, r_exponent=r_exponent, **kw)


def validate_model(model: CollisionModel) -> list[Finding]:
    """Check model invariants; reports findings instead of raising.

    Explicit channels are checked individually; tail channels come from a
    family with mean 1/i by construction, so only the first tail law is
    spot-checked and the moment series uses the closed form.
    """
    findings: list[Finding] = []
    r = model.r_exponent

    spot = [(i, model._explicit[i][1]) for i in model._explicit if model._explicit[i][0] > 0]
    if model._tail_span is not None:
        spot.append((model._tail_span[0], model.law(model._tail_span[0])))
    for index, law in spot:
        gap = abs(law.mean - 1.0 / index)
        if gap > _MEAN_TOL:
            findings.append(
                Finding(
                    "MeanMismatch",
                    "error",
                    f"channel {index}: mixing-law mean {law.mean!r} != 1/{index}",
                    index=index,
                    value=gap,
                )
            )
        disc_gap = abs(law.as_measure().mean - 1.0 / index)
        if disc_gap > _MEAN_TOL:
            findings.append(
                Finding(
                    "DiscretizedMeanMismatch",
                    "error",
                    f"channel {index}: discretized mean off by {disc_gap:.2e}",
                    index=index,
                    value=disc_gap,
                )
            )

    total = model.retained_alpha_sum + model.dropped_alpha
    if abs(total - 1.0) > max(model.tail_tolerance, 1e-9):
        findings.append(
            Finding(
                "AlphaSum",
                "error",
                f"alphas sum to {total!r}, not 1 (no tail rule covers the gap)",
                value=total,
            )
        )
    if model.dropped_alpha > 0:
        findings.append(
            Finding(
                "TailRetained",
                "info",
                f"tail truncated after index {model.truncation_index}; "
                f"dropped alpha mass {model.dropped_alpha:.3e}",
                index=model.truncation_index,
                value=model.dropped_alpha,
            )
        )

    # finiteness of sum alpha_i m_r(phi_i) i^r over retained terms
    series = sum(
        model.alpha_hat(i) * model._explicit[i][1].moment(r) * i**r
        for i in model._explicit
        if model._explicit[i][0] > 0
    )
    series += model._tail_moment_weighted(r) / model.retained_alpha_sum
    if not np.isfinite(series):
        findings.append(
            Finding("MomentSeries", "error", f"retained moment series is not finite: {series!r}")
        )

    lam = contraction_factor(model)
    if lam >= 1.0:
        findings.append(
            Finding(
                "NoContraction",
                "warning",
                f"lambda = {lam!r} >= 1: fixed-point convergence not guaranteed",
                value=lam,
            )
        )
    # channel-wise sufficient condition m_r(phi_i) < 1/i; lambda < 1 follows
    # from it but not conversely, so a disagreement is worth a note
    hypothesis = all(
        law.moment(r) < 1.0 / i
        for i, (a, law) in model._explicit.items()
        if a > 0
    )
    if model._tail_span is not None:
        i0 = model._tail_span[0]
        hypothesis = hypothesis and model.law(i0).moment(r) < 1.0 / i0
    if hypothesis and lam >= 1.0:
        findings.append(
            Finding(
                "ContractionHypothesis",
                "warning",
                "channel-wise moment condition holds but lambda >= 1 (mixture bookkeeping)",
                value=lam,
            )
        )
    elif not hypothesis and lam < 1.0:
        findings.append(
            Finding(
                "ContractionHypothesis",
                "info",
                "lambda < 1 although some channel violates m_r(phi_i) < 1/i",
                value=lam,
            )
        )
    return findings


def contraction_factor(model: CollisionModel, discretized: bool = False) -> float:
    """lambda = sum over retained channels of alpha_hat_i m_r(phi_i) i.

    Closed-form mixing-law moments by default; ``discretized=True`` takes
    the moments of the atomic discretizations used by `apply` instead
    (only sensible for models without a long generated tail).
    """
    r = model.r_exponent
    lam = 0.0
    for i, (a, law) in model._explicit.items():
        if a > 0:
            mr = model.phi_measure(i).moment(r) if discretized else law.moment(r)
            lam += model.alpha_hat(i) * mr * i
    if model._tail_span is not None:
        if discretized:
            lo, hi = model._tail_span
            lam += sum(
                model.alpha_hat(i) * model.phi_measure(i).moment(r) * i
                for i in range(lo, hi + 1)
            )
        else:
            lam += model._tail_moment_weighted(1.0) / model.retained_alpha_sum
    return lam


def moment_growth_bound(model: CollisionModel, r: float, mr_mu: float) -> float:
    """Upper bound sum alpha_hat_i m_r(phi_i) i^r m_r(mu) on the output r-moment."""
    if not 1.0 <= r < 2.0:
        raise ValueError("moment order must lie in [1, 2)")
    if abs(r - model.r_exponent) > 1e-12 and model._tail_span is not None:
        raise ValueError("tail closed forms are bound to the model r_exponent")
    total = sum(
        model.alpha_hat(i) * law.moment(r) * i**r
        for i, (a, law) in model._explicit.items()
        if a > 0
    )
    total += model._tail_moment_weighted(r) / model.retained_alpha_sum
    return mr_mu * total


@dataclass(frozen=True)
class ApplyReceipt:
    """Operator output together with an itemized W1 error bound."""

    result: DiscreteMeasure
    w1_error_bound: float
    items: dict = field(default_factory=dict)


def apply_component(model: CollisionModel, index: int, mu: DiscreteMeasure) -> ApplyReceipt:
    """One channel: i-fold convolution, then rescaling by phi_i.

    Coarsening error committed inside the convolution shrinks by the
    factor m1(phi_i) = 1/i when it passes through the rescaling.
    """
    mu.require_probability()
    phi = model.phi_measure(index)
    conv_budget = max(1, min(model.atom_budget, model.hard_atom_cap // len(phi)))
    conv, conv_bound = convolve_power(mu, index, conv_budget, max_atoms=model.hard_atom_cap)
    if len(phi) * len(conv) > model.hard_atom_cap:
        rcpt = coarsen(conv, max(1, model.hard_atom_cap // len(phi)))
        conv, conv_bound = rcpt.result, conv_bound + rcpt.w1_error_bound
    scaled = scale_product(phi, conv, max_atoms=model.hard_atom_cap)
    return ApplyReceipt(scaled, phi.mean * conv_bound, {"convolution": phi.mean * conv_bound})


def apply(model: CollisionModel, mu: DiscreteMeasure, workers: int = 1) -> ApplyReceipt:
    """Full mixture with final coarsening to the atom budget.

    Components are independent and may be evaluated in parallel; the mix
    itself always reduces in ascending index order, so the result does not
    depend on scheduling.  The truncation item bounds the W1 gap to the
    untruncated operator by 2 * dropped alpha mass (any two unit-mean laws
    are within W1 distance 2).
    """
    mu.require_probability()
    indices = model.indices
    if workers > 1 and len(indices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            receipts = list(pool.map(lambda i: apply_component(model, i, mu), indices))
    else:
        receipts = [apply_component(model, i, mu) for i in indices]

    mixed = mixture(
        [(model.alpha_hat(i), rcpt.result) for i, rcpt in zip(indices, receipts)],
        tol=mu.mass_tolerance,
    )
    component_bound = sum(
        model.alpha_hat(i) * rcpt.w1_error_bound for i, rcpt in zip(indices, receipts)
    )
    final = coarsen(mixed, model.atom_budget)
    # The operator conserves total mass identically, but the i-fold
    # convolution squares any float deficit, which would compound
    # geometrically along an iteration; pin the output mass to 1.
    out = final.result
    mass = out.mass
    if mass != 1.0:
        out = DiscreteMeasure(out.locations, (out.weights / mass).copy(), out.mass_tolerance)
        out.weights.flags.writeable = False
    truncation = 2.0 * model.dropped_alpha
    total = component_bound + final.w1_error_bound + truncation
    return ApplyReceipt(
        out,
        total,
        {
            "components": component_bound,
            "final_coarsen": final.w1_error_bound,
            "truncation": truncation,
        },
    )
