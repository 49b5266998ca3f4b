import math

import numpy as np
import pytest

from boltzlab.collision import CollisionModel, apply, contraction_factor, tjon_wu_model
from boltzlab.dynamics import (
    DecayCheck,
    decay_check,
    decay_constant,
    discretization_error_check,
    euler_step,
    evolve,
    exp_euler_step,
)
from boltzlab.errors import StepOutOfRange
from boltzlab.measure import MixingLaw, dirac, make_measure
from boltzlab.metrics import wasserstein1
from boltzlab.solver import iterate

from conftest import random_unit_mean_measure


def small_model(budget=512, phi_n=64):
    return tjon_wu_model(phi_n=phi_n, atom_budget=budget)


def exact_model():
    return tjon_wu_model(phi_n=32, atom_budget=10**6)


@pytest.fixture(scope="module")
def fixed_point():
    report = iterate(small_model(), dirac(1.0), max_iter=60, w1_tol=5e-4)
    return report


class TestSteps:
    def test_full_step_equals_operator(self):
        model = small_model()
        mu = make_measure([0.5, 1.5], [0.5, 0.5])
        step = euler_step(model, mu, 1.0)
        direct = apply(model, mu).result
        np.testing.assert_array_equal(step.locations, direct.locations)
        np.testing.assert_allclose(step.weights, direct.weights, atol=1e-15)

    def test_step_range_validation(self):
        model = small_model()
        mu = dirac(1.0)
        with pytest.raises(StepOutOfRange):
            euler_step(model, mu, 1.5)
        with pytest.raises(StepOutOfRange):
            euler_step(model, mu, 0.0)
        with pytest.raises(StepOutOfRange):
            exp_euler_step(model, mu, -0.1)

    def test_small_step_moves_little(self):
        model = exact_model()
        mu = random_unit_mean_measure(np.random.default_rng(1), 6)
        drift = wasserstein1(apply(model, mu).result, mu)
        for h in (0.2, 0.1, 0.05):
            moved = wasserstein1(euler_step(model, mu, h), mu)
            assert moved <= h * drift + 1e-12

    def test_schemes_agree_to_second_order(self):
        model = exact_model()
        mu = random_unit_mean_measure(np.random.default_rng(2), 6)
        drift = wasserstein1(apply(model, mu).result, mu)
        for h in (0.5, 0.25, 0.1):
            gap = wasserstein1(exp_euler_step(model, mu, h), euler_step(model, mu, h))
            assert gap <= h * h * drift + 1e-12

    def test_fixed_point_stationary(self, fixed_point):
        model = small_model()
        mu_star = fixed_point.limit
        for step_fn in (euler_step, exp_euler_step):
            moved = wasserstein1(step_fn(model, mu_star, 0.1), mu_star)
            assert moved <= 0.1 * 0.02

    def test_mean_preserved(self):
        model = small_model()
        mu = make_measure([0.5, 1.5], [0.5, 0.5])
        assert euler_step(model, mu, 0.3).mean == pytest.approx(1.0, abs=1e-10)
        assert exp_euler_step(model, mu, 0.3).mean == pytest.approx(1.0, abs=1e-10)


class TestEvolve:
    def test_single_step_equals_step_operation(self):
        model = small_model()
        mu = make_measure([0.5, 1.5], [0.5, 0.5])
        traj = evolve(model, mu, T=0.1, h=0.1, scheme="exp_euler")
        direct = exp_euler_step(model, mu, 0.1)
        np.testing.assert_array_equal(traj.final.locations, direct.locations)
        np.testing.assert_allclose(traj.final.weights, direct.weights, atol=1e-15)

    def test_mean_one_throughout(self):
        model = small_model()
        traj = evolve(model, dirac(1.0), T=2.0, h=0.05, keep_stride=5)
        for m1 in traj.m1_series:
            assert m1 == pytest.approx(1.0, abs=1e-9)

    def test_step_out_of_range(self):
        with pytest.raises(StepOutOfRange):
            evolve(small_model(), dirac(1.0), T=1.0, h=1.5)

    def test_nonexpansive_between_initial_data(self):
        model = small_model()
        mu = make_measure([0.5, 1.5], [0.5, 0.5])
        nu = make_measure([0.25, 1.75], [0.5, 0.5])
        d0 = wasserstein1(mu, nu)
        ta = evolve(model, mu, T=1.0, h=0.1)
        tb = evolve(model, nu, T=1.0, h=0.1)
        for sa, sb in zip(ta.snapshots, tb.snapshots):
            gap = wasserstein1(sa, sb)
            assert gap <= d0 + 2 * (ta.error_ledger + tb.error_ledger) + 1e-12

    def test_schemes_consistent_at_fixed_time(self):
        model = small_model()
        mu = make_measure([0.5, 1.5], [0.5, 0.5])
        h = 0.1
        te = evolve(model, mu, T=1.0, h=h, scheme="euler")
        tx = evolve(model, mu, T=1.0, h=h, scheme="exp_euler")
        gap = wasserstein1(te.final, tx.final)
        assert gap <= 1.0 * h + te.error_ledger + tx.error_ledger


class TestDecayCheck:
    def test_starting_at_fixed_point_trivially_ok(self, fixed_point):
        model = small_model()
        mu_star = fixed_point.limit
        traj = evolve(model, mu_star, T=1.0, h=0.1, reference=mu_star)
        check = decay_check(model, traj, mu_star)
        assert check.ok
        assert math.isnan(check.slope) or check.slope < 0

    def test_decay_beats_envelope(self, fixed_point):
        model = small_model()
        mu_star = fixed_point.limit
        mu0 = make_measure([0.5, 1.5], [0.5, 0.5])
        traj = evolve(model, mu0, T=4.0, h=0.05, reference=mu_star)
        check = decay_check(model, traj, mu_star)
        lam = contraction_factor(model)
        assert check.bound_slope == pytest.approx(-(1 - lam) / model.r_exponent, abs=1e-12)
        assert check.ok
        assert check.slope <= check.bound_slope + 0.05
        assert check.C <= check.K

    def test_refuses_non_contractive_model(self):
        law = MixingLaw(index=1, kind="atoms", atoms=dirac(1.0))
        model = CollisionModel([(1, 1.0, law)], atom_budget=256)
        mu = make_measure([0.5, 1.5], [0.5, 0.5])
        traj = evolve(model, mu, T=0.5, h=0.1)
        check = decay_check(model, traj, dirac(1.0))
        assert check.refused
        assert not check.ok

    def test_monotone_distance_to_fixed_point(self, fixed_point):
        model = small_model()
        mu_star = fixed_point.limit
        traj = evolve(model, make_measure([0.5, 1.5], [0.5, 0.5]), T=3.0, h=0.1, reference=mu_star)
        w1 = traj.w1_to_reference
        for k in range(1, len(w1)):
            slack = traj.ledger_series[k] - traj.ledger_series[k - 1] + 1e-12
            assert w1[k] <= w1[k - 1] + slack


class TestDiscretizationError:
    def test_bound_respected_and_vacuity_flagged(self):
        model = small_model(budget=256, phi_n=64)
        mu0 = make_measure([0.5, 1.5], [0.5, 0.5])
        check = discretization_error_check(model, mu0, T=1.0, h=0.05)
        assert check.ok
        assert check.measured < 0.1
        # K-driven bound at T=1 exceeds the W1 diameter of unit-mean laws
        assert check.vacuous == (check.bound >= 2.0)

    def test_roughly_linear_in_h(self):
        # quick two-point version; the acceptance suite runs the full
        # three-step ladder at higher resolution
        model = small_model(budget=256, phi_n=32)
        mu0 = make_measure([0.5, 1.5], [0.5, 0.5])
        measured = [
            discretization_error_check(model, mu0, T=1.0, h=h).measured
            for h in (0.1, 0.05)
        ]
        ratio = measured[0] / measured[1]
        assert 2.0 / 3.0 <= ratio <= 6.0, measured
