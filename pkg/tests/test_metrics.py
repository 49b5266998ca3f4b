import numpy as np
import pytest

from boltzlab.errors import InfiniteSeminorm
from boltzlab.measure import dirac, make_measure
from boltzlab.metrics import (
    Potential,
    fortet_mourier,
    kr_potential,
    metric_report,
    rio_check,
    wasserstein1,
    zeta_gap_bound,
    zolotarev_estimate,
    zolotarev_lower,
    zolotarev_upper,
)

from conftest import random_measure, random_unit_mean_measure, w1_lp_oracle


class TestWasserstein1:
    def test_point_masses(self):
        assert wasserstein1(dirac(0.25), dirac(2.0)) == pytest.approx(1.75, abs=1e-15)

    def test_half_split(self):
        mu = make_measure([0, 1], [0.5, 0.5])
        assert wasserstein1(mu, dirac(0.5)) == pytest.approx(0.5, abs=1e-15)

    def test_matches_transport_lp(self):
        rng = np.random.default_rng(101)
        for _ in range(100):
            mu = random_measure(rng, rng.integers(1, 7))
            nu = random_measure(rng, rng.integers(1, 7))
            assert wasserstein1(mu, nu) == pytest.approx(w1_lp_oracle(mu, nu), abs=1e-9)

    def test_metric_axioms(self):
        rng = np.random.default_rng(102)
        for _ in range(500):
            a = random_measure(rng, 4)
            b = random_measure(rng, 4)
            c = random_measure(rng, 4)
            dab = wasserstein1(a, b)
            assert dab == pytest.approx(wasserstein1(b, a), abs=1e-12)
            assert dab <= wasserstein1(a, c) + wasserstein1(c, b) + 1e-12
            assert wasserstein1(a, a) <= 1e-12


class TestKrPotential:
    def test_two_point_masses(self):
        # slope follows sign(F_nu - F_mu), so the maximizer of <f, mu - nu>
        # here is f(x) = -x; the attained value equals W1
        pot, value = kr_potential(dirac(0.0), dirac(1.0))
        assert value == pytest.approx(1.0, abs=1e-15)
        assert abs(pot(1.0) - pot(0.0)) == pytest.approx(1.0, abs=1e-15)
        assert abs(pot(0.5) - pot(0.0)) == pytest.approx(0.5, abs=1e-15)

    def test_identical_measures(self):
        mu = make_measure([0, 1], [0.5, 0.5])
        pot, value = kr_potential(mu, mu)
        assert value == 0.0
        assert pot(0.7) == 0.0

    def test_value_matches_w1(self):
        rng = np.random.default_rng(103)
        for _ in range(100):
            mu = random_measure(rng, rng.integers(1, 9))
            nu = random_measure(rng, rng.integers(1, 9))
            _, value = kr_potential(mu, nu)
            assert value == pytest.approx(wasserstein1(mu, nu), abs=1e-12)

    def test_attains_lipschitz_bound_somewhere(self):
        rng = np.random.default_rng(104)
        for _ in range(30):
            mu = random_measure(rng, 5)
            nu = random_measure(rng, 5)
            if wasserstein1(mu, nu) < 1e-12:
                continue
            pot, _ = kr_potential(mu, nu)
            steps = np.abs(np.diff(pot.values))
            gaps = np.diff(pot.breakpoints)
            assert np.any(np.abs(steps - gaps) <= 1e-12 * np.maximum(gaps, 1.0))

    def test_potential_validates_slope(self):
        with pytest.raises(ValueError):
            Potential(np.array([0.0, 1.0]), np.array([0.0, 2.0]))


class TestFortetMourier:
    def test_distant_point_masses_saturate(self):
        for sep in (2.0, 3.0, 10.0):
            assert fortet_mourier(dirac(0.0), dirac(sep)) == pytest.approx(2.0, abs=1e-9)

    def test_identical(self):
        mu = make_measure([0, 2], [0.5, 0.5])
        assert fortet_mourier(mu, mu) == 0.0

    def test_close_point_masses_match_w1(self):
        assert fortet_mourier(dirac(0.0), dirac(0.5)) == pytest.approx(0.5, abs=1e-9)

    def test_dominated_by_w1_and_two(self):
        rng = np.random.default_rng(105)
        for _ in range(100):
            mu = random_measure(rng, rng.integers(1, 7))
            nu = random_measure(rng, rng.integers(1, 7))
            fm = fortet_mourier(mu, nu)
            assert fm <= min(wasserstein1(mu, nu), 2.0) + 1e-9

    def test_brute_force_grid_maximization(self):
        # crude alternative maximizer: random feasible piecewise-linear f
        rng = np.random.default_rng(106)
        mu = random_measure(rng, 5)
        nu = random_measure(rng, 5)
        fm = fortet_mourier(mu, nu)
        grid = np.union1d(mu.locations, nu.locations)
        d = np.zeros(grid.size)
        d[np.searchsorted(grid, mu.locations)] += mu.weights
        d[np.searchsorted(grid, nu.locations)] -= nu.weights
        best = 0.0
        for _ in range(3000):
            f = np.zeros(grid.size)
            f[0] = rng.uniform(-1, 1)
            for k in range(1, grid.size):
                gap = grid[k] - grid[k - 1]
                f[k] = rng.uniform(max(-1.0, f[k - 1] - gap), min(1.0, f[k - 1] + gap))
            best = max(best, abs(float(f @ d)))
        assert fm >= best - 1e-9


class TestZolotarevBounds:
    def test_upper_hand_example(self):
        mu = make_measure([0, 2], [0.5, 0.5])
        nu = dirac(1.0)
        expect = (1.0 + 0.5 * 2**1.5) / 1.5
        assert zolotarev_upper(mu, nu, 1.5) == pytest.approx(expect, abs=1e-12)

    def test_lower_hand_example(self):
        mu = make_measure([0, 2], [0.5, 0.5])
        nu = dirac(1.0)
        expect = abs(0.5 * 2**1.5 - 1.0) / 1.5
        assert zolotarev_lower(mu, nu, 1.5) == pytest.approx(expect, abs=1e-12)

    def test_identical_zero(self):
        mu = make_measure([0, 2], [0.5, 0.5])
        assert zolotarev_upper(mu, mu, 1.5) == 0.0
        assert zolotarev_lower(mu, mu, 1.5) == 0.0

    def test_mean_mismatch_raises(self):
        with pytest.raises(InfiniteSeminorm):
            zolotarev_upper(dirac(0.0), dirac(1.0), 1.5)

    def test_lower_below_upper(self):
        rng = np.random.default_rng(107)
        for _ in range(200):
            mu = random_unit_mean_measure(rng, rng.integers(2, 8))
            nu = random_unit_mean_measure(rng, rng.integers(2, 8))
            assert zolotarev_lower(mu, nu, 1.5) <= zolotarev_upper(mu, nu, 1.5) + 1e-12

    def test_gap_bound_between_lower_and_upper(self):
        rng = np.random.default_rng(108)
        for _ in range(100):
            mu = random_unit_mean_measure(rng, 5)
            nu = random_unit_mean_measure(rng, 5)
            g = zeta_gap_bound(mu, nu, 1.5)
            assert g <= zolotarev_upper(mu, nu, 1.5) + 1e-12
            assert g >= zolotarev_lower(mu, nu, 1.5) - 1e-9

    def test_gap_bound_decays_with_distance(self):
        mu = make_measure([0.5, 1.5], [0.5, 0.5])
        close = make_measure([0.5001, 1.4999], [0.5, 0.5])
        far = make_measure([0.0, 2.0], [0.5, 0.5])
        assert zeta_gap_bound(mu, close, 1.5) < 0.01 * zeta_gap_bound(mu, far, 1.5)


class TestZolotarevEstimate:
    def test_identical_zero_sandwich(self):
        mu = make_measure([0, 2], [0.5, 0.5])
        s = zolotarev_estimate(mu, mu, 1.5, 16)
        assert (s.lower, s.estimate, s.upper) == (0.0, 0.0, 0.0)

    def test_sandwich_ordering(self):
        rng = np.random.default_rng(109)
        for _ in range(100):
            mu = random_unit_mean_measure(rng, rng.integers(2, 7))
            nu = random_unit_mean_measure(rng, rng.integers(2, 7))
            s = zolotarev_estimate(mu, nu, 1.5, 32)
            assert s.lower <= s.estimate + 1e-12
            assert s.estimate <= s.upper + 1e-12

    def test_grid_refinement_monoternicity(self):
        rng = np.random.default_rng(110)
        for _ in range(20):
            mu = random_unit_mean_measure(rng, 4)
            nu = random_unit_mean_measure(rng, 4)
            e1 = zolotarev_estimate(mu, nu, 1.5, 16).estimate
            e2 = zolotarev_estimate(mu, nu, 1.5, 32).estimate
            assert e2 >= e1 - 1e-9


class TestRio:
    def test_identical(self):
        mu = make_measure([0, 2], [0.5, 0.5])
        w1, bound, ok = rio_check(mu, mu, 1.5)
        assert (w1, bound) == (0.0, 0.0)
        assert ok

    def test_hand_example(self):
        mu = make_measure([0, 2], [0.5, 0.5])
        nu = dirac(1.0)
        w1, bound, ok = rio_check(mu, nu, 1.5)
        assert w1 == pytest.approx(1.0, abs=1e-12)
        upper = (1.0 + 0.5 * 2**1.5) / 1.5
        assert bound == pytest.approx(2 * (2 * upper) ** (1 / 1.5), abs=1e-12)
        assert ok

    def test_random_sweep(self):
        rng = np.random.default_rng(111)
        for _ in range(500):
            mu = random_unit_mean_measure(rng, rng.integers(2, 8))
            nu = random_unit_mean_measure(rng, rng.integers(2, 8))
            _, _, ok = rio_check(mu, nu, 1.5)
            assert ok


class TestMetricReport:
    def test_layout(self):
        rng = np.random.default_rng(112)
        mu = random_unit_mean_measure(rng, 5)
        nu = random_unit_mean_measure(rng, 5)
        report = metric_report(mu, nu, 1.5, 32)
        assert set(report) == {"w1", "fm", "zeta", "rio_ok"}
        assert set(report["zeta"]) == {"lower", "estimate", "upper", "r", "grid_n"}
        assert report["zeta"]["lower"] <= report["zeta"]["estimate"] <= report["zeta"]["upper"]
