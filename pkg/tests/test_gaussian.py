import math

import numpy as np
import pytest
from scipy.stats import norm

from siltlab.gaussian import (
    BoundedFunctional,
    GaussianFieldSampler,
    covariance_check,
    eisenbaum_test,
    norm_concentration_probe,
    sample_field,
)
from siltlab.green import green_torus

from conftest import make_torus


@pytest.fixture(scope="module")
def kernel8(torus8):
    return green_torus(torus8, 0.5)


class TestFieldSampler:
    def test_centered(self, kernel8):
        Z = sample_field(kernel8, 1, 100_000)
        se = math.sqrt(kernel8.zero() / len(Z))
        assert abs(Z[:, 0].mean()) <= 3 * se

    def test_variance_matches_kernel(self, kernel8):
        Z = sample_field(kernel8, 2, 100_000)
        v = Z[:, 0].var()
        target = kernel8.zero()
        se = target * math.sqrt(2.0 / len(Z))
        assert abs(v - target) <= 4 * se
        assert target <= 1.0 / kernel8.lam

    def test_specific_covariance_entry(self, kernel8):
        # Cov(Z_0, Z_3) against the kernel entry at N=10^6
        n = 1_000_000
        Z = sample_field(kernel8, 3, n)
        emp = float((Z[:, 0] * Z[:, 3]).mean())
        target = kernel8.at([3])
        g0 = kernel8.zero()
        se = math.sqrt((g0 * g0 + target * target) / n)
        assert abs(emp - target) <= 4 * se

    def test_full_covariance_matrix(self, kernel8):
        assert covariance_check(kernel8, 100_000, 11) <= 5.0

    def test_covariance_on_r16(self, critical_law):
        kernel = green_torus(make_torus(critical_law, 16), 0.5)
        assert covariance_check(kernel, 100_000, 13) <= 5.0

    def test_deterministic(self, kernel8):
        a = sample_field(kernel8, 42, 10)
        b = sample_field(kernel8, 42, 10)
        assert np.array_equal(a, b)


@pytest.fixture(scope="module")
def quick_report(torus8):
    return eisenbaum_test(torus8, 0.5, 1.0, 100_000, 123)


class TestEisenbaumIdentity:
    def test_battery_passes(self, quick_report):
        assert quick_report.passed(z_max=4.0)

    def test_unit_functional_exact(self, quick_report):
        row = next(r for r in quick_report.rows if r.name == "const_one")
        assert row.left_mean == 1.0 and row.left_se == 0.0
        # right side is E[1 + Z_0/s] = 1 up to Monte Carlo error
        assert abs(row.right_mean - 1.0) <= 3 * row.right_se

    def test_clipped_coordinate_closed_form(self, quick_report, kernel8):
        # E[l_tau(0)] + E[(Z_0+s)^2]/2 = (3 G(0,0) + s^2)/2 on both sides
        target = 0.5 * (3.0 * kernel8.zero() + 1.0)
        assert quick_report.coord_closed_form == pytest.approx(target)
        row = next(r for r in quick_report.rows if r.name == "coord0_clipped")
        assert abs(row.left_mean - target) <= 4 * row.left_se
        assert abs(row.right_mean - target) <= 4 * row.right_se

    def test_weight_statistics(self, quick_report, kernel8):
        # E[1 + Z_0/s] = 1 and Var = G(0,0)/s^2
        n = quick_report.n
        target_var = kernel8.zero()
        assert abs(quick_report.weight_mean - 1.0) <= 3 * quick_report.weight_se
        emp_var = quick_report.weight_se ** 2 * n
        assert emp_var == pytest.approx(target_var, rel=0.05)

    def test_small_shift(self, torus8):
        rep = eisenbaum_test(torus8, 0.5, 0.25, 100_000, 321)
        assert rep.passed(z_max=4.0)

    def test_rejects_zero_shift(self, torus8):
        with pytest.raises(ValueError):
            eisenbaum_test(torus8, 0.5, 0.0, 1000, 0)

    def test_rejects_unbounded_functional(self, torus8):
        bad = (BoundedFunctional("unbounded", lambda v: v[:, 0], math.inf),)
        with pytest.raises(ValueError):
            eisenbaum_test(torus8, 0.5, 1.0, 1000, 0, functionals=bad)

    def test_workers_do_not_change_results(self, torus8):
        a = eisenbaum_test(torus8, 0.5, 1.0, 20_000, 9, workers=1)
        b = eisenbaum_test(torus8, 0.5, 1.0, 20_000, 9, workers=4)
        assert [r.left_mean for r in a.rows] == [r.left_mean for r in b.rows]
        assert [r.right_mean for r in a.rows] == [r.right_mean for r in b.rows]


class TestNormConcentration:
    def test_zero_threshold(self, kernel8):
        rep = norm_concentration_probe(kernel8, 2.0, [0.0, 1.0], 20_000, 1, rho1=1.0)
        assert rep.p_emp[0] == 1.0

    def test_single_site_torus_closed_form(self, critical_law):
        # R=1: the norm is |Z_0| with Z_0 ~ N(0, 1/lam); Gaussian tail in closed form
        lam = 0.7
        import warnings

        from siltlab.model import project_to_torus

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            t1 = project_to_torus(critical_law, 2)
        # shrink to the scalar case by hand: sample a single-mode kernel
        kernel = green_torus(t1, lam)
        Z = sample_field(kernel, 5, 200_000)
        sigma = math.sqrt(kernel.zero())
        b = 1.5
        p_emp = (np.abs(Z[:, 0]) >= math.sqrt(b)).mean()
        p_true = 2 * (1 - norm.cdf(math.sqrt(b) / sigma))
        assert p_emp == pytest.approx(p_true, abs=4 * math.sqrt(p_true / len(Z)))

    def test_lower_bound_holds(self, kernel8, critical_law):
        from siltlab.variational import solve_rho1

        rho1 = solve_rho1(green_torus(make_torus(critical_law, 8), 0.5), 2.0).value
        rep = norm_concentration_probe(kernel8, 2.0, [1.0, 2.0, 4.0], 200_000, 7, rho1=rho1)
        assert rep.ok_lower_bound
        assert rep.exp_moment_stable
        assert np.all(np.diff(rep.p_emp) <= 0)  # tails decrease in b
