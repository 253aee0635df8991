import math

import numpy as np
import pytest

from siltlab.green import (
    check_green_lemmas,
    check_heat_kernel_bound,
    dense_green_matrix,
    extrapolated_free_green,
    free_green_values,
    free_heat_kernel,
    green_free,
    green_torus,
    heat_kernel_torus,
)
from siltlab.model import ModelParams, build_jump_law

from conftest import make_torus

# frozen two-method value for d=1, alpha=0.5 (quadrature, refine-stable to 4e-16,
# extrapolation agrees to 3.2e-5)
G_ZERO_CRITICAL = 1.256424538859


class TestTorusGreen:
    @pytest.mark.parametrize("lam", [0.1, 0.5, 2.0])
    @pytest.mark.parametrize("R", [4, 8, 16])
    def test_spectral_equals_dense_solve(self, critical_law, R, lam):
        torus = make_torus(critical_law, R)
        g = green_torus(torus, lam)
        assert np.abs(g.matrix() - dense_green_matrix(torus, lam)).max() <= 1e-10

    def test_spectral_equals_dense_solve_2d(self, supercritical_law_2d):
        torus = make_torus(supercritical_law_2d, 6)
        for lam in (0.1, 0.5, 2.0):
            g = green_torus(torus, lam)
            assert np.abs(g.matrix() - dense_green_matrix(torus, lam)).max() <= 1e-10

    def test_row_sum_is_expected_lifetime(self, torus16):
        for lam in (0.1, 0.5, 2.0):
            g = green_torus(torus16, lam)
            assert g.row_sum() == pytest.approx(1.0 / lam, abs=1e-10)
            assert g.zero() <= 1.0 / lam

    def test_kernel_row_fixture(self, torus16):
        # dense solve is the oracle for the full spectral row
        g = green_torus(torus16, 0.1)
        dense = dense_green_matrix(torus16, 0.1)
        assert np.abs(g.values - dense[0]).max() <= 1e-10

    def test_monotone_in_lambda(self, torus16):
        g1 = green_torus(torus16, 0.2)
        g2 = green_torus(torus16, 0.4)
        assert np.all(g1.values > g2.values)

    def test_positive_definite(self, torus16):
        g = green_torus(torus16, 0.5)
        assert g.min_eigenvalue() == pytest.approx(1.0 / (0.5 + torus16.symbol.max()))
        rng = np.random.default_rng(0)
        for _ in range(5):
            v = rng.standard_normal(16)
            assert v @ (g.matrix() @ v) >= 0.0

    def test_rejects_nonpositive_lambda(self, torus16):
        with pytest.raises(ValueError):
            green_torus(torus16, 0.0)


class TestHeatKernelTorus:
    def test_identity_at_time_zero(self, torus16):
        row = heat_kernel_torus(torus16, 0.0)
        expect = np.zeros(16)
        expect[0] = 1.0
        assert np.abs(row.values - expect).max() <= 1e-12

    def test_row_sums_one(self, torus16):
        for t in (0.5, 2.0, 17.0):
            assert heat_kernel_torus(torus16, t).values.sum() == pytest.approx(1.0, abs=1e-12)

    def test_poisson_series_oracle(self, torus16):
        # independent route: p_t = sum_n e^-t t^n/n! mu^(*n), convolution powers
        # computed by direct rolling sums (no fft)
        t = 2.0
        w = torus16.weights
        conv = np.zeros(16)
        conv[0] = 1.0  # mu^(*0) = delta
        series = np.zeros(16)
        for n in range(0, 45):
            series += math.exp(-t) * t ** n / math.factorial(n) * conv
            nxt = np.zeros(16)
            for shift in range(16):
                nxt += w[shift] * np.roll(conv, shift)
            conv = nxt
        row = heat_kernel_torus(torus16, t)
        assert np.abs(row.values - series).max() <= 1e-8

    def test_semigroup_property(self, torus16):
        p1 = heat_kernel_torus(torus16, 1.3).values
        p2 = heat_kernel_torus(torus16, 0.9).values
        p3 = heat_kernel_torus(torus16, 2.2).values
        conv = np.real(np.fft.ifft(np.fft.fft(p1) * np.fft.fft(p2)))
        assert np.abs(conv - p3).max() <= 1e-9


class TestFreeGreen:
    def test_two_method_cross_check(self, critical_law):
        res = green_free(critical_law, np.arange(0, 9))
        assert abs(res.values[0] - res.extrapolated[0]) <= 1e-4
        assert res.values[0] == pytest.approx(G_ZERO_CRITICAL, abs=1e-6)

    def test_quadrature_refinement_stable(self, critical_law):
        a = free_green_values(critical_law, np.arange(0, 5))
        b = free_green_values(critical_law, np.arange(0, 5), refine=2)
        assert np.abs(a - b).max() <= 1e-10

    def test_holding_time_floor_and_strict_maximum(self, critical_law):
        G = free_green_values(critical_law, np.arange(0, 20))
        assert G[0] >= 1.0          # at least the first holding time at the origin
        assert np.all(G[0] > G[1:])  # strict maximum at the origin

    def test_decay_ratio_bounded(self, critical_law):
        # G(0,x) |x|^(d-alpha) stays in a narrow band over 8 <= |x| <= 64
        xs = np.arange(8, 65)
        G = free_green_values(critical_law, xs)
        ratio = G * xs ** 0.5
        assert ratio.max() / ratio.min() <= 1.5

    def test_rejects_recurrent_regime(self):
        law = build_jump_law(ModelParams(1, 1.5, 2.0), 100)
        with pytest.raises(ValueError):
            free_green_values(law, np.array([0]))

    def test_d2_quadrature_vs_extrapolation(self, supercritical_law_2d):
        quad = free_green_values(supercritical_law_2d, np.array([[0, 0]]))
        ext, _ = extrapolated_free_green(supercritical_law_2d, np.array([[0, 0]]),
                                         R_grid=[32, 64, 128])
        assert abs(quad[0] - ext[0]) <= 2e-2 * quad[0]


class TestHeatKernelBound:
    def test_small_time_one_jump_asymptotics(self, critical_law):
        # p_t(0,x) ~ t mu(x) as t -> 0
        t = 0.01
        xs = np.arange(1, 6)
        p = free_heat_kernel(critical_law, t, xs)
        mus = critical_law.normalizer * xs.astype(float) ** -1.5
        assert np.abs(p / (t * mus) - 1.0).max() <= 0.05

    def test_fitted_constant_report(self, critical_law):
        rep = check_heat_kernel_bound(critical_law)
        assert np.isfinite(rep.C_star) and rep.C_star > 0
        assert rep.refinement_shift <= 0.10
        assert rep.diag_ratio_max / rep.diag_ratio_min <= 2.0


@pytest.fixture(scope="module")
def report(critical_law):
    return check_green_lemmas(critical_law)


class TestGreenLemmas:
    def test_wrap_constant_bounded(self, report):
        assert report.C_spread < 2.0
        assert all(c > 0 for c in report.C_values)

    def test_zero_gap_shrinks(self, report):
        assert report.zero_gaps[-1] < report.zero_gaps[0]

    def test_short_time_lower_bound(self, report):
        # G_{R,lam}(0,0) >= int_0^S e^(-lam t) p_t(0,0) dt at S=10
        assert report.lower_bound_margin >= 0.0
