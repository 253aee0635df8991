import math
import warnings

import numpy as np
import pytest
from scipy.special import zeta

from siltlab.lattice import LatticeFunction, box_function, delta
from siltlab.model import (
    ModelParams,
    build_jump_law,
    dirichlet_form,
    free_symbol,
    project_to_torus,
    tail_weight_estimate,
)

from conftest import make_torus


class TestModelParams:
    def test_regimes(self):
        assert ModelParams(1, 0.5, 2.0).regime == "critical"       # q(d-a) = d
        assert ModelParams(2, 0.5, 2.0).regime == "supercritical"  # 3 > 2
        assert ModelParams(3, 2.0, 2.0).regime == "subcritical"    # 2 < 3
        assert ModelParams(2, 1.0, 3.0).regime == "supercritical"
        # exact rational criticality with a q that is not a round float
        assert ModelParams(4, 2.0, 2.0).regime == "critical"

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            ModelParams(0, 0.5, 2.0)
        with pytest.raises(ValueError):
            ModelParams(1, 2.5, 2.0)
        with pytest.raises(ValueError):
            ModelParams(1, 0.0, 2.0)
        with pytest.raises(ValueError):
            ModelParams(1, 0.5, 1.0)  # q must exceed 1


class TestJumpLaw:
    def test_power_law_symmetry(self, critical_law):
        law = critical_law
        c = law.normalizer
        assert law.weight_at([1]) == pytest.approx(c)
        assert law.weight_at([-1]) == pytest.approx(c)
        assert law.weight_at([2]) == pytest.approx(c * 2 ** -1.5)
        assert law.weight_at([0]) == 0.0
        # full stored symmetry
        table = {tuple(s): w for s, w in zip(law.sites, law.weights)}
        assert all(table[tuple(-np.array(s))] == w for s, w in table.items())

    def test_normalizer_oracle_d1(self):
        # oracle: on Z the full mass is 2c zeta(1+alpha), so c = 1/(2 zeta(1.5));
        # the construction (ball sum + Hurwitz tail) must reproduce it at any K
        oracle = 1.0 / (2.0 * zeta(1.5))
        law4 = build_jump_law(ModelParams(1, 0.5, 2.0), 10_000)
        law5 = build_jump_law(ModelParams(1, 0.5, 2.0), 100_000)
        assert abs(law4.normalizer - law5.normalizer) <= 1e-8
        assert law4.normalizer == pytest.approx(oracle, abs=1e-12)

    def test_mass_budget_closes(self, critical_law):
        assert critical_law.ball_mass + critical_law.tail_mass == pytest.approx(1.0, abs=1e-10)

    def test_tail_telescoping_d2(self):
        # est(200) must match the brute shell sum over 200 < |z| <= 400 plus est(400)
        law = build_jump_law(ModelParams(2, 1.0, 3.0), 200)
        est200 = tail_weight_estimate(2, 1.0, 200)
        est400 = tail_weight_estimate(2, 1.0, 400)
        ax = np.arange(-400, 401)
        gx, gy = np.meshgrid(ax, ax, indexing="ij")
        r = np.sqrt(gx.astype(float) ** 2 + gy ** 2)
        shell = float(np.sum(r[(r > 200) & (r <= 400)] ** -3.0))
        assert est200 == pytest.approx(shell + est400, rel=5e-3)
        # and the coarse radial bound from the spec'd comparison
        coarse = 2.0 * math.pi * (1.0 / 200.0)
        assert law.tail_mass <= law.normalizer * coarse * (1.0 + 1e-12)

    def test_rejects_small_cutoff(self):
        with pytest.raises(ValueError):
            build_jump_law(ModelParams(1, 0.5, 2.0), 1)


class TestTorusProjection:
    def test_two_point_torus_oracle(self, critical_law):
        # mu_R(1) = sum over odd z, mu_R(0) = sum over even z != 0 (closed forms)
        t2 = make_torus(critical_law, 2)
        c = critical_law.normalizer
        odd = 2 * c * (1 - 2 ** -1.5) * zeta(1.5)
        even = 2 * c * 2 ** -1.5 * zeta(1.5)
        assert t2.weights[1] == pytest.approx(odd, abs=1e-6)
        assert t2.weights[0] == pytest.approx(even, abs=1e-6)
        # psi_R(1) = 2 mu_R(1) because cos(pi) = -1
        assert t2.symbol[1] == pytest.approx(2 * t2.weights[1], abs=1e-14)

    def test_symbol_zero_mode_and_positivity(self, critical_law):
        for R in (2, 5, 16, 32):
            t = make_torus(critical_law, R)
            assert t.symbol[0] == 0.0
            assert t.symbol.min() >= 0.0
            sym = t.symbol[(-np.arange(R)) % R]
            assert np.abs(t.symbol - sym).max() <= 1e-13  # psi(-k) = psi(k)

    def test_mass_exact_after_redistribution(self, critical_law):
        for R in (2, 7, 32):
            t = make_torus(critical_law, R)
            assert t.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_folding_identity_psi16(self, critical_law):
        # brute-force fold of the stored weights vs the fft symbol, and the
        # unfolded-law identity including the uniformly spread remainder
        t = make_torus(critical_law, 32)
        folded = np.zeros(32)
        np.add.at(folded, critical_law.sites[:, 0] % 32, critical_law.weights)
        folded += t.folded_remainder / 32.0
        folded /= folded.sum()
        k = 16
        brute = float(np.sum(folded * (1 - np.cos(2 * math.pi * k * np.arange(32) / 32))))
        assert t.symbol[k] == pytest.approx(brute, abs=1e-12)
        z = critical_law.sites[:, 0]
        unfolded = float(np.sum(critical_law.weights * (1 - np.cos(math.pi * z))))
        assert t.symbol[k] == pytest.approx(unfolded + t.folded_remainder, abs=1e-8)

    def test_folding_identity_all_modes(self, critical_law):
        t = make_torus(critical_law, 32)
        z = critical_law.sites[:, 0]
        for k in (1, 5, 11, 27):
            unfolded = float(np.sum(critical_law.weights * (1 - np.cos(2 * math.pi * k * z / 32))))
            assert t.symbol[k] == pytest.approx(unfolded + t.folded_remainder, abs=1e-8)

    def test_exact_fold_oracle(self, critical_law):
        # the Hurwitz-zeta fold sums the whole lattice; the truncated fold may
        # differ only by how the tail is spread, i.e. by O(remainder / R)
        t = make_torus(critical_law, 32)
        tx = make_torus(critical_law, 32, method="exact")
        assert tx.folded_remainder == 0.0
        assert np.abs(t.weights - tx.weights).max() <= t.folded_remainder / 32
        assert tx.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_remainder_warning(self, critical_law):
        with pytest.warns(UserWarning, match="redistributes remainder"):
            project_to_torus(critical_law, 8)

    def test_rejects_small_torus(self, critical_law):
        with pytest.raises(ValueError):
            project_to_torus(critical_law, 1)


class TestFreeSymbol:
    def test_against_mpmath_polylog(self, critical_law):
        import mpmath

        for th in (1e-4, 0.01, 0.2, 0.5):
            w = 2 * math.pi * th
            oracle = 2 * critical_law.normalizer * float(
                mpmath.zeta(1.5) - mpmath.re(mpmath.polylog(1.5, mpmath.e ** (1j * w))))
            assert free_symbol(critical_law, np.array([th]))[0] == pytest.approx(oracle, abs=1e-12)

    def test_half_point_closed_form(self, critical_law):
        # psi(1/2) = 4c sum_{odd} z^(-3/2) = 2 - 2^(-1/2)
        assert free_symbol(critical_law, np.array([0.5]))[0] == pytest.approx(
            2.0 - 2.0 ** -0.5, abs=1e-12)

    def test_periodicity_and_symmetry(self, critical_law):
        th = np.array([0.3])
        base = free_symbol(critical_law, th)[0]
        assert free_symbol(critical_law, th + 1.0)[0] == pytest.approx(base, abs=1e-12)
        assert free_symbol(critical_law, -th)[0] == pytest.approx(base, abs=1e-12)

    def test_integer_alpha_closed_form(self):
        # alpha = 1 on the line: psi(theta) = 2c (pi w/2 - w^2/4), w = 2 pi theta,
        # from the classical Fourier series of sum cos(kw)/k^2
        law = build_jump_law(ModelParams(1, 1.0, 3.0), 200)
        c = law.normalizer
        for th in (0.1, 0.25, 0.4):
            w = 2 * math.pi * th
            oracle = 2 * c * (math.pi * w / 2 - w * w / 4)
            assert free_symbol(law, np.array([th]))[0] == pytest.approx(oracle, abs=1e-9)

    def test_d2_matches_ball_plus_tail_behavior(self, supercritical_law_2d):
        law = supercritical_law_2d
        # far from 0 the tail contribution approaches the full tail mass
        psi = free_symbol(law, np.array([[0.5, 0.5]]))[0]
        zs = law.sites.astype(float)
        ball = float(np.sum(law.weights * (1 - np.cos(2 * math.pi * zs @ np.array([0.5, 0.5])))))
        assert abs(psi - ball - law.tail_mass) <= 0.15 * law.tail_mass
        # near 0 the symbol follows A |theta| (stable scaling, slope alpha = 1)
        r1 = free_symbol(law, np.array([[1e-6, 0.0]]))[0]
        r2 = free_symbol(law, np.array([[2e-6, 0.0]]))[0]
        assert r2 / r1 == pytest.approx(2.0, rel=0.02)


class TestDirichletForm:
    def test_point_mass(self, critical_law):
        assert dirichlet_form(critical_law, delta(0, 1)) == pytest.approx(1.0, abs=1e-12)

    def test_torus_constant_is_harmonic(self, critical_law):
        t = make_torus(critical_law, 32)
        const = LatticeFunction(np.full(32, 1 / math.sqrt(32)), space="torus", R=32)
        assert dirichlet_form(t, const) == pytest.approx(0.0, abs=1e-12)

    def test_difference_of_deltas_oracle(self, critical_law):
        # brute expansion: the internal pair contributes 4 mu(1) = 4c, each
        # endpoint pays full exit mass 1 - mu(1); total 2 + 2c
        c = critical_law.normalizer
        f = box_function([1.0, -1.0])
        assert dirichlet_form(critical_law, f) == pytest.approx(2.0 + 2.0 * c, rel=1e-12)

    def test_brute_force_window(self, critical_law):
        # independent double-loop evaluation on a random function
        rng = np.random.default_rng(3)
        vals = rng.standard_normal(5)
        f = box_function(vals)
        c = critical_law.normalizer
        sites = np.arange(5)
        acc = 0.0
        for i, x in enumerate(sites):
            for j, y in enumerate(sites):
                if x == y:
                    continue
                acc += 0.5 * c * abs(y - x) ** -1.5 * (vals[j] - vals[i]) ** 2
            inside = sum(c * abs(y - x) ** -1.5 for y in sites if y != x)
            acc += vals[i] ** 2 * (1.0 - inside)
        assert dirichlet_form(critical_law, f) == pytest.approx(acc, rel=1e-10)

    def test_nonnegative_on_random_functions(self, critical_law):
        rng = np.random.default_rng(11)
        for _ in range(10):
            f = box_function(rng.standard_normal(rng.integers(2, 12)))
            assert dirichlet_form(critical_law, f) >= 0.0

    def test_torus_zero_only_for_constants(self, critical_law):
        t = make_torus(critical_law, 16)
        rng = np.random.default_rng(5)
        v = rng.standard_normal(16)
        f = LatticeFunction(v, space="torus", R=16)
        assert dirichlet_form(t, f) > 1e-6
