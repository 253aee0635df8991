"""The release gate: every numbered criterion as a callable check.

Each check returns a CriterionResult with the measured quantities, so both the
pytest suite and the command-line `verify-all` consume the same code.  The
reference model is the critical pair (d=1, alpha=0.5, q=2); the supercritical
checks use (d=2, alpha=1, q=3).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .gaussian import covariance_check, eisenbaum_test
from .green import (
    check_green_lemmas,
    check_heat_kernel_bound,
    dense_green_matrix,
    free_green_values,
    green_free,
    green_torus,
)
from .ldp import DeviationSchedule, classify_regime, estimate_naive, estimate_tilted, rate_curve
from .model import ModelParams, build_jump_law, project_to_torus
from .variational import (
    check_duality,
    check_m_scaling,
    rho1_sandwich,
    solve_kappa,
    solve_rho,
    solve_rho1,
)
from .walk import FixedHorizon, batch_local_time_matrix


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d}: {self.name} -- {self.detail}"


@dataclass
class Scale:
    """Replica counts; `full` is the stated scale, `quick` a smoke profile."""

    clock_paths: int = 100_000
    eisenbaum_n: int = 1_000_000
    naive_n: int = 200_000
    tilted_n: int = 40_000
    curve_n: int = 100_000
    rho1_starts: int = 20

    @classmethod
    def quick(cls) -> "Scale":
        return cls(clock_paths=5_000, eisenbaum_n=50_000, naive_n=20_000,
                   tilted_n=8_000, curve_n=10_000, rho1_starts=5)


_LAW_CACHE: dict = {}


def critical_law(K: int = 10_000):
    key = ("crit", K)
    if key not in _LAW_CACHE:
        _LAW_CACHE[key] = build_jump_law(ModelParams(1, 0.5, 2.0), K)
    return _LAW_CACHE[key]


def supercritical_law_2d(K: int = 60):
    key = ("super2d", K)
    if key not in _LAW_CACHE:
        _LAW_CACHE[key] = build_jump_law(ModelParams(2, 1.0, 3.0), K)
    return _LAW_CACHE[key]


def _torus(law, R):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return project_to_torus(law, R)


def criterion_1_clock(scale: Scale, seed: int = 101) -> CriterionResult:
    torus = _torus(critical_law(), 16)
    occ, horizons, _ = batch_local_time_matrix(torus, FixedHorizon(100.0), scale.clock_paths, seed)
    err = float(np.abs(occ.sum(axis=1) - horizons).max())
    return CriterionResult(
        1, "clock conservation over simulated paths",
        err <= 1e-9,
        f"max |sum_x l(x) - horizon| = {err:.2e} over {scale.clock_paths} paths (tol 1e-9)",
        {"max_error": err},
    )


def criterion_2_spectral_vs_dense(scale: Scale) -> CriterionResult:
    worst = 0.0
    law1 = critical_law()
    law2 = supercritical_law_2d()
    for law, Rs in ((law1, (2, 3, 4, 6, 8, 12, 16)), (law2, (2, 3, 4, 6, 8))):
        for R in Rs:
            torus = _torus(law, R)
            for lam in (0.1, 0.5, 2.0):
                g = green_torus(torus, lam)
                err = float(np.abs(g.matrix() - dense_green_matrix(torus, lam)).max())
                worst = max(worst, err)
    return CriterionResult(
        2, "spectral vs dense-solve Green kernels",
        worst <= 1e-10,
        f"worst kernel deviation {worst:.2e} across d=1 R<=16 and d=2 R<=8 (tol 1e-10)",
        {"worst": worst},
    )


def criterion_3_row_sums(scale: Scale) -> CriterionResult:
    worst_rs = 0.0
    diag_ok = True
    for law, Rs in ((critical_law(), (4, 8, 16)), (supercritical_law_2d(), (4, 8))):
        for R in Rs:
            torus = _torus(law, R)
            for lam in (0.1, 0.5, 2.0):
                g = green_torus(torus, lam)
                worst_rs = max(worst_rs, abs(g.row_sum() - 1.0 / lam))
                diag_ok &= g.zero() <= 1.0 / lam + 1e-12
    return CriterionResult(
        3, "Green row sums 1/lambda and diagonal bound",
        worst_rs <= 1e-10 and diag_ok,
        f"max |row sum - 1/lam| = {worst_rs:.2e}; G(0,0) <= 1/lam everywhere: {diag_ok}",
        {"worst_row_sum": worst_rs},
    )


def criterion_4_wrap_constant(scale: Scale) -> CriterionResult:
    rep = check_green_lemmas(critical_law())
    spread = rep.C_spread
    return CriterionResult(
        4, "torus-wrap constant bounded across R",
        spread < 2.0,
        f"fitted C(R) = {['%.4f' % c for c in rep.C_values]}, spread factor {spread:.3f} (< 2)",
        {"C_values": rep.C_values, "spread": spread},
    )


def criterion_5_green_convergence(scale: Scale) -> CriterionResult:
    rep = check_green_lemmas(critical_law())
    res = green_free(critical_law(), np.array([0]))
    gap_ok = rep.zero_gaps[-1] < rep.zero_gaps[0]
    two_method = abs(res.values[0] - res.extrapolated[0])
    return CriterionResult(
        5, "killed-torus Green converges to free Green",
        gap_ok and two_method <= 1e-4,
        f"|G_Rlam(0,0)-G(0,0)|: {rep.zero_gaps[0]:.4f} (R=8) -> {rep.zero_gaps[-1]:.4f} (R=64); "
        f"two-method gap at 0: {two_method:.2e} (tol 1e-4)",
        {"zero_gaps": rep.zero_gaps, "two_method": two_method},
    )


def criterion_6_heat_bound(scale: Scale) -> CriterionResult:
    rep = check_heat_kernel_bound(critical_law())
    band = rep.diag_ratio_max / rep.diag_ratio_min
    return CriterionResult(
        6, "stable-walk transition bound surrogate",
        band <= 2.0 and rep.refinement_shift <= 0.10,
        f"on-diagonal band factor {band:.3f} (<= 2); C* shift under refinement "
        f"{rep.refinement_shift:.2e} (<= 0.1), C* = {rep.C_star:.4f}",
        {"band": band, "C_star": rep.C_star, "shift": rep.refinement_shift},
    )


def criterion_7_eisenbaum(scale: Scale, seed: int = 707) -> CriterionResult:
    torus = _torus(critical_law(), 8)
    reports = []
    worst_z = 0.0
    const_ok = True
    for i, s in enumerate((1.0, 0.25)):
        rep = eisenbaum_test(torus, 0.5, s, scale.eisenbaum_n, seed + i)
        reports.append(rep)
        worst_z = max(worst_z, rep.max_abs_z())
        const = next(r for r in rep.rows if r.name == "const_one")
        dev = abs(const.right_mean - 1.0)
        const_ok &= dev <= 3.0 * const.right_se and const.left_mean == 1.0
    return CriterionResult(
        7, "isomorphism identity two-sample tests",
        worst_z <= 4.0 and const_ok,
        f"max |z| over battery and s in {{1, 0.25}}: {worst_z:.2f} (<= 4); "
        f"unit functional within 3 sigma: {const_ok}",
        {"max_z": worst_z,
         "rows": [{ "s": rep.s, "functionals": [r.name for r in rep.rows],
                    "z": [r.z for r in rep.rows]} for rep in reports]},
    )


def criterion_8_rho1(scale: Scale, seed: int = 808) -> CriterionResult:
    law = critical_law()
    ok = True
    details = []
    worst_rel = 0.0
    for (R, lam) in ((16, 0.1), (16, 0.5), (8, 0.5)):
        kernel = green_torus(_torus(law, R), lam)
        fp = solve_rho1(kernel, 2.0, n_random_starts=scale.rho1_starts, seed=seed, method="fixed_point")
        pg = solve_rho1(kernel, 2.0, n_random_starts=scale.rho1_starts, seed=seed + 1, method="gradient")
        lo, hi = rho1_sandwich(kernel, 2.0)
        rel = abs(fp.value - pg.value) / fp.value
        worst_rel = max(worst_rel, rel)
        inside = lo - 1e-9 <= fp.value <= hi + 1e-9
        ok &= inside and rel <= 1e-6
        details.append(f"(R={R},lam={lam}): rho1={fp.value:.6f} in [{lo:.4f},{hi:.4f}], cross-solver {rel:.1e}")
    return CriterionResult(
        8, "rho1 sandwich and solver cross-validation",
        ok, "; ".join(details), {"worst_rel": worst_rel},
    )


def criterion_9_duality(scale: Scale, seed: int = 909) -> CriterionResult:
    crit = check_duality(critical_law(), 2.0, [8, 16, 32, 48], seed=seed)
    sup = check_duality(supercritical_law_2d(), 3.0, [6, 10, 14], seed=seed)
    passed = crit.passed and sup.passed
    return CriterionResult(
        9, "duality kappa*rho -> 1 on nested boxes",
        passed,
        f"critical products {['%.4f' % p for p in crit.products]} (tol used {crit.tolerance_used:.3f}"
        f"{', widened' if crit.widened else ''}); supercritical {['%.4f' % p for p in sup.products]}"
        f"{', widened' if sup.widened else ''}; constructive replays: "
        f"{crit.constructive.passed and sup.constructive.passed}",
        {"critical_products": crit.products, "supercritical_products": sup.products,
         "widened": crit.widened or sup.widened},
    )


def criterion_10_kappa_rho_bounds(scale: Scale, seed: int = 1010) -> CriterionResult:
    law = critical_law()
    g0 = float(free_green_values(law, np.array([0]))[0])
    kappa_ok, rho_ok = True, True
    for L in (8, 16, 32):
        kappa_ok &= solve_kappa(law, 2.0, L, seed=seed).value <= 1.0 + 1e-12
        rho_ok &= solve_rho(law, 2.0, L, seed=seed).value >= g0 - 1e-9
    # supercritical instance on the line: q = 3 with alpha = 0.5 < d = 1
    q3 = 3.0
    norm_G_q = _free_green_q_norm(law, q3, x_max=400)
    sup_ok = True
    sup_vals = []
    for L in (8, 16, 32):
        v = solve_rho(law, q3, L, seed=seed).value
        sup_vals.append(v)
        sup_ok &= v <= norm_G_q + 1e-3
    passed = kappa_ok and rho_ok and sup_ok
    return CriterionResult(
        10, "kappa <= 1, rho >= G(0,0), supercritical rho <= ||G||_q",
        passed,
        f"kappa<=1: {kappa_ok}; rho>=G(0,0)={g0:.4f}: {rho_ok}; "
        f"rho(3;L)={['%.4f' % v for v in sup_vals]} <= ||G||_3={norm_G_q:.4f}+1e-3: {sup_ok}",
        {"g0": g0, "norm_G_q": norm_G_q, "sup_vals": sup_vals},
    )


def _free_green_q_norm(law, q: float, x_max: int) -> float:
    xs = np.arange(0, x_max + 1)
    G = free_green_values(law, xs)
    body = G[0] ** q + 2.0 * np.sum(G[1:] ** q)
    # tail sum_{|x|>x_max} (C |x|^(alpha-d))^q from the fitted decay constant
    C_fit = float(G[-1] * x_max ** (law.d - law.alpha))
    from scipy.special import zeta

    tail = 2.0 * C_fit ** q * float(zeta(q * (law.d - law.alpha), x_max + 1))
    return float((body + tail) ** (1.0 / q))


def criterion_11_m_scaling(scale: Scale, seed: int = 1111) -> CriterionResult:
    rep = check_m_scaling(critical_law(), 2.0, 16, y_grid=(0.25, 0.5, 1.0), seed=seed)
    worst = max(rep.rel_errors)
    return CriterionResult(
        11, "mass-scaling identity for the lower-bound constant",
        rep.passed,
        f"rel errors {['%.2e' % e for e in rep.rel_errors]} (<= 5%); "
        f"kappa_1 nondecreasing: {rep.kappa1_monotone}",
        {"rel_errors": rep.rel_errors, "worst": worst},
    )


def criterion_12_estimators(scale: Scale, seed: int = 1212) -> CriterionResult:
    torus = _torus(critical_law(), 32)
    sched = DeviationSchedule(T=200.0, b_T=math.sqrt(2150.0), q=2.0)
    nv = estimate_naive(torus, sched, scale.naive_n, seed)
    tl = estimate_tilted(torus, sched, 8.0, scale.tilted_n, seed + 1)
    z = abs(nv.p_hat - tl.p_hat) / math.hypot(nv.se, tl.se)
    return CriterionResult(
        12, "naive and tilted estimators agree on an overlap threshold",
        z <= 3.0,
        f"naive p = {nv.p_hat:.3e} +- {nv.se:.1e}, tilted p = {tl.p_hat:.3e} +- {tl.se:.1e}, "
        f"combined z = {z:.2f} (<= 3)",
        {"naive": nv.p_hat, "tilted": tl.p_hat, "z": z},
    )


REFERENCE_SCHEDULES = [
    DeviationSchedule(T=100.0, b_T=21.0, q=2.0),
    DeviationSchedule(T=100.0, b_T=23.0, q=2.0),
    DeviationSchedule(T=100.0, b_T=25.0, q=2.0),
    DeviationSchedule(T=200.0, b_T=42.0, q=2.0),
    DeviationSchedule(T=200.0, b_T=46.0, q=2.0),
    DeviationSchedule(T=200.0, b_T=50.0, q=2.0),
    DeviationSchedule(T=400.0, b_T=78.0, q=2.0),
    DeviationSchedule(T=400.0, b_T=81.0, q=2.0),
    DeviationSchedule(T=400.0, b_T=84.0, q=2.0),
]


def reference_rate_curve(scale: Scale, seed: int = 1313, kappa=None, rho=None):
    law = critical_law()
    if kappa is None:
        kappa = solve_kappa(law, 2.0, 48).value
    if rho is None:
        rho = solve_rho(law, 2.0, 48).value
    torus = _torus(law, 32)
    return rate_curve(torus, REFERENCE_SCHEDULES, scale.curve_n, seed, kappa=kappa, rho=rho)


def criterion_13_rate_curve(scale: Scale, seed: int = 1313) -> CriterionResult:
    rep = reference_rate_curve(scale, seed)
    return CriterionResult(
        13, "rate-curve sanity against the analytic lines",
        rep.passed,
        f"log rates negative: {rep.all_negative}; monotone in threshold: "
        f"{rep.monotone_in_threshold}; inside [-kappa*1.5, 0) with kappa={rep.kappa:.4f}: "
        f"{rep.within_band}; overlay -1/rho = {-1.0 / rep.rho:.4f}",
        {"rows": rep.rows, "kappa": rep.kappa, "rho": rep.rho},
    )


def criterion_14_regimes(scale: Scale) -> CriterionResult:
    a = classify_regime(ModelParams(1, 0.5, 2.0))
    b = classify_regime(ModelParams(2, 0.5, 2.0))
    c = classify_regime(ModelParams(3, 2.0, 2.0), T=1e4, b_T=1e2)
    r_star_expect = (1e4 / 1e2) ** (2.0 / (3.0 * 1.0))
    ok = (
        a.regime == "critical" and abs(a.exponent) <= 1e-12
        and b.regime == "supercritical" and b.R_star == 1.0 and b.exponent > 0
        and c.regime == "subcritical" and c.exponent < 0
        and abs(c.R_star - r_star_expect) <= 1e-9
    )
    return CriterionResult(
        14, "regime classifier on the three reference triples",
        ok,
        f"(1,.5,2)->{a.regime} e={a.exponent:.3f}; (2,.5,2)->{b.regime} R*={b.R_star}; "
        f"(3,2,2)->{c.regime} R*={c.R_star:.4f} (expect {r_star_expect:.4f})",
        {},
    )


ALL_CRITERIA = [
    criterion_1_clock,
    criterion_2_spectral_vs_dense,
    criterion_3_row_sums,
    criterion_4_wrap_constant,
    criterion_5_green_convergence,
    criterion_6_heat_bound,
    criterion_7_eisenbaum,
    criterion_8_rho1,
    criterion_9_duality,
    criterion_10_kappa_rho_bounds,
    criterion_11_m_scaling,
    criterion_12_estimators,
    criterion_13_rate_curve,
    criterion_14_regimes,
]


def run_criteria(scale: Scale | None = None, echo=print):
    """Criteria 1-14 (15, byte-level determinism, is exercised by running the
    command-line pipeline twice; see the cli module)."""
    scale = scale or Scale()
    results = []
    for fn in ALL_CRITERIA:
        res = fn(scale)
        results.append(res)
        if echo:
            echo(res.line())
    return results
