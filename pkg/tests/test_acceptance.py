"""The acceptance gate: every criterion at its stated scale and tolerance.

Each test prints the one-line pass/fail verdict for its criterion.  Criterion
15 (byte-level determinism) runs the full artifact-emitting pipeline twice
with one seed and compares the files, exactly as `siltlab verify-all` does.
"""

import pytest

from siltlab.acceptance import (
    ALL_CRITERIA,
    Scale,
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
)

FULL = Scale()


def _run(fn):
    res = fn(FULL)
    print(res.line())
    return res


def test_criterion_01_clock_conservation():
    res = _run(criterion_1_clock)
    assert res.passed, res.detail
    assert res.metrics["max_error"] <= 1e-9


def test_criterion_02_spectral_vs_dense():
    res = _run(criterion_2_spectral_vs_dense)
    assert res.passed, res.detail
    assert res.metrics["worst"] <= 1e-10


def test_criterion_03_row_sums_and_diagonal():
    res = _run(criterion_3_row_sums)
    assert res.passed, res.detail


def test_criterion_04_wrap_constant_bounded():
    res = _run(criterion_4_wrap_constant)
    assert res.passed, res.detail
    assert res.metrics["spread"] < 2.0


def test_criterion_05_green_convergence():
    res = _run(criterion_5_green_convergence)
    assert res.passed, res.detail
    assert res.metrics["two_method"] <= 1e-4


def test_criterion_06_heat_kernel_bound():
    res = _run(criterion_6_heat_bound)
    assert res.passed, res.detail


def test_criterion_07_eisenbaum_identity():
    res = _run(criterion_7_eisenbaum)
    assert res.passed, res.detail
    assert res.metrics["max_z"] <= 4.0


def test_criterion_08_rho1_sandwich_and_solvers():
    res = _run(criterion_8_rho1)
    assert res.passed, res.detail
    assert res.metrics["worst_rel"] <= 1e-6


def test_criterion_09_duality():
    res = _run(criterion_9_duality)
    assert res.passed, res.detail


def test_criterion_10_variational_bounds():
    res = _run(criterion_10_kappa_rho_bounds)
    assert res.passed, res.detail


def test_criterion_11_m_scaling():
    res = _run(criterion_11_m_scaling)
    assert res.passed, res.detail
    assert res.metrics["worst"] <= 0.05


def test_criterion_12_estimator_consistency():
    res = _run(criterion_12_estimators)
    assert res.passed, res.detail
    assert res.metrics["z"] <= 3.0


def test_criterion_13_rate_curve():
    res = _run(criterion_13_rate_curve)
    assert res.passed, res.detail


def test_criterion_14_regime_classifier():
    res = _run(criterion_14_regimes)
    assert res.passed, res.detail


def test_criterion_15_determinism(tmp_path):
    from siltlab.cli import determinism_check

    mismatches, n_files = determinism_check(str(tmp_path), 20_260_810)
    print(f"[{'PASS' if not mismatches else 'FAIL'}] criterion 15: byte-identical "
          f"artifacts on rerun -- {n_files} files compared, mismatches: "
          f"{mismatches or 'none'}")
    assert mismatches == []
    assert n_files >= 10


def test_every_criterion_is_wired():
    # the CLI gate and this module must cover the same list
    assert len(ALL_CRITERIA) == 14
