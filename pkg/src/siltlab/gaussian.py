"""Centered Gaussian fields with torus Green covariance, and the statistical
verification of the isomorphism identity tying local times to squared fields.

The identity under test: with tau ~ Exp(lam) and Z an independent centered
Gaussian field with covariance G_{R,lam}, for bounded measurable F,

    E[F(l_tau + (Z+s)^2/2)] = E[F((Z+s)^2/2) (1 + Z_0/s)],   s != 0.

Both sides are estimated by Monte Carlo on disjoint seed ranges and compared
through a two-sample z statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .green import TorusGreen, green_torus
from .model import TorusLaw
from .walk import ExponentialHorizon, batch_local_time_matrix

_CHUNK = 100_000


class GaussianFieldSampler:
    """Spectral sampler: white noise shaped by (lam + psi_R(k))^(-1/2) per mode.

    The resulting field has covariance exactly G_{R,lam} (circulant filtering
    of white noise), so no factorization error enters.
    """

    def __init__(self, kernel: TorusGreen):
        self.kernel = kernel
        self.shape = kernel.values.shape
        self._filter = np.sqrt(kernel.mode_weights)

    def sample(self, rng, n: int) -> np.ndarray:
        """(n, R^d) matrix of field samples (rows are independent fields)."""
        noise = rng.standard_normal((n,) + self.shape)
        axes = tuple(range(1, 1 + len(self.shape)))
        spec = np.fft.fftn(noise, axes=axes) * self._filter
        fields = np.fft.ifftn(spec, axes=axes).real
        return fields.reshape(n, -1)


def sample_field(kernel: TorusGreen, seed, n: int = 1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return GaussianFieldSampler(kernel).sample(rng, n)


def covariance_check(kernel: TorusGreen, n: int, seed) -> float:
    """Max |empirical - exact| covariance entry in Monte Carlo standard errors."""
    Z = sample_field(kernel, seed, n)
    emp = (Z.T @ Z) / n
    true = kernel.matrix()
    var = (np.outer(np.diag(true), np.diag(true)) + true ** 2) / n
    return float((np.abs(emp - true) / np.sqrt(var)).max())


@dataclass(frozen=True)
class BoundedFunctional:
    """Named bounded functional of a nonnegative field vector."""

    name: str
    fn: object          # callable (n, m) -> (n,)
    bound: float

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.fn(v)


def default_battery(q: float, g_zero: float, s: float):
    """Fixed test battery: exp-norm functionals, a sup indicator, a clipped
    coordinate (with closed-form expectation), and smooth coordinate functions."""
    clip_M = 60.0 * (g_zero + s * s + 1.0)
    sup_m = 4.0 * (g_zero + s * s)

    return (
        BoundedFunctional("const_one", lambda v: np.ones(len(v)), 1.0),
        BoundedFunctional("coord0_clipped", lambda v: np.minimum(v[:, 0], clip_M), clip_M),
        BoundedFunctional("exp_neg_l1_over10", lambda v: np.exp(-np.abs(v).sum(axis=1) / 10.0), 1.0),
        BoundedFunctional(
            "exp_neg_l2q_sq",
            lambda v: np.exp(-0.1 * (v ** (2 * q)).sum(axis=1) ** (1.0 / q)),
            1.0,
        ),
        BoundedFunctional("sup_below", lambda v: (v.max(axis=1) <= sup_m).astype(float), 1.0),
        BoundedFunctional(
            "smooth_two_coords",
            lambda v: np.exp(-(v[:, 0] + v[:, v.shape[1] // 2]) / 5.0),
            1.0,
        ),
    )


@dataclass
class FunctionalComparison:
    name: str
    left_mean: float
    left_se: float
    right_mean: float
    right_se: float

    @property
    def z(self) -> float:
        denom = math.hypot(self.left_se, self.right_se)
        if denom == 0.0:
            return 0.0
        return (self.left_mean - self.right_mean) / denom


@dataclass
class EisenbaumReport:
    R: int
    lam: float
    s: float
    n: int
    rows: list
    weight_mean: float
    weight_se: float
    coord_closed_form: float   # analytic value of the clipped-coordinate functional

    def max_abs_z(self) -> float:
        return max(abs(r.z) for r in self.rows)

    def passed(self, z_max: float = 4.0) -> bool:
        return self.max_abs_z() <= z_max


def eisenbaum_test(torus: TorusLaw, lam: float, s: float, n: int, seed,
                   functionals=None, q_for_battery: float = 2.0,
                   workers: int = 1) -> EisenbaumReport:
    """Two-sample Monte Carlo comparison of the isomorphism identity.

    Left sample: walk stopped at an independent Exp(lam) time plus an
    independent Gaussian field.  Right sample: field only, reweighted by
    (1 + Z_0/s).  Disjoint substreams keep the two samples independent, and
    every chunk owns its own substream so results do not depend on workers.
    """
    from .io_utils import parallel_map_ordered

    if s == 0.0:
        raise ValueError("the shift s must be nonzero")
    kernel = green_torus(torus, lam)
    g_zero = kernel.zero()
    if functionals is None:
        functionals = default_battery(q_for_battery, g_zero, s)
    for F in functionals:
        if not np.isfinite(F.bound):
            raise ValueError(f"functional {F.name!r} does not declare a finite bound")

    master = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    ss_walk, ss_field_left, ss_field_right = master.spawn(3)
    sampler = GaussianFieldSampler(kernel)

    chunks = [(lo, min(_CHUNK, n - lo)) for lo in range(0, n, _CHUNK)]
    walk_children = ss_walk.spawn(len(chunks))
    left_children = ss_field_left.spawn(len(chunks))
    right_children = ss_field_right.spawn(len(chunks))

    def one_chunk(ci):
        _, m = chunks[ci]
        occ, _, _ = batch_local_time_matrix(torus, ExponentialHorizon(lam), m, walk_children[ci])
        Z = sampler.sample(np.random.default_rng(left_children[ci]), m)
        S = occ + 0.5 * (Z + s) ** 2
        lvals = [F(S) for F in functionals]
        l1 = np.array([v.sum() for v in lvals])
        l2 = np.array([(v ** 2).sum() for v in lvals])

        Zr = sampler.sample(np.random.default_rng(right_children[ci]), m)
        weight = 1.0 + Zr[:, 0] / s
        Sr = 0.5 * (Zr + s) ** 2
        rvals = [F(Sr) * weight for F in functionals]
        r1 = np.array([v.sum() for v in rvals])
        r2 = np.array([(v ** 2).sum() for v in rvals])
        return l1, l2, r1, r2, weight.sum(), (weight ** 2).sum()

    parts = parallel_map_ordered(one_chunk, range(len(chunks)), workers)
    sums_l = sum(p[0] for p in parts)
    sums_l2 = sum(p[1] for p in parts)
    sums_r = sum(p[2] for p in parts)
    sums_r2 = sum(p[3] for p in parts)
    w_sum = sum(p[4] for p in parts)
    w_sum2 = sum(p[5] for p in parts)

    rows = []
    for j, F in enumerate(functionals):
        lm = sums_l[j] / n
        lv = max(sums_l2[j] / n - lm * lm, 0.0)
        rm = sums_r[j] / n
        rv = max(sums_r2[j] / n - rm * rm, 0.0)
        rows.append(FunctionalComparison(
            name=F.name,
            left_mean=lm, left_se=math.sqrt(lv / n),
            right_mean=rm, right_se=math.sqrt(rv / n),
        ))
    closed = 0.5 * (3.0 * g_zero + s * s)
    return EisenbaumReport(
        R=torus.R, lam=lam, s=s, n=n, rows=rows,
        weight_mean=w_sum / n,
        weight_se=math.sqrt(max(w_sum2 / n - (w_sum / n) ** 2, 0.0) / n),
        coord_closed_form=closed,
    )


# ---------------------------------------------------------------------------
# Norm tails and exponential moments of the field
# ---------------------------------------------------------------------------

@dataclass
class NormTailReport:
    q: float
    b_grid: np.ndarray
    p_emp: np.ndarray
    p_se: np.ndarray
    lower_bound: np.ndarray | None   # analytic bound when rho1 is supplied
    gamma: float
    exp_moment_partial: list         # running means at n/4, n/2, n
    ok_lower_bound: bool

    @property
    def exp_moment_stable(self) -> bool:
        vals = self.exp_moment_partial
        return max(vals) / min(vals) < 1.5


def norm_concentration_probe(kernel: TorusGreen, q: float, b_grid, n: int, seed,
                             rho1: float | None = None, eps: float = 0.1) -> NormTailReport:
    """Empirical tails of ||Z||_{2q,R} against the Gaussian lower bound, and
    stability of the exponential moment E exp(gamma ||Z||^2 / 2) for
    gamma (1+eps) < 1/rho1."""
    b_grid = np.asarray(b_grid, dtype=float)
    Z = sample_field(kernel, seed, n)
    norms = (np.abs(Z) ** (2 * q)).sum(axis=1) ** (1.0 / (2 * q))
    p_emp = np.array([(norms >= math.sqrt(b)).mean() if b > 0 else 1.0 for b in b_grid])
    p_se = np.sqrt(p_emp * (1 - p_emp) / n)
    lb = None
    ok = True
    gamma = 0.0
    if rho1 is not None:
        lb = np.array([
            math.sqrt(rho1 / (2 * math.pi * b)) * (1 - rho1 / b) * math.exp(-b / (2 * rho1))
            if b > 0 else 1.0
            for b in b_grid
        ])
        ok = bool(np.all(p_emp + 3 * p_se >= lb))
        gamma = 0.9 / (rho1 * (1.0 + eps))
    ex = np.exp(0.5 * gamma * norms ** 2)
    partial = [float(ex[: max(1, n // k)].mean()) for k in (4, 2, 1)]
    return NormTailReport(
        q=q, b_grid=b_grid, p_emp=p_emp, p_se=p_se, lower_bound=lb,
        gamma=gamma, exp_moment_partial=partial, ok_lower_bound=ok,
    )
