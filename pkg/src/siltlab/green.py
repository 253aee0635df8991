"""Green functions and heat kernels: spectral torus kernels, free-space quadrature,
and numerical checks of the torus-vs-free comparison bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import JumpLaw, TorusLaw, free_symbol, project_to_torus, torus_jump_matrix


@dataclass(frozen=True, eq=False)
class TorusGreen:
    """Killed torus Green kernel G_{R,lam}(x, y), stored as the row G(0, .)."""

    torus: TorusLaw
    lam: float
    values: np.ndarray        # shape (R,)*d
    mode_weights: np.ndarray  # 1 / (lam + psi_R(k))

    @property
    def R(self) -> int:
        return self.torus.R

    @property
    def d(self) -> int:
        return self.torus.d

    def zero(self) -> float:
        """G_{R,lam}(0, 0)."""
        return float(self.values[(0,) * self.d])

    def at(self, displacement) -> float:
        idx = tuple(int(c) % self.R for c in np.atleast_1d(displacement))
        return float(self.values[idx])

    def row_sum(self) -> float:
        return float(self.values.sum())

    def matrix(self) -> np.ndarray:
        """Dense (n, n) kernel over all torus sites."""
        R, d = self.R, self.d
        coords = np.indices((R,) * d).reshape(d, -1).T
        diff = (coords[None, :, :] - coords[:, None, :]) % R
        return self.values[tuple(np.moveaxis(diff, -1, 0))]

    def min_eigenvalue(self) -> float:
        return float(self.mode_weights.min())


def green_torus(torus: TorusLaw, lam: float) -> TorusGreen:
    """Spectral torus Green kernel: G(0,x) = R^-d sum_k cos(2 pi k.x / R)/(lam + psi_R(k))."""
    if lam <= 0:
        raise ValueError(f"killing rate lambda must be > 0, got {lam}")
    mode_weights = 1.0 / (lam + torus.symbol)
    values = np.fft.ifftn(mode_weights).real
    return TorusGreen(torus=torus, lam=lam, values=values, mode_weights=mode_weights)


def dense_green_matrix(torus: TorusLaw, lam: float) -> np.ndarray:
    """Independent dense-solve route: ((1+lam) I - M) G = I over all torus sites."""
    M = torus_jump_matrix(torus)
    n = M.shape[0]
    A = (1.0 + lam) * np.eye(n) - M
    return np.linalg.solve(A, np.eye(n))


@dataclass
class HeatKernelRow:
    """One row p_t^R(0, .) of the torus heat kernel."""

    t: float
    values: np.ndarray
    clipped: int          # entries below zero (ringing) clipped to 0
    min_raw: float


def heat_kernel_torus(torus: TorusLaw, t: float) -> HeatKernelRow:
    if t < 0:
        raise ValueError("time must be >= 0")
    raw = np.fft.ifftn(np.exp(-t * torus.symbol)).real
    min_raw = float(raw.min())
    if min_raw < -1e-10:
        raise FloatingPointError(f"torus heat kernel ringing {min_raw} below tolerance")
    clipped = int((raw < 0.0).sum())
    return HeatKernelRow(t=t, values=np.clip(raw, 0.0, None), clipped=clipped, min_raw=min_raw)


# ---------------------------------------------------------------------------
# Free-space quadrature
# ---------------------------------------------------------------------------

def _composite_gl(a: float, b: float, n_panels: int, n_nodes: int = 16):
    """Composite Gauss-Legendre nodes/weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    edges = np.linspace(a, b, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).reshape(-1)
    weights = (half[:, None] * w[None, :]).reshape(-1)
    return nodes, weights


def free_heat_kernel(law: JumpLaw, t, xs) -> np.ndarray:
    """p_t(0, x) = int_{[-1/2,1/2]^d} exp(-t psi(theta)) cos(2 pi theta.x) dtheta (d=1)."""
    if law.d != 1:
        raise NotImplementedError("free heat kernel implemented for d=1")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    max_x = max(1.0, float(np.abs(xs).max()))
    nodes, weights = _composite_gl(0.0, 0.5, n_panels=int(16 + 2 * max_x), n_nodes=16)
    psi = free_symbol(law, nodes)
    damp = np.exp(-np.multiply.outer(np.atleast_1d(t), psi))  # (nt, m)
    phase = np.cos(2.0 * math.pi * np.outer(xs, nodes))       # (nx, m)
    out = 2.0 * np.einsum("tm,xm,m->tx", damp, phase, weights)
    if np.isscalar(t) or np.ndim(t) == 0:
        out = out[0]
    return out


def _free_green_quad_1d(law: JumpLaw, xs, refine: int = 1) -> np.ndarray:
    """2 int_0^(1/2) cos(2 pi theta x)/psi(theta) dtheta with theta = u^p, p = 1/(1-alpha).

    The substitution absorbs the |theta|^(-alpha) singularity at the origin.
    """
    alpha = law.alpha
    p = 1.0 / (1.0 - alpha)
    U = 0.5 ** (1.0 / p)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    max_x = max(1.0, float(np.abs(xs).max()))
    n_panels = int((48 + 3 * max_x) * refine)
    u, wu = _composite_gl(0.0, U, n_panels=n_panels, n_nodes=16)
    theta = u ** p
    jac = p * u ** (p - 1.0)
    psi = free_symbol(law, theta)
    base = wu * jac / psi
    out = np.empty(len(xs))
    for lo in range(0, len(xs), 64):
        block = xs[lo:lo + 64]
        out[lo:lo + 64] = 2.0 * (np.cos(2.0 * math.pi * np.outer(block, theta)) @ base)
    return out


_D2_NODE_CACHE: dict = {}


def _annuli_nodes_2d(max_x: float, levels: int = 30, refine: int = 1):
    """Tensor GL nodes over dyadic square annuli of [-1/2, 1/2]^2 around the origin."""
    key = (float(max_x), levels, refine)
    if key in _D2_NODE_CACHE:
        return _D2_NODE_CACHE[key]
    all_nodes, all_weights = [], []
    for j in range(levels):
        a = 0.5 * 2.0 ** (-j)
        h = a / 2.0
        n = int(max(6, min(72, 8 + 2.2 * a * max_x)) * refine)
        rects = [
            (h, a, -a, a),      # right band
            (-a, -h, -a, a),    # left band
            (-h, h, h, a),      # top band
            (-h, h, -a, -h),    # bottom band
        ]
        for (x0, x1, y0, y1) in rects:
            nx0, wx0 = _composite_gl(x0, x1, n_panels=1, n_nodes=n)
            ny0, wy0 = _composite_gl(y0, y1, n_panels=2, n_nodes=n)
            gx, gy = np.meshgrid(nx0, ny0, indexing="ij")
            gw = np.outer(wx0, wy0)
            all_nodes.append(np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1))
            all_weights.append(gw.reshape(-1))
    nodes = np.concatenate(all_nodes)
    weights = np.concatenate(all_weights)
    _D2_NODE_CACHE[key] = (nodes, weights)
    return nodes, weights


def _free_green_quad_2d(law: JumpLaw, xs, refine: int = 1) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    max_x = max(1.0, float(np.abs(xs).max()))
    nodes, weights = _annuli_nodes_2d(2.0 ** math.ceil(math.log2(max_x)), refine=refine)
    cache = getattr(law, "_psi_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(law, "_psi_cache", cache)
    ckey = (len(nodes), float(nodes[0, 0]), float(weights.sum()))
    if ckey not in cache:
        cache[ckey] = free_symbol(law, nodes)
    psi = cache[ckey]
    base = weights / psi
    out = np.empty(len(xs))
    for lo in range(0, len(xs), 32):
        block = xs[lo:lo + 32]
        phase = np.cos(2.0 * math.pi * block @ nodes.T)
        out[lo:lo + 32] = phase @ base
    return out


def free_green_values(law: JumpLaw, xs, refine: int = 1) -> np.ndarray:
    """Free Green function G(0, x) by singularity-adapted Fourier quadrature."""
    if law.alpha >= law.d:
        raise ValueError(
            f"free Green function needs alpha < d (transience); got alpha={law.alpha}, d={law.d}"
        )
    if law.d == 1:
        return _free_green_quad_1d(law, np.asarray(xs, dtype=float).reshape(-1), refine=refine)
    if law.d == 2:
        return _free_green_quad_2d(law, xs, refine=refine)
    raise NotImplementedError("free Green function implemented for d <= 2")


def extrapolated_free_green(law: JumpLaw, xs, R_grid=None, kappa: float = 1.0):
    """Torus-extrapolation route: fit G_{R,lam}(x) = G(x) + a lam ln(1/lam) + b lam
    along a schedule lam = kappa R^(-d/2) (so lam -> 0 and lam R^d -> oo).

    Returns (fitted values, max fit residual).  d=1 uses the exact zeta folding
    so the limit is the Green function of the untruncated law.
    """
    d = law.d
    if R_grid is None:
        R_grid = [2 ** k for k in range(10, 18)] if d == 1 else [32, 64, 128, 256]
    xs_arr = np.atleast_2d(np.asarray(xs, dtype=np.int64).reshape(-1, d))
    rows = []
    lams = []
    for R in R_grid:
        torus = project_to_torus(law, R, method="exact" if d == 1 else "fold")
        lam = kappa * R ** (-d / 2.0)
        g = green_torus(torus, lam)
        rows.append([g.at(x) for x in xs_arr])
        lams.append(lam)
    Y = np.array(rows)                      # (nR, nx)
    lams = np.array(lams)
    X = np.stack([np.ones_like(lams), lams * np.log(1.0 / lams), lams], axis=1)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    fit = X @ coef
    resid = float(np.abs(fit - Y).max())
    return coef[0], resid


@dataclass
class FreeGreenResult:
    xs: np.ndarray
    values: np.ndarray            # quadrature values (the returned estimate)
    extrapolated: np.ndarray
    discrepancy: float            # max |quadrature - extrapolation|
    fit_residual: float


def green_free(law: JumpLaw, xs) -> FreeGreenResult:
    """Free Green function with a two-method cross-check.

    Primary value from Fourier quadrature; error estimate from the discrepancy
    against the torus-extrapolated values.
    """
    xs_arr = np.asarray(xs, dtype=np.int64).reshape(-1, law.d) if law.d > 1 else \
        np.asarray(xs, dtype=np.int64).reshape(-1)
    quad = free_green_values(law, xs_arr)
    extrap, resid = extrapolated_free_green(law, xs_arr)
    return FreeGreenResult(
        xs=xs_arr,
        values=quad,
        extrapolated=np.asarray(extrap),
        discrepancy=float(np.abs(quad - extrap).max()),
        fit_residual=resid,
    )


# ---------------------------------------------------------------------------
# Numerical checks of the kernel bounds
# ---------------------------------------------------------------------------

@dataclass
class HeatBoundReport:
    """Fitted constant for p_t(0,x) <= C (t^(-d/alpha) ^ t |x|^(-(d+alpha)))."""

    t_grid: np.ndarray
    x_max: int
    C_star: float
    C_star_refined: float
    diag_ratio_min: float   # min/max of p_t(0,0) t^(d/alpha) over the diagonal window
    diag_ratio_max: float

    @property
    def refinement_shift(self) -> float:
        return abs(self.C_star_refined - self.C_star) / self.C_star


def check_heat_kernel_bound(law: JumpLaw, t_grid=None, x_max: int = 32,
                            diag_t=(1.0, 64.0)) -> HeatBoundReport:
    """Fit the constant in the standard stable-walk transition bound on a grid."""
    if t_grid is None:
        t_grid = np.array([0.5, 1.0, 2.0, 4.0, 8.0])
    t_grid = np.asarray(t_grid, dtype=float)
    d, alpha = law.d, law.alpha

    def fitted_constant(ts, xs):
        p = free_heat_kernel(law, ts, xs)       # (nt, nx)
        envelope = np.minimum(
            np.power.outer(ts, -d / alpha)[:, None] * np.ones(len(xs)),
            np.outer(ts, np.abs(xs).astype(float) ** (-(d + alpha))),
        )
        return float((p / envelope).max())

    xs = np.arange(1, x_max + 1)
    C = fitted_constant(t_grid, xs)
    ts_fine = np.sort(np.concatenate([t_grid, np.sqrt(t_grid[:-1] * t_grid[1:])]))
    xs_fine = np.arange(1, 2 * x_max + 1)
    C_ref = fitted_constant(ts_fine, xs_fine)

    t_diag = np.geomspace(diag_t[0], diag_t[1], 25)
    p_diag = free_heat_kernel(law, t_diag, np.array([0.0]))[:, 0]
    scaled = p_diag * t_diag ** (d / alpha)
    return HeatBoundReport(
        t_grid=t_grid,
        x_max=x_max,
        C_star=C,
        C_star_refined=C_ref,
        diag_ratio_min=float(scaled.min()),
        diag_ratio_max=float(scaled.max()),
    )


@dataclass
class GreenLemmaReport:
    R_grid: list
    lam_grid: list
    C_values: list            # fitted lam R^d max (G_{R,lam} - G)^+
    zero_gaps: list           # |G_{R,lam}(0,0) - G(0,0)|
    free_zero: float
    free_zero_discrepancy: float
    lower_bound_margin: float  # G_{R,lam}(0,0) - int_0^S exp(-lam t) p_t(0,0) dt at largest R

    @property
    def C_spread(self) -> float:
        pos = [c for c in self.C_values if c > 0]
        if not pos:
            return 1.0
        return max(pos) / min(pos)


def check_green_lemmas(law: JumpLaw, R_grid=(8, 16, 32, 64), lambda_rule=None,
                       sanity_S: float = 10.0) -> GreenLemmaReport:
    """Torus-vs-free Green comparison: boundedness of the fitted wrap constant
    and convergence of G_{R,lam}(0,0) to G(0,0) along lam -> 0, lam R^d -> oo."""
    if law.d != 1:
        raise NotImplementedError("lemma checks implemented for d=1")
    if lambda_rule is None:
        lambda_rule = lambda R: R ** (-law.d / 2.0)
    res = green_free(law, np.arange(0, max(R_grid) // 2 + 1))
    G_free = res.values
    C_values, zero_gaps, lam_grid = [], [], []
    margin = np.nan
    for R in R_grid:
        lam = float(lambda_rule(R))
        lam_grid.append(lam)
        torus = project_to_torus(law, R, method="exact")
        g = green_torus(torus, lam)
        m = np.arange(R)
        rep = np.minimum(m, R - m)
        excess = g.values - G_free[rep]
        C_values.append(lam * R ** law.d * float(np.clip(excess, 0.0, None).max()))
        zero_gaps.append(abs(g.zero() - G_free[0]))
        if R == max(R_grid):
            ts, wts = _composite_gl(0.0, sanity_S, n_panels=64, n_nodes=8)
            p0 = free_heat_kernel(law, ts, np.array([0.0]))[:, 0]
            lower = float(np.sum(wts * np.exp(-lam * ts) * p0))
            margin = g.zero() - lower
    return GreenLemmaReport(
        R_grid=list(R_grid),
        lam_grid=lam_grid,
        C_values=C_values,
        zero_gaps=zero_gaps,
        free_zero=float(G_free[0]),
        free_zero_discrepancy=res.discrepancy,
        lower_bound_margin=margin,
    )
