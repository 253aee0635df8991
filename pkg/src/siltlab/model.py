"""Heavy-tailed jump laws on Z^d, their torus projections and spectral symbols.

The jump law is the exact power law mu(z) = c * |z|^(-(d+alpha)) for z != 0
(Euclidean norm, mu(0) = 0, symmetric), normalized so that the stored ball of
radius K plus an analytic tail estimate carries total mass one.  Everything
downstream (walk simulation, Green kernels, Gaussian fields, variational
constants) consumes these objects.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import j0, zeta

from .lattice import LatticeFunction

CRITICALITY_TOL = 1e-12
NORMALIZATION_TOL = 1e-10
FOLD_REMAINDER_WARN = 1e-8

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"


def sphere_surface_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / gamma_fn(d / 2.0)


def _as_fraction(x) -> Fraction:
    # floats convert exactly (binary rationals), ints/Fractions pass through
    return Fraction(x)


@dataclass(frozen=True)
class ModelParams:
    """Dimension d, stability index alpha in (0,2], intersection order q > 1."""

    d: int
    alpha: float
    q: float
    regime: str = field(init=False)

    def __post_init__(self):
        if self.d < 1 or int(self.d) != self.d:
            raise ValueError(f"d must be an integer >= 1, got {self.d}")
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.q > 1.0:
            raise ValueError(f"q must be > 1, got {self.q}")
        object.__setattr__(self, "regime", self._classify())

    def criticality_gap(self) -> float:
        """q(d - alpha) - d; sign selects the regime."""
        return self.q * (self.d - self.alpha) - self.d

    def _classify(self) -> str:
        gap = _as_fraction(self.q) * (_as_fraction(self.d) - _as_fraction(self.alpha)) - _as_fraction(self.d)
        if gap == 0 or abs(float(gap)) <= CRITICALITY_TOL:
            return CRITICAL
        return SUPERCRITICAL if gap > 0 else SUBCRITICAL

    def as_dict(self) -> dict:
        return {"d": self.d, "alpha": self.alpha, "q": self.q, "regime": self.regime}


def _ball_sites(d: int, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Sites 0 < |z| <= K (Euclidean) and their norms."""
    axes = [np.arange(-K, K + 1, dtype=np.int64)] * d
    grid = np.meshgrid(*axes, indexing="ij")
    sites = np.stack([g.reshape(-1) for g in grid], axis=1)
    norms = np.sqrt((sites.astype(float) ** 2).sum(axis=1))
    keep = (norms > 0.0) & (norms <= K + 1e-9)
    return sites[keep], norms[keep]


def tail_weight_estimate(d: int, alpha: float, K: int) -> float:
    """Estimate of sum_{|z|>K} |z|^(-(d+alpha)) (unit normalizer).

    d=1 uses the exact Hurwitz-zeta tail; d>=2 uses the radial integral
    S_{d-1} K^{-alpha}/alpha, whose lattice-vs-continuum error is tested by
    telescoping against brute-force shell sums.
    """
    if d == 1:
        return 2.0 * float(zeta(1.0 + alpha, K + 1))
    return sphere_surface_area(d) * K ** (-alpha) / alpha


@dataclass(frozen=True, eq=False)
class JumpLaw:
    """Truncated enumeration of the power-law jump distribution."""

    params: ModelParams
    cutoff: int
    sites: np.ndarray      # (n, d) int64, 0 < |z| <= cutoff
    weights: np.ndarray    # (n,) mu(z)
    normalizer: float      # c
    tail_mass: float       # analytic estimate of mass beyond the cutoff
    ball_mass: float       # weights.sum()

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def alpha(self) -> float:
        return self.params.alpha

    def weight_at(self, z) -> float:
        """mu(z) for a single site (0 if outside the stored ball)."""
        grid = self.offset_grid()
        idx = tuple(int(c) + self.cutoff for c in np.atleast_1d(z))
        if any(i < 0 or i > 2 * self.cutoff for i in idx):
            return 0.0
        return float(grid[idx])

    def offset_grid(self) -> np.ndarray:
        """Dense (2K+1,)*d array of weights indexed by z + K (lazy, cached)."""
        cached = getattr(self, "_offset_grid", None)
        if cached is None:
            K = self.cutoff
            grid = np.zeros((2 * K + 1,) * self.d)
            grid[tuple((self.sites + K).T)] = self.weights
            object.__setattr__(self, "_offset_grid", grid)
            cached = grid
        return cached

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "alpha": self.alpha,
            "q": self.params.q,
            "K": self.cutoff,
            "c": self.normalizer,
            "tail_mass": self.tail_mass,
            "ball_mass": self.ball_mass,
            "regime": self.params.regime,
        }


def build_jump_law(params: ModelParams, K: int) -> JumpLaw:
    """Exact power-law weights on the ball of radius K, normalized with the tail.

    The normalizer c solves c * (ball sum + tail estimate) = 1, so the stored
    mass plus the reported tail_mass is one by construction.
    """
    if K < 2:
        raise ValueError(f"cutoff K must be >= 2, got {K}")
    d, alpha = params.d, params.alpha
    sites, norms = _ball_sites(d, K)
    raw = norms ** (-(d + alpha))
    ball_raw = float(raw.sum())
    tail_raw = tail_weight_estimate(d, alpha, K)
    c = 1.0 / (ball_raw + tail_raw)
    return JumpLaw(
        params=params,
        cutoff=K,
        sites=sites,
        weights=c * raw,
        normalizer=c,
        tail_mass=c * tail_raw,
        ball_mass=c * ball_raw,
    )


# ---------------------------------------------------------------------------
# Torus projection
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TorusLaw:
    """Jump law folded onto the torus T_R, an exact probability distribution."""

    law: JumpLaw
    R: int
    weights: np.ndarray            # shape (R,)*d, sums to 1
    symbol: np.ndarray             # psi_R(k), same shape, psi_R(0) = 0
    folded_remainder: float        # mass redistributed uniformly (0 for exact fold)
    method: str = "fold"

    @property
    def d(self) -> int:
        return self.law.d

    @property
    def n_sites(self) -> int:
        return self.R ** self.d

    @property
    def params(self) -> ModelParams:
        return self.law.params

    def as_dict(self) -> dict:
        out = self.law.as_dict()
        out.update({"R": self.R, "folded_remainder": self.folded_remainder, "fold_method": self.method})
        return out


def _symbol_from_weights(weights: np.ndarray) -> np.ndarray:
    psi = 1.0 - np.fft.fftn(weights).real
    min_psi = psi.min()
    if min_psi < -1e-10:
        raise FloatingPointError(f"torus symbol has negative value {min_psi}")
    np.clip(psi, 0.0, None, out=psi)
    psi[(0,) * psi.ndim] = 0.0
    return psi


def project_to_torus(law: JumpLaw, R: int, method: str = "fold") -> TorusLaw:
    """Fold the jump law onto T_R.

    method="fold": fold the stored ball and spread the remaining tail mass
    uniformly over the torus, so the projected law sums to one exactly.
    method="exact": d=1 only, full infinite folding through Hurwitz zeta sums
    (no redistribution; useful as an oracle for the truncated fold).
    """
    if R < 2:
        raise ValueError(f"torus side R must be >= 2, got {R}")
    d = law.d
    if method == "exact":
        if d != 1:
            raise ValueError("exact folding is only available in dimension 1")
        weights = _exact_fold_1d(law, R)
        remainder = 0.0
    elif method == "fold":
        weights = np.zeros((R,) * d)
        np.add.at(weights, tuple((law.sites % R).T), law.weights)
        remainder = 1.0 - float(weights.sum())
        if remainder > FOLD_REMAINDER_WARN:
            warnings.warn(
                f"torus fold redistributes remainder {remainder:.3e} > {FOLD_REMAINDER_WARN:.0e} "
                f"uniformly (K={law.cutoff}, R={R})",
                stacklevel=2,
            )
        weights += remainder / R ** d
    else:
        raise ValueError(f"unknown folding method {method!r}")
    weights /= weights.sum()
    return TorusLaw(
        law=law,
        R=R,
        weights=weights,
        symbol=_symbol_from_weights(weights),
        folded_remainder=max(remainder, 0.0),
        method=method,
    )


def _exact_fold_1d(law: JumpLaw, R: int) -> np.ndarray:
    s = 1.0 + law.alpha
    c = law.normalizer
    x = np.arange(1, R, dtype=float)
    w = np.empty(R)
    w[0] = 2.0 * c * R ** (-s) * float(zeta(s, 1.0))
    w[1:] = c * R ** (-s) * (zeta(s, x / R) + zeta(s, 1.0 - x / R))
    return w


# ---------------------------------------------------------------------------
# Free-space spectral symbol psi(theta) = sum_z mu(z) (1 - cos(2 pi theta.z))
# ---------------------------------------------------------------------------

_D2_TAIL_TABLES: dict = {}


def _symbol_series_coeffs_1d(alpha: float, n_terms: int = 40):
    """Coefficients of psi(theta)/(2c) = A w^alpha - sum_m B_m w^(2m), w = 2 pi theta.

    Derived from the small-argument expansion of the polylogarithm
    Li_{1+alpha}(e^{iw}); valid for |w| <= pi and non-integer alpha.
    """
    A = -gamma_fn(-alpha) * math.cos(math.pi * alpha / 2.0)
    m = np.arange(1, n_terms + 1, dtype=float)
    # (-1)^m zeta(1+alpha-2m) via the functional equation
    zeta_part = 2.0 * math.cos(math.pi * alpha / 2.0) * (2.0 * math.pi) ** (alpha - 2.0 * m)
    zeta_part *= gamma_fn(2.0 * m - alpha) * zeta(2.0 * m - alpha)
    B = zeta_part / gamma_fn(2.0 * m + 1.0)
    return A, B


def _free_symbol_1d(law: JumpLaw, thetas: np.ndarray) -> np.ndarray:
    alpha, c = law.alpha, law.normalizer
    th = np.abs(thetas - np.round(thetas))
    w = 2.0 * math.pi * th
    if float(alpha).is_integer():
        # polylog expansion has log terms at integer alpha; fall back to mpmath
        import mpmath

        s = 1.0 + alpha
        z_s = float(mpmath.fp.zeta(s))
        vals = np.array([mpmath.fp.polylog(s, complex(math.cos(v), math.sin(v))).real for v in w.ravel()])
        return (2.0 * c * (z_s - vals)).reshape(w.shape)
    A, B = _symbol_series_coeffs_1d(alpha)
    m = np.arange(1, B.size + 1, dtype=float)
    poly = (B * np.power.outer(w, 2.0 * m)).sum(axis=-1)
    return 2.0 * c * (A * w ** alpha - poly)


def _d2_tail_profile(alpha: float):
    """Spline of E2(w) = int_w^inf v^(-1-alpha) (1 - J0(v)) dv on a log grid."""
    key = round(alpha, 12)
    if key in _D2_TAIL_TABLES:
        return _D2_TAIL_TABLES[key]
    from scipy.interpolate import CubicSpline

    v_hi = 4000.0
    v0 = 0.05
    v = np.linspace(v0, v_hi, 800_000)
    g = v ** (-1.0 - alpha) * (1.0 - j0(v))
    # analytic piece on [0, v0] from 1 - J0(v) = v^2/4 - v^4/64 + O(v^6)
    head = v0 ** (2.0 - alpha) / (4.0 * (2.0 - alpha)) - v0 ** (4.0 - alpha) / (64.0 * (4.0 - alpha))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(v))])
    total = head + cum[-1] + v_hi ** (-alpha) / alpha  # 1 - J0 ~ 1 beyond v_hi
    w_grid = np.geomspace(1e-8, v_hi * 0.99, 1500)
    cum_at_w = np.interp(w_grid, v, cum)
    head_at_w = np.where(
        w_grid < v0,
        w_grid ** (2.0 - alpha) / (4.0 * (2.0 - alpha)) - w_grid ** (4.0 - alpha) / (64.0 * (4.0 - alpha)),
        head,
    )
    tail_vals = total - np.where(w_grid < v0, head_at_w, head + cum_at_w)
    spline = CubicSpline(np.log(w_grid), np.log(tail_vals))
    table = (spline, v_hi * 0.99, alpha)
    _D2_TAIL_TABLES[key] = table
    return table


def _free_symbol_ball(law: JumpLaw, thetas: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """sum_{|z|<=K} mu(z) (1 - cos(2 pi theta.z)).

    d=2 factorizes the phase through complex exponentials per axis so the sum
    becomes a (chunk x 2K+1) @ (2K+1 x 2K+1) product instead of a sweep over
    all ball sites.
    """
    thetas = np.atleast_2d(thetas)
    out = np.empty(len(thetas))
    if law.d == 2:
        grid = law.offset_grid()
        u = np.arange(-law.cutoff, law.cutoff + 1, dtype=float)
        for lo in range(0, len(thetas), chunk):
            block = thetas[lo:lo + chunk]
            e1 = np.exp(2j * math.pi * np.outer(block[:, 0], u))
            e2 = np.exp(2j * math.pi * np.outer(block[:, 1], u))
            mu_hat = np.einsum("mi,mi->m", e1 @ grid, e2).real
            out[lo:lo + chunk] = law.ball_mass - mu_hat
        return out
    zs = law.sites.astype(float)
    for lo in range(0, len(thetas), 256):
        block = thetas[lo:lo + 256]
        phase = 2.0 * math.pi * block @ zs.T
        out[lo:lo + 256] = ((1.0 - np.cos(phase)) * law.weights).sum(axis=1)
    return out


def free_symbol(law: JumpLaw, thetas) -> np.ndarray:
    """psi(theta) for theta in R^d (1-periodic in each coordinate).

    d=1 evaluates the exact closed form (infinite lattice sum); d=2 sums the
    stored ball and adds the radial-integral tail with a Bessel profile, which
    restores the |theta|^alpha singular behavior the truncation would destroy.
    """
    thetas = np.asarray(thetas, dtype=float)
    if law.d == 1:
        return _free_symbol_1d(law, thetas)
    if law.d == 2:
        pts = thetas.reshape(-1, 2)
        pts = pts - np.round(pts)
        ball = _free_symbol_ball(law, pts)
        r = np.sqrt((pts ** 2).sum(axis=1))
        spline, w_cap, alpha = _d2_tail_profile(law.alpha)
        w = 2.0 * math.pi * r * law.cutoff
        tail = np.zeros_like(r)
        pos = w > 0
        wp = np.clip(w[pos], 1e-8, None)
        e2 = np.where(wp >= w_cap, wp ** (-alpha) / alpha, np.exp(spline(np.log(wp))))
        tail[pos] = 2.0 * math.pi * law.normalizer * (2.0 * math.pi * r[pos]) ** alpha * e2
        out = ball + tail
        return out.reshape(thetas.shape[:-1]) if thetas.ndim > 1 else out
    raise NotImplementedError("free symbol implemented for d <= 2")


# ---------------------------------------------------------------------------
# Dirichlet forms and jump matrices
# ---------------------------------------------------------------------------

def box_jump_matrix(law: JumpLaw, f: LatticeFunction) -> np.ndarray:
    """Matrix M[x, y] = mu(y - x) over the support box of f."""
    sites = f.sites()
    K = law.cutoff
    grid = law.offset_grid()
    diff = sites[None, :, :] - sites[:, None, :]
    inside = np.all(np.abs(diff) <= K, axis=-1)
    idx = np.clip(diff + K, 0, 2 * K)
    M = grid[tuple(np.moveaxis(idx, -1, 0))]
    M[~inside] = 0.0
    return M


def torus_jump_matrix(torus: TorusLaw) -> np.ndarray:
    """Dense transition matrix M[x, y] = mu_R((y - x) mod R) over all torus sites."""
    R, d = torus.R, torus.d
    coords = np.indices((R,) * d).reshape(d, -1).T
    diff = (coords[None, :, :] - coords[:, None, :]) % R
    return torus.weights[tuple(np.moveaxis(diff, -1, 0))]


def dirichlet_form(law, f: LatticeFunction) -> float:
    """Energy <f, -A f> = 1/2 sum_{x,y} mu(y-x) (f(y) - f(x))^2.

    Free-space version charges every site its full unit jump rate, so mass
    beyond the stored cutoff (and jumps leaving the support) enters as exit
    terms f(x)^2 automatically.  Torus version uses the folded law and has no
    exit terms.
    """
    if isinstance(law, TorusLaw):
        if f.space != "torus" or f.R != law.R:
            raise ValueError("torus dirichlet form needs a torus function on the same T_R")
        conv = np.fft.ifftn(np.fft.fftn(f.values) * np.fft.fftn(law.weights)).real
        val = float((f.values ** 2).sum() - (f.values * conv).sum())
        return max(val, 0.0)
    if not isinstance(law, JumpLaw):
        raise TypeError("law must be a JumpLaw or TorusLaw")
    if f.space != "lattice":
        raise ValueError("free dirichlet form needs a lattice function")
    from scipy.signal import fftconvolve

    v = f.values
    # (M f)(x) = sum_z mu(z) f(x+z); mu symmetric so convolution == correlation
    conv = fftconvolve(v, law.offset_grid(), mode="same")
    val = float((v * v).sum() - (v * conv).sum())
    return max(val, 0.0)
