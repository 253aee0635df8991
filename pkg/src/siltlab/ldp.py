"""Tail-probability estimation for the self-intersection functional.

Two estimators for P[I_T >= b_T^q]:

  naive:  empirical fraction over independent replicas;
  tilted: defensive importance sampling whose proposal confines the walk to a
          ball through the Doob transform of the generator restricted to the
          ball (h = principal eigenfunction, dense eigensolve).  Both the
          original and the tilted chain are simulated on a common uniformized
          event clock, so the likelihood ratio is a product of per-event
          factors and the mixture estimator is unbiased on the whole path
          space (paths that leave the ball carry tilted-likelihood zero).

Plus the localization cost curve b_T R^(d(q-1)/q - alpha) and its regime
classification, and rate-curve reports against the variational constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, TorusLaw, torus_jump_matrix
from .walk import AliasTable, FixedHorizon, _increment_table, batch_silt_torus

WINDOW_UPPER_RATIO = 0.2   # b_T / T
WINDOW_LOWER_RATIO = 5.0   # b_T / T^(1/q)


@dataclass(frozen=True)
class DeviationSchedule:
    """Scale bookkeeping for one deviation run: horizon T, scale b_T, tilt a."""

    T: float
    b_T: float
    q: float
    a: float = 1.0

    def __post_init__(self):
        if self.T <= 0 or self.b_T <= 0:
            raise ValueError("T and b_T must be positive")
        if self.q <= 1:
            raise ValueError("q must be > 1")
        if self.a <= 0:
            raise ValueError("a must be > 0")

    @property
    def lam(self) -> float:
        return self.a * self.b_T / self.T

    @property
    def threshold(self) -> float:
        return self.b_T ** self.q

    @property
    def window_ok(self) -> bool:
        """T >> b_T >> T^(1/q) encoded as the configured ratio guards."""
        return (self.b_T / self.T <= WINDOW_UPPER_RATIO
                and self.b_T / self.T ** (1.0 / self.q) >= WINDOW_LOWER_RATIO)

    @property
    def window_ok_proof_scale(self) -> bool:
        """The sharper window b_T >> T^(1/(q+1)) the upper-bound argument yields."""
        return (self.b_T / self.T <= WINDOW_UPPER_RATIO
                and self.b_T / self.T ** (1.0 / (self.q + 1.0)) >= WINDOW_LOWER_RATIO)

    def as_dict(self) -> dict:
        return {
            "T": self.T, "b_T": self.b_T, "q": self.q, "a": self.a,
            "lambda": self.lam, "threshold": self.threshold,
            "window_ok": self.window_ok,
            "window_ok_proof_scale": self.window_ok_proof_scale,
        }


def wilson_interval(hits: float, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = hits / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(center - half, 0.0), min(center + half, 1.0))


@dataclass
class RateEstimate:
    p_hat: float
    se: float
    ci: tuple
    method: str
    n_replicas: int
    schedule: DeviationSchedule
    ess: float | None = None
    flagged: str = ""
    upper_bound: float | None = None   # 95% bound when no hits were seen

    @property
    def log_rate(self) -> float | None:
        if self.p_hat <= 0.0:
            return None
        return math.log(self.p_hat) / self.schedule.b_T

    def as_dict(self) -> dict:
        return {
            "p_hat": self.p_hat, "se": self.se, "ci": list(self.ci),
            "log_rate": self.log_rate, "method": self.method,
            "n_replicas": self.n_replicas, "ess": self.ess,
            "flagged": self.flagged, "upper_bound": self.upper_bound,
            **{f"schedule_{k}": v for k, v in self.schedule.as_dict().items()},
        }


def estimate_naive(torus: TorusLaw, schedule: DeviationSchedule, n: int, seed) -> RateEstimate:
    """Plain Monte Carlo fraction of replicas with I_T >= b_T^q."""
    if n < 1000:
        raise ValueError("need at least 10^3 replicas")
    I, _, _, n_sites = batch_silt_torus(torus, FixedHorizon(schedule.T), schedule.q, n, seed)
    _check_pathwise_bounds(I, n_sites, schedule)
    hits = int((I >= schedule.threshold).sum())
    p = hits / n
    flag = "" if schedule.window_ok else "outside_window"
    return RateEstimate(
        p_hat=p,
        se=math.sqrt(p * (1 - p) / n),
        ci=wilson_interval(hits, n),
        method="naive",
        n_replicas=n,
        schedule=schedule,
        flagged=flag,
        upper_bound=3.0 / n if hits == 0 else None,
    )


def _check_pathwise_bounds(I, n_sites, schedule):
    T, q = schedule.T, schedule.q
    hi = T ** q * (1.0 + 1e-9)
    lo = T ** q * n_sites.astype(float) ** (1.0 - q) * (1.0 - 1e-9)
    if np.any(I > hi) or np.any(I < lo - 1e-12):
        raise AssertionError("pathwise convexity bounds violated for I_T")


def tail_sweep(I: np.ndarray, thresholds, weights=None) -> np.ndarray:
    """P_hat[I >= c] over a grid of thresholds from one fixed replica set
    (nonincreasing in c by construction)."""
    thresholds = np.asarray(thresholds, dtype=float)
    if weights is None:
        return np.array([(I >= c).mean() for c in thresholds])
    return np.array([(weights * (I >= c)).mean() for c in thresholds])


# ---------------------------------------------------------------------------
# Confinement-tilted estimator
# ---------------------------------------------------------------------------

@dataclass
class ConfinementTilt:
    """Doob transform data for the generator restricted to a ball.

    The tilted walk jumps x -> y (x, y in the ball) at rate
    mu_R(y-x) h(y)/h(x) with h the Perron eigenfunction of the restricted
    jump matrix.  Its observable total jump rate is constant, and the
    path likelihood ratio against the original walk telescopes to

        dPtilt/dP = exp(decay_rate * T) * h(X_T)/h(X_0)

    on paths confined to the ball (zero on all other paths).
    """

    ball: np.ndarray            # flat state indices of the ball
    log_h: np.ndarray           # log eigenfunction on the full state space (-inf outside)
    decay_rate: float           # 1 - theta, theta the Perron eigenvalue of M_B
    jump_rate: float            # observable tilted jump rate theta - mu_R(0)
    kernel_rows: np.ndarray     # (|B|, |B|) jump distribution rows of the tilted chain
    in_ball: np.ndarray         # boolean mask over all states
    state_to_ball: np.ndarray   # flat state index -> ball-local index (or -1)


def build_confinement_tilt(torus: TorusLaw, radius: float) -> ConfinementTilt:
    """Principal-eigenfunction tilt of the torus walk confined to the ball
    of the given radius around the origin (torus metric)."""
    R, d = torus.R, torus.d
    coords = np.indices((R,) * d).reshape(d, -1).T
    dist = np.sqrt((np.minimum(coords, R - coords) ** 2).sum(axis=1))
    ball = np.where(dist <= radius + 1e-9)[0]
    M = torus_jump_matrix(torus)
    MB = M[np.ix_(ball, ball)]
    vals, vecs = np.linalg.eigh(MB)
    theta = float(vals[-1])
    h_ball = vecs[:, -1]
    if h_ball.sum() < 0:
        h_ball = -h_ball
    h_ball = np.clip(h_ball, 1e-300, None)  # Perron vector is positive
    n = M.shape[0]
    log_h = np.full(n, -np.inf)
    log_h[ball] = np.log(h_ball)

    mu0 = float(torus.weights[(0,) * d])
    rates = MB * h_ball[None, :] / h_ball[:, None]
    np.fill_diagonal(rates, 0.0)          # self-jumps are unobservable
    jump_rate = theta - mu0
    kernel_rows = rates / jump_rate
    in_ball = np.zeros(n, dtype=bool)
    in_ball[ball] = True
    state_to_ball = np.full(n, -1, dtype=np.int64)
    state_to_ball[ball] = np.arange(len(ball))
    return ConfinementTilt(
        ball=ball, log_h=log_h, decay_rate=1.0 - theta, jump_rate=jump_rate,
        kernel_rows=kernel_rows, in_ball=in_ball, state_to_ball=state_to_ball,
    )


class _RowSampler:
    """Vectorized categorical draws from per-row alias tables."""

    def __init__(self, kernel: np.ndarray):
        n_rows, n_out = kernel.shape
        self.n_out = n_out
        self.prob = np.empty((n_rows, n_out))
        self.alias = np.empty((n_rows, n_out), dtype=np.int64)
        for i in range(n_rows):
            t = AliasTable(kernel[i])
            self.prob[i] = t.prob
            self.alias[i] = t.alias

    def draw(self, rng, rows):
        m = len(rows)
        idx = rng.integers(0, self.n_out, size=m)
        keep = rng.random(m) < self.prob[rows, idx]
        return np.where(keep, idx, self.alias[rows, idx])


def estimate_tilted(torus: TorusLaw, schedule: DeviationSchedule, R_ball: float,
                    n: int, seed, ess_floor: float = 0.01) -> RateEstimate:
    """Defensive mixture of the original walk and its ball-confined tilt.

    Half the replicas follow the original chain, half the tilted chain; each
    path is weighted by 2/(1 + dPtilt/dP) so the estimator is unbiased for the
    original tail probability at any threshold.
    """
    if R_ball < 1:
        raise ValueError("ball radius must be >= 1")
    if n < 100:
        raise ValueError("need at least 100 replicas per mixture half")
    I, w, halves = estimate_tilted_values(torus, schedule.T, schedule.q, R_ball, n, seed)
    return _tilted_estimate_from(I, w, halves, schedule, n, R_ball, ess_floor)


def _simulate_mixture(torus: TorusLaw, tilt: ConfinementTilt, T: float, n: int, seed):
    """Lockstep simulation of the half/half mixture.

    First half: the original walk (rate-1 clock, full jump law, exit from the
    ball tracked).  Second half: the tilted chain (constant observable rate,
    per-state kernel rows on the ball).  Returns occupation matrices
    (n, n_states), log dPtilt/dP per replica, and the two half index sets.
    """
    master = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.default_rng(master)
    nstates = tilt.in_ball.size
    sampler_t = _RowSampler(tilt.kernel_rows)
    table, sites = _increment_table(torus)
    shape = torus.weights.shape

    n_p = n // 2
    halves = (np.arange(0, n_p), np.arange(n_p, n))
    is_tilted = np.zeros(n, dtype=bool)
    is_tilted[n_p:] = True
    rate = np.where(is_tilted, tilt.jump_rate, 1.0)

    occ = np.zeros((n, nstates))
    exited = np.zeros(n, dtype=bool)
    t = np.zeros(n)
    state = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        dt = rng.exponential(1.0, size=active.size) / rate[active]
        t_new = t[active] + dt
        over = t_new >= T
        spent = np.where(over, T - t[active], dt)
        occ[active, state[active]] += spent
        t[active] = t_new
        movers = active[~over]
        if movers.size:
            cur = state[movers]
            tl = is_tilted[movers]
            new = np.empty(movers.size, dtype=np.int64)
            if tl.any():
                local = sampler_t.draw(rng, tilt.state_to_ball[cur[tl]])
                new[tl] = tilt.ball[local]
            n_orig = int((~tl).sum())
            if n_orig:
                steps = sites[table.draw(rng, n_orig)]
                pos = np.unravel_index(cur[~tl], shape)
                moved = tuple((p + s) % torus.R for p, s in zip(pos, steps.T))
                new[~tl] = np.ravel_multi_index(moved, shape)
            state[movers] = new
            exited[movers] |= ~tilt.in_ball[new]
        active = movers

    # Girsanov ratio on the observed path: exp(decay_rate T) h(X_T)/h(X_0),
    # zero as soon as the path leaves the ball.
    logLR = tilt.decay_rate * T + tilt.log_h[state] - tilt.log_h[0]
    logLR[exited] = -np.inf
    return occ, logLR, halves


def silt_from_occupancy(occ: np.ndarray, q: float) -> np.ndarray:
    return (occ ** q).sum(axis=1)


def estimate_tilted_values(torus: TorusLaw, tilt_T: float, q: float, R_ball: float,
                           n: int, seed):
    """Raw ingredients (I values, mixture weights, halves) for threshold sweeps."""
    tilt = build_confinement_tilt(torus, R_ball)
    occ, logLR, halves = _simulate_mixture(torus, tilt, tilt_T, n, seed)
    I = silt_from_occupancy(occ, q)
    with np.errstate(over="ignore"):
        w = 2.0 / (1.0 + np.exp(logLR))
    return I, w, halves


def _tilted_estimate_from(I, w, halves, schedule, n, R_ball, ess_floor=0.01):
    hits = I >= schedule.threshold
    vals = w * hits
    p = float(vals.mean())
    var_halves = [vals[h].var(ddof=1) * len(vals[h]) for h in halves]
    se = math.sqrt(sum(var_halves)) / n
    ess = float(w.sum() ** 2 / (w ** 2).sum())
    flag = "" if schedule.window_ok else "outside_window"
    if ess < ess_floor * n:
        flag = (flag + ",weight_degeneracy").lstrip(",")
    z = 1.96
    return RateEstimate(
        p_hat=p, se=se, ci=(max(p - z * se, 0.0), p + z * se),
        method=f"tilted(R_ball={R_ball})", n_replicas=n, schedule=schedule,
        ess=ess, flagged=flag, upper_bound=3.0 / n if p == 0.0 else None,
    )


# ---------------------------------------------------------------------------
# Rate curves and regimes
# ---------------------------------------------------------------------------

@dataclass
class RateCurveReport:
    q: float
    rows: list                 # dicts: T, b_T, threshold, p_hat, se, log_rate, method
    kappa: float
    rho: float
    slack: float
    all_negative: bool
    monotone_in_threshold: bool
    within_band: bool          # log rates in [-kappa (1+slack), 0)

    @property
    def passed(self) -> bool:
        return self.all_negative and self.monotone_in_threshold and self.within_band

    @property
    def analytic_lines(self) -> dict:
        return {"minus_inv_rho": -1.0 / self.rho, "minus_kappa": -self.kappa}


def rate_curve(torus: TorusLaw, schedules, n: int, seed,
               kappa: float, rho: float, slack: float = 0.5,
               method: str = "naive", R_ball: float = 4.0) -> RateCurveReport:
    """Empirical (1/b_T) log P[I_T >= b_T^q] over a schedule grid, sharing one
    replica set per horizon, annotated with the analytic rate lines."""
    byT: dict = {}
    for s in schedules:
        byT.setdefault(s.T, []).append(s)
    q = schedules[0].q
    master = np.random.SeedSequence(seed)
    children = master.spawn(len(byT))
    rows = []
    for (T, group), child in zip(byT.items(), children):
        if method == "naive":
            I, _, _, _ = batch_silt_torus(torus, FixedHorizon(T), q, n, child)
            w, halves = None, None
        else:
            I, w, halves = estimate_tilted_values(torus, T, q, R_ball, n, child)
        for sched in group:
            if w is None:
                hits = int((I >= sched.threshold).sum())
                p = hits / n
                se = math.sqrt(p * (1 - p) / n)
            else:
                vals = w * (I >= sched.threshold)
                p = float(vals.mean())
                se = math.sqrt(sum(vals[h].var(ddof=1) * len(vals[h]) for h in halves)) / n
            rows.append({
                "T": T, "b_T": sched.b_T, "threshold": sched.threshold,
                "p_hat": p, "se": se,
                "log_rate": (math.log(p) / sched.b_T) if p > 0 else None,
                "method": method, "window_ok": sched.window_ok,
            })
    all_neg = all(r["log_rate"] < 0 for r in rows if r["log_rate"] is not None)
    monotone = _monotone_in_threshold(rows)
    lo = -kappa * (1.0 + slack)
    within = all(lo <= r["log_rate"] < 0 for r in rows if r["log_rate"] is not None)
    return RateCurveReport(
        q=q, rows=rows, kappa=kappa, rho=rho, slack=slack,
        all_negative=all_neg, monotone_in_threshold=monotone, within_band=within,
    )


def _monotone_in_threshold(rows) -> bool:
    """log_rate nonincreasing in threshold at fixed T, demanded only for pairs
    separated by more than 3 sigma in p_hat."""
    byT = {}
    for r in rows:
        byT.setdefault(r["T"], []).append(r)
    for group in byT.values():
        group = sorted(group, key=lambda r: r["threshold"])
        for a, b in zip(group, group[1:]):
            if a["log_rate"] is None or b["log_rate"] is None:
                continue
            sep = abs(a["p_hat"] - b["p_hat"]) > 3.0 * math.hypot(a["se"], b["se"])
            if sep and b["log_rate"] > a["log_rate"] + 1e-12:
                return False
    return True


@dataclass
class RegimeReport:
    params: ModelParams
    exponent: float            # d(q-1)/q - alpha
    regime: str
    R_star: float | None       # optimal localization radius (None: any R works)
    cost_curve: list           # (R, b_T * R^exponent)

    def as_dict(self) -> dict:
        return {
            "exponent": self.exponent, "regime": self.regime, "R_star": self.R_star,
            "cost_curve": self.cost_curve, **self.params.as_dict(),
        }


def classify_regime(params: ModelParams, T: float | None = None,
                    b_T: float | None = None, R_grid=None) -> RegimeReport:
    """Localization heuristic: spending ~ b_T R^{d(q-1)/q} time in a ball of
    radius R costs ~ exp(-b_T R^{d(q-1)/q - alpha}); the exponent's sign picks
    the optimal radius."""
    d, alpha, q = params.d, params.alpha, params.q
    exponent = d * (q - 1.0) / q - alpha
    gap = params.criticality_gap()
    if abs(gap) <= 1e-12:
        regime, R_star = "critical", None
    elif gap > 0:
        regime, R_star = "supercritical", 1.0
    else:
        regime = "subcritical"
        if T is None or b_T is None:
            R_star = None
        else:
            R_star = (T / b_T) ** (q / (d * (q - 1.0)))
    if regime != params.regime:
        raise AssertionError("cost exponent sign disagrees with the parameter regime")
    if R_grid is None:
        R_grid = [1, 2, 4, 8, 16, 32]
    bT = 1.0 if b_T is None else b_T
    curve = [(float(R), bT * float(R) ** exponent) for R in R_grid]
    return RegimeReport(params=params, exponent=exponent, regime=regime,
                        R_star=R_star, cost_curve=curve)
