"""Continuous-time walk simulation, local times, and intersection functionals.

Paths have unit jump rate (exponential holding times) and increments drawn
from a JumpLaw (truncated, renormalized; truncation mass is reported on the
law) or exactly from a TorusLaw via an alias table.  Batch engines produce
dense local-time matrices for Monte Carlo work; `simulate_path` is the
per-path reference implementation used by fixtures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import JumpLaw, TorusLaw


@dataclass(frozen=True)
class FixedHorizon:
    T: float

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"horizon T must be > 0, got {self.T}")


@dataclass(frozen=True)
class ExponentialHorizon:
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError(f"stopping rate must be > 0, got {self.rate}")


class AliasTable:
    """Walker alias method for O(1) draws from a finite distribution."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.min() < 0 or w.sum() <= 0:
            raise ValueError("alias table needs nonnegative weights with positive mass")
        n = len(w)
        scaled = w * (n / w.sum())
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            prob[s] = scaled[s]
            alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)
        self.prob = prob
        self.alias = alias
        self.n = n

    def draw(self, rng, size):
        idx = rng.integers(0, self.n, size=size)
        keep = rng.random(size) < self.prob[idx]
        return np.where(keep, idx, self.alias[idx])


def _increment_table(law) -> tuple[AliasTable, np.ndarray]:
    """Alias table plus the (n, d) array of jump vectors it indexes."""
    cached = getattr(law, "_alias", None)
    if cached is not None:
        return cached
    if isinstance(law, TorusLaw):
        sites = np.indices(law.weights.shape).reshape(law.d, -1).T
        table = AliasTable(law.weights.reshape(-1))
    elif isinstance(law, JumpLaw):
        sites = law.sites
        table = AliasTable(law.weights)  # truncated-renormalized law
    else:
        raise TypeError("law must be a JumpLaw or TorusLaw")
    object.__setattr__(law, "_alias", (table, sites))
    return table, sites


@dataclass
class PathSample:
    """One realized path: jump times and the site occupied after each jump."""

    times: np.ndarray      # (n,) strictly increasing, all < horizon
    positions: np.ndarray  # (n, d) site after each jump; start site is 0
    horizon: float
    stop: object
    seed: object
    space: str             # "free" or "torus"
    R: int | None = None

    @property
    def n_jumps(self) -> int:
        return len(self.times)


def simulate_path(law, stop, seed) -> PathSample:
    """Simulate one walk started at 0.

    The stopping clock (for ExponentialHorizon) is drawn from a dedicated RNG
    substream, so the horizon is independent of the path by construction.
    Identical (law, stop, seed) reproduce the path bit for bit.
    """
    master = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    tau_ss, walk_ss = master.spawn(2)
    if isinstance(stop, FixedHorizon):
        horizon = float(stop.T)
    elif isinstance(stop, ExponentialHorizon):
        horizon = float(np.random.default_rng(tau_ss).exponential(1.0 / stop.rate))
    else:
        raise TypeError("stop must be FixedHorizon or ExponentialHorizon")
    rng = np.random.default_rng(walk_ss)
    table, sites = _increment_table(law)

    times = []
    t = 0.0
    block = max(16, int(horizon + 6.0 * math.sqrt(horizon + 1.0)))
    while True:
        hold = rng.exponential(1.0, size=block)
        cum = t + np.cumsum(hold)
        inside = cum < horizon
        times.append(cum[inside])
        if not inside.all():
            break
        t = cum[-1]
        block = max(16, block // 4)
    times = np.concatenate(times) if times else np.empty(0)
    n = len(times)
    idx = table.draw(rng, n)
    steps = sites[idx]
    positions = np.cumsum(steps, axis=0) if n else np.empty((0, sites.shape[1]), dtype=np.int64)
    is_torus = isinstance(law, TorusLaw)
    if is_torus and n:
        positions = positions % law.R
    return PathSample(
        times=times,
        positions=positions,
        horizon=horizon,
        stop=stop,
        seed=seed,
        space="torus" if is_torus else "free",
        R=law.R if is_torus else None,
    )


@dataclass
class LocalTimeField:
    """Sparse occupation-time field x -> l(x), with its horizon."""

    sites: np.ndarray    # (m, d) int64, unique
    times: np.ndarray    # (m,) occupation times, all > 0
    horizon: float
    space: str           # "free" or "torus"
    R: int | None = None

    def total(self) -> float:
        return float(self.times.sum())

    def n_sites(self) -> int:
        return len(self.times)

    def as_dict(self) -> dict:
        return {tuple(int(c) for c in s): float(t) for s, t in zip(self.sites, self.times)}


def local_times(path: PathSample) -> LocalTimeField:
    """Occupation time of each visited site; intervals clipped at the horizon."""
    d = path.positions.shape[1]
    states = np.vstack([np.zeros((1, d), dtype=np.int64), path.positions])
    edges = np.concatenate([[0.0], path.times, [path.horizon]])
    intervals = np.diff(edges)
    uniq, inv = np.unique(states, axis=0, return_inverse=True)
    acc = np.zeros(len(uniq))
    np.add.at(acc, inv, intervals)
    keep = acc > 0.0
    return LocalTimeField(
        sites=uniq[keep], times=acc[keep], horizon=path.horizon, space=path.space, R=path.R,
    )


@dataclass(frozen=True)
class SiltValue:
    value: float
    q: float
    horizon: float


def silt(field: LocalTimeField, q: float) -> SiltValue:
    """Self-intersection local time sum_x l(x)^q (q >= 1, real)."""
    if q < 1.0:
        raise ValueError(f"q must be >= 1, got {q}")
    return SiltValue(value=float(np.sum(field.times ** q)), q=q, horizon=field.horizon)


def fold_field(field: LocalTimeField, R: int) -> LocalTimeField:
    """Project a free-space field onto T_R, summing occupation over residue classes."""
    if field.space == "torus":
        raise ValueError("field is already on a torus")
    folded = field.sites % R
    uniq, inv = np.unique(folded, axis=0, return_inverse=True)
    acc = np.zeros(len(uniq))
    np.add.at(acc, inv, field.times)
    return LocalTimeField(sites=uniq, times=acc, horizon=field.horizon, space="torus", R=R)


@dataclass(frozen=True)
class MutualIntersection:
    value: float
    holder_bound: float   # (1/q) sum_i ||l_i||_q
    q: int


def mutual_intersection(fields, q: int) -> MutualIntersection:
    """Q = sum_x prod_i l_i(x) for q independent fields on the same space,
    together with the arithmetic-mean Holder bound on Q^(1/q)."""
    if int(q) != q or q < 2:
        raise ValueError(f"q must be an integer >= 2, got {q}")
    if len(fields) != q:
        raise ValueError(f"need exactly q={q} fields, got {len(fields)}")
    tag = (fields[0].space, fields[0].R)
    if any((f.space, f.R) != tag for f in fields):
        raise ValueError("all fields must live on the same space")
    maps = [f.as_dict() for f in fields]
    common = set(maps[0])
    for m in maps[1:]:
        common &= set(m)
    value = 0.0
    for site in common:
        prod = 1.0
        for m in maps:
            prod *= m[site]
        value += prod
    bound = sum(float(np.sum(f.times ** q)) ** (1.0 / q) for f in fields) / q
    if value ** (1.0 / q) > bound * (1.0 + 1e-12) + 1e-12:
        raise AssertionError("Holder bound violated for mutual intersection")
    return MutualIntersection(value=value, holder_bound=bound, q=int(q))


# ---------------------------------------------------------------------------
# Batch engines
# ---------------------------------------------------------------------------

_CHUNK = 20_000


def _draw_horizons(stop, n, rng):
    if isinstance(stop, FixedHorizon):
        return np.full(n, float(stop.T))
    if isinstance(stop, ExponentialHorizon):
        return rng.exponential(1.0 / stop.rate, size=n)
    raise TypeError("stop must be FixedHorizon or ExponentialHorizon")


def batch_local_time_matrix(torus: TorusLaw, stop, n: int, seed):
    """Local-time fields of n independent torus walks as an (n, R^d) matrix.

    Returns (occupancy, horizons, n_jumps).  Row sums equal the horizons up to
    float accumulation.  The stopping clocks use a dedicated substream.
    """
    master = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    tau_ss, walk_ss = master.spawn(2)
    horizons = _draw_horizons(stop, n, np.random.default_rng(tau_ss))
    walk_children = walk_ss.spawn(max(1, (n + _CHUNK - 1) // _CHUNK))

    table, sites = _increment_table(torus)
    n_states = torus.n_sites
    shape = torus.weights.shape
    occ = np.zeros((n, n_states))
    n_jumps = np.zeros(n, dtype=np.int64)

    for ci, lo in enumerate(range(0, n, _CHUNK)):
        hi = min(lo + _CHUNK, n)
        rng = np.random.default_rng(walk_children[ci])
        m = hi - lo
        hz = horizons[lo:hi]
        t = np.zeros(m)
        pos = np.zeros((m, torus.d), dtype=np.int64)
        active = np.arange(m)
        occ_c = occ[lo:hi]
        jumps_c = np.zeros(m, dtype=np.int64)
        while active.size:
            dt = rng.exponential(1.0, size=active.size)
            t_new = t[active] + dt
            over = t_new >= hz[active]
            flat = np.ravel_multi_index(tuple(pos[active].T), shape)
            spent = np.where(over, hz[active] - t[active], dt)
            occ_c[active, flat] += spent
            t[active] = t_new
            movers = active[~over]
            if movers.size:
                steps = sites[table.draw(rng, movers.size)]
                pos[movers] = (pos[movers] + steps) % torus.R
                jumps_c[movers] += 1
            active = movers
        n_jumps[lo:hi] = jumps_c
    return occ, horizons, n_jumps


def batch_silt_torus(torus: TorusLaw, stop, q: float, n: int, seed):
    """I values of n independent torus walks: sum_x l(x)^q per replica."""
    occ, horizons, n_jumps = batch_local_time_matrix(torus, stop, n, seed)
    I = (occ ** q).sum(axis=1)
    n_sites = (occ > 0.0).sum(axis=1)
    return I, horizons, n_jumps, n_sites


def batch_silt_free_1d(law: JumpLaw, stop, q: float, n: int, seed):
    """I values of n free-space walks in d=1 (truncated-renormalized sampling)."""
    if law.d != 1:
        raise NotImplementedError("free-space batch engine implemented for d=1")
    master = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    tau_ss, walk_ss = master.spawn(2)
    horizons = _draw_horizons(stop, n, np.random.default_rng(tau_ss))
    rng = np.random.default_rng(walk_ss)
    table, sites = _increment_table(law)
    steps1d = sites[:, 0]

    rep_idx, pos_rec, dt_rec = [], [], []
    t = np.zeros(n)
    pos = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        dt = rng.exponential(1.0, size=active.size)
        t_new = t[active] + dt
        over = t_new >= horizons[active]
        spent = np.where(over, horizons[active] - t[active], dt)
        rep_idx.append(active.copy())
        pos_rec.append(pos[active].copy())
        dt_rec.append(spent)
        t[active] = t_new
        movers = active[~over]
        if movers.size:
            pos[movers] += steps1d[table.draw(rng, movers.size)]
        active = movers
    rep = np.concatenate(rep_idx)
    ps = np.concatenate(pos_rec)
    dts = np.concatenate(dt_rec)
    order = np.lexsort((ps, rep))
    rep, ps, dts = rep[order], ps[order], dts[order]
    new_group = np.ones(len(rep), dtype=bool)
    new_group[1:] = (rep[1:] != rep[:-1]) | (ps[1:] != ps[:-1])
    group_id = np.cumsum(new_group) - 1
    occ = np.bincount(group_id, weights=dts)
    group_rep = rep[new_group]
    I = np.bincount(group_rep, weights=occ ** q, minlength=n)
    return I, horizons


# ---------------------------------------------------------------------------
# Distributional check of the torus / exponential-stopping comparison
# ---------------------------------------------------------------------------

@dataclass
class StoppingComparisonReport:
    thresholds: np.ndarray
    p_free: np.ndarray
    p_torus: np.ndarray
    se_torus: np.ndarray
    bound_factor: float        # e^(a b_T)
    ok: np.ndarray             # per threshold: p_free <= factor * (p_torus + 3 se)

    @property
    def all_ok(self) -> bool:
        return bool(self.ok.all())


def stopping_comparison(law: JumpLaw, R: int, T: float, b_T: float, a: float,
                        q: float, thresholds, n: int, seed) -> StoppingComparisonReport:
    """Monte Carlo form of the path-folding / exponential-stopping comparison:
    P[I_T >= c] <= e^(a b_T) P[I_{R,tau} >= c] with tau ~ Exp(a b_T / T)."""
    from .model import project_to_torus

    lam = a * b_T / T
    master = np.random.SeedSequence(seed)
    ss_free, ss_tor = master.spawn(2)
    I_free, _ = batch_silt_free_1d(law, FixedHorizon(T), q, n, ss_free)
    torus = project_to_torus(law, R)
    I_tor, _, _, _ = batch_silt_torus(torus, ExponentialHorizon(lam), q, n, ss_tor)
    thresholds = np.asarray(thresholds, dtype=float)
    p_free = np.array([(I_free >= c).mean() for c in thresholds])
    p_tor = np.array([(I_tor >= c).mean() for c in thresholds])
    se_tor = np.sqrt(p_tor * (1.0 - p_tor) / n)
    factor = math.exp(a * b_T)
    ok = p_free <= factor * (p_tor + 3.0 * se_tor) + 1e-12
    return StoppingComparisonReport(
        thresholds=thresholds, p_free=p_free, p_torus=p_tor, se_torus=se_tor,
        bound_factor=factor, ok=ok,
    )
