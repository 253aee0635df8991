"""Finitely supported functions on Z^d boxes and on discrete tori, with p-norm helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def conjugate_exponent(p: float) -> float:
    """Holder conjugate p' = p/(p-1); p=1 maps to inf."""
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    if p == 1.0:
        return np.inf
    return p / (p - 1.0)


def two_q_conjugate(q: float) -> float:
    """Conjugate exponent of 2q, i.e. (2q)' = 2q/(2q-1)."""
    if q <= 0.5:
        raise ValueError(f"need 2q > 1, got q={q}")
    return 2.0 * q / (2.0 * q - 1.0)


def p_norm(values: np.ndarray, p: float) -> float:
    """l^p norm (plain counting measure, no volume normalization)."""
    v = np.abs(np.asarray(values, dtype=float))
    if p == np.inf:
        return float(v.max()) if v.size else 0.0
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    return float(np.sum(v ** p) ** (1.0 / p))


@dataclass
class LatticeFunction:
    """Real function on an axis-aligned box of Z^d or on the torus T_R.

    ``values`` is a d-dimensional array; entry [i1,...,id] is the value at
    lattice site origin + (i1,...,id).  Torus functions use origin 0 and
    values of shape (R,)*d.
    """

    values: np.ndarray
    origin: tuple = ()
    space: str = "lattice"  # "lattice" or "torus"
    R: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not self.origin:
            self.origin = (0,) * self.values.ndim
        if self.space == "torus":
            if self.R is None:
                raise ValueError("torus function needs R")
            if self.values.shape != (self.R,) * self.values.ndim:
                raise ValueError("torus values must have shape (R,)*d")
        elif self.space != "lattice":
            raise ValueError(f"unknown space {self.space!r}")

    @property
    def d(self) -> int:
        return self.values.ndim

    def norm(self, p: float) -> float:
        return p_norm(self.values, p)

    def sites(self) -> np.ndarray:
        """All sites of the support box as an (n, d) integer array."""
        idx = np.indices(self.values.shape).reshape(self.d, -1).T
        return idx + np.asarray(self.origin, dtype=np.int64)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def normalized(self, p: float) -> "LatticeFunction":
        n = self.norm(p)
        if n == 0.0:
            raise ValueError("cannot normalize the zero function")
        return LatticeFunction(self.values / n, self.origin, self.space, self.R)


def delta(site, d: int, space: str = "lattice", R: int | None = None) -> LatticeFunction:
    """The indicator of a single site."""
    site = tuple(np.atleast_1d(site).astype(int))
    if space == "torus":
        vals = np.zeros((R,) * d)
        vals[tuple(s % R for s in site)] = 1.0
        return LatticeFunction(vals, space="torus", R=R)
    vals = np.zeros((1,) * d)
    vals[(0,) * d] = 1.0
    return LatticeFunction(vals, origin=site)


def box_function(values, origin=None) -> LatticeFunction:
    values = np.asarray(values, dtype=float)
    if origin is None:
        origin = (0,) * values.ndim
    return LatticeFunction(values, origin=tuple(origin))
