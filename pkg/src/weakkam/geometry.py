"""Configuration space: N-sample particle configurations on the torus and the
quotient metric modulo relabeling and per-particle integer shifts.

A configuration is an (N, d) array of position lifts in R^d with uniform
weight 1/N.  All norms here use the empirical inner product
``<A, B> = (1/N) sum_i A_i . B_i``, the N-sample stand-in for an integral
over particle labels.  The quotient distance ``dist_weak`` minimizes over
particle relabelings (an exact assignment problem) and per-particle integer
translations (absorbed coordinate-wise by the nearest-lift torus cost); it
equals the 2-Wasserstein distance between the two empirical measures on the
torus.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError

__all__ = [
    "Configuration",
    "IntegerShift",
    "Permutation",
    "empirical_inner",
    "empirical_norm",
    "wrap",
    "torus_sq_dist",
    "dist_weak",
    "dist_weak_bruteforce",
    "is_equivalent",
    "save_configuration",
    "load_configuration",
]


def empirical_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Empirical inner product (1/N) sum_i a_i . b_i of two (N, d) arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.sum(a * b) / a.shape[0])


def empirical_norm(a: np.ndarray) -> float:
    return float(np.sqrt(max(empirical_inner(a, a), 0.0)))


@dataclass(frozen=True)
class Configuration:
    """N particle position lifts on the d-torus, uniform weight 1/N."""

    positions: np.ndarray  # (N, d) float lifts, units of torus periods

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[0] < 1 or pos.shape[1] < 1:
            raise InvalidInputError(f"positions must be (N, d) with N, d >= 1, got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise InvalidInputError("positions contain non-finite entries")
        object.__setattr__(self, "positions", pos)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def shifted(self, shift: "IntegerShift") -> "Configuration":
        return Configuration(self.positions + shift.shifts)

    def permuted(self, perm: "Permutation") -> "Configuration":
        return Configuration(self.positions[perm.perm])


@dataclass(frozen=True)
class IntegerShift:
    """Per-particle integer translation, the discrete subgroup acting on lifts."""

    shifts: np.ndarray  # (N, d) integers

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.shifts))
        if not np.issubdtype(s.dtype, np.integer):
            if not np.all(s == np.round(s)):
                raise InvalidInputError("shifts must be integers")
            s = s.astype(int)
        object.__setattr__(self, "shifts", s)


@dataclass(frozen=True)
class Permutation:
    """A relabeling of the N particles (discrete measure-preserving map)."""

    perm: np.ndarray  # (N,) a bijection of 0..N-1

    def __post_init__(self):
        p = np.asarray(self.perm, dtype=int)
        if p.ndim != 1 or sorted(p.tolist()) != list(range(p.size)):
            raise InvalidInputError("perm is not a bijection of 0..N-1")
        object.__setattr__(self, "perm", p)


def wrap(cfg: Configuration) -> Configuration:
    """Canonical representative modulo integer shifts: every coordinate in [0, 1)."""
    return Configuration(cfg.positions - np.floor(cfg.positions))


def _centered_remainder(delta: np.ndarray) -> np.ndarray:
    # nearest-lift remainder in (-1/2, 1/2]; exact ties at 1/2 kept positive
    return 0.5 - np.mod(0.5 - delta, 1.0)


def torus_sq_dist(x, y) -> float:
    """Squared torus distance sum_j min_k (x_j - y_j - k)^2 between two d-vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInputError("non-finite input to torus_sq_dist")
    r = _centered_remainder(x - y)
    return float(np.sum(r * r))


def _pairwise_torus_cost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # (N, N) matrix of squared torus distances a_i <-> b_j
    delta = a[:, None, :] - b[None, :, :]
    r = _centered_remainder(delta)
    return np.sum(r * r, axis=-1)


def _check_shapes(a: Configuration, b: Configuration):
    if a.n_particles != b.n_particles or a.dim != b.dim:
        raise InvalidInputError(
            f"configuration shapes differ: {a.positions.shape} vs {b.positions.shape}"
        )


def dist_weak(a: Configuration, b: Configuration) -> float:
    """Quotient distance: sqrt of the minimal mean squared torus cost over relabelings.

    The minimum over per-particle integer shifts decouples coordinate-wise
    into the nearest-lift cost; the minimum over relabelings is solved
    exactly by a Hungarian-type assignment solver.
    """
    _check_shapes(a, b)
    cost = _pairwise_torus_cost(a.positions, b.positions)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].sum() / a.n_particles))


def dist_weak_bruteforce(a: Configuration, b: Configuration) -> float:
    """Reference implementation minimizing over all N! relabelings (N small)."""
    _check_shapes(a, b)
    cost = _pairwise_torus_cost(a.positions, b.positions)
    n = a.n_particles
    best = np.inf
    for perm in itertools.permutations(range(n)):
        total = cost[range(n), perm].sum()
        if total < best:
            best = total
    return float(np.sqrt(best / n))


def is_equivalent(a: Configuration, b: Configuration, tol: float) -> bool:
    """True iff the two configurations project to the same quotient point within tol."""
    return dist_weak(a, b) <= tol


def save_configuration(path, cfg: Configuration):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(cfg.dim)])
        for row in cfg.positions:
            writer.writerow([repr(float(v)) for v in row])


def load_configuration(path) -> Configuration:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or not header[0].startswith("x"):
            raise InvalidInputError(f"{path}: expected header x0,...,x{{d-1}}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise InvalidInputError(f"{path}: empty configuration file")
    return Configuration(np.asarray(rows))
