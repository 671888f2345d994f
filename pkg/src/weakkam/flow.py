"""Time integration of the particle dynamics.

The Hamiltonian system in this package's sign convention is

    dx/dt = -D_p H(x, p) = -p,        dp/dt = D_x H(x, p) = -D_x L(x),

equivalent to the Lagrangian dynamics dv/dt = D_x L(x) with v = -p.
Integration happens in (x, v) variables; momenta are converted at the
interface.  The default scheme is Stoermer-Verlet (the Hamiltonian is
separable); implicit midpoint is provided as a fallback for non-separable
extensions.  Positions are stored as lifts (never wrapped), so velocities
and action integrals stay continuous; potentials are periodic so evaluating
them on lifts is exact.

The low-level steppers accept arbitrary leading batch axes (..., N, d) so
that bundles of phase points can be flowed together.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationFailureError, InvalidInputError
from .geometry import Configuration
from .models import TonelliModel, accel, hamiltonian

__all__ = [
    "PhasePoint",
    "Trajectory",
    "integrate_hamiltonian",
    "integrate_euler_lagrange",
    "verlet_steps",
    "energy_series",
    "save_trajectory",
]


@dataclass(frozen=True)
class PhasePoint:
    """A (configuration, momentum) pair; the velocity is v = -p."""

    m: Configuration
    p: np.ndarray  # (N, d) empirical covector

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != self.m.positions.shape:
            raise InvalidInputError(f"momentum shape {p.shape} != positions shape {self.m.positions.shape}")
        object.__setattr__(self, "p", p)

    @property
    def velocity(self) -> np.ndarray:
        return -self.p


@dataclass
class Trajectory:
    """Uniformly sampled flow history; positions are lifts."""

    times: np.ndarray  # (K+1,)
    positions: np.ndarray  # (K+1, N, d)
    momenta: np.ndarray  # (K+1, N, d)

    def __post_init__(self):
        if len(self.times) != len(self.positions) or len(self.times) != len(self.momenta):
            raise InvalidInputError("trajectory arrays have inconsistent lengths")

    def __len__(self):
        return len(self.times)

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0])

    def point(self, i: int) -> PhasePoint:
        return PhasePoint(Configuration(self.positions[i]), self.momenta[i])

    @property
    def points(self):
        return [self.point(i) for i in range(len(self))]

    def index_at(self, t: float) -> int:
        """Index of the sample closest to time t."""
        return int(np.argmin(np.abs(self.times - t)))


def verlet_steps(model: TonelliModel, x, v, n_steps: int, h: float, record_every: int = 0):
    """Velocity-Verlet flow of dv/dt = D_x L, dx/dt = v on (..., N, d) arrays.

    With record_every == 0, returns the final (x, v).  Otherwise returns
    (x, v, xs, vs) where xs, vs hold every record_every-th state including
    the initial one, shape (n_rec, ..., N, d).
    """
    x = np.array(x, dtype=float)
    v = np.array(v, dtype=float)
    xs = [x.copy()] if record_every else None
    vs = [v.copy()] if record_every else None
    a = accel(model, x)
    half = 0.5 * h
    for k in range(n_steps):
        v_half = v + half * a
        x = x + h * v_half
        a = accel(model, x)
        v = v_half + half * a
        if record_every and (k + 1) % record_every == 0:
            xs.append(x.copy())
            vs.append(v.copy())
    if record_every:
        return x, v, np.array(xs), np.array(vs)
    return x, v


def _midpoint_steps(model, x, v, n_steps, h, record_every=0, max_inner=100, tol=1e-13):
    x = np.array(x, dtype=float)
    v = np.array(v, dtype=float)
    xs = [x.copy()] if record_every else None
    vs = [v.copy()] if record_every else None
    for k in range(n_steps):
        x_new, v_new = x + h * v, v  # explicit predictor
        converged = False
        for _ in range(max_inner):
            x_mid = 0.5 * (x + x_new)
            v_mid = 0.5 * (v + v_new)
            x_next = x + h * v_mid
            v_next = v + h * accel(model, x_mid)
            err = max(np.max(np.abs(x_next - x_new)), np.max(np.abs(v_next - v_new)))
            x_new, v_new = x_next, v_next
            if err <= tol * (1.0 + np.max(np.abs(x_new))):
                converged = True
                break
        if not converged:
            raise IntegrationFailureError(f"implicit midpoint stalled at step {k}", step=k)
        x, v = x_new, v_new
        if record_every and (k + 1) % record_every == 0:
            xs.append(x.copy())
            vs.append(v.copy())
    if record_every:
        return x, v, np.array(xs), np.array(vs)
    return x, v


def integrate_hamiltonian(model: TonelliModel, start: PhasePoint, t_span: float, h: float,
                          scheme: str = "verlet") -> Trajectory:
    """Flow dx/dt = -D_p H, dp/dt = D_x H from ``start`` for t_span (may be negative).

    h > 0 is the step magnitude; the sign of t_span sets the direction.
    """
    if h <= 0:
        raise InvalidInputError(f"step size must be positive, got {h}")
    if abs(t_span) < h:
        raise InvalidInputError(f"t_span {t_span} shorter than one step {h}")
    n_steps = int(round(abs(t_span) / h))
    h_signed = h if t_span > 0 else -h
    x0 = start.m.positions
    v0 = -np.asarray(start.p, dtype=float)
    if scheme == "verlet":
        _, _, xs, vs = verlet_steps(model, x0, v0, n_steps, h_signed, record_every=1)
    elif scheme == "midpoint":
        _, _, xs, vs = _midpoint_steps(model, x0, v0, n_steps, h_signed, record_every=1)
    else:
        raise InvalidInputError(f"unknown scheme {scheme!r}")
    times = np.arange(n_steps + 1) * h_signed
    return Trajectory(times=times, positions=xs, momenta=-vs)


def integrate_euler_lagrange(model: TonelliModel, m0: Configuration, v0, t_span: float,
                             h: float, scheme: str = "verlet") -> Trajectory:
    """Flow of d/dt D_v L = D_x L from (m0, v0); wraps the Hamiltonian flow with p0 = -v0."""
    v0 = np.asarray(v0, dtype=float)
    return integrate_hamiltonian(model, PhasePoint(m0, -v0), t_span, h, scheme=scheme)


def energy_series(model: TonelliModel, traj: Trajectory) -> np.ndarray:
    """H(x(t), p(t)) at every sample; constant up to O(h^2) drift for verlet."""
    return hamiltonian(model, traj.positions, traj.momenta)


def save_trajectory(path, traj: Trajectory):
    n = traj.positions.shape[1]
    d = traj.positions.shape[2]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "particle"] + [f"x{j}" for j in range(d)] + [f"p{j}" for j in range(d)])
        for i, t in enumerate(traj.times):
            for part in range(n):
                writer.writerow(
                    [repr(float(t)), part]
                    + [repr(float(v)) for v in traj.positions[i, part]]
                    + [repr(float(v)) for v in traj.momenta[i, part]]
                )
