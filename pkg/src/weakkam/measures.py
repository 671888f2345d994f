"""Invariant minimizing measures as Birkhoff time averages.

Flow samples at uniform spacing with uniform weights represent the occupation
measure of an orbit; as the span grows the time average of any relabeling-
and shift-invariant observable converges, and for an orbit inside the
invariant set the average of the drifted Lagrangian converges to -hbar(c).
Invariance is tested in the dual sense: the expectation of each observable
is compared before and after pushing every atom forward by the flow, with
the a-priori bound osc(F) * t_test / span for a span-T time average.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .cell import GridField
from .errors import InvalidInputError
from .flow import PhasePoint, verlet_steps
from .models import TonelliModel, hamiltonian, lagrangian_c

__all__ = [
    "Observable",
    "EmpiricalMeasure",
    "birkhoff_measure",
    "check_invariance",
    "InvarianceReport",
    "check_minimizing",
    "MinimizingReport",
    "check_minimizing_report",
    "lower_bound_gap",
    "GapReport",
    "save_measure",
]


@dataclass(frozen=True)
class Observable:
    """Relabeling- and shift-invariant scalar function of a phase point."""

    kind: str  # fourier_position | velocity_moment | lagrangian_Lc | energy_H
    k: tuple = ()  # wavevector for fourier_position
    order: int = 0  # moment order for velocity_moment

    @staticmethod
    def fourier_position(k) -> "Observable":
        return Observable(kind="fourier_position", k=tuple(int(c) for c in k))

    @staticmethod
    def velocity_moment(order: int) -> "Observable":
        if order not in (0, 1, 2):
            raise InvalidInputError("velocity moments of order 0, 1, 2 only")
        return Observable(kind="velocity_moment", order=order)

    @staticmethod
    def lagrangian_Lc() -> "Observable":
        return Observable(kind="lagrangian_Lc")

    @staticmethod
    def energy_H() -> "Observable":
        return Observable(kind="energy_H")

    @property
    def name(self) -> str:
        if self.kind == "fourier_position":
            return f"fourier_position{list(self.k)}"
        if self.kind == "velocity_moment":
            return f"velocity_moment({self.order})"
        return self.kind

    def evaluate(self, model: TonelliModel, positions, momenta) -> np.ndarray:
        """Value at phase points of shape (..., N, d); velocities are -momenta."""
        x = np.asarray(positions, dtype=float)
        p = np.asarray(momenta, dtype=float)
        n = x.shape[-2]
        if self.kind == "fourier_position":
            k = np.asarray(self.k, dtype=float)
            phases = 2.0 * np.pi * ((x - np.floor(x)) @ k)
            return np.cos(phases).sum(axis=-1) / n
        if self.kind == "velocity_moment":
            v = -p
            if self.order == 0:
                return np.ones(x.shape[:-2])
            if self.order == 1:
                return v.sum(axis=(-2, -1)) / n
            return np.sum(v * v, axis=(-2, -1)) / n
        if self.kind == "lagrangian_Lc":
            return lagrangian_c(model, x, -p)
        if self.kind == "energy_H":
            return hamiltonian(model, x, p)
        raise InvalidInputError(f"unknown observable kind {self.kind!r}")


def default_observables(dim: int) -> list:
    """Six standard test observables for invariance reports."""
    k1 = (1,) + (0,) * (dim - 1)
    k2 = (2,) + (0,) * (dim - 1)
    return [
        Observable.fourier_position(k1),
        Observable.fourier_position(k2),
        Observable.velocity_moment(1),
        Observable.velocity_moment(2),
        Observable.lagrangian_Lc(),
        Observable.energy_H(),
    ]


@dataclass
class EmpiricalMeasure:
    """Weighted atoms (flow samples) approximating an invariant measure."""

    positions: np.ndarray  # (B, N, d)
    momenta: np.ndarray  # (B, N, d)
    weights: np.ndarray  # (B,), positive, sums to 1
    times: np.ndarray | None = None  # sample times for flow-generated measures

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.momenta = np.asarray(self.momenta, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.positions.shape != self.momenta.shape or self.positions.ndim != 3:
            raise InvalidInputError("atom arrays must both have shape (B, N, d)")
        if self.weights.shape != (self.positions.shape[0],):
            raise InvalidInputError("weights must have one entry per atom")
        if np.any(self.weights <= 0):
            raise InvalidInputError("weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise InvalidInputError("weights must sum to 1")
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float)

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    @property
    def atoms(self) -> list:
        from .geometry import Configuration

        return [
            (PhasePoint(Configuration(self.positions[i]), self.momenta[i]),
             float(self.weights[i]))
            for i in range(self.n_atoms)
        ]

    @property
    def span(self) -> float:
        if self.times is None or len(self.times) < 2:
            return 0.0
        return float(self.times[-1] - self.times[0])

    def expectation(self, model: TonelliModel, obs: Observable) -> float:
        vals = obs.evaluate(model, self.positions, self.momenta)
        return float(np.sum(self.weights * vals))


def single_atom_measure(point: PhasePoint) -> EmpiricalMeasure:
    return EmpiricalMeasure(point.m.positions[None], np.asarray(point.p)[None],
                            np.ones(1), times=np.zeros(1))


def birkhoff_measure(model: TonelliModel, start: PhasePoint, t_total: float,
                     h: float, thin: int) -> EmpiricalMeasure:
    """Uniformly weighted flow samples Phi(k*thin*h; start), k = 0, 1, ...

    The measure's expectation of any observable equals the uniform-grid time
    average of that observable along the orbit (left Riemann sum at spacing
    thin*h over the span).
    """
    if thin < 1:
        raise InvalidInputError("thin must be >= 1")
    if t_total < 100.0 * h:
        raise InvalidInputError("need t_total >= 100 h for a meaningful average")
    n_steps = int(round(t_total / h))
    x0 = start.m.positions
    v0 = -np.asarray(start.p, dtype=float)
    _, _, xs, vs = verlet_steps(model, x0, v0, n_steps, h, record_every=thin)
    B = len(xs)
    return EmpiricalMeasure(
        positions=xs,
        momenta=-vs,
        weights=np.full(B, 1.0 / B),
        times=np.arange(B) * (thin * h),
    )


@dataclass
class InvarianceReport:
    residuals: dict  # observable name -> |E[F o Phi_t] - E[F]|
    max_residual: float
    bound: float  # max over observables of osc(F) * t_test / span (inf if no span)
    t_test: float


def check_invariance(model: TonelliModel, mu: EmpiricalMeasure, t_test: float,
                     h: float, observables) -> InvarianceReport:
    """Push every atom forward by t_test and compare expectations."""
    n_steps = max(int(round(t_test / h)), 1)
    x, v = verlet_steps(model, mu.positions, -mu.momenta, n_steps, h)
    flowed_p = -v
    residuals = {}
    bound = 0.0
    for obs in observables:
        before = mu.expectation(model, obs)
        after = float(np.sum(mu.weights * obs.evaluate(model, x, flowed_p)))
        residuals[obs.name] = abs(after - before)
        vals = obs.evaluate(model, mu.positions, mu.momenta)
        osc = float(vals.max() - vals.min())
        bound = max(bound, osc * t_test / mu.span) if mu.span > 0 else np.inf
    return InvarianceReport(
        residuals=residuals,
        max_residual=max(residuals.values()) if residuals else 0.0,
        bound=bound,
        t_test=t_test,
    )


@dataclass
class MinimizingReport:
    gap: float  # |E[L_c] + hbar|
    expectation_Lc: float
    telescoping: float | None  # (U(x_0) - U(x_T))/T - hbar, when a field is given


def check_minimizing_report(model: TonelliModel, mu: EmpiricalMeasure, hbar: float,
                            field_obj: GridField | None = None) -> MinimizingReport:
    e_lc = mu.expectation(model, Observable.lagrangian_Lc())
    tele = None
    if field_obj is not None and mu.span > 0:
        u0 = float(field_obj.evaluate_configuration(mu.positions[0]))
        uT = float(field_obj.evaluate_configuration(mu.positions[-1]))
        tele = (u0 - uT) / mu.span - hbar
    return MinimizingReport(gap=abs(e_lc + hbar), expectation_Lc=e_lc, telescoping=tele)


def check_minimizing(model: TonelliModel, mu: EmpiricalMeasure, hbar: float,
                     field_obj: GridField | None = None) -> float:
    """|E_mu[L_c] + hbar|; zero for a minimizing measure with the correct constant."""
    return check_minimizing_report(model, mu, hbar, field_obj).gap


@dataclass
class GapReport:
    gaps: list  # E_mu[L_c] + hbar per measure
    min_gap: float
    violations: list  # indices with gap < -tol (inconsistent hbar or non-invariant mu)


def lower_bound_gap(model: TonelliModel, mu_list, hbar: float,
                    tol: float = 1e-9) -> GapReport:
    """E[L_c] >= -hbar must hold for every invariant measure; reports the slack."""
    gaps = [mu.expectation(model, Observable.lagrangian_Lc()) + hbar for mu in mu_list]
    violations = [i for i, g in enumerate(gaps) if g < -tol]
    return GapReport(gaps=gaps, min_gap=min(gaps) if gaps else np.inf,
                     violations=violations)


def save_measure(path, mu: EmpiricalMeasure):
    B, n, d = mu.positions.shape
    times = mu.times if mu.times is not None else np.full(B, np.nan)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "weight", "particle"]
                        + [f"x{j}" for j in range(d)] + [f"p{j}" for j in range(d)])
        for i in range(B):
            for part in range(n):
                writer.writerow(
                    [repr(float(times[i])), repr(float(mu.weights[i])), part]
                    + [repr(float(v)) for v in mu.positions[i, part]]
                    + [repr(float(v)) for v in mu.momenta[i, part]]
                )
