"""Numerical audit of the structural conditions the solvers rely on.

The mechanical Lagrangian satisfies, for certified constants:

  * periodicity under per-particle integer shifts and invariance under
    relabeling (checked by direct evaluation at transformed probes);
  * L >= 0 (nonpositive potentials);
  * growth bounds L(M,N) <= C (1 + |M|^2 + |N|^2), |L(M,0)| <= C;
  * derivative bound |DL| <= C' (1 + L);
  * two-sided second-order expansion control: the increment of L minus its
    linearization lies between gamma |H2|^2 - K_L |H1|^2 and
    K_L (|H1|^2 + |H2|^2).

gamma is exactly 1/2 here: the kinetic term is exactly quadratic, so the
expansion in the velocity direction is (1/2)|H2|^2 with no remainder.  K_L
comes from coefficient sums bounding the potentials' second derivatives.
The audit certifies by sampling: it draws random probes and records every
violated inequality with its margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .models import TonelliModel, grad_x_L, lagrangian

__all__ = ["AssumptionViolation", "AssumptionReport", "audit_assumptions"]


@dataclass(frozen=True)
class AssumptionViolation:
    assumption: str  # "i" .. "viii"
    probe: int
    margin: float  # negative slack of the failed inequality


@dataclass
class AssumptionReport:
    gamma_lower: float
    K_L_upper: float
    C_upper: float
    grad_C_upper: float
    n_probes: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _emp_sq(a):
    # squared empirical norm per probe, a of shape (P, N, d)
    return np.sum(a * a, axis=(-2, -1)) / a.shape[-2]


def audit_assumptions(model: TonelliModel, n_probes: int, radius: float, seed: int,
                      n_particles: int = 4, n_transform_probes: int = 100) -> AssumptionReport:
    """Sample random (M, N, H1, H2) probes and check the model's assumptions.

    radius scales the sampled positions, velocities and perturbations.
    Shift/relabeling invariance is checked on n_transform_probes of the
    sampled points.  Violations are recorded, not raised.
    """
    if n_probes < 1:
        raise InvalidInputError("n_probes must be >= 1")
    rng = np.random.default_rng(seed)
    P, n, d = n_probes, n_particles, model.dim

    M = rng.uniform(-radius, radius, size=(P, n, d))
    N = rng.uniform(-radius, radius, size=(P, n, d))
    H1 = rng.normal(scale=radius, size=(P, n, d))
    H2 = rng.normal(scale=radius, size=(P, n, d))

    V, W = model.external, model.interaction
    gamma = 0.5
    K_L = V.second_derivative_bound() + W.second_derivative_bound()
    C = max(0.5, V.sup_bound() + W.sup_bound())
    C_grad = V.grad_bound() + 2.0 * W.grad_bound() + 1.0

    L = lagrangian(model, M, N)
    L0 = lagrangian(model, M, np.zeros_like(N))
    dxL = grad_x_L(model, M)
    dvL = N
    L_pert = lagrangian(model, M + H1, N + H2)
    lin = (np.sum(dxL * H1, axis=(-2, -1)) + np.sum(dvL * H2, axis=(-2, -1))) / n
    delta = L_pert - L - lin

    sq_M, sq_N = _emp_sq(M), _emp_sq(N)
    sq_H1, sq_H2 = _emp_sq(H1), _emp_sq(H2)
    dual_sq = _emp_sq(dxL) + _emp_sq(dvL)

    report = AssumptionReport(gamma_lower=gamma, K_L_upper=K_L, C_upper=C,
                              grad_C_upper=C_grad, n_probes=P)
    tol = 1e-9 * (1.0 + np.abs(L))

    def record(name, slack, allowance):
        bad = np.nonzero(slack < -allowance)[0]
        for i in bad:
            report.violations.append(AssumptionViolation(name, int(i), float(slack[i])))

    # The kinetic expansion is exactly gamma |H2|^2, so both two-sided bounds
    # reduce to controlling the positional remainder delta - gamma |H2|^2 by
    # K_L |H1|^2; the upper bound then holds a fortiori with the K_L |H2|^2
    # slack added back.
    positional_remainder = delta - gamma * sq_H2
    record("iii", L, tol)
    record("v", C * (1.0 + sq_M + sq_N) - L, tol)
    record("v", C - np.abs(L0), tol)
    record("vi", C_grad * (1.0 + L) - np.sqrt(dual_sq), tol)
    record("vii", positional_remainder + K_L * sq_H1, tol)
    record("viii", K_L * sq_H1 - positional_remainder, tol)

    # periodicity and relabeling invariance at transformed probes; these are
    # exact up to round-off, so the allowance is at machine scale
    n_t = min(n_transform_probes, P)
    roundoff = 1e-12 * (1.0 + np.abs(L[:n_t]))
    shifts = rng.integers(-3, 4, size=(n_t, n, d)).astype(float)
    L_shift = lagrangian(model, M[:n_t] + shifts, N[:n_t])
    record("i", -np.abs(L_shift - L[:n_t]), roundoff)
    perms = np.array([rng.permutation(n) for _ in range(n_t)])
    rows = np.arange(n_t)[:, None]
    L_perm = lagrangian(model, M[rows, perms], N[rows, perms])
    record("ii", -np.abs(L_perm - L[:n_t]), roundoff)

    return report
