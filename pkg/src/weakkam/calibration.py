"""Calibrated curves and invariant-set approximation from a grid field.

A solved field U with constant hbar generates candidate optimal motions by
flowing the characteristics

    dx/dt = -D_p H_c(x, p) ,   dp/dt = D_x H_c(x, p),   p(0) = grad U(x0),

which in the plain Hamiltonian variables is the mechanical flow started with
momentum grad U + c.  Along a correct characteristic the field decreases at
exactly the running rate:

    U(x(t1)) - U(x(t2)) = integral_t1^t2 ( L_c + hbar ) ds ,   t1 < t2,

and the energy H_c stays on the level hbar.  The residual of the first
identity per unit time is the acceptance metric for calibration.

The field is differentiable away from its kinks; kinks are detected as nodes
whose one-sided difference quotients disagree by more than 10x the typical
(grid-scale) disagreement.  Backward characteristics generically run into a
kink in finite time; the backward span is truncated at the first sample
whose stencil touches a kink and the truncation is reported on the curve.

Forward relaxation of seeds approximates the flow-invariant set: endpoints
that have become slow are polished by a Newton solve for the nearby exact
equilibrium (the grid field's O(dx^2) momentum error otherwise throws a
hyperbolic rest point off its stable manifold, which no finite relaxation
time can repair).  Rotating endpoints are returned as they are.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cell import GridField
from .errors import InvalidInputError, NonDifferentiablePointError
from .flow import PhasePoint, Trajectory, integrate_hamiltonian, verlet_steps
from .geometry import Configuration, dist_weak, empirical_norm
from .models import TonelliModel, accel, hamiltonian, lagrangian_c

__all__ = [
    "CalibratedCurve",
    "OmegaApproximation",
    "grid_tolerance",
    "detect_kinks",
    "grad_U",
    "characteristic",
    "calibration_residual",
    "approximate_omega",
]


def _one_sided_disagreement(field: GridField) -> np.ndarray:
    """Max over axes of |forward - backward| difference quotients at each node."""
    out = np.zeros(field.grid_shape)
    for a in range(field.n_axes):
        d = field.spacing[a]
        fwd = (np.roll(field.values, -1, axis=a) - field.values) / d
        bwd = (field.values - np.roll(field.values, 1, axis=a)) / d
        out = np.maximum(out, np.abs(fwd - bwd))
    return out


def grid_tolerance(field: GridField) -> float:
    """Typical smooth-node disagreement of one-sided differences."""
    disc = _one_sided_disagreement(field)
    scale = max(float(np.ptp(field.values)), 1e-12)
    floor = 1e-6 * scale / max(field.spacing)
    return max(float(np.median(disc)), floor)


def detect_kinks(field: GridField, factor: float = 10.0) -> np.ndarray:
    """Boolean node mask of detected non-differentiability points of the field."""
    return _one_sided_disagreement(field) > factor * grid_tolerance(field)


def _forbidden_mask(field: GridField, kinks: np.ndarray) -> np.ndarray:
    # nodes within one interpolation stencil (plus the difference step) of a kink;
    # box dilation on the torus, separable into per-axis rolls
    out = kinks.copy()
    for _ in range(2):
        for a in range(out.ndim):
            out = out | np.roll(out, 1, axis=a) | np.roll(out, -1, axis=a)
    return out


def _reduced_point(field: GridField, x) -> np.ndarray:
    if isinstance(x, Configuration):
        pos = x.positions
    else:
        pos = np.asarray(x, dtype=float)
    pos = pos.reshape(field.n_axes)
    return pos - np.floor(pos)


def _near_kink(field: GridField, forbidden: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """True per point (..., m) if its stencil neighborhood touches a kink."""
    if not forbidden.any():
        return np.zeros(pts.shape[:-1], dtype=bool)
    idx = tuple(
        np.mod(np.round(pts[..., a] / field.spacing[a]).astype(int), field.grid_shape[a])
        for a in range(field.n_axes)
    )
    return forbidden[idx]


def grad_U(field: GridField, x, kinks: np.ndarray | None = None) -> np.ndarray:
    """Centered-difference gradient of the interpolated field, as an empirical
    covector of shape (N, d); refuses points within a cell of a detected kink."""
    r = _reduced_point(field, x)
    if kinks is None:
        kinks = detect_kinks(field)
    if _near_kink(field, _forbidden_mask(field, kinks), r[None])[0]:
        raise NonDifferentiablePointError(
            f"point {r} is within one grid cell of a detected kink"
        )
    g = np.empty(field.n_axes)
    for a in range(field.n_axes):
        step = np.zeros(field.n_axes)
        step[a] = field.spacing[a]
        g[a] = (field.interpolate(r + step) - field.interpolate(r - step)) / (2 * field.spacing[a])
    return field.n_particles * g.reshape(field.n_particles, field.dim)


@dataclass
class CalibratedCurve:
    trajectory: Trajectory
    residual_per_unit_time: float
    two_sided_span: tuple  # (t_min <= 0, t_max >= 0)
    truncated_backward: bool
    energy_min: float
    energy_max: float

    def summary(self) -> dict:
        return {
            "residual_per_unit_time": self.residual_per_unit_time,
            "span": list(self.two_sided_span),
            "energy_min": self.energy_min,
            "energy_max": self.energy_max,
            "truncated_backward": self.truncated_backward,
        }


def calibration_residual(model: TonelliModel, field: GridField, traj: Trajectory,
                         t1: float, t2: float) -> float:
    """|U(x(t1)) - U(x(t2)) - integral (L_c + hbar)| / (t2 - t1), trapezoidal."""
    if t1 >= t2:
        raise InvalidInputError("need t1 < t2")
    i1, i2 = traj.index_at(t1), traj.index_at(t2)
    if i1 == i2:
        raise InvalidInputError("t1 and t2 snap to the same trajectory sample")
    u1 = float(field.evaluate_configuration(traj.positions[i1]))
    u2 = float(field.evaluate_configuration(traj.positions[i2]))
    xs = traj.positions[i1 : i2 + 1]
    vs = -traj.momenta[i1 : i2 + 1]
    integrand = lagrangian_c(model, xs, vs) + field.hbar
    integral = float(np.trapezoid(integrand, traj.times[i1 : i2 + 1]))
    span = float(traj.times[i2] - traj.times[i1])
    return abs(u1 - u2 - integral) / span


def characteristic(model: TonelliModel, field: GridField, m: Configuration,
                   t_forward: float, t_backward: float, h: float) -> CalibratedCurve:
    """Two-sided characteristic through m with momentum grad U(m) + c.

    The backward branch is truncated at the first sample within a cell of a
    detected kink (crossing one invalidates the calibration identity); the
    truncation is reported, not raised.
    """
    kinks = detect_kinks(field)
    forbidden = _forbidden_mask(field, kinks)
    p0 = grad_U(field, m, kinks=kinks) + model.c  # plain Hamiltonian momentum
    start = PhasePoint(m, p0)

    pieces_t, pieces_x, pieces_p = [], [], []
    truncated = False
    if t_backward > 0:
        back = integrate_hamiltonian(model, start, -t_backward, h)
        wrapped = back.positions - np.floor(back.positions)
        flat = wrapped.reshape(len(back), field.n_axes)
        bad = _near_kink(field, forbidden, flat)
        cut = len(back)
        hits = np.nonzero(bad)[0]
        if hits.size:
            cut = int(hits[0])
            truncated = True
        if cut > 1:
            pieces_t.append(back.times[1:cut][::-1])
            pieces_x.append(back.positions[1:cut][::-1])
            pieces_p.append(back.momenta[1:cut][::-1])
    fwd = integrate_hamiltonian(model, start, t_forward, h)
    pieces_t.append(fwd.times)
    pieces_x.append(fwd.positions)
    pieces_p.append(fwd.momenta)

    traj = Trajectory(
        times=np.concatenate(pieces_t),
        positions=np.concatenate(pieces_x),
        momenta=np.concatenate(pieces_p),
    )
    energies = hamiltonian(model, traj.positions, traj.momenta)
    residual = calibration_residual(model, field, traj, traj.times[0], traj.times[-1])
    return CalibratedCurve(
        trajectory=traj,
        residual_per_unit_time=residual,
        two_sided_span=(float(traj.times[0]), float(traj.times[-1])),
        truncated_backward=truncated,
        energy_min=float(energies.min()),
        energy_max=float(energies.max()),
    )


@dataclass
class OmegaApproximation:
    points: list  # PhasePoints approximating the invariant set
    witness_max_dist: float  # worst re-entry distance after flowing witness_t
    polished: tuple  # per seed: True if Newton-snapped to an exact equilibrium


def _newton_equilibrium(model: TonelliModel, x0: np.ndarray, tol: float = 1e-12,
                        max_iter: int = 50):
    """Newton solve for accel(x) = 0 near x0 (finite-difference Jacobian)."""
    x = x0.copy()
    shape = x.shape
    m = x.size
    for _ in range(max_iter):
        g = accel(model, x).ravel()
        if np.max(np.abs(g)) < tol:
            return x, True
        J = np.empty((m, m))
        e = 1e-7
        flat = x.ravel()
        for j in range(m):
            probe_p, probe_m = flat.copy(), flat.copy()
            probe_p[j] += e
            probe_m[j] -= e
            J[:, j] = (accel(model, probe_p.reshape(shape)).ravel()
                       - accel(model, probe_m.reshape(shape)).ravel()) / (2 * e)
        try:
            step = np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            return x, False
        if not np.all(np.isfinite(step)) or np.max(np.abs(step)) > 0.5:
            return x, False
        x = (x.ravel() - step).reshape(shape)
    return x, False


def approximate_omega(model: TonelliModel, field: GridField, seeds, t_relax: float,
                      h: float, speed_tol: float = 0.1, witness_t: float = 1.0,
                      polish: bool = True) -> OmegaApproximation:
    """Relax seeds forward along characteristics; returns phase points whose
    forward orbit approximates the flow-invariant set.

    Each seed contributes the slowest sample of the second half of its
    relaxation orbit (the orbit's closest approach to the invariant set; for
    a rotating orbit any sample qualifies).  Samples slower than speed_tol
    are Newton-polished onto the nearby exact equilibrium (see module
    docstring).  The invariance witness flows every returned point a further
    witness_t and reports the worst distance back to the returned
    configuration set.
    """
    kinks = detect_kinks(field)
    points = []
    polished = []
    for seed in seeds:
        q0 = grad_U(field, seed, kinks=kinks) + model.c
        n_steps = max(int(round(t_relax / h)), 2)
        _, _, xs, vs = verlet_steps(model, seed.positions, -q0, n_steps, h,
                                    record_every=1)
        tail = len(xs) // 2
        speeds = np.sqrt(np.sum(vs[tail:] ** 2, axis=(-2, -1)) / vs.shape[-2])
        best = tail + int(np.argmin(speeds))
        x_end, v_end = xs[best], vs[best]
        snapped = False
        if polish and empirical_norm(v_end) < speed_tol:
            x_eq, ok = _newton_equilibrium(model, x_end)
            if ok:
                x_end, v_end = x_eq, np.zeros_like(v_end)
                snapped = True
        points.append(PhasePoint(Configuration(x_end), -v_end))
        polished.append(snapped)

    worst = 0.0
    if witness_t > 0:
        configs = [pt.m for pt in points]
        for pt in points:
            n_steps = max(int(round(witness_t / h)), 1)
            x_w, _ = verlet_steps(model, pt.m.positions, pt.velocity, n_steps, h)
            flowed = Configuration(x_w)
            worst = max(worst, min(dist_weak(flowed, c) for c in configs))
    return OmegaApproximation(points=points, witness_max_dist=worst,
                              polished=tuple(polished))
