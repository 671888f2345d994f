"""Weak KAM solution and effective constant on reduced state-space grids.

The solver iterates the discrete backward evolution operator

    (T_h U)(x) = min_v [ h L_c(x, v) + U(x + h v) ]

to its additive fixed point U = T_h U + h*hbar, normalizing min U = 0 every
sweep and reading off hbar = -min(T_h U)/h.  Grids cover reduced cases only:
a single particle on the 1- or 2-torus, or up to three particles on the
1-torus.  For several particles the grid spans the full product torus with
node values symmetric under relabeling (the iteration preserves the symmetry
to round-off), which represents the permutation quotient redundantly but keeps
interpolation elementary.

The velocity minimization is computed axis by axis: the kinetic-plus-drift
cost splits across reduced axes, so the joint minimum over a product sample
grid equals a sequence of one-dimensional min-convolutions

    (S_a F)(x) = min_w [ (h/N)(w^2/2 + c_a w) + F(x + h w e_a) ],

each evaluated for all nodes at once by periodic shifts of the whole value
array, followed by an optional one-shot quadratic refinement around the best
sample (the refined objective is re-evaluated, never extrapolated, so the
sampled minimum can only improve).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    InvalidInputError,
    NonConvergenceError,
    ResolutionError,
)
from .geometry import Configuration
from .models import TonelliModel, potential_L

__all__ = [
    "GridSpec",
    "VelocitySampling",
    "GridField",
    "default_velocity_sampling",
    "lax_oleinik_step",
    "solve_cell",
    "cross_check_hbar",
    "HbarCrossCheck",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class GridSpec:
    """Reduced state space: N particles in d dimensions, uniform grid per axis."""

    n_particles: int
    dim: int
    nodes_per_axis: int

    def __post_init__(self):
        n, d = self.n_particles, self.dim
        reduced_ok = (n == 1 and d <= 2) or (d == 1 and n <= 3)
        if not reduced_ok:
            raise InvalidInputError(
                f"grid solver supports N=1, d<=2 or N<=3, d=1; got N={n}, d={d}"
            )
        if self.nodes_per_axis < 8:
            raise InvalidInputError("need at least 8 nodes per axis")

    @property
    def n_axes(self) -> int:
        return self.n_particles * self.dim

    @property
    def shape(self) -> tuple:
        return (self.nodes_per_axis,) * self.n_axes

    @property
    def spacing(self) -> tuple:
        return (1.0 / self.nodes_per_axis,) * self.n_axes

    def node_positions(self) -> np.ndarray:
        """Particle positions at every node, shape (*shape, N, d)."""
        axes = [np.arange(self.nodes_per_axis) / self.nodes_per_axis] * self.n_axes
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return mesh.reshape(self.shape + (self.n_particles, self.dim))


@dataclass(frozen=True)
class VelocitySampling:
    """Per-axis velocity sample grid on [-radius, radius] with optional refinement."""

    radius: float
    count: int = 41
    refine: bool = True

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidInputError("velocity radius must be positive")
        if self.count < 5:
            raise InvalidInputError("need at least 5 velocity samples per axis")

    def samples(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.count)


def default_velocity_sampling(model: TonelliModel, count: int = 41) -> VelocitySampling:
    """Radius |c| + sqrt(2 range / gamma) + margin, gamma = 1/2 for quadratic kinetic."""
    r = float(np.linalg.norm(model.c)) + np.sqrt(2.0 * max(model.potential_range(), 0.0) / 0.5)
    return VelocitySampling(radius=r + 1.0, count=count)


@dataclass
class GridField:
    """Grid values of a candidate weak KAM solution plus the constant hbar."""

    grid_shape: tuple
    spacing: tuple
    values: np.ndarray
    hbar: float
    n_particles: int
    dim: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid_shape = tuple(self.grid_shape)
        self.spacing = tuple(self.spacing)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid_shape:
            raise InvalidInputError(
                f"values shape {self.values.shape} != grid shape {self.grid_shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("field values contain non-finite entries")

    @property
    def n_axes(self) -> int:
        return len(self.grid_shape)

    def interpolate(self, points: np.ndarray) -> np.ndarray:
        """Periodic multilinear interpolation at reduced points of shape (..., m)."""
        pts = np.asarray(points, dtype=float)
        u = pts / np.asarray(self.spacing)
        i0 = np.floor(u).astype(int)
        frac = u - i0
        out = np.zeros(pts.shape[:-1])
        m = self.n_axes
        for corner in range(1 << m):
            weight = np.ones(pts.shape[:-1])
            idx = []
            for a in range(m):
                bit = (corner >> a) & 1
                idx.append(np.mod(i0[..., a] + bit, self.grid_shape[a]))
                weight = weight * (frac[..., a] if bit else 1.0 - frac[..., a])
            out += weight * self.values[tuple(idx)]
        return out

    def evaluate_configuration(self, positions) -> np.ndarray:
        """Field value at particle positions of shape (..., N, d) (wrapped, flattened)."""
        pos = np.asarray(positions, dtype=float)
        if isinstance(positions, Configuration):
            pos = positions.positions
        pos = pos - np.floor(pos)
        pts = pos.reshape(pos.shape[:-2] + (self.n_axes,))
        return self.interpolate(pts)


def _axis_drift(model: TonelliModel, axis: int) -> float:
    # reduced axis a = particle * d + j carries drift component c_j
    return float(model.c[axis % model.dim])


def _shift_whole_grid(values: np.ndarray, axis: int, shift_cells: float) -> np.ndarray:
    """Values of F(x + shift) on the grid, periodic linear interpolation along axis."""
    k = int(np.floor(shift_cells))
    alpha = shift_cells - k
    lo = np.roll(values, -k, axis=axis)
    if alpha == 0.0:
        return lo
    hi = np.roll(values, -(k + 1), axis=axis)
    return (1.0 - alpha) * lo + alpha * hi


def _gather_shifted(values: np.ndarray, axis: int, shift_cells: np.ndarray) -> np.ndarray:
    """F(x + shift(x)) with a per-node shift along one axis (periodic linear)."""
    n = values.shape[axis]
    base = np.arange(n).reshape([-1 if a == axis else 1 for a in range(values.ndim)])
    pos = base + shift_cells
    k = np.floor(pos).astype(int)
    alpha = pos - k
    lo = np.take_along_axis(values, np.mod(k, n), axis=axis)
    hi = np.take_along_axis(values, np.mod(k + 1, n), axis=axis)
    return (1.0 - alpha) * lo + alpha * hi


def _min_convolve_axis(model, values, axis, spacing, h, n_particles, sampling):
    """One separable sweep S_a; raises ResolutionError if the minimizer hits the rim."""
    w = sampling.samples()
    kernel = (h / n_particles) * (0.5 * w**2 + _axis_drift(model, axis) * w)
    stack = np.empty((sampling.count,) + values.shape)
    for s in range(sampling.count):
        stack[s] = kernel[s] + _shift_whole_grid(values, axis, h * w[s] / spacing)
    best_idx = np.argmin(stack, axis=0)
    best = np.take_along_axis(stack, best_idx[None], axis=0)[0]

    on_rim = (best_idx == 0) | (best_idx == sampling.count - 1)
    if np.any(on_rim):
        node = np.unravel_index(int(np.argmax(on_rim)), values.shape)
        raise ResolutionError(
            f"velocity radius {sampling.radius} too small: minimizer on the sample "
            f"boundary at node {node}, axis {axis}",
            node=node,
            axis=axis,
        )

    if sampling.refine:
        f0 = best
        fm = np.take_along_axis(stack, (best_idx - 1)[None], axis=0)[0]
        fp = np.take_along_axis(stack, (best_idx + 1)[None], axis=0)[0]
        dw = w[1] - w[0]
        denom = fm - 2.0 * f0 + fp
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = np.where(denom > 1e-300, 0.5 * dw * (fm - fp) / denom, 0.0)
        delta = np.clip(delta, -dw, dw)
        w_star = w[best_idx] + delta
        shifted = _gather_shifted(values, axis, h * w_star / spacing)
        refined = (h / n_particles) * (
            0.5 * w_star**2 + _axis_drift(model, axis) * w_star
        ) + shifted
        best = np.minimum(best, refined)
    return best


def _apply_operator(model, values, spec: GridSpec, h, sampling, pot_grid):
    # trapezoidal split of the positional cost: half charged at the departure
    # node, half carried to the foot point through the min-convolution; the
    # kinetic plus drift cost is exact for the straight segment, so the
    # per-step quadrature is second order in h while every axis sweep stays a
    # one-dimensional min-convolution
    out = values + 0.5 * h * pot_grid
    for axis in range(spec.n_axes):
        out = _min_convolve_axis(
            model, out, axis, spec.spacing[axis], h, spec.n_particles, sampling
        )
    return out + 0.5 * h * pot_grid


def lax_oleinik_step(model: TonelliModel, field: GridField, h: float,
                     v_samples: VelocitySampling) -> GridField:
    """One application of T_h to the field values (no renormalization)."""
    if h <= 0:
        raise InvalidInputError("h must be positive")
    spec = GridSpec(field.n_particles, field.dim, field.grid_shape[0])
    if spec.shape != field.grid_shape:
        raise InvalidInputError("field grid is not uniform; cannot apply operator")
    pot = potential_L(model, spec.node_positions())
    new_values = _apply_operator(model, field.values, spec, h, v_samples, pot)
    return replace(field, values=new_values, meta=dict(field.meta))


def solve_cell(model: TonelliModel, grid_spec: GridSpec, h: float, tol: float,
               max_iters: int, v_samples: VelocitySampling | None = None) -> GridField:
    """Iterate U <- T_h U - min(T_h U) until the sup-norm change is <= tol * h.

    Returns the normalized field with hbar = -min(T_h U)/h; the returned
    field satisfies sup |U - T_h U - h hbar| <= tol h.
    """
    if h <= 0 or tol <= 0 or max_iters < 1:
        raise InvalidInputError("need h > 0, tol > 0, max_iters >= 1")
    sampling = v_samples if v_samples is not None else default_velocity_sampling(model)
    pot = potential_L(model, grid_spec.node_positions())
    values = np.zeros(grid_spec.shape)
    hbar = 0.0
    history = []
    for iteration in range(max_iters):
        new_values = _apply_operator(model, values, grid_spec, h, sampling, pot)
        mn = float(new_values.min())
        hbar = -mn / h
        new_values -= mn
        delta = float(np.max(np.abs(new_values - values)))
        history.append(delta)
        values = new_values
        if delta <= tol * h:
            return GridField(
                grid_shape=grid_spec.shape,
                spacing=grid_spec.spacing,
                values=values,
                hbar=hbar,
                n_particles=grid_spec.n_particles,
                dim=grid_spec.dim,
                meta={"h": h, "tol": tol, "iterations": iteration + 1,
                      "residual": delta, "radius": sampling.radius,
                      "v_count": sampling.count},
            )
    best = GridField(grid_spec.shape, grid_spec.spacing, values, hbar,
                     grid_spec.n_particles, grid_spec.dim,
                     meta={"h": h, "tol": tol, "iterations": max_iters})
    raise NonConvergenceError(
        f"Lax-Oleinik iteration did not reach tol*h={tol * h:.2e} in {max_iters} sweeps "
        f"(last change {history[-1]:.2e})",
        best=best,
        history=history,
    )


@dataclass(frozen=True)
class HbarCrossCheck:
    hbar_cell: float
    hbar_discounted: float
    difference: float
    combined_tol: float
    consistent: bool
    table: tuple


def cross_check_hbar(model: TonelliModel, grid_spec: GridSpec, eps_list, m_probe,
                     h_cell: float = 0.02, tol_cell: float = 1e-6,
                     max_iters: int = 20000, combined_tol: float = 2e-2,
                     spec_template=None) -> HbarCrossCheck:
    """Compare the grid fixed-point hbar against the vanishing-discount estimate."""
    from .discounted import estimate_hbar_discounted, make_discounted_spec

    field = solve_cell(model, grid_spec, h_cell, tol_cell, max_iters)
    if spec_template is None:
        spec_template = make_discounted_spec(model, epsilon=min(eps_list), value_tol=1e-3)
    hbar_disc, table = estimate_hbar_discounted(model, m_probe, eps_list, spec_template)
    diff = abs(field.hbar - hbar_disc)
    return HbarCrossCheck(
        hbar_cell=field.hbar,
        hbar_discounted=hbar_disc,
        difference=diff,
        combined_tol=combined_tol,
        consistent=diff <= combined_tol,
        table=tuple(table),
    )


def save_field(path, field_obj: GridField):
    with open(path, "w", newline="") as fh:
        fh.write(f"# hbar = {field_obj.hbar!r}\n")
        fh.write(f"# grid_shape = {','.join(str(n) for n in field_obj.grid_shape)}\n")
        fh.write(f"# n_particles = {field_obj.n_particles}\n")
        fh.write(f"# dim = {field_obj.dim}\n")
        for key in ("h", "tol"):
            if key in field_obj.meta:
                fh.write(f"# {key} = {field_obj.meta[key]!r}\n")
        writer = csv.writer(fh)
        m = field_obj.n_axes
        writer.writerow([f"i{a}" for a in range(m)] + [f"x{a}" for a in range(m)] + ["U"])
        for idx in np.ndindex(field_obj.grid_shape):
            coords = [idx[a] * field_obj.spacing[a] for a in range(m)]
            writer.writerow(
                list(idx) + [repr(float(c)) for c in coords] + [repr(float(field_obj.values[idx]))]
            )


def load_field(path) -> GridField:
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = value.strip()
            elif line.strip():
                rows.append(line.strip())
    if "hbar" not in meta or "grid_shape" not in meta:
        raise InvalidInputError(f"{path}: missing field metadata")
    shape = tuple(int(t) for t in meta["grid_shape"].split(","))
    n_particles = int(meta.get("n_particles", 1))
    dim = int(meta.get("dim", len(shape)))
    values = np.full(shape, np.nan)
    reader = csv.reader(rows)
    header = next(reader)
    m = len(shape)
    if len(header) != 2 * m + 1:
        raise InvalidInputError(f"{path}: unexpected field header {header}")
    for row in reader:
        idx = tuple(int(t) for t in row[:m])
        values[idx] = float(row[-1])
    if np.any(np.isnan(values)):
        raise InvalidInputError(f"{path}: incomplete field table")
    extra = {k: float(v) for k, v in meta.items() if k in ("h", "tol")}
    return GridField(shape, tuple(1.0 / n for n in shape), values,
                     float(meta["hbar"]), n_particles, dim, meta=extra)
