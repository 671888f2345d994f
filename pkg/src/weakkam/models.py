"""Mechanical models on the discretized configuration space.

The Lagrangian is quadratic kinetic energy minus a per-particle external
potential V and a pairwise interaction potential W, both trigonometric
polynomials on the torus:

    L(m, v)  = (1/2)<v, v> - (1/N) sum_i V(x_i) - (1/N^2) sum_ij W(x_i - x_j)
    L_c(m, v) = L(m, v) + c . mean_i(v_i)

with the empirical inner product <a, b> = (1/N) sum_i a_i . b_i.  The dual
Hamiltonian uses the sign convention

    H(m, p) = sup_v { -<p, v> - L(m, v) }
            = (1/2)<p, p> + (1/N) sum_i V(x_i) + (1/N^2) sum_ij W(x_i - x_j)

so the maximizing velocity is v = -p, the momentum of a velocity v is
p = -D_v L(m, v) = -v, and D_x H = -D_x L.  All gradients are taken with
respect to the empirical inner product (covector_i = N * euclidean partial).

Evaluation wraps coordinates into [0, 1) first (exact for periodic
functions, and keeps full precision on large lifts), and reduces particle
sums in sorted order so that relabeling particles gives bitwise-identical
values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, UnsupportedModelError
from .geometry import Configuration

__all__ = [
    "TrigMode",
    "TrigPotential",
    "TonelliModel",
    "zero_potential",
    "cosine_potential",
    "mechanical_model",
    "free_model",
    "eval_L",
    "eval_Lc",
    "grad_L",
    "eval_H",
    "grad_H",
    "lagrangian",
    "lagrangian_c",
    "hamiltonian",
    "grad_x_L",
    "accel",
    "parse_model_file",
    "write_model_file",
]

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TrigMode:
    k: tuple  # integer wavevector, length d
    a: float  # cosine coefficient
    b: float  # sine coefficient


@dataclass(frozen=True)
class TrigPotential:
    """x -> sum_m a_m cos(2 pi k_m . x) + b_m sin(2 pi k_m . x)."""

    dim: int
    modes: tuple

    def __post_init__(self):
        modes = tuple(
            TrigMode(tuple(int(c) for c in m.k), float(m.a), float(m.b))
            if isinstance(m, TrigMode)
            else TrigMode(tuple(int(c) for c in m[0]), float(m[1]), float(m[2]))
            for m in self.modes
        )
        for m in modes:
            if len(m.k) != self.dim:
                raise InvalidInputError(f"mode wavevector {m.k} has wrong dimension (d={self.dim})")
        object.__setattr__(self, "modes", modes)

    def _karr(self):
        if not self.modes:
            return np.zeros((0, self.dim)), np.zeros(0), np.zeros(0)
        K = np.array([m.k for m in self.modes], dtype=float)
        A = np.array([m.a for m in self.modes])
        B = np.array([m.b for m in self.modes])
        return K, A, B

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (..., d); returns shape (...)."""
        x = np.asarray(x, dtype=float)
        if not self.modes:
            return np.zeros(x.shape[:-1])
        K, A, B = self._karr()
        xw = x - np.floor(x)
        phases = _TWO_PI * (xw @ K.T)
        return np.cos(phases) @ A + np.sin(phases) @ B

    def grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient at points of shape (..., d); returns shape (..., d)."""
        x = np.asarray(x, dtype=float)
        if not self.modes:
            return np.zeros(x.shape)
        K, A, B = self._karr()
        xw = x - np.floor(x)
        phases = _TWO_PI * (xw @ K.T)
        coeff = -np.sin(phases) * A + np.cos(phases) * B  # (..., M)
        return _TWO_PI * (coeff @ K)

    # coefficient bounds, used by the assumption auditor and solvers
    def sup_bound(self) -> float:
        return float(sum(abs(m.a) + abs(m.b) for m in self.modes))

    def grad_bound(self) -> float:
        return float(
            sum(_TWO_PI * np.linalg.norm(m.k) * (abs(m.a) + abs(m.b)) for m in self.modes)
        )

    def second_derivative_bound(self) -> float:
        return float(
            sum(_TWO_PI**2 * float(np.dot(m.k, m.k)) * (abs(m.a) + abs(m.b)) for m in self.modes)
        )

    def _fine_grid(self, n: int) -> np.ndarray:
        n_axis = {1: n, 2: min(n, 256)}.get(self.dim, 48)
        axes = [np.arange(n_axis) / n_axis for _ in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def max_on_grid(self, n: int = 4096) -> float:
        """Maximum over a fine tensor grid of [0,1)^d (n nodes per axis for d=1)."""
        if not self.modes:
            return 0.0
        return float(self(self._fine_grid(n)).max())

    def min_on_grid(self, n: int = 4096) -> float:
        if not self.modes:
            return 0.0
        return float(self(self._fine_grid(n)).min())


def zero_potential(dim: int) -> TrigPotential:
    return TrigPotential(dim=dim, modes=())


def cosine_potential(dim: int = 1, depth: float = 2.0, k=None) -> TrigPotential:
    """The well -(depth/2)(1 - cos(2 pi k . x)): nonpositive, max 0, min -depth."""
    if k is None:
        k = (1,) + (0,) * (dim - 1)
    zero = (0,) * dim
    return TrigPotential(dim=dim, modes=((zero, -depth / 2.0, 0.0), (tuple(k), depth / 2.0, 0.0)))


@dataclass(frozen=True)
class TonelliModel:
    """Quadratic kinetic energy plus trig potentials and a drift covector c."""

    dim: int
    external: TrigPotential  # V, acts per particle
    interaction: TrigPotential  # W, acts on particle differences
    c: np.ndarray  # (d,)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if c.shape != (self.dim,):
            raise InvalidInputError(f"c must have shape ({self.dim},), got {c.shape}")
        if self.external.dim != self.dim or self.interaction.dim != self.dim:
            raise InvalidInputError("potential dimensions do not match model dim")
        object.__setattr__(self, "c", c)

    def with_c(self, c) -> "TonelliModel":
        return TonelliModel(self.dim, self.external, self.interaction, np.asarray(c, dtype=float))

    def potential_range(self, n: int = 2048) -> float:
        """Range of the positional part of H over the torus (coercivity radius input)."""
        lo = self.external.min_on_grid(n) + self.interaction.min_on_grid(n)
        hi = self.external.max_on_grid(n) + self.interaction.max_on_grid(n)
        return float(hi - lo)


def mechanical_model(dim, external=None, interaction=None, c=0.0,
                     require_nonpositive: bool = True) -> TonelliModel:
    """Build a model, verifying V <= 0 and W <= 0 on a fine grid by default.

    Nonpositivity of the potentials makes L >= 0, which the solvers'
    truncation and normalization arguments rely on.
    """
    V = external if external is not None else zero_potential(dim)
    W = interaction if interaction is not None else zero_potential(dim)
    c_arr = np.full(dim, c, dtype=float) if np.ndim(c) == 0 else np.asarray(c, dtype=float)
    if require_nonpositive:
        for name, pot in (("V", V), ("W", W)):
            m = pot.max_on_grid()
            if m > 1e-12:
                raise InvalidInputError(f"potential {name} is positive somewhere (max {m:.3e})")
    return TonelliModel(dim=dim, external=V, interaction=W, c=c_arr)


def free_model(dim: int = 1, c=0.0) -> TonelliModel:
    return mechanical_model(dim, None, None, c)


def _sorted_sum(values: np.ndarray) -> np.ndarray:
    """Sum over the last axis in sorted order: bitwise relabeling invariance."""
    return np.sort(values, axis=-1).sum(axis=-1)


def _mean_V(model: TonelliModel, x: np.ndarray) -> np.ndarray:
    n = x.shape[-2]
    if not model.external.modes:
        return np.zeros(x.shape[:-2])
    return _sorted_sum(model.external(x)) / n


def _mean_W(model: TonelliModel, x: np.ndarray) -> np.ndarray:
    n = x.shape[-2]
    if not model.interaction.modes:
        return np.zeros(x.shape[:-2])
    diffs = x[..., :, None, :] - x[..., None, :, :]  # (..., N, N, d)
    vals = model.interaction(diffs).reshape(x.shape[:-2] + (n * n,))
    return _sorted_sum(vals) / (n * n)


def potential_L(model: TonelliModel, x: np.ndarray) -> np.ndarray:
    """Positional part of L: -(mean V) - (double mean W); >= 0 for nonpositive potentials."""
    return -_mean_V(model, x) - _mean_W(model, x)


def kinetic(v: np.ndarray) -> np.ndarray:
    """(1/2) <v, v> with the empirical inner product; v of shape (..., N, d)."""
    n = v.shape[-2]
    per_particle = np.sum(np.asarray(v, dtype=float) ** 2, axis=-1)  # (..., N)
    return 0.5 * _sorted_sum(per_particle) / n


def drift_term(model: TonelliModel, v: np.ndarray) -> np.ndarray:
    """c . mean_i(v_i) of shape (...)."""
    n = v.shape[-2]
    per_particle = np.asarray(v, dtype=float) @ model.c  # (..., N)
    return _sorted_sum(per_particle) / n


def lagrangian(model: TonelliModel, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    return kinetic(v) + potential_L(model, x)


def lagrangian_c(model: TonelliModel, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    return lagrangian(model, x, v) + drift_term(model, v)


def hamiltonian(model: TonelliModel, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    return kinetic(p) - potential_L(model, x)


def grad_x_L(model: TonelliModel, x: np.ndarray) -> np.ndarray:
    """Empirical-gradient of L in the positions; shape (..., N, d).

    Component i is -grad V(x_i) - (1/N) sum_j [grad W(x_i - x_j) - grad W(x_j - x_i)].
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-2]
    out = -model.external.grad(x) if model.external.modes else np.zeros_like(x)
    if model.interaction.modes:
        diffs = x[..., :, None, :] - x[..., None, :, :]
        G = model.interaction.grad(diffs)  # (..., N, N, d); G[i, j] = grad W(x_i - x_j)
        sum_ij = G.sum(axis=-2)
        sum_ji = np.swapaxes(G, -3, -2).sum(axis=-2)
        out = out - (sum_ij - sum_ji) / n
    return out


def accel(model: TonelliModel, x: np.ndarray) -> np.ndarray:
    """Acceleration of the Lagrangian dynamics: dv/dt = D_x L(x)."""
    return grad_x_L(model, x)


def _check_point(model: TonelliModel, m: Configuration, arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if m.dim != model.dim:
        raise InvalidInputError(f"configuration dim {m.dim} != model dim {model.dim}")
    if arr.shape != m.positions.shape:
        raise InvalidInputError(f"{name} shape {arr.shape} != positions shape {m.positions.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def eval_L(model: TonelliModel, m: Configuration, v) -> float:
    v = _check_point(model, m, v, "velocity")
    return float(lagrangian(model, m.positions, v))


def eval_Lc(model: TonelliModel, m: Configuration, v) -> float:
    v = _check_point(model, m, v, "velocity")
    return float(lagrangian_c(model, m.positions, v))


def grad_L(model: TonelliModel, m: Configuration, v):
    """Empirical-inner-product gradients (dxL, dvL) of L at (m, v)."""
    v = _check_point(model, m, v, "velocity")
    return grad_x_L(model, m.positions), v.copy()


def eval_H(model: TonelliModel, m: Configuration, p) -> float:
    p = _check_point(model, m, p, "momentum")
    return float(hamiltonian(model, m.positions, p))


def grad_H(model: TonelliModel, m: Configuration, p):
    """(dxH, dpH); dxH = -dxL by Legendre duality, dpH = p so velocity = -p."""
    p = _check_point(model, m, p, "momentum")
    return -grad_x_L(model, m.positions), p.copy()


# --- model files -----------------------------------------------------------
#
# Structured text:
#
#     dim = 1
#     c = 0.0
#     [potential.V]
#     0, -1.0, 0.0
#     1, 1.0, 0.0
#     [potential.W]
#
# Mode lines are "k, a, b" with k the d space-separated integers.


def parse_model_file(path) -> TonelliModel:
    dim = None
    c = None
    sections = {"potential.V": [], "potential.W": []}
    current = None
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                if current not in sections:
                    raise InvalidInputError(f"{path}: unknown section [{current}]")
                continue
            if "=" in line and current is None:
                key, _, value = line.partition("=")
                key = key.strip()
                if key == "dim":
                    dim = int(value.strip())
                elif key == "c":
                    c = [float(t) for t in value.replace(",", " ").split()]
                else:
                    raise InvalidInputError(f"{path}: unknown key {key!r}")
                continue
            if current is None:
                raise InvalidInputError(f"{path}: mode line outside a potential section: {line!r}")
            parts = [t.strip() for t in line.split(",")]
            if len(parts) != 3:
                raise InvalidInputError(f"{path}: expected 'k, a, b', got {line!r}")
            k = tuple(int(t) for t in parts[0].split())
            sections[current].append((k, float(parts[1]), float(parts[2])))
    if dim is None:
        raise InvalidInputError(f"{path}: missing 'dim'")
    if c is None:
        c = [0.0] * dim
    V = TrigPotential(dim=dim, modes=tuple(sections["potential.V"]))
    W = TrigPotential(dim=dim, modes=tuple(sections["potential.W"]))
    return TonelliModel(dim=dim, external=V, interaction=W, c=np.asarray(c, dtype=float))


def write_model_file(path, model: TonelliModel):
    with open(path, "w") as fh:
        fh.write(f"dim = {model.dim}\n")
        fh.write("c = " + ", ".join(repr(float(v)) for v in model.c) + "\n")
        for name, pot in (("V", model.external), ("W", model.interaction)):
            fh.write(f"[potential.{name}]\n")
            for m in pot.modes:
                fh.write(" ".join(str(int(k)) for k in m.k) + f", {m.a!r}, {m.b!r}\n")
