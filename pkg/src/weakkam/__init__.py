"""Numerical laboratory for weak KAM objects of indistinguishable-particle
systems on the torus: quotient geometry, discounted values, the effective
Hamiltonian, grid weak KAM solutions, calibrated curves and invariant
minimizing measures."""

__version__ = "0.1.0"

from .geometry import Configuration, IntegerShift, Permutation, dist_weak, wrap
from .models import TonelliModel, TrigPotential, cosine_potential, free_model, mechanical_model
from .flow import PhasePoint, Trajectory, integrate_euler_lagrange, integrate_hamiltonian
from .discounted import DiscountedSpec, make_discounted_spec, minimize_discounted
from .cell import GridField, GridSpec, solve_cell
from .calibration import CalibratedCurve, approximate_omega, characteristic, grad_U
from .measures import EmpiricalMeasure, Observable, birkhoff_measure
from .oracles import critical_drift, oracle_hbar_1d

__all__ = [
    "__version__",
    "Configuration", "IntegerShift", "Permutation", "dist_weak", "wrap",
    "TonelliModel", "TrigPotential", "cosine_potential", "free_model", "mechanical_model",
    "PhasePoint", "Trajectory", "integrate_euler_lagrange", "integrate_hamiltonian",
    "DiscountedSpec", "make_discounted_spec", "minimize_discounted",
    "GridField", "GridSpec", "solve_cell",
    "CalibratedCurve", "approximate_omega", "characteristic", "grad_U",
    "EmpiricalMeasure", "Observable", "birkhoff_measure",
    "critical_drift", "oracle_hbar_1d",
]
