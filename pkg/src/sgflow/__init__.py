"""Spectral-Galerkin solver and verification suite for optimal control of 2D second-grade fluids."""
from .errors import BlowUp, ConfigError, EstimateViolation
from .optimizer import Ball, Box, OptimReport, evaluate_J, gradient, optimize, project_admissible, vi_residual
from .sensitivity import gateaux_check, greens_gap, solve_adjoint, solve_linearized
from .spectral import SpectralField, build_basis, random_field
from .state import ControlTrajectory, SolverConfig, Trajectory, simulate

__version__ = "0.1.0"

__all__ = [
    "Ball", "BlowUp", "Box", "ConfigError", "ControlTrajectory", "EstimateViolation", "OptimReport",
    "SolverConfig", "SpectralField", "Trajectory", "build_basis", "evaluate_J", "gateaux_check",
    "gradient", "greens_gap", "optimize", "project_admissible", "random_field", "simulate",
    "solve_adjoint", "solve_linearized", "vi_residual",
]
