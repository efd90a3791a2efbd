"""Vanishing-viscosity solver for rate-independent systems with two-speed jump resolution."""
from .diagnostics import (CertificateEntry, CertificateReport, oscillation_certificate,
                          stability_history, variation_sandwich)
from .dissipation import from_config as dissipation_from_config
from .grid import SpatialGrid
from .oracles import SCENARIOS, oracle_ex24, oracle_ex25, oracle_ex26, oracle_ex27, scenario
from .potentials import ConfigurationError, Loading, TotalEnergy, density_by_name
from .two_speed import (JumpResolution, JumpTransient, Slide, TwoSpeedConfig, TwoSpeedSolution,
                        UnresolvedJump, assemble_two_speed, build_stretching,
                        compute_var_R1, detect_parabolic_points, energy_loss_process,
                        resolve_jump, run_sweep, solve_two_speed, verify_energy_equality)
from .viscous_solver import (Problem, StepFailure, ViscousParams, ViscousTrajectory,
                             build_problem, incremental_step, run_viscous,
                             strong_solution_residual)

__all__ = [
    "CertificateEntry", "CertificateReport", "ConfigurationError", "JumpResolution",
    "JumpTransient", "Loading", "Problem", "SCENARIOS", "Slide", "SpatialGrid", "StepFailure",
    "TotalEnergy", "TwoSpeedConfig", "TwoSpeedSolution", "UnresolvedJump", "ViscousParams",
    "ViscousTrajectory", "assemble_two_speed", "build_problem", "build_stretching",
    "compute_var_R1", "density_by_name", "detect_parabolic_points", "dissipation_from_config",
    "energy_loss_process", "incremental_step", "oracle_ex24", "oracle_ex25", "oracle_ex26",
    "oracle_ex27", "oscillation_certificate", "resolve_jump", "run_sweep", "run_viscous",
    "scenario", "solve_two_speed", "stability_history", "strong_solution_residual",
    "variation_sandwich", "verify_energy_equality",
]
