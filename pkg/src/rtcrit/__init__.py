"""Certified eigenpair computations for the discrete-ordinates criticality problem.

Typical use::

    from rtcrit import named_scenario, OperatorSet, SourceSolver
    grid, optics, _ = named_scenario("ref")
    solver = SourceSolver(OperatorSet(grid, optics))
    res = solver.apply_C(f, 1e-10)      # value with ||C f - value|| <= res.bound
"""
from .errors import CritError, ConfigError
from .phase_model import (PhaseGrid, OpticalField, build_grid, check_assumptions, compute_rho,
                          load_scenario, named_scenario, scenario_from_dict)
from .transport_ops import DenseOperator, OperatorSet
from .source_solver import CertifiedResult, SourceSolver
from .power_method import run_power, power_step, estimate_norm_C, estimate_gap
from .newton_solver import (EigenIterate, Linear, Quadratic, Switching, run_newton,
                            newton_update_descent, newton_update_oracle)
from .resolvent_quadrature import ContourSpec, apply_resolventC, shifted_resolve
from .spectral_diagnostics import (DenseHarness, compute_theta, constant_budget,
                                   dense_eigendecompose, riesz_projection, sandwich_check,
                                   verify_DR_bound)

__version__ = "0.1.0"
