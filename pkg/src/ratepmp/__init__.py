"""Solve and certify discrete-time optimal control problems with control-rate bounds."""

from .existence import ExistenceReport, check_existence
from .lifting import (ExtendedTrajectory, LiftedProblem, build_rate_matrix, f12, f21, g_step,
                      lift_trajectory, lifted_cost_equivalence, rate_rhs)
from .model import (ControlAffineDynamics, LinearDynamics, OcpSpec, QuadraticCost,
                    QuadraticTerminalCost, SmoothCost, SmoothDynamics, SmoothTerminalCost,
                    Trajectory, constraint_violations, rollout, total_cost)
from .pmp import (PmpCertificate, ResidualReport, chain_residual, check_certificate,
                  exact_max_check, hamiltonian, hamiltonian_grad_u, hamiltonian_grad_x,
                  recover_multipliers)
from .sets import Box, ConvexSet, NormBall, Singleton, Whole, membership, normal_cone_residual

__version__ = "0.1.0"
