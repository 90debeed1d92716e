"""Dual variational solver for -Delta u - u = Q|u|^{p-2}u with outgoing resolvents."""

__version__ = "0.1.0"

from .errors import NLHelmholtzError  # noqa: E402
from .grid import Field, GridSpec, SphereMesh, lp_norm, pairing, sphere_mesh  # noqa: E402
from .resolvent import AbsorptionSchedule, resolvent_apply, kernel_convolve  # noqa: E402
from .dual import DualProblem, j_eval, j_grad, kp_apply, nehari_scale  # noqa: E402
from .solver import SolverConfig, solve_mountain_pass, solve_multiplicity  # noqa: E402

__all__ = ["NLHelmholtzError", "Field", "GridSpec", "SphereMesh", "lp_norm", "pairing",
           "sphere_mesh", "AbsorptionSchedule", "resolvent_apply", "kernel_convolve",
           "DualProblem", "j_eval", "j_grad", "kp_apply", "nehari_scale", "SolverConfig",
           "solve_mountain_pass", "solve_multiplicity"]
