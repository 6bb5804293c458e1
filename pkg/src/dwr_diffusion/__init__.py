"""Goal-oriented space-time adaptive FEM solver for the instationary diffusion equation.

The solver marches a piecewise-constant-in-time (dG(0)) primal problem
forward and a piecewise-linear-in-time (cG(1)) dual problem backward over a
list of space-time slabs, localizes a dual-weighted residual error estimate
per cell, and adapts the slab meshes and time intervals with a two-fraction
marking strategy until a goal tolerance is met.
"""

__version__ = "0.1.0"

from .sparse_la import (
    SolverControl,
    SolverError,
    ConstraintCycleError,
    csr_from_triplets,
    spmv,
    cg_solve,
    apply_dirichlet,
    condense_hanging,
    distribute_constraints,
)
from .mesh import QuadMesh, Cell, make_lshape, make_unit_square, DIRICHLET, NEUMANN
from .fem import (
    FeSpace,
    FeFunction,
    ConstraintSet,
    Quadrature,
    gauss_quadrature,
    assemble_mass,
    assemble_stiffness,
    assemble_load_volume,
    assemble_load_neumann,
    interpolate,
    interpolate_same_mesh,
    transfer,
)
from .slabs import TimeInterval, Slab, SlabList, init_slabs
from .problem import Coefficients, ConeSolution, ControlVolume, ProblemData
from .primal import PrimalStepReport, march_forward, assemble_primal_system
from .dual import GoalContext, assemble_goal_rhs, march_backward
from .estimator import ErrorEstimate, compute_cell_indicators, accumulate, effectivity
from .marking import AdaptParams, mark_time_slabs, mark_space_cells, execute_adaptation
from .driver import LoopRecord, DwrResult, dwr_loop
from .params import RunConfig, parse_parameter_file, ParameterFileError
