"""Vlasov-Poisson solver that reconstructs the distribution on the fly by
iterating characteristics backward through the stored field history, with
low-rank snapshot restarts to keep the cost linear in the number of steps."""

import os as _os

if not _os.environ.get("NUFI_KEEP_BLAS_THREADS"):
    # the dense blocks here are tiny; threaded BLAS only oversubscribes the
    # cores and stalls the compiled trace kernels between calls
    import threadpoolctl as _threadpoolctl

    _threadpoolctl.threadpool_limits(1, "blas")

from .diagnostics import DiagnosticsRow, dispersion_growth_rate, fit_growth_rate
from .flow import (AllocationAudit, DistributionSource, FlowState, WorkCounter,
                   analytic_source, backward_flow, backward_step, compute_density,
                   eval_f, forward_flow, snapshot_source)
from .grid import AxisSpec, PhaseSpaceGrid, node_coordinate, velocity_quadrature_weights, wrap_periodic
from .lowrank import (Factorization, MatvecOracle, TruncationPolicy,
                      eval_factored_point, rsvd, truncate_svd)
from .poisson import (FieldHistory, append_field, electric_energy, eval_E,
                      solve_poisson_neumann, solve_poisson_periodic)
from .restart import LowRankSnapshot, RestartConfig, build_snapshot, should_restart, snapshot_eval
from .simulation import (BoundaryConfig, Checkpoint, RunArtifacts, SimulationError,
                         SimulationSetup, SolverMode, SpeciesConfig, apply_boundaries,
                         run, track_velocity_support)

__version__ = "0.1.0"
