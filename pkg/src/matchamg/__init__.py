"""Aggregation AMG driven by compatible weighted matching, used as a
preconditioner for flexible CG on sparse s.p.d. systems."""

import os

import numba

# the bundled TBB is too old for numba and only produces a warning
if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .coarsening import (
    Aggregation,
    Hierarchy,
    Level,
    SetupConfig,
    build_hierarchy,
    build_prolongator,
    double_pairwise,
    galerkin_by_aggregates,
    hierarchy_stats,
    pairwise_aggregate,
    restrict_vector,
)
from .krylov import PCGBreakdown, SolveConfig, SolveReport, fused_axpy_pairs, fused_triple_dot, pcg_solve
from .matching import Matching, WeightedGraph, build_weights, exact_match_oracle, suitor_match
from .mmio import read_matrix_market, write_matrix_market
from .multigrid import AMGPreconditioner, CycleConfig, l1_jacobi_sweeps, vcycle, wcycle
from .problems import AniSpec, RandPermSpec, gen_anisotropic_2d, gen_poisson_3d_randk, poisson_2d
from .sparse import CsrMatrix, LaneGroupPolicy, galerkin_triple, l1_diagonal, spgemm, spmv, transpose

__version__ = "0.1.0"
