"""Perfectly matched layers for scattering by periodic surfaces in the
exceptional case ``2k`` integer: boundary kernels, the substituted Floquet
quadrature, P1 cell solvers and the PML-strength convergence study."""
from .kernels import (NonExceptionalWavenumber, PmlSpec, Wavenumber, branch_sqrt, dtn_coeff,
                      pml_coeff, pml_gap_bound, sigma, stretch)
from .quadrature import (CompactField, FloquetGrid, GaussRule, QuadratureError, bloch_transform,
                         floquet_grid, inverse_bloch, legendre_rule, synthesize)
from .mesh import PeriodicCellMesh, SurfaceProfile, build_cell_mesh, trace_fourier
from .fem import (CellSolution, CellSolveError, ExactDtN, Pml, SourceTerm, assemble_cell,
                  solve_cell, solve_stretched)
from .study import (ConfigError, ErrorRecord, RegressionFit, StudyConfig, StudyError,
                    dtn_reference, load_config, regression, run_study, write_csv)

__version__ = "0.1.0"
