"""Krylov solvers with residual-monotone step policies for ill-conditioned systems."""

from .krylov import (
    METHODS,
    Breakdown,
    Method,
    SolveOptions,
    SolveReport,
    jacobi_preconditioner,
    krylov_solve,
)
from .linalg import CsrMatrix, LinearOperator, cond2, lu_factor, lu_solve, sym_eig
from .matgen import RandomMatrixSpec, hilbert, random_rhs, random_symmetric_cond
from .mmio import read_matrix_market, write_matrix_market
from .stabilize import CLASSIC, LINESEARCH, TWODIM, POLICIES, StepPolicy

__version__ = "0.1.0"
