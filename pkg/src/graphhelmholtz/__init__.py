"""Helmholtz decomposition on periodic Lipschitz graph domains."""

from .config import ConfigError, RunConfig, load_config
from .geometry import GraphDomainSpec, OmegaVectorField, build_coefficients, ellipticity_bounds
from .grid import HalfGrid, HalfSpaceField, make_grid, read_field_csv, write_field_csv
from .neumann import DirectSolver, FormulaSolver, NeumannSolution, build_neumann_data
from .operators import OperatorBundle, build_bundle, dtn_via_strip, fourier_symbol_oracle
from .pipeline import DecompositionResult, HelmholtzDecomposer, SweepSpec, decompose, make_solver, stability_sweep
from .semigroup import SemigroupEvaluator
from .verification import VerificationReport, run_suite

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "GraphDomainSpec",
    "OmegaVectorField",
    "build_coefficients",
    "ellipticity_bounds",
    "HalfGrid",
    "HalfSpaceField",
    "make_grid",
    "read_field_csv",
    "write_field_csv",
    "DirectSolver",
    "FormulaSolver",
    "NeumannSolution",
    "build_neumann_data",
    "OperatorBundle",
    "build_bundle",
    "dtn_via_strip",
    "fourier_symbol_oracle",
    "DecompositionResult",
    "HelmholtzDecomposer",
    "SweepSpec",
    "decompose",
    "make_solver",
    "stability_sweep",
    "SemigroupEvaluator",
    "VerificationReport",
    "run_suite",
]
