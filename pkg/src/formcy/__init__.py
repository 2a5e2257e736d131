"""Pseudospectral tools for balanced metrics and the form-type Calabi-Yau equation on flat tori."""

__version__ = "0.1.0"

# Fields and spectral calculus on the torus
from formcy.torus import (
    CompatibilityError,
    FieldError,
    ScalarField,
    TorusGeometry,
    ddbar,
    hessian,
    integrate,
    random_trig_field,
    solve_dzdzbar,
    solve_flat_laplacian,
    wirtinger_d,
    wirtinger_dbar,
)

# Pointwise form algebra: metrics, (n-1,n-1) forms and the power map
from formcy.forms import (
    FormN2,
    HolomorphicVolume,
    MetricField,
    PositivityError,
    PsiField,
    amgm_report,
    ddbar_to_hermitian,
    omega_norm_sq,
    power_map,
    random_metric,
    ricci_hermitian,
    root_extract,
)

# Explicit constant-norm construction
from formcy.construction import (
    ConstructionParams,
    ConstructionResult,
    construct,
    construct_product,
    solve_k,
)

# Newton-Krylov solver for the perturbative problem
from formcy.solver import (
    AnsatzState,
    Background,
    ConeExitError,
    ContinuationError,
    ConvergenceError,
    NewtonResult,
    SolverConfig,
    SourceTerm,
    apply_L,
    kernel_margin,
    m_map,
    newton_solve,
    solve_L,
)

# Identity suite
from formcy.verify import SuiteConfig, SuiteReport, run_suite

# FDF1 field dumps
from formcy import fdf
