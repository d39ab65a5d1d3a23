"""Sample average approximation for risk-neutral semilinear elliptic control."""

__version__ = "0.1.0"

from .bounds import ProblemConstants, case_study_constants, plan  # noqa: E402
from .estimator import SAAEstimator  # noqa: E402
from .experiments import ExperimentConfig, fit_rate, read_csv, run_experiment, write_csv  # noqa: E402
from .fields import UniformSampler, b_field, g_field, kappa, yd_field  # noqa: E402
from .mesh import build_mesh  # noqa: E402
from .pde import CASE_STUDY, Discretization, Problem, SampleOperators  # noqa: E402
from .prox import RegularizerParams, criticality, prox_field  # noqa: E402
from .saa import SAAProblem, solve_semismooth_newton  # noqa: E402
from .sobol import SobolGenerator, sobol_parameters  # noqa: E402

__all__ = [
    "CASE_STUDY",
    "Discretization",
    "ExperimentConfig",
    "Problem",
    "ProblemConstants",
    "RegularizerParams",
    "SAAEstimator",
    "SAAProblem",
    "SampleOperators",
    "SobolGenerator",
    "UniformSampler",
    "b_field",
    "build_mesh",
    "case_study_constants",
    "criticality",
    "fit_rate",
    "g_field",
    "kappa",
    "plan",
    "prox_field",
    "read_csv",
    "run_experiment",
    "sobol_parameters",
    "solve_semismooth_newton",
    "write_csv",
    "yd_field",
]
