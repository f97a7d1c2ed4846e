"""chainstab: hitting-time functionals and (in)stability certificates for
Markov chains on the half line and the nonnegative integers."""

from .kernel import (
    CONTINUOUS,
    COUNTABLE,
    Density,
    DivergentIntegralError,
    DomainMismatchError,
    FiniteKernel,
    GridError,
    GridScheme,
    InternalConsistencyError,
    Kernel,
    Region,
    TransitionRow,
    discretize,
    integrate,
    row,
    validate,
)
from .minsol import (
    ConeEquation,
    MinSolResult,
    ValueFunction,
    solve_minimal,
    verify_subsolution_domination,
    verify_supersolution,
)
from .hitting import (
    HittingSpec,
    expected_return_time,
    geometric_moment,
    geometric_sum,
    return_probability,
)
from .truncation import (
    HittingSequence,
    TruncationFamily,
    hitting_sequence,
    lower_bound_functions,
    truncate,
)
from .criteria import (
    CertificateReport,
    CheckContext,
    DivergenceEvidence,
    ModelClassification,
    TestFunctionSequence,
    check_ergodic_drift,
    check_non_ergodic,
    check_non_geometric,
    check_non_strong,
    check_non_strong_two_fn,
    check_recurrent_drift,
    check_strong_drift,
    check_transient,
    classify,
)
from .models import (
    AR1Params,
    Example1Params,
    Example2Params,
    ModelBundle,
    PRESETS,
    build_ar1,
    build_example1,
    build_example2,
    pareto_density,
    preset,
    test_functions_for,
    uniform_density,
)

__version__ = "0.1.0"
