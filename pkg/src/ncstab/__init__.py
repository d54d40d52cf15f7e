"""ncstab: second-moment stabilization of a continuous-time linear plant
sampled over a network whose sampling intervals are i.i.d. random round-trip
delays.

The toolkit covers the full loop: exact discretization of the plant over
random intervals, delay models (constant, shifted exponential, empirical),
the finite-moment admissibility check, Monte Carlo estimation and
factorization of the coefficient second moments, the matrix-inequality
analysis and synthesis conditions with decay-rate bisection, closed-loop
sample-path simulation, and a batch CLI (``ncstab``).
"""

from .control import (
    AnalysisResult,
    Gain,
    SynthesisResult,
    VerifyReport,
    analyze,
    assemble_analysis,
    assemble_synthesis,
    synthesize,
    verify_gain,
)
from .delays import (
    ConstantDelay,
    DelayDraw,
    DelayModel,
    EmpiricalDelay,
    MomentConditionReport,
    ShiftedExponentialDelay,
    check_second_moment_condition,
    derive_rng,
    export_delay_csv,
    load_delay_csv,
)
from .errors import (
    DimensionError,
    DomainError,
    IngestionError,
    NotStabilizableError,
    NotStableError,
    SolverUnknownError,
)
from .lmi import (
    AffineMatrixInequality,
    FeasibilityResult,
    bisect_lambda,
    min_eigenvalue,
    solve_feasibility,
)
from .moments import (
    ClosedLoopTildeFactor,
    Factorization,
    SecondMomentMatrix,
    TildeFactors,
    estimate_closedloop_moment,
    estimate_synthesis_moment,
    export_matrix_csv,
    factorize,
    reduced_factors,
    reshape_closedloop,
    reshape_tilde,
)
from .plant import (
    ContinuousPlant,
    DiscretizedPair,
    ExtendedPair,
    discretize,
    discretize_batch,
    extend,
    matrix_exponential,
)
from .sim import (
    DecayEstimate,
    SamplePath,
    estimate_decay,
    export_decay_csv,
    export_paths_csv,
    simulate_path,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # plant
    "ContinuousPlant", "DiscretizedPair", "ExtendedPair",
    "matrix_exponential", "discretize", "discretize_batch", "extend",
    # delays
    "DelayModel", "ConstantDelay", "ShiftedExponentialDelay", "EmpiricalDelay",
    "DelayDraw", "MomentConditionReport", "check_second_moment_condition",
    "load_delay_csv", "export_delay_csv", "derive_rng",
    # moments
    "SecondMomentMatrix", "Factorization", "TildeFactors", "ClosedLoopTildeFactor",
    "estimate_synthesis_moment", "estimate_closedloop_moment", "factorize",
    "reshape_tilde", "reshape_closedloop", "reduced_factors", "export_matrix_csv",
    # lmi
    "AffineMatrixInequality", "FeasibilityResult", "solve_feasibility",
    "min_eigenvalue", "bisect_lambda",
    # control
    "Gain", "SynthesisResult", "AnalysisResult", "VerifyReport",
    "assemble_analysis", "assemble_synthesis", "synthesize", "analyze", "verify_gain",
    # sim
    "SamplePath", "DecayEstimate", "simulate_path", "estimate_decay",
    "export_paths_csv", "export_decay_csv",
    # errors
    "DimensionError", "DomainError", "IngestionError",
    "NotStabilizableError", "NotStableError", "SolverUnknownError",
]
