"""Learning, programming and tuning layered linear-optical interferometers."""

from .core import (
    Architecture,
    ShapeError,
    TrainingSet,
    add_tomography_noise,
    derive_rng,
    forward_unitary,
    generate_training_set,
    sample_haar_unitary,
    sample_random_arch,
    sample_uniform_phases,
)
from .features import (
    LinearModel,
    StaleModelError,
    feature_vector,
    predict,
    predict_gradient,
    project_to_slice,
    true_weights_from_arch,
)
from .layerwise import (
    DeviceOracle,
    LocalLayerModel,
    TuneConfig,
    TuneTrace,
    UnderdeterminedError,
    als_step,
    fit_local_model,
    tomography_query,
    tune,
)
from .numerics import PowerLawFit, bfgs_minimize, fit_power_law, pseudoinverse
from .programming import ProgramConfig, ProgrammingResult, frobenius_loss, program_phases
from .training import (
    DesignMatrix,
    DivergedError,
    IterativeConfig,
    RankDeficiencyWarning,
    SolverReport,
    build_design_matrix,
    solve_iterative,
    solve_pinv,
    training_loss,
)


__all__ = [
    "Architecture",
    "ShapeError",
    "TrainingSet",
    "add_tomography_noise",
    "derive_rng",
    "forward_unitary",
    "generate_training_set",
    "sample_haar_unitary",
    "sample_random_arch",
    "sample_uniform_phases",
    "LinearModel",
    "StaleModelError",
    "feature_vector",
    "predict",
    "predict_gradient",
    "project_to_slice",
    "true_weights_from_arch",
    "DeviceOracle",
    "LocalLayerModel",
    "TuneConfig",
    "TuneTrace",
    "UnderdeterminedError",
    "als_step",
    "fit_local_model",
    "tomography_query",
    "tune",
    "PowerLawFit",
    "bfgs_minimize",
    "fit_power_law",
    "pseudoinverse",
    "ProgramConfig",
    "ProgrammingResult",
    "frobenius_loss",
    "program_phases",
    "DesignMatrix",
    "DivergedError",
    "IterativeConfig",
    "RankDeficiencyWarning",
    "SolverReport",
    "build_design_matrix",
    "solve_iterative",
    "solve_pinv",
    "training_loss",
]

__version__ = "0.1.0"
