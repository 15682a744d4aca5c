"""Identification of stochastic PDE drift and diffusion terms from data.

The package simulates ensembles of sample paths of stochastic PDEs,
assembles sample-mean regression systems from them, and recovers sparse
drift and diffusion models plus the noise type.  See the README for the
pipeline overview and the command-line entry points.
"""

__version__ = "0.1.0"

from .data import (FormatError, TrajectoryEnsemble, UniformGrid, export_csv,
                   read_ensemble, subsample_time, write_ensemble)
from .features import (FeatureDictionary, FeatureSpec, build_dictionary,
                       dictionary_size, differentiate, evaluate_features,
                       fornberg_weights)
from .sparse import SparseCoeffs
from .catalog import MODEL_NAMES, ModelSpec, builtin_model, ground_truth_coeffs
from .simulate import BlowUpError, WienerStream, simulate_paths, wiener_increments
from .drift import (DriftSystem, assemble_drift_system, generate_drift_candidates,
                    subspace_pursuit, trim_drift)
from .diffusion import (DiffusionSystem, assemble_diffusion_system,
                        generate_diffusion_candidates, nonlinear_cg_fit,
                        normalize_diffusion, qsp, quad_loss_grad, trim_diffusion)
from .noise import (NoiseDecision, dagostino_pearson_p, decide_from_residuals,
                    decide_noise, residual_means)
from .selection import IdentifiedModel, score_diffuse, score_drift, select_model
from .spectral import (LinearDriftFit, ModeTable, QuadformFit, fourier_modes,
                       identify_diffusion_quadform, identify_drift_linear,
                       linear_propagate, mode_pair, stratonovich_to_ito)
from .metrics import EvalReport, SupportMetrics, coeff_errors, evaluate_model, support_metrics
from .pipeline import IdentificationResult, IdentifyOptions, identify_ensemble

__all__ = [
    "BlowUpError", "DiffusionSystem", "DriftSystem", "EvalReport",
    "FeatureDictionary", "FeatureSpec", "FormatError", "IdentificationResult",
    "IdentifiedModel", "IdentifyOptions", "LinearDriftFit", "MODEL_NAMES",
    "ModeTable", "ModelSpec", "NoiseDecision", "QuadformFit", "SparseCoeffs",
    "SupportMetrics", "TrajectoryEnsemble", "UniformGrid", "WienerStream",
    "assemble_diffusion_system", "assemble_drift_system", "build_dictionary",
    "builtin_model", "coeff_errors", "dagostino_pearson_p",
    "decide_from_residuals", "decide_noise", "dictionary_size", "differentiate",
    "evaluate_features", "evaluate_model", "export_csv", "fornberg_weights",
    "fourier_modes", "generate_diffusion_candidates", "generate_drift_candidates",
    "ground_truth_coeffs", "identify_diffusion_quadform", "identify_drift_linear",
    "identify_ensemble", "linear_propagate", "mode_pair", "nonlinear_cg_fit",
    "normalize_diffusion", "qsp", "quad_loss_grad", "read_ensemble",
    "residual_means", "score_diffuse", "score_drift", "select_model",
    "simulate_paths", "stratonovich_to_ito", "subsample_time", "subspace_pursuit",
    "support_metrics", "trim_diffusion", "trim_drift", "wiener_increments",
    "write_ensemble",
]
