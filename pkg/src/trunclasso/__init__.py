"""Truncated, regularized least squares for heavy-tailed sparse and
single-index recovery."""
from .diagnostics import (error_metrics, estimate_eta, estimate_moments,
                          gaussian_mean_width, small_ball_params, theoretical_rate)
from .model import (EstimatorConfig, GroundTruth, RecoveryResult, Regularizer, SampleSet,
                    objective, psi_prox, psi_value)
from .sampling import (EllipticalSpec, IidEntrySpec, LinkFunction, Noise,
                       make_low_rank_signal, make_sparse_signal, synthesize_dataset)
from .solver import FitReport, fit, fit_single_index, fit_thresholded_lasso, kkt_residual
from .truncation import TruncationScheme, tau_elliptical, tau_sparse

__version__ = "0.1.0"
