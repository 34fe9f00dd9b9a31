"""Spiked sample covariance matrices in the ultra-high-dimensional regime p >> n.

Deterministic equivalents for the bulk, outlier and eigenvector predictions for
spikes, and a Monte Carlo harness that measures convergence rates.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model import (  # noqa: E402
    Dimensions, PopulationSpectrum, SpikeSet, BasisPolicy, SpikedModel, build_model,
    validate_assumptions, model_from_document, model_to_document,
)
from .equivalents import (  # noqa: E402
    EquivalentLaw, equivalent_law, law_for_model, critical_points, solve_m, m_prime,
    density, density_curve, counting_function, quantiles, edges,
)
from .reference_mp import mp_law, mp_m, mp_density, mp_outlier  # noqa: E402
from .spikes import (  # noqa: E402
    OutlierPrediction, WeightSequence, predict_outliers, outlier_location,
    outlier_alignment, m_dot, weighted_projection_sum, explained_variance,
    nonoutlier_targets, critical_sigma,
)
from .montecarlo import (  # noqa: E402
    TrialSpec, sample_matrix, spectral_decompose, run_trial, make_predictions,
    SweepTemplate, sweep_and_fit, fit_rate, RATE_TARGETS,
)
