"""Ensemble Gaussian mixture filtering with adaptive kernel covariances.

The library implements the EnGMF analysis step, three parameterized kernel
covariance families (bandwidth, shrinkage, localization), online EM fitting
of their parameters by sub-sampled Newton iterations (the adaptive EnGMF),
reference EnKF/SIR filters, and a twin-experiment benchmark harness for the
Lorenz '63 and Lorenz '96 systems.
"""

from .adapt import (EMConfig, FitDiagnostics, aengmf_step, default_theta, em_fit,
                    mc_loss, mc_loss_derivatives, mixture_loglik_gradient,
                    mixture_responsibilities, newton_or_gradient_step)
from .baselines import enkf_step, sir_step, systematic_resample
from .covparam import (AssembledKernel, KernelFamily, ThetaVector, assemble_kernel,
                       bandwidth_family, cyclic_distance_matrix, empirical_covariance,
                       localization_weights, localized_family, log_parameter_prior,
                       physical_parameters, rblw_shrinkage, shrinkage_family,
                       silverman_bandwidth, theta_from_physical)
from .dynamics import (ModelSpec, ObservationModel, l63_distance_observation,
                       l96_pointwise_observation, linear_observation,
                       lorenz63_critical_point, lorenz63_model, lorenz63_tendency,
                       lorenz96_model, lorenz96_tendency, mixture_noise_observation,
                       observe_l63_distance, observe_l96_pointwise, rk4_integrate)
from .engmf import AnalysisResult, engmf_analysis, gmm_resample, posterior_mean
from .errors import (ConfigError, DegenerateLikelihoodError, DivergenceError,
                     EngmfLabError, InsufficientEnsembleError, InvalidModelError,
                     NonDifferentiablePointError, ObservationDegeneracyError,
                     SingularKernelError)
from .gmm import (Ensemble, GaussianMixture, log_sum_exp, mixture_log_density,
                  mixture_sample, normalize_log_weights)
from .harness import (EMSettings, ExperimentConfig, FilterSpec, RunRecord,
                      aggregate_records, generate_twin_data, parse_config,
                      run_filter_trajectory, run_sweep, spatiotemporal_rmse)

__version__ = "0.1.0"
