"""Parameter inference for ODE models by inverting surrogate sample paths.

A stochastic process (GP, heteroskedastic GP or heteroskedastic Student-t
process) is fitted to replicated data; posterior predictive sample paths are
each mapped to parameters by single-shooting least squares, and the resulting
ensemble approximates the parameter posterior.
"""

from ._backend import BACKEND
from .censoring import CensoringSpec, augment_censored, draw_monotone_path, draw_truncated_noise
from .design import ReplicatedDesign, build_design, moment_variances
from .gp import FitConfig, GPFit, fit_gp, gp_loglik, gp_predict
from .hetgp import HetGPFit, fit_hetgp, hetgp_joint_loglik, hetgp_noise_predict, hetgp_nu_hat, hetgp_predict
from .hettp import HetTPFit, TPState, fit_hettp, hettp_loglik, hettp_loglik_grad, hettp_predict
from .kernels import KernelSpec, kernel_eval, kernel_matrix
from .mcmc import McmcConfig, log_posterior, metropolis_run
from .ode import ODEModel, get_model, influenza_rhs, lotka_volterra_rhs, observe, register_model, rk4_solve
from .sampler import SamplePath, sample_paths
from .shooting import OptimizerConfig, PosteriorEnsemble, estimate_ensemble, estimate_one, shooting_objective

__version__ = "0.1.0"
