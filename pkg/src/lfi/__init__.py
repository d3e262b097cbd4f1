"""Likelihood-free posterior estimation with mixture density networks and ABC baselines."""

from .gmath import Gaussian, GaussianMixture, UniformBoxPrior
from .inference import InferenceConfig, run_algorithm1, run_algorithm2

__version__ = "0.1.0"

__all__ = ["Gaussian", "GaussianMixture", "InferenceConfig", "UniformBoxPrior", "run_algorithm1", "run_algorithm2"]
