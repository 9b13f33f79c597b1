"""Simulation and spectral oracles for singular jump processes on the sphere.

The collision operator ``L f(k) = p.v. int F(k . p) (f(p) - f(k)) dsigma(p)``
with a grazing singularity ``F(s) ~ a1 (1 - s)^(-beta - d/2)`` generates a
jump process on S^d.  This package provides the kernels and their constants,
the Funk-Hecke spectrum, an exact-in-time sampler of the truncated process,
Monte Carlo estimators, and the diffusion / peaked-forward experiments.
"""

__version__ = "0.1.0"

from .harmonics import (SpectralTable, dirichlet_form_Q, funk_hecke_mu, gamma_multiplier_R,
                        gegenbauer_normalized, laplace_eigenvalue, multiplicity, multiplier_constant, peaked_mu)
from .kernel import (KernelSpec, angular_density, auto_eta, diffusion_matrix, kernel_value,
                     mathfrak_C, truncated_mean_rate, truncated_rate, truncation_bias_bound)
from .process import (ProcessConfig, Trajectory, diffusive_path, peaked_path, sample_jump_cosine,
                      simulate)
from .sphere import jump, tangent_direction, uniform_on_sphere

__all__ = [
    "KernelSpec", "ProcessConfig", "SpectralTable", "Trajectory", "angular_density", "auto_eta",
    "diffusion_matrix", "diffusive_path", "dirichlet_form_Q", "funk_hecke_mu", "gamma_multiplier_R",
    "gegenbauer_normalized", "jump", "kernel_value", "laplace_eigenvalue", "mathfrak_C",
    "multiplicity", "multiplier_constant", "peaked_mu", "peaked_path", "sample_jump_cosine", "simulate",
    "tangent_direction", "truncated_mean_rate", "truncated_rate", "truncation_bias_bound",
    "uniform_on_sphere",
]
