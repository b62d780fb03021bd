"""First-rare-event times for perturbed finite-state semi-Markov models.

Construction of Markov renewal kernels, exact matrix-geometric Laplace
transforms of first-rare-event functionals, numeric checkers for the
convergence conditions, limit-law samplers, and Monte Carlo verifiers
for the limit theorems.
"""

__version__ = "0.1.0"
