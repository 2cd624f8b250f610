"""Multi-fidelity Bayesian history matching for geological CO2 storage.

The package couples a PCA-parameterized geomodel generator, a two-phase
CO2-brine finite-volume simulator with a poroelastic surface-uplift kernel,
and a hierarchical Metropolis-within-Gibbs sampler that accounts for
fast-model error through an empirical error covariance.
"""

__version__ = "0.1.0"
