"""Federated likelihood-free inference of a Bayesian Gaussian mixture.

Sites summarize local data with a supervised autoencoder and exchange only
scalar discrepancies with a coordinator, which runs ABC rejection sampling
against the prior and returns a posterior over mixture parameters that is
bit-identical to the centralized computation.
"""

__version__ = "0.1.0"

from .rng import RngStream

__all__ = ["RngStream", "__version__"]
