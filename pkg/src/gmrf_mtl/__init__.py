"""Decentralized multitask learning over graphs with a GMRF task prior.

Agents run stochastic-gradient recursions on their own streaming
regression data; the graph Laplacian that couples their tasks can be
recovered from a snapshot of the non-cooperative iterates.
"""
from .estimation import (empirical_covariance, estimate_from_states, estimate_laplacian,
                         project_covariance, spectral_error)
from .exceptions import (ConfigError, DisconnectedGraphError, DivergenceError,
                         IllConditionedEstimateError, UnstableStepsizeError, ValidationError)
from .gmrf import TaskMatrix, log_prior_density, sample_tasks
from .graph import (GraphTopology, LaplacianMatrix, WeightMixture, build_laplacian,
                    centering_projector, laplacian_pseudoinverse, random_topology)
from .theory import SteadyStateModel, solve_lyapunov

__version__ = "0.1.0"
