"""Linear noise approximation inference for stochastic epidemic models."""
from .exceptions import ConfigError, DegenerateWeightsError, InvalidInputError, NumericalFailure
from .gaussfilter import backward_sample, forward_filter, ode_loglik
from .lna import transition_moments
from .models import MODEL_NAMES, CompartmentModel, Params, get_model
from .observation import ObsParams
from .simulate import corrupt, simulate_mjp
from .smc import AuxBlock, pf_loglik
from .estimator import EpidemicLNA

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateWeightsError",
    "InvalidInputError",
    "NumericalFailure",
    "backward_sample",
    "forward_filter",
    "ode_loglik",
    "transition_moments",
    "MODEL_NAMES",
    "CompartmentModel",
    "Params",
    "get_model",
    "ObsParams",
    "corrupt",
    "simulate_mjp",
    "AuxBlock",
    "pf_loglik",
    "EpidemicLNA",
]
