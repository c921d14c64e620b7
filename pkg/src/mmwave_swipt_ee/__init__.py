"""Energy-efficient hybrid precoding for joint multicast-unicast mmWave SWIPT.

The layers, bottom up:

* :mod:`channel`  geometric ULA channels and steering-vector codebooks
* :mod:`analog`   greedy beam selection for fully-connected and subarray arrays
* :mod:`metrics`  SINR, harvested energy, power consumption, SE and EE
* :mod:`conic`    conic programs on top of an interior-point backend
* :mod:`sca`      successive convex approximation for general precoders
* :mod:`zf`       zero-forcing unicast streams with SCA on the rest
* :mod:`dinkelbach`  bisection on the energy-efficiency parameter
* :mod:`experiments`  Monte Carlo runners and CSV output
"""

from .analog import AnalogPrecoder, AnalogStructure, ConfigurationError, design_analog_precoder, effective_channel
from .channel import ArrayGeometry, ChannelRealization, array_response, pathloss_db, sample_channel
from .dinkelbach import BisectionConfig, EEResult, bisection_max_ee, evaluate_T, feasibility_check, make_inner
from .instance import InfeasibleProblemError, ProblemInstance, SolverFailure
from .metrics import DigitalSolution, SwiptConfig, check_constraints, energy_efficiency, spectral_efficiency
from .sca import InnerResult, ScaConfig, solve_inner
from .zf import ZfConfig, ZfInit, solve_inner_zf

__version__ = "0.1.0"

__all__ = [
    "AnalogPrecoder",
    "AnalogStructure",
    "ArrayGeometry",
    "BisectionConfig",
    "ChannelRealization",
    "ConfigurationError",
    "DigitalSolution",
    "EEResult",
    "InfeasibleProblemError",
    "InnerResult",
    "ProblemInstance",
    "ScaConfig",
    "SolverFailure",
    "SwiptConfig",
    "ZfConfig",
    "ZfInit",
    "array_response",
    "bisection_max_ee",
    "check_constraints",
    "design_analog_precoder",
    "effective_channel",
    "energy_efficiency",
    "evaluate_T",
    "feasibility_check",
    "make_inner",
    "pathloss_db",
    "sample_channel",
    "solve_inner",
    "solve_inner_zf",
    "spectral_efficiency",
]
