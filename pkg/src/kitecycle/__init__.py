"""kitecycle: trajectory optimization for pumping-cycle kite power systems."""

__version__ = "0.1.0"

from .atmosphere import AeroTrimMap, WindProfile, aero_coeffs, wind_speed
from .kite import (CycleEnergy, CycleResult, FlowState, KiteControl, KiteState,
                   SystemParams, cycle_energy, dynamics_rhs, flow_state)
from .ocp import OcpOptions, OcpProblem, build_ocp, build_reeling_ocp, relax, scale

__all__ = [
    "AeroTrimMap", "WindProfile", "aero_coeffs", "wind_speed",
    "CycleEnergy", "CycleResult", "FlowState", "KiteControl", "KiteState",
    "SystemParams", "cycle_energy", "dynamics_rhs", "flow_state",
    "OcpOptions", "OcpProblem", "build_ocp", "build_reeling_ocp", "relax", "scale",
    "__version__",
]
