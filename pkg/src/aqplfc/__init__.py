"""Adaptive interferometric phase estimation as a learned feedback-control task.

Submodules: ``torus`` (angles, policies, orbits), ``plant`` (photon-by-photon
simulation), ``oracle`` (brute-force reference), ``metrics`` (Holevo variance
and scaling fits), ``distributions`` (phase priors and cumulant features),
``optimizer`` (policy search), ``learning`` (orbit regression pipeline),
``control`` (switches and the closed loop), ``scaling`` and ``cli``.
"""

from .distributions import CumulantFeatures, PhasePrior, cumulant_features
from .errors import AQPError
from .metrics import EstimateEnsemble, ScalingFit, check_feasibility, fit_scaling, sharpness_and_holevo
from .optimizer import DEConfig, OptimizationReport, build_orbit, optimize_policy
from .plant import InputFamily, SymmetricState, outcome_distribution, prepare_input, run_protocol
from .torus import PolicyOrbit, PolicyVector, orbit_loss

__version__ = "0.1.0"

__all__ = [
    "AQPError", "CumulantFeatures", "DEConfig", "EstimateEnsemble", "InputFamily", "OptimizationReport",
    "PhasePrior", "PolicyOrbit", "PolicyVector", "ScalingFit", "SymmetricState", "build_orbit",
    "check_feasibility", "cumulant_features", "fit_scaling", "optimize_policy", "orbit_loss",
    "outcome_distribution", "prepare_input", "run_protocol", "sharpness_and_holevo",
]
