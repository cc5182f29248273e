"""Reduced-order physics oracle: scaffold, element network, protocols, profiles and datasets."""

from .network import CALIBRATED_LAYER_SCALES, DEFAULT_GROUP_SCALES, ElementNetwork, Load, SimFrame, solve_quasistatic
from .profiles import CalibrationResult, StiffnessTable, calibrate, compute_stiffness_profile, is_nonincreasing, is_u_shaped
from .protocols import (
    AdaptiveProfile, HysteresisLoop, LoadProtocol, adaptive_factor, adaptive_profile, compute_adaptive_factor,
    loop_mismatch, run_protocol, split_cycles, write_trajectory_csv,
)
from .scaffold import PolyhedralScaffold, ScaffoldSpec, build_scaffold

__all__ = [
    "CALIBRATED_LAYER_SCALES", "DEFAULT_GROUP_SCALES", "ElementNetwork", "Load", "SimFrame", "solve_quasistatic",
    "CalibrationResult", "StiffnessTable", "calibrate", "compute_stiffness_profile", "is_nonincreasing", "is_u_shaped",
    "AdaptiveProfile", "HysteresisLoop", "LoadProtocol", "adaptive_factor", "adaptive_profile", "compute_adaptive_factor",
    "loop_mismatch", "run_protocol", "split_cycles", "write_trajectory_csv",
    "PolyhedralScaffold", "ScaffoldSpec", "build_scaffold",
]
