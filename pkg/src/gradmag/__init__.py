"""Monotone gradient networks for physics-consistent magnetic modeling of
synchronous machines.

The package trains current and flux-linkage maps from grid datasets with
conservativity, monotonicity, q-axis symmetry, and rotor-angle periodicity
guaranteed by construction, and uses the trained maps for inversion, drive
simulation, and optimal-trajectory generation.
"""

from .activations import Activation, activate, activation_beta_grad, activation_jacobian
from .dataio import SampleGrid, SaturableParams, load_grid, mirror_q_axis, save_grid, synth_saturable
from .dynamics import SimConfig, SimState, run_acceleration, simulate
from .frames import PerUnitBase, cross_torque, rotate_to_rotor, rotate_to_stator
from .gradnet import GradientNetwork
from .inversion import invert_current_map, invert_flux_map
from .loci import current_limit_curve, mtpa_locus, mtpv_locus
from .magnetics import (
    MagneticModel,
    MagneticOutput,
    build_model,
    current_map,
    field_energy,
    flux_map,
    fourier_features,
    incremental_inverse_inductance,
    load_model,
    save_model,
    symmetrize_current,
)
from .training import ErrorReport, TrainConfig, evaluate, fit, loss_combined, loss_current, subsample

__version__ = "0.1.0"

__all__ = [
    "Activation", "activate", "activation_beta_grad", "activation_jacobian",
    "SampleGrid", "SaturableParams", "load_grid", "mirror_q_axis", "save_grid",
    "synth_saturable", "SimConfig", "SimState", "run_acceleration", "simulate",
    "PerUnitBase", "cross_torque", "rotate_to_rotor", "rotate_to_stator",
    "GradientNetwork", "invert_current_map", "invert_flux_map",
    "current_limit_curve", "mtpa_locus", "mtpv_locus",
    "MagneticModel", "MagneticOutput", "build_model", "current_map",
    "field_energy", "flux_map", "fourier_features",
    "incremental_inverse_inductance", "load_model", "save_model",
    "symmetrize_current",
    "ErrorReport", "TrainConfig", "evaluate", "fit", "loss_combined",
    "loss_current", "subsample",
    "__version__",
]
