"""Diffusions in a drifted Brownian potential: simulation, hitting-time
decompositions, local-time fields, spectral bounds and tail estimates."""

from .potential import PotentialPath, ScaleTable, WindowError, decompose_valleys, sample_potential, scale_table
from .processes import SdeConfig
from .diffusion import decompose_hitting, first_hitting, position_at, simulate_path
from .spectral import PotentialWeight, exit_laplace_bound, principal_lambda
from .tails import TailEstimate, constants, estimate_tail_annealed, estimate_tail_quenched, fit_exponent

__version__ = "0.1.0"

__all__ = [
    "PotentialPath",
    "PotentialWeight",
    "ScaleTable",
    "SdeConfig",
    "TailEstimate",
    "WindowError",
    "constants",
    "decompose_hitting",
    "decompose_valleys",
    "estimate_tail_annealed",
    "estimate_tail_quenched",
    "exit_laplace_bound",
    "first_hitting",
    "fit_exponent",
    "position_at",
    "principal_lambda",
    "sample_potential",
    "scale_table",
    "simulate_path",
]
