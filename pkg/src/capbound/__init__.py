"""Lower bounds on the capacity of the memoryless Gaussian channel under
pointwise input constraints, with the volume-exponent machinery they rest on."""

from .constraints import ChannelParams, ConstraintSet, CostTerm, FinitePointSet, Mode
from .direct_mi import (
    TiltedInputSpec,
    direct_bound,
    jensen_pair_bound,
    tilted_direct_bound,
)
from .epi import epi_bound, epi_peak_power, epi_quadrature, snr_loss_factor, uce_1d
from .errors import CapboundError, InfeasibleConstraints, NumericalError
from .numerics import Interval
from .oracle import McConfig, exact_ball_log_volume, mc_log_volume
from .volume import psi, tilted_moments, volume_exponent

__version__ = "0.1.0"

__all__ = [
    "CapboundError", "ChannelParams", "ConstraintSet", "CostTerm", "FinitePointSet",
    "InfeasibleConstraints", "Interval", "McConfig", "Mode", "NumericalError", "TiltedInputSpec",
    "direct_bound", "epi_bound", "epi_peak_power", "epi_quadrature", "exact_ball_log_volume",
    "jensen_pair_bound", "mc_log_volume", "psi", "snr_loss_factor", "tilted_direct_bound",
    "tilted_moments", "uce_1d", "volume_exponent",
]
