"""Gaussian simulation and analysis of a reconfigurable squeezed-light chip."""

from .gaussian import (GaussianState, SymplecticOp, beamsplitter, joint_quadrature_variance,
                       loss, phase_shift, quadrature_variance, sample_quadrature, squeeze,
                       vacuum)
from .config import load_config, netlist_from_dict

__version__ = "0.1.0"
