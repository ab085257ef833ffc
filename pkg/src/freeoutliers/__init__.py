"""Free convolution, subordination and outliers of spiked random matrix models."""

from .errors import *  # noqa: F401,F403
from .measures import (Measure, TransformKind, arcsine, atomic, circle_atomic, empirical,
                       make_measure, marchenko_pastur, point_mass, semicircle, support_radius,
                       transform, two_atom)

__version__ = "0.1.0"
