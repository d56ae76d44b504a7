"""Two-dimensional Ising lattice toolkit: enumeration, free fermions, polymers, scaling and RG flow."""

from ._isinglab import *  # noqa: F401,F403
from ._isinglab import __doc__  # noqa: F401
