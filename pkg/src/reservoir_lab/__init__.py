"""Randomly-weighted structured echo state networks at desk scale.

Builds the block-shift reservoir s_t = relu(W(2/(n M2) P W^T s_{t-1} + Q u_t) + b)
from i.i.d. symmetric weights, certifies its state-existence and
input-reconstruction properties, trains linear readouts, and checks the
closed-form approximation bounds empirically.
"""

from . import bounds, ensemble, fourier, operators, readout, reservoir, solver

__version__ = "0.1.0"

__all__ = [
    "bounds",
    "ensemble",
    "fourier",
    "operators",
    "readout",
    "reservoir",
    "solver",
    "__version__",
]
