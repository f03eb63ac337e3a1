"""Simulation toolkit for a time-multiplexed loop-based optical processor."""

from .gaussian import (  # noqa: F401
    QPG,
    Arbitrary,
    BeamSplitter,
    Displace,
    GaussianState,
    LossChannel,
    Phase,
    Squeeze,
    fidelity,
)

__version__ = "0.1.0"
