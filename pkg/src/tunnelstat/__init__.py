"""Two-atom tunnelling statistics for fermionised (Tonks-Girardeau) bosons.

The package evaluates one-particle scattering amplitudes for 1D barriers,
combines them into two-particle outcome probabilities, and checks the
momentum-space results against a direct time-domain propagation.
"""

from .scattering import (
    AmplitudePair,
    AmplitudeTable,
    BarrierSpec,
    DeltaComb,
    FluxError,
    PiecewiseConstant,
    Rectangular,
    amplitudes,
    build_table,
    double_delta,
    log_transparency,
    transparency,
)
from .wavepacket import GaussianPacket
from .twobody import OutcomeStats, StatisticsKind

__all__ = [
    "AmplitudePair",
    "AmplitudeTable",
    "BarrierSpec",
    "DeltaComb",
    "FluxError",
    "GaussianPacket",
    "OutcomeStats",
    "PiecewiseConstant",
    "Rectangular",
    "StatisticsKind",
    "amplitudes",
    "build_table",
    "double_delta",
    "log_transparency",
    "transparency",
]

__version__ = "0.1.0"
