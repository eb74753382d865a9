"""Distributed proportional power sharing for grid-connected microgrids.

The cyber layer is simulated faithfully: capacity-estimation consensus with a
single informed agent, the proportional power-sharing command laws, and the
transient power-match controller that embeds finite-time average consensus.
The physical layer is replaced by an idealized power-tracking plant.
"""

from powershare.errors import (
    ConsensusError,
    FiniteTimeError,
    GraphError,
    DeltaBoundWarning,
    NegativeCommandWarning,
    ScenarioError,
)
from powershare.graph import CommGraph, build_graph, degree_matrix, is_connected, laplacian

__version__ = "0.1.0"

__all__ = [
    "CommGraph",
    "ConsensusError",
    "FiniteTimeError",
    "GraphError",
    "DeltaBoundWarning",
    "NegativeCommandWarning",
    "ScenarioError",
    "build_graph",
    "degree_matrix",
    "is_connected",
    "laplacian",
]
