"""Exception and warning types shared across the package."""


class GraphError(ValueError):
    """Invalid communication graph (bad index, self-loop, duplicate edge, disconnected)."""


class ScenarioError(ValueError):
    """Malformed or semantically invalid scenario document."""


class ConsensusError(RuntimeError):
    """Runtime failure of the consensus simulation.

    Raised for numerical divergence, events arriving before the previous
    consensus settled, and estimates falling to or below the load.
    """


class FiniteTimeError(RuntimeError):
    """The finite-time average protocol could not produce an average."""


class DeltaBoundWarning(UserWarning):
    """A capacity change exceeds the sufficient bound that keeps estimates in band."""


class NegativeCommandWarning(UserWarning):
    """A strategy produced a negative power command."""
