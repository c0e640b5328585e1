"""Sampling-complexity lower bounds for ReLU approximation spaces and operator learning."""

__version__ = "0.1.0"

from .relu import Network, evaluate, stats  # noqa: E402
from .spaces import DepthGrowth, SpaceParams, theoretical_rate  # noqa: E402

__all__ = ["Network", "evaluate", "stats", "DepthGrowth", "SpaceParams", "theoretical_rate", "__version__"]
