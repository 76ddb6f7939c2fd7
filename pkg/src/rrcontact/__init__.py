"""Contact process on random regular graphs: simulation, exact oracles, experiments."""

__version__ = "0.1.0"

from .graph import Graph, generate_random_regular  # noqa: E402,F401
from .engine import Configuration, simulate, simulate_coupled, extinction_time  # noqa: E402,F401

__all__ = ["Graph", "generate_random_regular", "Configuration", "simulate", "simulate_coupled",
           "extinction_time", "__version__"]
