"""Verification laboratory for heat-bath spin dynamics on sparse random
graphs at the critical temperature.

The package builds the objects a sparse-graph mixing-time analysis talks
about -- growth-based vertex partitions, exploration processes,
self-avoiding-walk trees, non-backtracking operators, a family of
restricted/accelerated heat-bath chains -- and checks the advertised
identities and inequalities exactly on desk-scale instances.
"""

from .errors import (
    CheckFailure,
    ConfigError,
    DegenerateOperatorError,
    GlauberLabError,
    InvalidInputError,
    NonConvergenceError,
    ResourceLimitError,
)
from .params import ModelParams, critical_beta
from .graph import (
    ExplorationState,
    Graph,
    ball,
    connected_components,
    critical_radii,
    enumerate_connected_graphs,
    explore,
    load_graph,
    sample_er,
    save_graph,
    tree_excess,
)

__version__ = "0.1.0"
