"""Exact-rational toolkit for grid-based channel capacity approximation.

Core pieces:

* ``prob_core``        -- rational probability vectors, channel tensors, marginals
* ``info_measures``    -- entropy, conditional mutual information, continuity bounds
* ``polynomial``       -- sparse rational polynomials with interval evaluation
* ``flc_model``        -- rate/MI inequality systems with polynomial constraints,
                          JSON (de)serialization, and classical built-in systems
* ``feasibility_grid`` -- simplex lattices and box-constrained feasibility checking
* ``capacity_engine``  -- max-min rate evaluation, capacity estimates, gap decisions,
                          2-user rate regions
* ``pfa_channels``     -- probabilistic finite automata, the derived state channels,
                          and their rate bounds
"""

from flcap.prob_core import Alphabet, ChannelSpec, Distribution, IndexSet
from flcap.flc_model import FLCSpec

__version__ = "0.1.0"

__all__ = [
    "Alphabet",
    "Distribution",
    "ChannelSpec",
    "IndexSet",
    "FLCSpec",
    "__version__",
]
