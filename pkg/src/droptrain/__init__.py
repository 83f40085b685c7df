"""Layer-subset LMO optimizer with randomized progressive training.

Submodules:

* ``geometry``  -- norms, dual norms, LMOs, sharp operators, Newton-Schulz
* ``sampling``  -- layer-subset distributions, marginals, epoch-shift schedule
* ``optimizer`` -- deterministic and stochastic layer-subset steps and runs
* ``costmodel`` -- per-iteration/expected cost, optimal sampling probabilities
* ``problems``  -- quadratic and tiny-MLP test objectives with known constants
* ``verify``    -- property/oracle suites behind the ``verify`` CLI command
* ``cli``       -- ``droptrain`` command line entry point
"""

from . import costmodel, geometry, optimizer, problems, sampling

__all__ = ["costmodel", "geometry", "optimizer", "problems", "sampling"]
__version__ = "0.1.0"
