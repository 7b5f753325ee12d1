"""Region-level ergodic inspection planning: chain synthesis, ergodicity metrics,
anomaly beliefs over reference clouds and a planar grid-world simulator.

Chains are column-stochastic throughout: ``P[j, i]`` is the probability of
moving from region ``i`` to region ``j`` and distributions evolve as ``ρ ← Pρ``.
"""

__version__ = "0.1.0"
