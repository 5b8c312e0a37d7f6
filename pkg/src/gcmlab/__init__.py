"""Numerical laboratory for mean-field globally coupled fractional-linear interval maps.

Modules: ``moebius`` (fractional-linear primitives), ``site_maps`` (the map
family and its closed-form transfer calculus), ``coupling`` (feedback and the
bifurcation map), ``ifs`` (exact dynamics on representing measures), ``ulam``
(grid discretisation), ``ensemble`` (finite coupled systems) and ``cli``.
"""

from .coupling import Feedback, Regime, RegimeKind, classify_regime, h_eval, h_prime
from .ifs import AtomicMeasure, Limit, Order, apply_L, apply_self_consistent, iterate_to_limit, wasserstein
from .moebius import Moebius

__version__ = "0.1.0"

__all__ = [
    "AtomicMeasure", "Feedback", "Limit", "Moebius", "Order", "Regime", "RegimeKind", "apply_L",
    "apply_self_consistent", "classify_regime", "h_eval", "h_prime", "iterate_to_limit", "wasserstein",
]
