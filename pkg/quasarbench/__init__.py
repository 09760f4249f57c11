"""
quasarbench - SGD for quasar-convex objectives

Step-size schedules, bound evaluators and two-phase stationary-point methods
for (strongly) quasar-convex minimization, with numerical certification of the
structural constants and a seeded benchmark harness that checks the bounds
and rate exponents empirically.
"""

__version__ = "0.1.0"
