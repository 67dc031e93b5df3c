"""taskmon: a desk-scale execution monitor for symbolic robot tasks.

Plan library and planner, simulated perception with noise models, a learned
next-goal predictor, and the monitoring loop that ties them together.
"""

__version__ = "0.1.0"
