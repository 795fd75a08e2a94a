"""Nested conditional Monte Carlo for comparing stopping rules.

The package estimates E[X_{tau_A} - X_{tau_B}] for two stopping rules on a
discrete-time process by sharing each path up to the earlier stopping date
and branching R conditionally independent continuations where the rules
disagree.  Calibration helpers choose R from pilot statistics and predict the
variance-per-cost gain over plain Monte Carlo.
"""

__version__ = "0.1.0"
