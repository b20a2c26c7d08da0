"""Optimal control of finite semi-Markov processes through the closed-form
test function of the stationary reward-rate functional."""

__version__ = "0.1.0"
