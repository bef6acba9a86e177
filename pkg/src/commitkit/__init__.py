"""Probabilistic commitments between weakly-coupled MDP agents."""
