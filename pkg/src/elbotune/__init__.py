"""ELBO-driven tuning of exploration, replay and update budgets for imagined-goal RL."""

__version__ = "0.1.0"
