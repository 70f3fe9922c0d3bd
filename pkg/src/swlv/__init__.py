"""Million-agent predator-prey simulation with shared-network Q-learning."""

__version__ = "0.1.0"
