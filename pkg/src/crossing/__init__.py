"""Two-vehicle intersection testbed with paired music-aware/unaware DQN agents."""

__version__ = "0.1.0"
