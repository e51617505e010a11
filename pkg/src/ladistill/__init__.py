"""DQN link adaptation with policy distillation into compact student networks."""

__version__ = "0.1.0"
