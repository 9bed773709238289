"""
chefshat - the Chef's Hat card game, a 200-slot action space and three
reinforcement learning agents that learn to play it.
"""

__version__ = "0.1.0"
