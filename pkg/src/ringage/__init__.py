"""Version age of push gossip on ring networks with renewal-process updates."""

__version__ = "0.1.0"
