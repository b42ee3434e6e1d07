"""
Charms package for sliceguard: action and relation handlers executed inside units.
"""
from .eps import EpsCharm
from .wireguard import WireguardCharm

__all__ = ["EpsCharm", "WireguardCharm"]
