"""
Tunnel package for sliceguard: WireGuard-style keys, handshake, sessions and devices.
"""
