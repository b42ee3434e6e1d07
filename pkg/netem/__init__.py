"""
Network emulation package for sliceguard: a deterministic discrete-event fabric.
"""
