"""
EPS package for sliceguard: emulated network functions and the attach procedure.
"""
