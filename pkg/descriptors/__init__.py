"""
Descriptor package for sliceguard: VNFD, NSD and NST records, parsing and validation.
"""
