"""
Communication interfaces package for sliceguard: the CLI shell and the API server.
"""
