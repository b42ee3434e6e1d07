"""
Orchestrator package for sliceguard: lifecycle engine, relation bus and charms.
"""
