"""
Bench package for sliceguard: probes, scenarios, KPI verdicts and reports.
"""
