"""
Core analysis package: capture ingest, connection model, detectors,
identity and structure analysis, exposure reporting and the synthetic
capture generator.
"""
