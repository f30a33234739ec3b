"""
Utilities for the ensemble VQC experiments.
Contains the quantum simulator subpackage, the hybrid network, diagnostics, data loading, configuration and reporting.
"""
