"""
Bayes-inference detectors and state evolution for mixed-ADC massive MIMO.
"""

__version__ = "0.1.0"
