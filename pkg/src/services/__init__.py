"""
Computation layer.

``quantizer`` and ``channel`` model the uplink, ``detectors`` runs GAMP,
``state_evolution`` predicts it, ``tuning`` optimizes designs on those
predictions and ``harness`` runs the Monte Carlo experiments.
"""

from . import channel, detectors, harness, quantizer, state_evolution, tuning

__all__ = [
    "channel",
    "detectors",
    "harness",
    "quantizer",
    "state_evolution",
    "tuning",
]
