"""Hard-sphere BBGKY and Enskog series for empirical initial data."""

from .core import Configuration, ParticleState
from .dynamics import classify, evolve, evolve_backward
from .empirical import DiracComb, Observable, empirical_measure, marginal
from .scenarios import Scenario, build_two_sphere, golden_three_sphere
from .trees import SignVector, Tree

__version__ = "0.1.0"

__all__ = [
    "Configuration",
    "ParticleState",
    "DiracComb",
    "Observable",
    "Scenario",
    "SignVector",
    "Tree",
    "build_two_sphere",
    "classify",
    "empirical_measure",
    "evolve",
    "evolve_backward",
    "golden_three_sphere",
    "marginal",
]
