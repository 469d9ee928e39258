"""Critical Markov branching processes with heavy-tailed offspring and
non-homogeneous Poisson immigration: analytic transforms, survival
asymptotics, limit laws and exact Monte Carlo."""

from .laws import (
    ImmigrationLaw,
    IntensityLaw,
    LawSet,
    OffspringLaw,
    SlowlyVaryingSpec,
    eval_f,
    eval_g,
    eval_r,
    offspring_masses,
)
from .transforms import TransformChain
from .analytic import AnalyticEngine
from .asymptotics import LimitLaw, Regime, classify, limit_law, predict_survival

__all__ = [
    "AnalyticEngine",
    "ImmigrationLaw",
    "IntensityLaw",
    "LawSet",
    "LimitLaw",
    "OffspringLaw",
    "Regime",
    "SlowlyVaryingSpec",
    "TransformChain",
    "classify",
    "eval_f",
    "eval_g",
    "eval_r",
    "limit_law",
    "offspring_masses",
    "predict_survival",
]

__version__ = "0.1.0"
